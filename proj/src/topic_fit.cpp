#include "latentdx/topic_fit.hpp"

#include <atomic>
#include <limits>
#include <tuple>
#include <unordered_map>
#include <thread>

#include "latentdx/csv.hpp"
#include "latentdx/error.hpp"

namespace latentdx {

namespace {
std::atomic<std::size_t> g_thread_limit{1};
}

std::string_view model_name(ModelKind kind) { return kind == ModelKind::lda ? "lda" : "pdm"; }

ModelKind parse_model(std::string_view name) {
  if (name == "lda") return ModelKind::lda;
  if (name == "pdm") return ModelKind::pdm;
  throw ConfigError("unknown model '" + std::string(name) + "' (expected lda or pdm)");
}

void SamplerConfig::validate() const {
  if (chains < 1) throw ConfigError("need at least one chain");
  if (samples < 1) throw ConfigError("need at least one retained sample");
  if (thin < 1) throw ConfigError("thin must be at least 1");
}

double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                         const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

std::vector<std::size_t> match_topics(const Eigen::MatrixXd& reference,
                                      const Eigen::MatrixXd& candidate) {
  const auto K = reference.rows();
  Eigen::MatrixXd sim(K, candidate.rows());
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < candidate.rows(); ++j)
      sim(i, j) = cosine_similarity(reference.row(i), candidate.row(j));
  std::vector<std::size_t> result(static_cast<std::size_t>(K), 0);
  std::vector<bool> used_ref(static_cast<std::size_t>(K), false);
  std::vector<bool> used_cand(static_cast<std::size_t>(candidate.rows()), false);
  for (Eigen::Index step = 0; step < K; ++step) {
    double best = -2.0;
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < K; ++i) {
      if (used_ref[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < candidate.rows(); ++j) {
        if (used_cand[static_cast<std::size_t>(j)]) continue;
        if (sim(i, j) > best) {
          best = sim(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    used_ref[static_cast<std::size_t>(bi)] = true;
    used_cand[static_cast<std::size_t>(bj)] = true;
    result[static_cast<std::size_t>(bi)] = static_cast<std::size_t>(bj);
  }
  return result;
}

TopicFit combine_chains(ModelKind kind, std::vector<ChainEstimate> chains) {
  if (chains.empty()) throw ConfigError("no chains to combine");
  TopicFit fit;
  fit.model = kind;
  const auto& ref = chains.front();
  const auto K = ref.phi.rows();
  const auto C = static_cast<Eigen::Index>(chains.size());
  fit.theta = Eigen::MatrixXd::Zero(ref.theta.rows(), K);
  fit.phi = Eigen::MatrixXd::Zero(K, ref.phi.cols());
  if (ref.gamma.size() > 0) fit.gamma = Eigen::VectorXd::Zero(ref.gamma.size());
  if (ref.acceptance.size() > 0) {
    fit.acceptance.resize(C, K);
    fit.proposal_concentration.resize(C, K);
  }
  for (Eigen::Index c = 0; c < C; ++c) {
    auto& chain = chains[static_cast<std::size_t>(c)];
    const auto perm = c == 0 ? [&] {
      std::vector<std::size_t> id(static_cast<std::size_t>(K));
      for (std::size_t k = 0; k < id.size(); ++k) id[k] = k;
      return id;
    }()
                             : match_topics(ref.phi, chain.phi);
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto src = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(k)]);
      fit.phi.row(k) += chain.phi.row(src);
      fit.theta.col(k) += chain.theta.col(src);
      if (fit.acceptance.size() > 0) {
        fit.acceptance(c, k) = chain.acceptance(src);
        fit.proposal_concentration(c, k) = chain.proposal_concentration(src);
      }
    }
    if (fit.gamma.size() > 0) fit.gamma += chain.gamma;
    fit.log_likelihood.push_back(std::move(chain.log_likelihood));
  }
  fit.theta /= static_cast<double>(C);
  fit.phi /= static_cast<double>(C);
  if (fit.gamma.size() > 0) fit.gamma /= static_cast<double>(C);
  return fit;
}

void set_thread_limit(std::size_t threads) { g_thread_limit = std::max<std::size_t>(1, threads); }

std::size_t thread_limit() { return g_thread_limit; }

void run_parallel(std::size_t count, const std::function<void(std::size_t)>& job) {
  const std::size_t workers = std::min(count, thread_limit());
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void write_patient_topic_csv(const Eigen::MatrixXd& weights, const Cohort& cohort,
                             const std::filesystem::path& path) {
  CsvWriter out(path);
  out.row("patient_id", "topic", "weight");
  for (std::size_t m = 0; m < cohort.size(); ++m)
    for (Eigen::Index k = 0; k < weights.cols(); ++k)
      out.row(cohort.patient(m).id, static_cast<long long>(k), weights(m, k));
}

void write_theta_csv(const TopicFit& fit, const Cohort& cohort, const std::filesystem::path& path) {
  write_patient_topic_csv(fit.theta, cohort, path);
}

void write_phi_csv(const TopicFit& fit, const DiseaseVocabulary& vocabulary,
                   const std::filesystem::path& path) {
  CsvWriter out(path);
  out.row("topic", "code", "weight");
  for (Eigen::Index k = 0; k < fit.phi.rows(); ++k)
    for (std::size_t v = 0; v < vocabulary.size(); ++v)
      out.row(static_cast<long long>(k), vocabulary.code(v), fit.phi(k, v));
}

void write_diagnostics_csv(const TopicFit& fit, const std::filesystem::path& path) {
  CsvWriter out(path);
  out.row("chain", "sweep", "log_likelihood");
  for (std::size_t c = 0; c < fit.log_likelihood.size(); ++c)
    for (std::size_t s = 0; s < fit.log_likelihood[c].size(); ++s)
      out.row(c, s, fit.log_likelihood[c][s]);
}

void write_gamma_csv(const TopicFit& fit, const Cohort& cohort, const std::filesystem::path& path) {
  CsvWriter out(path);
  out.row("patient_id", "gamma");
  for (std::size_t m = 0; m < cohort.size(); ++m) out.row(cohort.patient(m).id, fit.gamma(m));
}

void write_acceptance_csv(const TopicFit& fit, const std::filesystem::path& path) {
  CsvWriter out(path);
  out.row("chain", "cluster", "rate");
  for (Eigen::Index c = 0; c < fit.acceptance.rows(); ++c)
    for (Eigen::Index k = 0; k < fit.acceptance.cols(); ++k)
      out.row(static_cast<long long>(c), static_cast<long long>(k), fit.acceptance(c, k));
}

namespace {

std::unordered_map<std::string, std::size_t> patient_rows(const Cohort& cohort) {
  std::unordered_map<std::string, std::size_t> rows;
  for (std::size_t m = 0; m < cohort.size(); ++m) rows.emplace(cohort.patient(m).id, m);
  return rows;
}

}  // namespace

Eigen::MatrixXd read_patient_topic_csv(const std::filesystem::path& path, const Cohort& cohort) {
  CsvReader reader(path);
  const auto c_id = reader.require_column("patient_id");
  const auto c_topic = reader.require_column("topic");
  const auto c_w = reader.require_column("weight");
  const auto rows = patient_rows(cohort);
  std::vector<std::tuple<std::size_t, long long, double>> entries;
  long long max_topic = -1;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) throw DataError(reader.where("wrong number of fields"));
    auto it = rows.find(f[c_id]);
    if (it == rows.end()) throw DataError(reader.where("patient '" + f[c_id] + "' is not in the cohort"));
    const long long k = parse_integer(f[c_topic], reader);
    if (k < 0) throw DataError(reader.where("negative topic index"));
    entries.emplace_back(it->second, k, parse_double(f[c_w], reader));
    max_topic = std::max(max_topic, k);
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(cohort.size()), max_topic + 1,
                                                  std::numeric_limits<double>::quiet_NaN());
  for (auto [m, k, w] : entries) out(static_cast<Eigen::Index>(m), k) = w;
  if (!out.allFinite() || out.cols() == 0)
    throw DataError(path.string() + ": matrix does not cover every patient and topic");
  return out;
}

Eigen::MatrixXd read_phi_csv(const std::filesystem::path& path, const DiseaseVocabulary& vocabulary) {
  CsvReader reader(path);
  const auto c_topic = reader.require_column("topic");
  const auto c_code = reader.require_column("code");
  const auto c_w = reader.require_column("weight");
  std::vector<std::tuple<long long, std::size_t, double>> entries;
  long long max_topic = -1;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) throw DataError(reader.where("wrong number of fields"));
    const long long k = parse_integer(f[c_topic], reader);
    auto v = vocabulary.index_of(f[c_code]);
    if (!v) throw DataError(reader.where("unknown disease code '" + f[c_code] + "'"));
    if (k < 0) throw DataError(reader.where("negative topic index"));
    entries.emplace_back(k, *v, parse_double(f[c_w], reader));
    max_topic = std::max(max_topic, k);
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(max_topic + 1, static_cast<Eigen::Index>(vocabulary.size()),
                                                  std::numeric_limits<double>::quiet_NaN());
  for (auto [k, v, w] : entries) out(k, static_cast<Eigen::Index>(v)) = w;
  if (!out.allFinite() || out.rows() == 0)
    throw DataError(path.string() + ": matrix does not cover every topic and code");
  return out;
}

Eigen::VectorXd read_gamma_csv(const std::filesystem::path& path, const Cohort& cohort) {
  CsvReader reader(path);
  const auto c_id = reader.require_column("patient_id");
  const auto c_g = reader.require_column("gamma");
  const auto rows = patient_rows(cohort);
  Eigen::VectorXd out = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(cohort.size()),
                                                  std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) throw DataError(reader.where("wrong number of fields"));
    auto it = rows.find(f[c_id]);
    if (it == rows.end()) throw DataError(reader.where("patient '" + f[c_id] + "' is not in the cohort"));
    out(static_cast<Eigen::Index>(it->second)) = parse_double(f[c_g], reader);
  }
  if (!out.allFinite()) throw DataError(path.string() + ": gamma does not cover every patient");
  return out;
}

TopicFit read_topic_fit(const std::filesystem::path& directory, const Cohort& cohort) {
  TopicFit fit;
  fit.theta = read_patient_topic_csv(directory / "theta.csv", cohort);
  fit.phi = read_phi_csv(directory / "phi.csv", cohort.vocabulary());
  if (fit.theta.cols() != fit.phi.rows())
    throw DataError(directory.string() + ": theta and phi disagree on the topic count");
  if (std::filesystem::exists(directory / "gamma.csv")) {
    fit.model = ModelKind::pdm;
    fit.gamma = read_gamma_csv(directory / "gamma.csv", cohort);
  }
  return fit;
}

}  // namespace latentdx
