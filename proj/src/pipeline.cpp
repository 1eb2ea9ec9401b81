#include "latentdx/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "latentdx/cluster.hpp"
#include "latentdx/csv.hpp"
#include "latentdx/eci.hpp"
#include "latentdx/error.hpp"
#include "latentdx/exposure.hpp"
#include "latentdx/lda.hpp"
#include "latentdx/manifest.hpp"
#include "latentdx/pdm.hpp"
#include "latentdx/random.hpp"
#include "latentdx/rate_model.hpp"
#include "latentdx/report.hpp"
#include "latentdx/survival.hpp"
#include "latentdx/svg.hpp"
#include "latentdx/topic_fit.hpp"
#include "latentdx/tsne.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace latentdx {

fs::path CohortPaths::diagnoses_path() const {
  return diagnoses.empty() ? fs::path(directory) / "diagnoses.csv" : fs::path(diagnoses);
}
fs::path CohortPaths::demographics_path() const {
  return demographics.empty() ? fs::path(directory) / "demographics.csv" : fs::path(demographics);
}
fs::path CohortPaths::vocabulary_path() const {
  return vocabulary.empty() ? fs::path(directory) / "vocabulary.txt" : fs::path(vocabulary);
}

namespace {

// Seed streams below the pipeline master seed.
constexpr std::uint64_t kFitStream = 1;
constexpr std::uint64_t kClusterStream = 2;
constexpr std::uint64_t kEmbedStream = 3;

std::string absolute_or_empty(const std::string& p) {
  if (p.empty()) return p;
  return fs::absolute(p).lexically_normal().string();
}

void require_file(const fs::path& p, std::string_view what) {
  if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

class RunContext {
 public:
  RunContext(const RunOptions& run, std::string subcommand, json config, std::uint64_t seed) {
    if (run.out.empty()) throw ConfigError("an output directory (--out) is required");
    if (run.threads == 0) throw ConfigError("--threads must be at least 1");
    dir_ = run.out;
    if (fs::exists(dir_)) {
      if (!fs::is_directory(dir_)) throw ConfigError(dir_.string() + " exists and is not a directory");
      if (!fs::is_empty(dir_) && !run.force)
        throw ConfigError("output directory " + dir_.string() + " is not empty; pass --force to overwrite");
    }
    fs::create_directories(dir_);
    fs::remove(dir_ / kManifestName);
    set_thread_limit(run.threads);
    manifest_.subcommand = std::move(subcommand);
    manifest_.config = std::move(config);
    manifest_.seed = seed;
    manifest_.started = utc_timestamp();
  }

  fs::path output(const std::string& name) {
    if (std::find(outputs_.begin(), outputs_.end(), name) == outputs_.end()) outputs_.push_back(name);
    return dir_ / name;
  }
  void input(const fs::path& p) {
    manifest_.inputs[fs::absolute(p).lexically_normal().string()] = digest_hex(file_digest(p));
  }
  void stage(std::string name) { stage_ = std::move(name); }
  void warn(std::string message) { manifest_.warnings.push_back(std::move(message)); }
  void warn(const std::vector<std::string>& messages) {
    for (const auto& m : messages) warn(m);
  }
  json& config() { return manifest_.config; }

  template <typename Body>
  void execute(Body&& body) {
    try {
      body();
    } catch (...) {
      manifest_.failed_stage = stage_.empty() ? manifest_.subcommand : stage_;
      try {
        close();
      } catch (...) {
      }
      throw;
    }
    close();
  }

 private:
  void close() {
    manifest_.outputs.clear();
    for (const auto& name : outputs_)
      if (fs::exists(dir_ / name)) manifest_.outputs[name] = digest_hex(file_digest(dir_ / name));
    manifest_.finished = utc_timestamp();
    manifest_.save(dir_);
  }

  fs::path dir_;
  RunManifest manifest_;
  std::vector<std::string> outputs_;
  std::string stage_;
};

// ---- option (de)serialization ----

template <typename T>
void read_field(const json& j, const char* key, T& value) {
  if (j.contains(key) && !j.at(key).is_null()) value = j.at(key).get<T>();
}

template <typename T>
void read_field(const json& j, const char* key, std::optional<T>& value) {
  if (j.contains(key) && !j.at(key).is_null()) value = j.at(key).get<T>();
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json run_json(const RunOptions& r) { return {{"threads", r.threads}}; }
void run_from(const json& j, RunOptions& r) { read_field(j, "threads", r.threads); }

json cohort_json(const CohortPaths& c) {
  return {{"diagnoses", absolute_or_empty(c.diagnoses_path().string())},
          {"demographics", absolute_or_empty(c.demographics_path().string())},
          {"vocabulary", absolute_or_empty(c.vocabulary_path().string())}};
}
void cohort_from(const json& j, CohortPaths& c) {
  read_field(j, "diagnoses", c.diagnoses);
  read_field(j, "demographics", c.demographics);
  read_field(j, "vocabulary", c.vocabulary);
}

json model_json(const ModelOptions& m) {
  return {{"model", m.model},
          {"k", m.k},
          {"alpha", optional_json(m.alpha)},
          {"beta", optional_json(m.beta)},
          {"xi", m.xi},
          {"delta", m.delta},
          {"proposal_concentration", m.proposal_concentration},
          {"phi_steps", m.phi_steps},
          {"diagnosed_only", m.diagnosed_only},
          {"chains", m.chains},
          {"burn_in", m.burn_in},
          {"samples", m.samples},
          {"thin", m.thin}};
}
void model_from(const json& j, ModelOptions& m) {
  read_field(j, "model", m.model);
  read_field(j, "k", m.k);
  read_field(j, "alpha", m.alpha);
  read_field(j, "beta", m.beta);
  read_field(j, "xi", m.xi);
  read_field(j, "delta", m.delta);
  read_field(j, "proposal_concentration", m.proposal_concentration);
  read_field(j, "phi_steps", m.phi_steps);
  read_field(j, "diagnosed_only", m.diagnosed_only);
  read_field(j, "chains", m.chains);
  read_field(j, "burn_in", m.burn_in);
  read_field(j, "samples", m.samples);
  read_field(j, "thin", m.thin);
}

json generator_json(const GeneratorConfig& g) {
  return {{"patients", g.patients},
          {"vocabulary_size", g.vocabulary_size},
          {"clusters", g.clusters},
          {"alpha", g.alpha},
          {"beta", g.beta},
          {"xi", g.xi},
          {"delta", g.delta},
          {"female_fraction", g.female_fraction},
          {"median_age_male", g.median_age_male},
          {"median_age_female", g.median_age_female},
          {"age_sd", g.age_sd},
          {"min_age", g.min_age},
          {"max_age", g.max_age},
          {"followup_min", g.followup_min},
          {"followup_max", g.followup_max},
          {"target_mean_diagnoses", g.target_mean_diagnoses},
          {"rate_intercept_sd", g.rate_intercept_sd},
          {"age_slope", g.age_slope},
          {"age_slope_sd", g.age_slope_sd},
          {"age_slope_split", g.age_slope_split},
          {"sex_effect_sd", g.sex_effect_sd},
          {"base_hazard", g.base_hazard},
          {"hazard_spread", g.hazard_spread},
          {"survival_age_effect", g.survival_age_effect},
          {"lda_mode", g.lda_mode},
          {"block_topics", g.block_topics},
          {"pure_patients", g.pure_patients},
          {"index_code", g.index_code},
          {"index_target_mean", g.index_target_mean},
          {"seed", g.seed}};
}
void generator_from(const json& j, GeneratorConfig& g) {
  read_field(j, "patients", g.patients);
  read_field(j, "vocabulary_size", g.vocabulary_size);
  read_field(j, "clusters", g.clusters);
  read_field(j, "alpha", g.alpha);
  read_field(j, "beta", g.beta);
  read_field(j, "xi", g.xi);
  read_field(j, "delta", g.delta);
  read_field(j, "female_fraction", g.female_fraction);
  read_field(j, "median_age_male", g.median_age_male);
  read_field(j, "median_age_female", g.median_age_female);
  read_field(j, "age_sd", g.age_sd);
  read_field(j, "min_age", g.min_age);
  read_field(j, "max_age", g.max_age);
  read_field(j, "followup_min", g.followup_min);
  read_field(j, "followup_max", g.followup_max);
  read_field(j, "target_mean_diagnoses", g.target_mean_diagnoses);
  read_field(j, "rate_intercept_sd", g.rate_intercept_sd);
  read_field(j, "age_slope", g.age_slope);
  read_field(j, "age_slope_sd", g.age_slope_sd);
  read_field(j, "age_slope_split", g.age_slope_split);
  read_field(j, "sex_effect_sd", g.sex_effect_sd);
  read_field(j, "base_hazard", g.base_hazard);
  read_field(j, "hazard_spread", g.hazard_spread);
  read_field(j, "survival_age_effect", g.survival_age_effect);
  read_field(j, "lda_mode", g.lda_mode);
  read_field(j, "block_topics", g.block_topics);
  read_field(j, "pure_patients", g.pure_patients);
  read_field(j, "index_code", g.index_code);
  read_field(j, "index_target_mean", g.index_target_mean);
  read_field(j, "seed", g.seed);
}

// ---- shared stages ----

Cohort load_and_record(const CohortPaths& paths, RunContext& ctx) {
  require_file(paths.vocabulary_path(), "vocabulary file");
  require_file(paths.diagnoses_path(), "diagnoses file");
  require_file(paths.demographics_path(), "demographics file");
  ctx.input(paths.vocabulary_path());
  ctx.input(paths.diagnoses_path());
  ctx.input(paths.demographics_path());
  return load_cohort(paths);
}

ExpectedCounts compute_expected(const Cohort& cohort, int df, const std::string& rates_file, RunContext& ctx) {
  if (!rates_file.empty()) {
    require_file(rates_file, "rate table");
    ctx.input(rates_file);
    return predict_expected(RateTable::load(rates_file, cohort.vocabulary()), cohort);
  }
  const RateModelFit fit = fit_rate_model(bin_exposure(cohort), df);
  write_rate_fit_csv(fit, cohort.vocabulary(), ctx.output("rate_fit.csv"));
  std::vector<std::string> warnings;
  ExpectedCounts expected = predict_expected(fit, cohort, &warnings);
  ctx.warn(warnings);
  return expected;
}

ExpectedCounts expected_from_inputs(const Cohort& cohort, const std::string& expected_file,
                                    const std::string& rates_file, RunContext& ctx) {
  if (!expected_file.empty()) {
    require_file(expected_file, "expected-count file");
    ctx.input(expected_file);
    return load_expected_csv(expected_file, cohort);
  }
  if (!rates_file.empty()) {
    require_file(rates_file, "rate table");
    ctx.input(rates_file);
    return predict_expected(RateTable::load(rates_file, cohort.vocabulary()), cohort);
  }
  throw ConfigError(
      "the pdm model needs expected counts: run `latentdx rates` first and pass its expected.csv with "
      "--expected, or supply a rate table with --rates-file");
}

SamplerConfig sampler_config(const ModelOptions& m, std::uint64_t seed) {
  SamplerConfig s;
  s.chains = m.chains;
  s.burn_in = m.burn_in;
  s.samples = m.samples;
  s.thin = m.thin;
  s.seed = seed;
  s.validate();
  return s;
}

LdaHyperparams lda_hyper(const ModelOptions& m) {
  if (m.k < 1) throw ConfigError("--k must be at least 1");
  LdaHyperparams h = LdaHyperparams::defaults(m.k);
  if (m.alpha) h.alpha = *m.alpha;
  if (m.beta) h.beta = *m.beta;
  h.validate();
  return h;
}

PdmHyperparams pdm_hyper(const ModelOptions& m) {
  if (m.k < 1) throw ConfigError("--k must be at least 1");
  PdmHyperparams h;
  h.clusters = m.k;
  if (m.alpha) h.alpha = *m.alpha;
  if (m.beta) h.beta = *m.beta;
  h.xi = m.xi;
  h.delta = m.delta;
  h.phi_proposal_concentration = m.proposal_concentration;
  h.validate();
  return h;
}

PdmOptions pdm_options(const ModelOptions& m) {
  PdmOptions o;
  o.phi_steps = m.phi_steps;
  o.include_zero_counts = !m.diagnosed_only;
  if (o.phi_steps < 1) throw ConfigError("--phi-steps must be at least 1");
  return o;
}

json effective_hyper(const ModelOptions& m) {
  if (parse_model(m.model) == ModelKind::lda) {
    const auto h = lda_hyper(m);
    return {{"topics", h.topics}, {"alpha", h.alpha}, {"beta", h.beta}};
  }
  const auto h = pdm_hyper(m);
  const auto o = pdm_options(m);
  return {{"clusters", h.clusters},
          {"alpha", h.alpha},
          {"beta", h.beta},
          {"xi", h.xi},
          {"delta", h.delta},
          {"phi_proposal_concentration", h.phi_proposal_concentration},
          {"phi_steps", o.phi_steps},
          {"target_acceptance", o.target_acceptance},
          {"include_zero_counts", o.include_zero_counts}};
}

TopicFit fit_model(const Cohort& cohort, const ModelOptions& m, const ExpectedCounts* expected,
                   std::uint64_t seed) {
  const SamplerConfig sampler = sampler_config(m, seed);
  if (parse_model(m.model) == ModelKind::lda) return fit_lda(cohort, lda_hyper(m), sampler);
  if (expected == nullptr) throw ConfigError("pdm fit requested without expected counts; run `latentdx rates`");
  return fit_pdm(cohort, expected->values, pdm_hyper(m), sampler, pdm_options(m));
}

void write_fit(const TopicFit& fit, const Cohort& cohort, RunContext& ctx) {
  write_theta_csv(fit, cohort, ctx.output("theta.csv"));
  write_phi_csv(fit, cohort.vocabulary(), ctx.output("phi.csv"));
  write_diagnostics_csv(fit, ctx.output("diagnostics.csv"));
  if (fit.model == ModelKind::pdm) {
    write_gamma_csv(fit, cohort, ctx.output("gamma.csv"));
    write_acceptance_csv(fit, ctx.output("acceptance.csv"));
  }
}

Eigen::MatrixXd posterior_matrix(const TopicFit& fit, const Cohort& cohort, const ExpectedCounts* expected) {
  if (fit.model == ModelKind::lda) return patient_topic_posterior(fit, cohort);
  if (expected == nullptr) throw ConfigError("pdm posterior needs expected counts; run `latentdx rates`");
  return patient_topic_posterior_pdm(fit, cohort, expected->values, fit.gamma);
}

std::vector<ClusterAlgorithm> parse_algorithms(const std::vector<std::string>& names) {
  if (names.empty()) throw ConfigError("at least one clustering algorithm is required");
  std::vector<ClusterAlgorithm> out;
  for (const auto& n : names) out.push_back(parse_algorithm(n));
  return out;
}

struct GridCell {
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
  std::size_t groups = 0;
  std::vector<int> labels;
  std::optional<LogRankResult> test;
  std::string error;
};

std::vector<SurvivalSample> survival_samples(const Cohort& cohort, const std::vector<int>& labels) {
  std::vector<SurvivalSample> samples(cohort.size());
  for (std::size_t m = 0; m < cohort.size(); ++m) {
    samples[m].time = cohort.patient(m).survival_time;
    samples[m].event = cohort.patient(m).event;
    samples[m].group = labels.at(m);
  }
  return samples;
}

std::vector<GridCell> survival_grid(const Cohort& cohort, const std::vector<SweepCell>& cells) {
  std::vector<GridCell> grid;
  for (const auto& cell : cells) {
    GridCell g;
    g.algorithm = cell.algorithm;
    g.groups = cell.groups;
    g.error = cell.error;
    if (cell.assignment) {
      g.labels = cell.assignment->labels;
      try {
        const auto samples = survival_samples(cohort, g.labels);
        g.test = log_rank_test(samples, g.groups);
      } catch (const std::exception& e) {
        g.error = e.what();
      }
    }
    grid.push_back(std::move(g));
  }
  return grid;
}

void write_grid_csv(const std::vector<GridCell>& grid, const fs::path& path) {
  CsvWriter out(path);
  out.row("algorithm", "G", "chi_square", "df", "p_value", "error");
  for (const auto& g : grid) {
    out << algorithm_name(g.algorithm) << g.groups;
    if (g.test)
      out << g.test->chi_square << g.test->degrees_of_freedom << g.test->p_value << "";
    else
      out << "" << "" << "" << g.error;
    out.end_row();
  }
}

// Smallest p-value; ties go to the smaller G.
const GridCell& select_cell(const std::vector<GridCell>& grid) {
  const GridCell* best = nullptr;
  for (const auto& g : grid) {
    if (!g.test) continue;
    if (best == nullptr || g.test->p_value < best->test->p_value ||
        (g.test->p_value == best->test->p_value && g.groups < best->groups))
      best = &g;
  }
  if (best == nullptr) throw NumericalError("no subgrouping produced a log-rank p-value");
  return *best;
}

std::string cell_title(const GridCell& g) {
  std::string t = std::string(algorithm_name(g.algorithm)) + ", G=" + std::to_string(g.groups);
  if (g.test) t += ", log-rank p=" + format_fixed(g.test->p_value, 4);
  return t;
}

void write_km(const Cohort& cohort, const GridCell& cell, const fs::path& csv_path, const fs::path& svg_path) {
  const auto samples = survival_samples(cohort, cell.labels);
  std::vector<KmCurve> curves;
  std::vector<std::string> names;
  std::optional<CsvWriter> out;
  if (!csv_path.empty()) {
    out.emplace(csv_path);
    out->row("group", "time", "survival", "at_risk", "events");
  }
  for (std::size_t g = 0; g < cell.groups; ++g) {
    std::vector<SurvivalSample> group;
    for (const auto& s : samples)
      if (s.group == static_cast<int>(g)) group.push_back(s);
    if (group.empty()) continue;
    KmCurve curve = kaplan_meier(group);
    if (out)
      for (std::size_t i = 0; i < curve.times.size(); ++i)
        out->row(static_cast<long long>(g + 1), curve.times[i], curve.survival[i], curve.at_risk[i],
                 curve.events[i]);
    names.push_back("subgroup " + std::to_string(g + 1) + " (n=" + std::to_string(group.size()) + ")");
    curves.push_back(std::move(curve));
  }
  write_km_svg(curves, names, cell_title(cell), svg_path);
}

EciMapping mapping_for(const Cohort& cohort, const std::string& path, RunContext& ctx) {
  if (path.empty()) return default_eci_mapping(cohort.vocabulary());
  require_file(path, "ECI mapping");
  ctx.input(path);
  return load_eci_mapping(path, cohort.vocabulary());
}

void write_reports(const Cohort& cohort, const GridCell& cell, const EciMapping& mapping, RunContext& ctx) {
  const auto profiles = eci_profiles(cohort, mapping);
  write_eci_profiles_csv(profiles, cohort, ctx.output("eci_profiles.csv"));
  const SubgroupReport report = subgroup_report(cohort, cell.labels, cell.groups, profiles);
  ctx.warn(report.warnings);
  write_report_csv(report, ctx.output("report.csv"));
  std::ofstream text(ctx.output("report.txt"));
  text << format_report_text(report, cell_title(cell));
  if (!text) throw DataError("cannot write report.txt");
}

double default_perplexity(ModelKind kind) { return kind == ModelKind::pdm ? 10.0 : 20.0; }

void write_embedding(const TopicFit& fit, const Cohort& cohort, double perplexity, std::size_t iterations,
                     double learning_rate, std::uint64_t seed, RunContext& ctx) {
  // Each disease is a point: its column of phi.
  const Eigen::MatrixXd points = fit.phi.transpose();
  EmbedConfig config;
  config.perplexity = perplexity;
  config.iterations = iterations;
  config.learning_rate = learning_rate;
  config.seed = seed;
  config.validate(static_cast<std::size_t>(points.rows()));
  const Embedding2D embedding = tsne(points, config);
  std::vector<int> groups(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index v = 0; v < points.rows(); ++v) {
    Eigen::Index k = 0;
    points.row(v).maxCoeff(&k);
    groups[static_cast<std::size_t>(v)] = static_cast<int>(k);
  }
  export_embedding(embedding, cohort.vocabulary().codes(), ctx.output("embedding.csv"),
                   ctx.output("embedding.svg"), groups,
                   std::string("t-SNE of disease columns (") + std::string(model_name(fit.model)) + ")");
  CsvWriter trace(ctx.output("embedding_kl.csv"));
  trace.row("iteration", "kl");
  for (const auto& [it, kl] : embedding.kl_trace) trace.row(it, kl);
}

std::vector<SweepCell> cells_from_file(const fs::path& path, const Cohort& cohort) {
  std::vector<std::pair<ClusterAlgorithm, std::size_t>> keys;
  {
    CsvReader reader(path);
    const auto ac = reader.require_column("algorithm");
    const auto gc = reader.require_column("G");
    std::vector<std::string> f;
    std::set<std::pair<int, long long>> seen;
    while (reader.next(f)) {
      const ClusterAlgorithm a = parse_algorithm(f.at(ac));
      const long long g = parse_integer(f.at(gc), reader);
      if (g < 1) throw DataError(reader.where("G must be positive"));
      if (seen.insert({static_cast<int>(a), g}).second) keys.emplace_back(a, static_cast<std::size_t>(g));
    }
  }
  if (keys.empty()) throw DataError(path.string() + ": no assignments");
  std::vector<SweepCell> cells;
  for (const auto& [a, g] : keys) {
    SweepCell cell;
    cell.algorithm = a;
    cell.groups = g;
    cell.assignment = read_assignment(path, cohort, a, g);
    cells.push_back(std::move(cell));
  }
  return cells;
}

GridCell choose_cell(const Cohort& cohort, const fs::path& assignments, const std::string& algorithm,
                     std::size_t groups, std::vector<GridCell>* grid_out) {
  std::vector<GridCell> grid = survival_grid(cohort, cells_from_file(assignments, cohort));
  if (grid_out) *grid_out = grid;
  if (algorithm.empty() && groups == 0) return select_cell(grid);
  if (algorithm.empty() || groups == 0) throw ConfigError("--algorithm and --groups must be given together");
  const ClusterAlgorithm a = parse_algorithm(algorithm);
  for (const auto& g : grid)
    if (g.algorithm == a && g.groups == groups) return g;
  throw DataError(assignments.string() + ": no assignment for " + algorithm + " G=" + std::to_string(groups));
}

void write_cohort_files(const Cohort& cohort, RunContext& ctx) {
  write_cohort(cohort, ctx.output("diagnoses.csv"), ctx.output("demographics.csv"));
  cohort.vocabulary().save(ctx.output("vocabulary.txt"));
}

TopicFit load_fit(const std::string& dir, const Cohort& cohort, RunContext& ctx) {
  if (dir.empty()) throw ConfigError("--fit directory is required");
  for (const char* name : {"theta.csv", "phi.csv", "gamma.csv"}) {
    const fs::path p = fs::path(dir) / name;
    if (fs::exists(p)) ctx.input(p);
  }
  require_file(fs::path(dir) / "theta.csv", "theta.csv (run `latentdx fit` first)");
  require_file(fs::path(dir) / "phi.csv", "phi.csv (run `latentdx fit` first)");
  return read_topic_fit(dir, cohort);
}

}  // namespace

Cohort load_cohort(const CohortPaths& paths) {
  const auto vocabulary = DiseaseVocabulary::load(paths.vocabulary_path());
  return load_cohort(paths.diagnoses_path(), paths.demographics_path(), vocabulary);
}

// ---- to_json ----

json to_json(const GenerateOptions& o) {
  return {{"run", run_json(o.run)}, {"preset", o.preset}, {"generator", generator_json(o.generator)}};
}

json to_json(const RatesOptions& o) {
  return {{"run", run_json(o.run)},
          {"cohort", cohort_json(o.cohort)},
          {"df", o.df},
          {"rates_file", absolute_or_empty(o.rates_file)}};
}

json to_json(const FitOptions& o) {
  return {{"run", run_json(o.run)},
          {"cohort", cohort_json(o.cohort)},
          {"model", model_json(o.model)},
          {"seed", o.seed},
          {"expected", absolute_or_empty(o.expected)},
          {"rates_file", absolute_or_empty(o.rates_file)}};
}

json to_json(const PosteriorOptions& o) {
  return {{"run", run_json(o.run)},
          {"cohort", cohort_json(o.cohort)},
          {"fit", absolute_or_empty(o.fit)},
          {"expected", absolute_or_empty(o.expected)},
          {"rates_file", absolute_or_empty(o.rates_file)}};
}

json to_json(const ClusterOptions& o) {
  return {{"run", run_json(o.run)},
          {"cohort", cohort_json(o.cohort)},
          {"features", absolute_or_empty(o.features)},
          {"algorithms", o.algorithms},
          {"min_groups", o.min_groups},
          {"max_groups", o.max_groups},
          {"seed", o.seed},
          {"branching_factor", o.branching_factor},
          {"birch_threshold", o.birch_threshold}};
}

json to_json(const SurviveOptions& o) {
  return {{"run", run_json(o.run)},
          {"cohort", cohort_json(o.cohort)},
          {"assignments", absolute_or_empty(o.assignments)},
          {"algorithm", o.algorithm},
          {"groups", o.groups}};
}

json to_json(const EciOptions& o) {
  return {{"run", run_json(o.run)},
          {"cohort", cohort_json(o.cohort)},
          {"assignments", absolute_or_empty(o.assignments)},
          {"algorithm", o.algorithm},
          {"groups", o.groups},
          {"mapping", absolute_or_empty(o.mapping)}};
}

json to_json(const EmbedOptions& o) {
  return {{"run", run_json(o.run)},
          {"cohort", cohort_json(o.cohort)},
          {"fit", absolute_or_empty(o.fit)},
          {"perplexity", optional_json(o.perplexity)},
          {"iterations", o.iterations},
          {"learning_rate", o.learning_rate},
          {"seed", o.seed}};
}

json to_json(const PipelineOptions& o) {
  return {{"run", run_json(o.run)},
          {"cohort", cohort_json(o.cohort)},
          {"model", model_json(o.model)},
          {"seed", o.seed},
          {"df", o.df},
          {"rates_file", absolute_or_empty(o.rates_file)},
          {"features", o.features},
          {"algorithms", o.algorithms},
          {"min_groups", o.min_groups},
          {"max_groups", o.max_groups},
          {"branching_factor", o.branching_factor},
          {"birch_threshold", o.birch_threshold},
          {"eci_mapping", absolute_or_empty(o.eci_mapping)},
          {"perplexity", optional_json(o.perplexity)},
          {"tsne_iterations", o.tsne_iterations}};
}

// ---- subcommands ----

void run_generate(const GenerateOptions& o) {
  o.generator.validate();
  RunContext ctx(o.run, "generate", to_json(o), o.generator.seed);
  ctx.execute([&] {
    ctx.stage("generate");
    auto [cohort, truth] = generate_synthetic_cohort(o.generator);
    ctx.stage("write");
    write_cohort_files(cohort, ctx);
    write_eci_mapping(default_eci_mapping(cohort.vocabulary()), cohort.vocabulary(), ctx.output("eci_mapping.csv"));
    for (const char* name : {"truth_theta.csv", "truth_phi.csv", "truth_gamma.csv", "truth_z.csv"})
      ctx.output(name);
    write_ground_truth(truth, cohort, o.run.out);
    write_expected_csv(ExpectedCounts{truth.expected, "generator"}, cohort, ctx.output("truth_expected.csv"));
  });
}

void run_rates(const RatesOptions& o) {
  if (o.df < 1) throw ConfigError("--df must be at least 1");
  RunContext ctx(o.run, "rates", to_json(o), 0);
  ctx.execute([&] {
    ctx.stage("load");
    const Cohort cohort = load_and_record(o.cohort, ctx);
    ctx.stage("rates");
    const ExpectedCounts expected = compute_expected(cohort, o.df, o.rates_file, ctx);
    write_expected_csv(expected, cohort, ctx.output("expected.csv"));
  });
}

void run_fit(const FitOptions& o) {
  const ModelKind kind = parse_model(o.model.model);
  json config = to_json(o);
  config["effective"] = effective_hyper(o.model);
  if (kind == ModelKind::pdm && o.expected.empty() && o.rates_file.empty())
    throw ConfigError(
        "the pdm model needs expected counts: run `latentdx rates` first and pass its expected.csv with "
        "--expected, or supply a rate table with --rates-file");
  RunContext ctx(o.run, "fit", std::move(config), o.seed);
  ctx.execute([&] {
    ctx.stage("load");
    const Cohort cohort = load_and_record(o.cohort, ctx);
    std::optional<ExpectedCounts> expected;
    if (kind == ModelKind::pdm) expected = expected_from_inputs(cohort, o.expected, o.rates_file, ctx);
    ctx.stage("fit");
    const TopicFit fit = fit_model(cohort, o.model, expected ? &*expected : nullptr, o.seed);
    write_fit(fit, cohort, ctx);
  });
}

void run_posterior(const PosteriorOptions& o) {
  RunContext ctx(o.run, "posterior", to_json(o), 0);
  ctx.execute([&] {
    ctx.stage("load");
    const Cohort cohort = load_and_record(o.cohort, ctx);
    const TopicFit fit = load_fit(o.fit, cohort, ctx);
    std::optional<ExpectedCounts> expected;
    if (fit.model == ModelKind::pdm) expected = expected_from_inputs(cohort, o.expected, o.rates_file, ctx);
    ctx.stage("posterior");
    write_patient_topic_csv(posterior_matrix(fit, cohort, expected ? &*expected : nullptr), cohort,
                            ctx.output("posterior.csv"));
  });
}

void run_cluster(const ClusterOptions& o) {
  SweepOptions sweep;
  sweep.algorithms = parse_algorithms(o.algorithms);
  sweep.min_groups = o.min_groups;
  sweep.max_groups = o.max_groups;
  sweep.seed = o.seed;
  sweep.branching_factor = o.branching_factor;
  sweep.birch_threshold = o.birch_threshold;
  if (o.features.empty()) throw ConfigError("--features is required (posterior.csv or theta.csv)");
  RunContext ctx(o.run, "cluster", to_json(o), o.seed);
  ctx.execute([&] {
    ctx.stage("load");
    const Cohort cohort = load_and_record(o.cohort, ctx);
    require_file(o.features, "feature file");
    ctx.input(o.features);
    const Eigen::MatrixXd x = read_patient_topic_csv(o.features, cohort);
    ctx.stage("cluster");
    const auto cells = sweep_subgroups(x, sweep);
    for (const auto& c : cells)
      if (!c.error.empty())
        ctx.warn(std::string(algorithm_name(c.algorithm)) + " G=" + std::to_string(c.groups) + ": " + c.error);
    write_assignments_csv(cells, cohort, ctx.output("assignments.csv"));
  });
}

void run_survive(const SurviveOptions& o) {
  if (o.assignments.empty()) throw ConfigError("--assignments is required");
  RunContext ctx(o.run, "survive", to_json(o), 0);
  ctx.execute([&] {
    ctx.stage("load");
    const Cohort cohort = load_and_record(o.cohort, ctx);
    require_file(o.assignments, "assignments file");
    ctx.input(o.assignments);
    ctx.stage("survival");
    std::vector<GridCell> grid;
    const GridCell cell = choose_cell(cohort, o.assignments, o.algorithm, o.groups, &grid);
    write_grid_csv(grid, ctx.output("pgrid.csv"));
    write_km(cohort, cell, ctx.output("km.csv"), ctx.output("km.svg"));
  });
}

void run_eci(const EciOptions& o) {
  if (o.assignments.empty()) throw ConfigError("--assignments is required");
  RunContext ctx(o.run, "eci", to_json(o), 0);
  ctx.execute([&] {
    ctx.stage("load");
    const Cohort cohort = load_and_record(o.cohort, ctx);
    require_file(o.assignments, "assignments file");
    ctx.input(o.assignments);
    const EciMapping mapping = mapping_for(cohort, o.mapping, ctx);
    if (mapping.skipped_codes > 0)
      ctx.warn(std::to_string(mapping.skipped_codes) + " mapping codes are not in the vocabulary");
    ctx.stage("eci");
    const GridCell cell = choose_cell(cohort, o.assignments, o.algorithm, o.groups, nullptr);
    write_reports(cohort, cell, mapping, ctx);
  });
}

void run_embed(const EmbedOptions& o) {
  RunContext ctx(o.run, "embed", to_json(o), o.seed);
  ctx.execute([&] {
    ctx.stage("load");
    const Cohort cohort = load_and_record(o.cohort, ctx);
    const TopicFit fit = load_fit(o.fit, cohort, ctx);
    ctx.stage("embed");
    const double perplexity = o.perplexity.value_or(default_perplexity(fit.model));
    ctx.config()["effective_perplexity"] = perplexity;
    write_embedding(fit, cohort, perplexity, o.iterations, o.learning_rate, o.seed, ctx);
  });
}

void run_pipeline(const PipelineOptions& o) {
  const ModelKind kind = parse_model(o.model.model);
  if (o.features != "posterior" && o.features != "theta")
    throw ConfigError("--features must be 'posterior' or 'theta'");
  if (o.df < 1) throw ConfigError("--df must be at least 1");
  SweepOptions sweep;
  sweep.algorithms = parse_algorithms(o.algorithms);
  sweep.min_groups = o.min_groups;
  sweep.max_groups = o.max_groups;
  sweep.seed = derive_seed(o.seed, kClusterStream);
  sweep.branching_factor = o.branching_factor;
  sweep.birch_threshold = o.birch_threshold;
  json config = to_json(o);
  config["effective"] = effective_hyper(o.model);
  const double perplexity = o.perplexity.value_or(default_perplexity(kind));
  config["effective_perplexity"] = perplexity;

  RunContext ctx(o.run, "pipeline", std::move(config), o.seed);
  ctx.execute([&] {
    ctx.stage("load");
    const Cohort cohort = load_and_record(o.cohort, ctx);
    const EciMapping mapping = mapping_for(cohort, o.eci_mapping, ctx);

    ctx.stage("rates");
    std::optional<ExpectedCounts> expected;
    if (kind == ModelKind::pdm) {
      expected = compute_expected(cohort, o.df, o.rates_file, ctx);
      write_expected_csv(*expected, cohort, ctx.output("expected.csv"));
    }

    ctx.stage("fit");
    const TopicFit fit = fit_model(cohort, o.model, expected ? &*expected : nullptr, derive_seed(o.seed, kFitStream));
    write_fit(fit, cohort, ctx);

    ctx.stage("posterior");
    const Eigen::MatrixXd posterior = posterior_matrix(fit, cohort, expected ? &*expected : nullptr);
    write_patient_topic_csv(posterior, cohort, ctx.output("posterior.csv"));

    ctx.stage("cluster");
    const auto cells = sweep_subgroups(o.features == "theta" ? fit.theta : posterior, sweep);
    for (const auto& c : cells)
      if (!c.error.empty())
        ctx.warn(std::string(algorithm_name(c.algorithm)) + " G=" + std::to_string(c.groups) + ": " + c.error);
    write_assignments_csv(cells, cohort, ctx.output("assignments.csv"));

    ctx.stage("survival");
    const auto grid = survival_grid(cohort, cells);
    write_grid_csv(grid, ctx.output("pgrid.csv"));
    const GridCell& selected = select_cell(grid);
    write_km(cohort, selected, ctx.output("km.csv"), ctx.output("km.svg"));
    for (auto algorithm : sweep.algorithms) {
      std::vector<GridCell> own;
      for (const auto& g : grid)
        if (g.algorithm == algorithm) own.push_back(g);
      bool any = false;
      for (const auto& g : own) any = any || g.test.has_value();
      if (!any) continue;
      write_km(cohort, select_cell(own), {}, ctx.output("km_" + std::string(algorithm_name(algorithm)) + ".svg"));
    }

    ctx.stage("eci");
    write_reports(cohort, selected, mapping, ctx);

    ctx.stage("embed");
    write_embedding(fit, cohort, perplexity, o.tsne_iterations, 200.0, derive_seed(o.seed, kEmbedStream), ctx);
  });
}

std::vector<std::string> run_replay(const fs::path& manifest_path, const std::string& out, bool force) {
  require_file(manifest_path, "manifest");
  const RunManifest recorded = RunManifest::load(manifest_path);
  const json& c = recorded.config;
  RunOptions run;
  run_from(c.value("run", json::object()), run);
  run.out = out.empty() ? manifest_path.parent_path().string() : out;
  run.force = force || out.empty();
  if (run.out.empty()) run.out = ".";

  const json cohort_j = c.value("cohort", json::object());
  const std::string& cmd = recorded.subcommand;
  if (cmd == "generate") {
    GenerateOptions o;
    o.run = run;
    read_field(c, "preset", o.preset);
    generator_from(c.at("generator"), o.generator);
    run_generate(o);
  } else if (cmd == "rates") {
    RatesOptions o;
    o.run = run;
    cohort_from(cohort_j, o.cohort);
    read_field(c, "df", o.df);
    read_field(c, "rates_file", o.rates_file);
    run_rates(o);
  } else if (cmd == "fit") {
    FitOptions o;
    o.run = run;
    cohort_from(cohort_j, o.cohort);
    model_from(c.at("model"), o.model);
    read_field(c, "seed", o.seed);
    read_field(c, "expected", o.expected);
    read_field(c, "rates_file", o.rates_file);
    run_fit(o);
  } else if (cmd == "posterior") {
    PosteriorOptions o;
    o.run = run;
    cohort_from(cohort_j, o.cohort);
    read_field(c, "fit", o.fit);
    read_field(c, "expected", o.expected);
    read_field(c, "rates_file", o.rates_file);
    run_posterior(o);
  } else if (cmd == "cluster") {
    ClusterOptions o;
    o.run = run;
    cohort_from(cohort_j, o.cohort);
    read_field(c, "features", o.features);
    read_field(c, "algorithms", o.algorithms);
    read_field(c, "min_groups", o.min_groups);
    read_field(c, "max_groups", o.max_groups);
    read_field(c, "seed", o.seed);
    read_field(c, "branching_factor", o.branching_factor);
    read_field(c, "birch_threshold", o.birch_threshold);
    run_cluster(o);
  } else if (cmd == "survive") {
    SurviveOptions o;
    o.run = run;
    cohort_from(cohort_j, o.cohort);
    read_field(c, "assignments", o.assignments);
    read_field(c, "algorithm", o.algorithm);
    read_field(c, "groups", o.groups);
    run_survive(o);
  } else if (cmd == "eci") {
    EciOptions o;
    o.run = run;
    cohort_from(cohort_j, o.cohort);
    read_field(c, "assignments", o.assignments);
    read_field(c, "algorithm", o.algorithm);
    read_field(c, "groups", o.groups);
    read_field(c, "mapping", o.mapping);
    run_eci(o);
  } else if (cmd == "embed") {
    EmbedOptions o;
    o.run = run;
    cohort_from(cohort_j, o.cohort);
    read_field(c, "fit", o.fit);
    read_field(c, "perplexity", o.perplexity);
    read_field(c, "iterations", o.iterations);
    read_field(c, "learning_rate", o.learning_rate);
    read_field(c, "seed", o.seed);
    run_embed(o);
  } else if (cmd == "pipeline") {
    PipelineOptions o;
    o.run = run;
    cohort_from(cohort_j, o.cohort);
    model_from(c.at("model"), o.model);
    read_field(c, "seed", o.seed);
    read_field(c, "df", o.df);
    read_field(c, "rates_file", o.rates_file);
    read_field(c, "features", o.features);
    read_field(c, "algorithms", o.algorithms);
    read_field(c, "min_groups", o.min_groups);
    read_field(c, "max_groups", o.max_groups);
    read_field(c, "branching_factor", o.branching_factor);
    read_field(c, "birch_threshold", o.birch_threshold);
    read_field(c, "eci_mapping", o.eci_mapping);
    read_field(c, "perplexity", o.perplexity);
    read_field(c, "tsne_iterations", o.tsne_iterations);
    run_pipeline(o);
  } else {
    throw ConfigError(manifest_path.string() + ": cannot replay subcommand '" + cmd + "'");
  }

  std::vector<std::string> mismatched = verify_outputs(recorded, run.out);
  const RunManifest fresh = RunManifest::load(fs::path(run.out) / kManifestName);
  for (const auto& [name, digest] : fresh.outputs)
    if (!recorded.outputs.count(name)) mismatched.push_back(name);
  return mismatched;
}

}  // namespace latentdx
