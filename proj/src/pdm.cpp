#include "latentdx/pdm.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "latentdx/cluster.hpp"
#include "latentdx/error.hpp"
#include "latentdx/rate_model.hpp"

namespace latentdx {

void PdmHyperparams::validate() const {
  if (clusters < 1) throw ConfigError("K must be at least 1");
  if (!(alpha > 0.0) || !(beta > 0.0) || !(xi > 0.0) || !(delta > 0.0) || !(phi_proposal_concentration > 0.0))
    throw ConfigError("PDM hyperparameters must be positive");
  if (std::abs(xi * delta - 1.0) > 1e-12) throw ConfigError("xi * delta must equal 1");
}

PdmData::PdmData(const CountMatrix& counts, const Eigen::MatrixXd& expected, bool include_zero_counts)
    : vocabulary_(static_cast<std::size_t>(counts.cols())) {
  if (expected.rows() != counts.rows() || expected.cols() != counts.cols())
    throw DataError("expected counts do not match the count matrix dimensions");
  offsets_.push_back(0);
  for (Eigen::Index m = 0; m < counts.rows(); ++m) {
    for (Eigen::Index n = 0; n < counts.cols(); ++n) {
      if (counts(m, n) == 0 && !include_zero_counts) continue;
      PdmPair p;
      p.patient = static_cast<std::uint32_t>(m);
      p.disease = static_cast<std::uint32_t>(n);
      p.count = counts(m, n);
      p.expected = expected(m, n);
      p.log_factorial = log_gamma(p.count + 1.0);
      pairs_.push_back(p);
    }
    offsets_.push_back(pairs_.size());
  }
}

void PdmData::set_count(std::size_t i, int count) {
  pairs_[i].count = count;
  pairs_[i].log_factorial = log_gamma(count + 1.0);
}

double mh_accept_prob(double log_p_current, double log_p_proposed, double log_q_forward,
                      double log_q_backward) {
  if (log_p_proposed == -std::numeric_limits<double>::infinity()) return 0.0;
  const double log_a = log_p_proposed + log_q_backward - log_p_current - log_q_forward;
  if (std::isnan(log_a)) return 0.0;
  return log_a >= 0.0 ? 1.0 : std::exp(log_a);
}

MhDecision mh_decide(double log_p_current, double log_p_proposed, double log_q_forward,
                     double log_q_backward, Rng& rng) {
  MhDecision d;
  if (log_p_proposed == -std::numeric_limits<double>::infinity()) {
    d.log_acceptance = -std::numeric_limits<double>::infinity();
  } else {
    const double log_a = log_p_proposed + log_q_backward - log_p_current - log_q_forward;
    d.log_acceptance = std::isnan(log_a) ? -std::numeric_limits<double>::infinity() : std::min(0.0, log_a);
  }
  d.uniform_draw = uniform01(rng);
  d.accepted = std::log(d.uniform_draw) <= d.log_acceptance;
  return d;
}

namespace {

void z_log_weights(const PdmState& state, const PdmData& data, std::size_t i, std::vector<double>& w) {
  const auto& p = data.pair(i);
  const std::size_t K = state.clusters();
  const double eg = p.expected * state.gamma(p.patient);
  w.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double phi = state.phi(static_cast<Eigen::Index>(k), p.disease);
    w[k] = std::log(state.theta(p.patient, static_cast<Eigen::Index>(k))) +
           poisson_log_pmf(p.count, phi * eg);
  }
}

}  // namespace

std::vector<double> z_conditional_probs(const PdmState& state, const PdmData& data, std::size_t i) {
  std::vector<double> w;
  z_log_weights(state, data, i, w);
  return normalize_log_weights(w);
}

int sample_z_conditional(const PdmState& state, const PdmData& data, std::size_t i, Rng& rng) {
  std::vector<double> w;
  z_log_weights(state, data, i, w);
  return static_cast<int>(sample_log_categorical(w, rng));
}

double GammaPosterior::log_density(double g) const {
  if (!(g > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - log_gamma(shape) + (shape - 1.0) * std::log(g) - rate * g;
}

GammaPosterior gamma_conditional(const PdmState& state, const PdmHyperparams& hyper,
                                 const PdmData& data, std::size_t m) {
  GammaPosterior post{hyper.xi, 1.0 / hyper.delta};
  for (std::size_t i = data.begin(m); i < data.end(m); ++i) {
    const auto& p = data.pair(i);
    post.shape += p.count;
    post.rate += state.phi(state.z[i], p.disease) * p.expected;
  }
  return post;
}

double sample_gamma_conditional(const PdmState& state, const PdmHyperparams& hyper,
                                const PdmData& data, std::size_t m, Rng& rng) {
  const auto post = gamma_conditional(state, hyper, data, m);
  return sample_gamma(post.shape, post.rate, rng);
}

std::vector<double> theta_conditional_concentration(const PdmState& state, const PdmHyperparams& hyper,
                                                    const PdmData& data, std::size_t m) {
  std::vector<double> conc(state.clusters(), hyper.alpha);
  for (std::size_t i = data.begin(m); i < data.end(m); ++i) conc[static_cast<std::size_t>(state.z[i])] += 1.0;
  return conc;
}

std::vector<double> sample_theta_conditional(const PdmState& state, const PdmHyperparams& hyper,
                                             const PdmData& data, std::size_t m, Rng& rng) {
  return sample_dirichlet(theta_conditional_concentration(state, hyper, data, m), rng);
}

PhiSufficient phi_sufficient(const PdmState& state, const PdmData& data) {
  const auto K = static_cast<Eigen::Index>(state.clusters());
  const auto V = static_cast<Eigen::Index>(data.vocabulary_size());
  PhiSufficient s{Eigen::MatrixXd::Zero(K, V), Eigen::MatrixXd::Zero(K, V)};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data.pair(i);
    s.counts(state.z[i], p.disease) += p.count;
    s.exposure(state.z[i], p.disease) += p.expected * state.gamma(p.patient);
  }
  return s;
}

double phi_row_log_target(const Eigen::Ref<const Eigen::RowVectorXd>& row, std::size_t k,
                          const PhiSufficient& suff, const PdmHyperparams& hyper) {
  const auto kk = static_cast<Eigen::Index>(k);
  double lp = 0.0;
  for (Eigen::Index n = 0; n < row.size(); ++n) {
    if (!(row(n) > 0.0)) return -std::numeric_limits<double>::infinity();
    lp += (hyper.beta - 1.0 + suff.counts(kk, n)) * std::log(row(n)) - row(n) * suff.exposure(kk, n);
  }
  return lp;
}

MhDecision mh_update_phi_row(PdmState& state, const PdmHyperparams& hyper, const PhiSufficient& suff,
                             std::size_t k, Rng& rng) {
  const auto kk = static_cast<Eigen::Index>(k);
  const auto V = static_cast<std::size_t>(state.phi.cols());
  const double c = std::exp(state.log_concentration[k]);
  std::vector<double> current(V), forward(V), backward(V);
  for (std::size_t n = 0; n < V; ++n) {
    current[n] = state.phi(kk, static_cast<Eigen::Index>(n));
    forward[n] = c * current[n];
  }
  const auto proposal = sample_dirichlet(forward, rng);
  for (std::size_t n = 0; n < V; ++n) backward[n] = c * proposal[n];
  const Eigen::Map<const Eigen::RowVectorXd> prop_row(proposal.data(), static_cast<Eigen::Index>(V));
  const double lp_cur = phi_row_log_target(state.phi.row(kk), k, suff, hyper);
  const double lp_prop = phi_row_log_target(prop_row, k, suff, hyper);
  const double lq_fwd = dirichlet_log_pdf(proposal, forward);
  const double lq_bwd = dirichlet_log_pdf(current, backward);
  const auto decision = mh_decide(lp_cur, lp_prop, lq_fwd, lq_bwd, rng);
  ++state.proposed[k];
  if (decision.accepted) {
    ++state.accepted[k];
    state.phi.row(kk) = prop_row;
  }
  return decision;
}

PdmSampler::PdmSampler(const PdmData& data, PdmHyperparams hyper, PdmOptions options, std::uint64_t seed)
    : data_(data), hyper_(hyper), options_(options), rng_(derive_seed(seed, 0)) {
  hyper_.validate();
  for (std::size_t k = 0; k < hyper_.clusters; ++k) row_rngs_.emplace_back(derive_seed(seed, 1000 + k));
  adapt_steps_.assign(hyper_.clusters, 0);
}

void PdmSampler::set_state(PdmState state) {
  state.accepted.resize(hyper_.clusters, 0);
  state.proposed.resize(hyper_.clusters, 0);
  state.log_concentration.resize(hyper_.clusters, std::log(hyper_.phi_proposal_concentration));
  state_ = std::move(state);
}

void PdmSampler::initialize() {
  const auto M = static_cast<Eigen::Index>(data_.patients());
  const auto V = static_cast<Eigen::Index>(data_.vocabulary_size());
  const auto K = static_cast<Eigen::Index>(hyper_.clusters);
  PdmState s;
  s.gamma = Eigen::VectorXd::Ones(M);
  s.theta = Eigen::MatrixXd::Constant(M, K, 1.0 / static_cast<double>(K));
  Eigen::VectorXd y_sum = Eigen::VectorXd::Constant(V, hyper_.beta);
  Eigen::VectorXd e_sum = Eigen::VectorXd::Constant(V, kExpectedFloor);
  for (const auto& p : data_.pairs()) {
    y_sum(p.disease) += p.count;
    e_sum(p.disease) += p.expected;
  }
  Eigen::VectorXd base = y_sum.cwiseQuotient(e_sum);
  base /= base.sum();
  s.phi.resize(K, V);
  if (K > 1 && K <= M) {
    // Cluster patients on Hellinger-transformed count/expected profiles and
    // start each row at its cluster's pooled profile.
    Eigen::MatrixXd profile = Eigen::MatrixXd::Zero(M, V);
    for (const auto& p : data_.pairs()) profile(p.patient, p.disease) = p.count / p.expected;
    for (Eigen::Index m = 0; m < M; ++m) {
      const double total = profile.row(m).sum();
      if (total > 0.0) profile.row(m) /= total;
    }
    profile = profile.array().sqrt().matrix();
    std::optional<SubgroupAssignment> best;
    for (int restart = 0; restart < 5; ++restart) {
      auto a = kmeans(profile, hyper_.clusters, rng_());
      if (!best || a.objective < best->objective) best = std::move(a);
    }
    Eigen::MatrixXd ys = Eigen::MatrixXd::Constant(K, V, 0.1 * hyper_.beta);
    Eigen::MatrixXd es = Eigen::MatrixXd::Constant(K, V, kExpectedFloor);
    for (const auto& p : data_.pairs()) {
      const int g = best->labels[p.patient];
      ys(g, p.disease) += p.count;
      es(g, p.disease) += p.expected;
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      s.phi.row(k) = ys.row(k).cwiseQuotient(es.row(k));
      s.phi.row(k) /= s.phi.row(k).sum();
      s.phi.row(k) = 0.9 * s.phi.row(k) + 0.1 * base.transpose();
    }
  } else {
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index n = 0; n < V; ++n) s.phi(k, n) = base(n) * std::exp(noise(rng_));
      s.phi.row(k) /= s.phi.row(k).sum();
    }
  }
  s.z.assign(data_.size(), 0);
  set_state(std::move(s));
  update_z();
  update_theta();
  update_gamma();
}

void PdmSampler::update_z() {
  const std::size_t K = hyper_.clusters;
  const Eigen::MatrixXd log_phi = state_.phi.array().log().matrix();
  const Eigen::MatrixXd log_theta = state_.theta.array().log().matrix();
  std::vector<double> w(K);
  double ll = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const auto& p = data_.pair(i);
    const double eg = p.expected * state_.gamma(p.patient);
    const double log_eg = std::log(eg);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      w[k] = log_theta(p.patient, kk) + p.count * (log_phi(kk, p.disease) + log_eg) -
             state_.phi(kk, p.disease) * eg;
      top = std::max(top, w[k]);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      w[k] = std::exp(w[k] - top);
      total += w[k];
    }
    ll += top + std::log(total) - p.log_factorial;
    double u = uniform01(rng_) * total;
    std::size_t k = 0;
    for (; k + 1 < K; ++k) {
      u -= w[k];
      if (u < 0.0) break;
    }
    state_.z[i] = static_cast<int>(k);
  }
  last_log_likelihood_ = ll;
}

void PdmSampler::update_gamma() {
  for (std::size_t m = 0; m < data_.patients(); ++m)
    state_.gamma(static_cast<Eigen::Index>(m)) = sample_gamma_conditional(state_, hyper_, data_, m, rng_);
}

void PdmSampler::update_theta() {
  for (std::size_t m = 0; m < data_.patients(); ++m) {
    const auto row = sample_theta_conditional(state_, hyper_, data_, m, rng_);
    for (std::size_t k = 0; k < row.size(); ++k)
      state_.theta(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = row[k];
  }
}

void PdmSampler::update_phi(bool adapting) {
  const auto suff = phi_sufficient(state_, data_);
  run_parallel(hyper_.clusters, [&](std::size_t k) {
    for (std::size_t step = 0; step < options_.phi_steps; ++step) {
      const auto d = mh_update_phi_row(state_, hyper_, suff, k, row_rngs_[k]);
      if (adapting && options_.adapt) {
        const double rate = 1.0 / std::pow(static_cast<double>(++adapt_steps_[k]), 0.6);
        double& lc = state_.log_concentration[k];
        lc += rate * (options_.target_acceptance - std::exp(d.log_acceptance));
        lc = std::clamp(lc, 0.0, std::log(1e8));
      }
    }
  });
}

double PdmSampler::sweep(bool adapting) {
  update_z();
  update_gamma();
  update_theta();
  update_phi(adapting);
  return last_log_likelihood_;
}

void check_expected(const Cohort& cohort, const Eigen::MatrixXd& expected) {
  if (expected.rows() != static_cast<Eigen::Index>(cohort.size()) ||
      expected.cols() != static_cast<Eigen::Index>(cohort.vocabulary_size()))
    throw DataError("expected counts are " + std::to_string(expected.rows()) + "x" +
                    std::to_string(expected.cols()) + " but the cohort is " + std::to_string(cohort.size()) +
                    "x" + std::to_string(cohort.vocabulary_size()));
  for (Eigen::Index m = 0; m < expected.rows(); ++m)
    for (Eigen::Index n = 0; n < expected.cols(); ++n)
      if (!std::isfinite(expected(m, n)) || expected(m, n) < kExpectedFloor)
        throw DataError("expected count for patient '" + cohort.patient(static_cast<std::size_t>(m)).id +
                        "' is below the floor or not finite");
}

TopicFit fit_pdm(const Cohort& cohort, const Eigen::MatrixXd& expected, const PdmHyperparams& hyper,
                 const SamplerConfig& config, const PdmOptions& options) {
  hyper.validate();
  config.validate();
  if (cohort.size() == 0) throw DataError("cohort is empty");
  check_expected(cohort, expected);
  const PdmData data(cohort.counts(), expected, options.include_zero_counts);
  const auto M = static_cast<Eigen::Index>(cohort.size());
  const auto K = static_cast<Eigen::Index>(hyper.clusters);
  std::vector<ChainEstimate> chains(config.chains);
  run_parallel(config.chains, [&](std::size_t c) {
    PdmSampler sampler(data, hyper, options, derive_seed(config.seed, c));
    sampler.initialize();
    ChainEstimate est;
    for (std::size_t s = 0; s < config.burn_in; ++s) est.log_likelihood.push_back(sampler.sweep(true));
    auto& st = sampler.mutable_state();
    est.proposal_concentration.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
      est.proposal_concentration(k) = std::exp(st.log_concentration[static_cast<std::size_t>(k)]);
      st.accepted[static_cast<std::size_t>(k)] = 0;
      st.proposed[static_cast<std::size_t>(k)] = 0;
    }
    est.theta = Eigen::MatrixXd::Zero(M, K);
    est.phi = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(cohort.vocabulary_size()));
    est.gamma = Eigen::VectorXd::Zero(M);
    std::size_t kept = 0;
    for (std::size_t s = 0; s < config.samples * config.thin; ++s) {
      est.log_likelihood.push_back(sampler.sweep(false));
      if ((s + 1) % config.thin == 0) {
        est.theta += sampler.state().theta;
        est.phi += sampler.state().phi;
        est.gamma += sampler.state().gamma;
        ++kept;
      }
    }
    est.theta /= static_cast<double>(kept);
    est.phi /= static_cast<double>(kept);
    est.gamma /= static_cast<double>(kept);
    est.acceptance.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      est.acceptance(k) = st.proposed[kk] > 0 ? static_cast<double>(st.accepted[kk]) / st.proposed[kk] : 0.0;
    }
    chains[c] = std::move(est);
  });
  return combine_chains(ModelKind::pdm, std::move(chains));
}

Eigen::MatrixXd patient_topic_posterior_pdm(const TopicFit& fit, const Cohort& cohort,
                                            const Eigen::MatrixXd& expected, const Eigen::VectorXd& gamma) {
  check_expected(cohort, expected);
  const auto& y = cohort.counts();
  const auto K = fit.phi.rows();
  if (gamma.size() != y.rows()) throw DataError("gamma length does not match the cohort");
  Eigen::MatrixXd post = Eigen::MatrixXd::Zero(y.rows(), K);
  std::vector<double> w(static_cast<std::size_t>(K));
  for (Eigen::Index m = 0; m < y.rows(); ++m) {
    for (Eigen::Index n = 0; n < y.cols(); ++n) {
      if (y(m, n) == 0) continue;
      for (Eigen::Index k = 0; k < K; ++k)
        w[static_cast<std::size_t>(k)] =
            std::log(fit.theta(m, k)) + poisson_log_pmf(y(m, n), fit.phi(k, n) * expected(m, n) * gamma(m));
      const auto r = normalize_log_weights(w);
      for (Eigen::Index k = 0; k < K; ++k) post(m, k) += r[static_cast<std::size_t>(k)];
    }
    post.row(m) /= post.row(m).sum();
  }
  return post;
}

}  // namespace latentdx
