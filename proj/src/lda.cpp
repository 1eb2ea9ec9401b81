#include "latentdx/lda.hpp"

#include <cmath>

#include "latentdx/error.hpp"

namespace latentdx {

LdaHyperparams LdaHyperparams::defaults(std::size_t topics) {
  LdaHyperparams h;
  h.topics = topics;
  h.alpha = 50.0 / static_cast<double>(std::max<std::size_t>(topics, 1));
  h.beta = 0.01;
  return h;
}

void LdaHyperparams::validate() const {
  if (topics < 1) throw ConfigError("K must be at least 1");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("alpha and beta must be positive");
}

TokenStream expand_tokens(const Cohort& cohort) {
  const auto& y = cohort.counts();
  TokenStream tokens(cohort.size());
  for (std::size_t m = 0; m < cohort.size(); ++m) {
    for (Eigen::Index v = 0; v < y.cols(); ++v)
      for (int c = 0; c < y(m, v); ++c) tokens[m].push_back(static_cast<std::uint32_t>(v));
  }
  return tokens;
}

LdaState::LdaState(TokenStream tokens, std::size_t vocabulary_size, std::size_t topics, Rng& rng)
    : tokens_(std::move(tokens)), vocabulary_(vocabulary_size), topics_(topics) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(topics) - 1);
  z_.resize(tokens_.size());
  n_mk_.assign(tokens_.size() * topics_, 0);
  n_kv_.assign(topics_ * vocabulary_, 0);
  n_k_.assign(topics_, 0);
  for (std::size_t m = 0; m < tokens_.size(); ++m) {
    z_[m].assign(tokens_[m].size(), -1);
    for (std::size_t i = 0; i < tokens_[m].size(); ++i) assign(m, i, pick(rng));
  }
}

LdaState::LdaState(TokenStream tokens, std::size_t vocabulary_size, std::size_t topics,
                   std::vector<std::vector<int>> assignments)
    : tokens_(std::move(tokens)), vocabulary_(vocabulary_size), topics_(topics) {
  if (assignments.size() != tokens_.size()) throw ConfigError("assignment shape mismatch");
  z_.resize(tokens_.size());
  n_mk_.assign(tokens_.size() * topics_, 0);
  n_kv_.assign(topics_ * vocabulary_, 0);
  n_k_.assign(topics_, 0);
  for (std::size_t m = 0; m < tokens_.size(); ++m) {
    if (assignments[m].size() != tokens_[m].size()) throw ConfigError("assignment shape mismatch");
    z_[m].assign(tokens_[m].size(), -1);
    for (std::size_t i = 0; i < tokens_[m].size(); ++i) {
      const int k = assignments[m][i];
      if (k < 0 || static_cast<std::size_t>(k) >= topics_) throw ConfigError("topic label out of range");
      assign(m, i, k);
    }
  }
}

void LdaState::remove(std::size_t m, std::size_t i) {
  const int k = z_[m][i];
  if (k < 0) return;
  const auto v = tokens_[m][i];
  --n_mk_[m * topics_ + k];
  --n_kv_[k * vocabulary_ + v];
  --n_k_[k];
  z_[m][i] = -1;
}

void LdaState::assign(std::size_t m, std::size_t i, int k) {
  remove(m, i);
  const auto v = tokens_[m][i];
  ++n_mk_[m * topics_ + k];
  ++n_kv_[k * vocabulary_ + v];
  ++n_k_[k];
  z_[m][i] = k;
}

bool LdaState::consistent() const {
  std::vector<int> mk(n_mk_.size(), 0), kv(n_kv_.size(), 0), kk(n_k_.size(), 0);
  for (std::size_t m = 0; m < tokens_.size(); ++m) {
    for (std::size_t i = 0; i < tokens_[m].size(); ++i) {
      const int k = z_[m][i];
      if (k < 0) continue;
      ++mk[m * topics_ + k];
      ++kv[k * vocabulary_ + tokens_[m][i]];
      ++kk[k];
    }
  }
  return mk == n_mk_ && kv == n_kv_ && kk == n_k_;
}

void conditional_topic_probs(const LdaState& state, const LdaHyperparams& hyper, std::size_t m,
                             std::uint32_t v, std::span<double> out) {
  const std::size_t K = state.topics();
  const double vbeta = static_cast<double>(state.vocabulary_size()) * hyper.beta;
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    out[k] = (state.patient_topic(m, k) + hyper.alpha) * (state.topic_disease(k, v) + hyper.beta) /
             (state.topic_total(k) + vbeta);
    total += out[k];
  }
  for (std::size_t k = 0; k < K; ++k) out[k] /= total;
}

void gibbs_sweep(LdaState& state, const LdaHyperparams& hyper, Rng& rng) {
  const std::size_t K = state.topics();
  std::vector<double> p(K);
  for (std::size_t m = 0; m < state.patients(); ++m) {
    const auto& tokens = state.tokens()[m];
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      state.remove(m, i);
      conditional_topic_probs(state, hyper, m, tokens[i], p);
      const double u = uniform01(rng);
      double acc = 0.0;
      std::size_t k = 0;
      for (; k + 1 < K; ++k) {
        acc += p[k];
        if (u < acc) break;
      }
      state.assign(m, i, static_cast<int>(k));
    }
  }
}

Eigen::MatrixXd lda_theta_estimate(const LdaState& state, const LdaHyperparams& hyper) {
  const std::size_t K = state.topics();
  Eigen::MatrixXd theta(state.patients(), K);
  for (std::size_t m = 0; m < state.patients(); ++m) {
    const double denom = static_cast<double>(state.tokens()[m].size()) + K * hyper.alpha;
    for (std::size_t k = 0; k < K; ++k) theta(m, k) = (state.patient_topic(m, k) + hyper.alpha) / denom;
  }
  return theta;
}

Eigen::MatrixXd lda_phi_estimate(const LdaState& state, const LdaHyperparams& hyper) {
  const std::size_t K = state.topics();
  const std::size_t V = state.vocabulary_size();
  Eigen::MatrixXd phi(K, V);
  for (std::size_t k = 0; k < K; ++k) {
    const double denom = state.topic_total(k) + V * hyper.beta;
    for (std::size_t v = 0; v < V; ++v) phi(k, v) = (state.topic_disease(k, v) + hyper.beta) / denom;
  }
  return phi;
}

double log_likelihood(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& phi, const Cohort& cohort) {
  const auto& y = cohort.counts();
  double ll = 0.0;
  for (Eigen::Index m = 0; m < y.rows(); ++m) {
    for (Eigen::Index v = 0; v < y.cols(); ++v) {
      if (y(m, v) == 0) continue;
      ll += y(m, v) * std::log(theta.row(m).dot(phi.col(v)));
    }
  }
  return ll;
}

double log_likelihood(const TopicFit& fit, const Cohort& cohort) {
  return log_likelihood(fit.theta, fit.phi, cohort);
}

TopicFit fit_lda(const Cohort& cohort, const LdaHyperparams& hyper, const SamplerConfig& config) {
  hyper.validate();
  config.validate();
  if (cohort.size() == 0) throw DataError("cohort is empty");
  const auto tokens = expand_tokens(cohort);
  std::vector<ChainEstimate> chains(config.chains);
  run_parallel(config.chains, [&](std::size_t c) {
    Rng rng(derive_seed(config.seed, c));
    LdaState state(tokens, cohort.vocabulary_size(), hyper.topics, rng);
    ChainEstimate est;
    est.theta = Eigen::MatrixXd::Zero(cohort.size(), hyper.topics);
    est.phi = Eigen::MatrixXd::Zero(hyper.topics, cohort.vocabulary_size());
    std::size_t kept = 0;
    const std::size_t total = config.burn_in + config.samples * config.thin;
    for (std::size_t s = 0; s < total; ++s) {
      gibbs_sweep(state, hyper, rng);
      const auto theta = lda_theta_estimate(state, hyper);
      const auto phi = lda_phi_estimate(state, hyper);
      est.log_likelihood.push_back(log_likelihood(theta, phi, cohort));
      if (s >= config.burn_in && (s - config.burn_in + 1) % config.thin == 0) {
        est.theta += theta;
        est.phi += phi;
        ++kept;
      }
    }
    est.theta /= static_cast<double>(kept);
    est.phi /= static_cast<double>(kept);
    chains[c] = std::move(est);
  });
  return combine_chains(ModelKind::lda, std::move(chains));
}

Eigen::MatrixXd patient_topic_posterior(const TopicFit& fit, const Cohort& cohort) {
  const auto& y = cohort.counts();
  const auto K = fit.phi.rows();
  Eigen::MatrixXd post = Eigen::MatrixXd::Zero(y.rows(), K);
  Eigen::VectorXd r(K);
  for (Eigen::Index m = 0; m < y.rows(); ++m) {
    for (Eigen::Index v = 0; v < y.cols(); ++v) {
      if (y(m, v) == 0) continue;
      r = fit.theta.row(m).transpose().cwiseProduct(fit.phi.col(v));
      const double s = r.sum();
      if (s > 0.0) post.row(m) += (y(m, v) / s) * r.transpose();
    }
    const double total = post.row(m).sum();
    if (total > 0.0)
      post.row(m) /= total;
    else
      post.row(m).setConstant(1.0 / static_cast<double>(K));
  }
  return post;
}

}  // namespace latentdx
