#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "latentdx/cohort.hpp"
#include "latentdx/random.hpp"
#include "latentdx/topic_fit.hpp"

namespace latentdx {

struct LdaHyperparams {
  std::size_t topics = 20;
  double alpha = 2.5;
  double beta = 0.01;

  /// alpha = 50/K, beta = 0.01.
  static LdaHyperparams defaults(std::size_t topics);
  void validate() const;
};

/// Token view of a cohort: code v with count c gives c copies of v, codes in
/// vocabulary order.
using TokenStream = std::vector<std::vector<std::uint32_t>>;

TokenStream expand_tokens(const Cohort& cohort);

/// Topic assignments plus the three count tables of the collapsed sampler.
class LdaState {
 public:
  /// Uniformly random initial assignments.
  LdaState(TokenStream tokens, std::size_t vocabulary_size, std::size_t topics, Rng& rng);
  LdaState(TokenStream tokens, std::size_t vocabulary_size, std::size_t topics,
           std::vector<std::vector<int>> assignments);

  std::size_t patients() const { return tokens_.size(); }
  std::size_t topics() const { return topics_; }
  std::size_t vocabulary_size() const { return vocabulary_; }
  const TokenStream& tokens() const { return tokens_; }
  const std::vector<std::vector<int>>& assignments() const { return z_; }

  int topic(std::size_t m, std::size_t i) const { return z_[m][i]; }
  int patient_topic(std::size_t m, std::size_t k) const { return n_mk_[m * topics_ + k]; }
  int topic_disease(std::size_t k, std::size_t v) const { return n_kv_[k * vocabulary_ + v]; }
  int topic_total(std::size_t k) const { return n_k_[k]; }

  /// Decrements the count tables for token (m, i); its label becomes -1.
  void remove(std::size_t m, std::size_t i);
  void assign(std::size_t m, std::size_t i, int k);

  /// Full recount from the assignments.
  bool consistent() const;

 private:
  TokenStream tokens_;
  std::size_t vocabulary_;
  std::size_t topics_;
  std::vector<std::vector<int>> z_;
  std::vector<int> n_mk_;
  std::vector<int> n_kv_;
  std::vector<int> n_k_;
};

/// p(z = k | rest) for token v of patient m whose own assignment has already
/// been removed.
void conditional_topic_probs(const LdaState& state, const LdaHyperparams& hyper, std::size_t m,
                             std::uint32_t v, std::span<double> out);

void gibbs_sweep(LdaState& state, const LdaHyperparams& hyper, Rng& rng);

Eigen::MatrixXd lda_theta_estimate(const LdaState& state, const LdaHyperparams& hyper);
Eigen::MatrixXd lda_phi_estimate(const LdaState& state, const LdaHyperparams& hyper);

TopicFit fit_lda(const Cohort& cohort, const LdaHyperparams& hyper, const SamplerConfig& config);

/// Row m: normalized sum over the patient's tokens of p(z = k | token).
Eigen::MatrixXd patient_topic_posterior(const TopicFit& fit, const Cohort& cohort);

/// Sum over tokens of log sum_k theta(m,k) phi(k,v).
double log_likelihood(const TopicFit& fit, const Cohort& cohort);
double log_likelihood(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& phi, const Cohort& cohort);

}  // namespace latentdx
