#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "latentdx/cohort.hpp"
#include "latentdx/random.hpp"
#include "latentdx/topic_fit.hpp"

namespace latentdx {

struct PdmHyperparams {
  std::size_t clusters = 20;
  double alpha = 1.0;
  double beta = 1.0;
  double xi = 2.0;     // Gamma shape
  double delta = 0.5;  // Gamma scale; xi * delta must be 1
  double phi_proposal_concentration = 500.0;

  void validate() const;
};

struct PdmOptions {
  /// MH proposals per phi row per sweep; cheap, the row target only needs
  /// per-cluster sufficient statistics.
  std::size_t phi_steps = 5;
  double target_acceptance = 0.3;
  bool adapt = true;
  /// Give every (patient, disease) pair an indicator, zero counts included.
  /// With diagnosed pairs only, the overall scale of a phi row is not pinned
  /// down by the data and rows drift onto codes no patient in the cluster has.
  bool include_zero_counts = true;
};

/// One (patient, disease) cell that carries a cluster indicator.
struct PdmPair {
  std::uint32_t patient = 0;
  std::uint32_t disease = 0;
  int count = 0;
  double expected = 0.0;
  double log_factorial = 0.0;  // log y!
};

/// Pairs sorted by patient then disease, with per-patient ranges.
class PdmData {
 public:
  PdmData(const CountMatrix& counts, const Eigen::MatrixXd& expected, bool include_zero_counts = false);

  std::size_t patients() const { return offsets_.size() - 1; }
  std::size_t vocabulary_size() const { return vocabulary_; }
  std::size_t size() const { return pairs_.size(); }
  const PdmPair& pair(std::size_t i) const { return pairs_[i]; }
  const std::vector<PdmPair>& pairs() const { return pairs_; }
  std::size_t begin(std::size_t m) const { return offsets_[m]; }
  std::size_t end(std::size_t m) const { return offsets_[m + 1]; }

  void set_count(std::size_t i, int count);

 private:
  std::size_t vocabulary_;
  std::vector<PdmPair> pairs_;
  std::vector<std::size_t> offsets_;
};

struct PdmState {
  std::vector<int> z;       // one label per pair
  Eigen::VectorXd gamma;    // M
  Eigen::MatrixXd theta;    // M x K
  Eigen::MatrixXd phi;      // K x V
  std::vector<long long> accepted;
  std::vector<long long> proposed;
  std::vector<double> log_concentration;

  std::size_t clusters() const { return static_cast<std::size_t>(phi.rows()); }
};

struct MhDecision {
  double log_acceptance = 0.0;  // <= 0
  bool accepted = false;
  double uniform_draw = 0.0;
};

/// min(1, exp(lp_proposed + lq_backward - lp_current - lq_forward)).
double mh_accept_prob(double log_p_current, double log_p_proposed, double log_q_forward,
                      double log_q_backward);
MhDecision mh_decide(double log_p_current, double log_p_proposed, double log_q_forward,
                     double log_q_backward, Rng& rng);

/// Normalized full conditional of the label of pair i.
std::vector<double> z_conditional_probs(const PdmState& state, const PdmData& data, std::size_t i);
int sample_z_conditional(const PdmState& state, const PdmData& data, std::size_t i, Rng& rng);

/// Shape/rate form of the conditional of gamma_m.
struct GammaPosterior {
  double shape = 0.0;
  double rate = 0.0;
  double log_density(double g) const;
};

GammaPosterior gamma_conditional(const PdmState& state, const PdmHyperparams& hyper,
                                 const PdmData& data, std::size_t m);
double sample_gamma_conditional(const PdmState& state, const PdmHyperparams& hyper,
                                const PdmData& data, std::size_t m, Rng& rng);

/// Dirichlet concentration alpha + c_m of the conditional of theta_m.
std::vector<double> theta_conditional_concentration(const PdmState& state, const PdmHyperparams& hyper,
                                                    const PdmData& data, std::size_t m);
std::vector<double> sample_theta_conditional(const PdmState& state, const PdmHyperparams& hyper,
                                             const PdmData& data, std::size_t m, Rng& rng);

/// Per cluster and disease: summed counts and summed e*gamma over pairs with
/// that label. The phi-row target depends on the data only through these.
struct PhiSufficient {
  Eigen::MatrixXd counts;    // K x V
  Eigen::MatrixXd exposure;  // K x V
};

PhiSufficient phi_sufficient(const PdmState& state, const PdmData& data);

/// Log target of row k up to a constant: Dirichlet(beta) prior times the
/// Poisson likelihood of the pairs labelled k.
double phi_row_log_target(const Eigen::Ref<const Eigen::RowVectorXd>& row, std::size_t k,
                          const PhiSufficient& suff, const PdmHyperparams& hyper);

/// One Dirichlet(c * phi_k) proposal for row k, with c = exp(log_concentration[k]).
MhDecision mh_update_phi_row(PdmState& state, const PdmHyperparams& hyper, const PhiSufficient& suff,
                             std::size_t k, Rng& rng);

/// Gibbs for z, gamma, theta then MH for each phi row. Each phi row draws from
/// its own random stream so rows can be updated in any order.
class PdmSampler {
 public:
  PdmSampler(const PdmData& data, PdmHyperparams hyper, PdmOptions options, std::uint64_t seed);

  /// Draws a starting point; phi starts near the pooled count/exposure profile.
  void initialize();
  void set_state(PdmState state);

  void update_z();
  void update_gamma();
  void update_theta();
  void update_phi(bool adapting);
  /// Full sweep; returns the marginal log-likelihood evaluated during the z step.
  double sweep(bool adapting);

  const PdmState& state() const { return state_; }
  PdmState& mutable_state() { return state_; }
  Rng& rng() { return rng_; }

 private:
  const PdmData& data_;
  PdmHyperparams hyper_;
  PdmOptions options_;
  Rng rng_;
  std::vector<Rng> row_rngs_;
  std::vector<long long> adapt_steps_;
  PdmState state_;
  double last_log_likelihood_ = 0.0;
};

void check_expected(const Cohort& cohort, const Eigen::MatrixXd& expected);

TopicFit fit_pdm(const Cohort& cohort, const Eigen::MatrixXd& expected, const PdmHyperparams& hyper,
                 const SamplerConfig& config, const PdmOptions& options = {});

/// Row m: normalized sum over diagnosed diseases of the Poisson responsibilities.
Eigen::MatrixXd patient_topic_posterior_pdm(const TopicFit& fit, const Cohort& cohort,
                                            const Eigen::MatrixXd& expected, const Eigen::VectorXd& gamma);

}  // namespace latentdx
