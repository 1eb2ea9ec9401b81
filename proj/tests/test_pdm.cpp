#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "latentdx/error.hpp"
#include "latentdx/generator.hpp"
#include "latentdx/pdm.hpp"
#include "latentdx/random.hpp"
#include "geweke.hpp"
#include "oracles.hpp"

using namespace latentdx;

namespace {

PdmState state_for(const PdmData& data, const Eigen::MatrixXd& theta, const Eigen::MatrixXd& phi,
                   const Eigen::VectorXd& gamma, int label = 0) {
  PdmState s;
  s.z.assign(data.size(), label);
  s.theta = theta;
  s.phi = phi;
  s.gamma = gamma;
  s.accepted.assign(static_cast<std::size_t>(phi.rows()), 0);
  s.proposed.assign(static_cast<std::size_t>(phi.rows()), 0);
  s.log_concentration.assign(static_cast<std::size_t>(phi.rows()), std::log(500.0));
  return s;
}

PdmHyperparams hyper(std::size_t K, double alpha = 1.0, double beta = 1.0) {
  PdmHyperparams h;
  h.clusters = K;
  h.alpha = alpha;
  h.beta = beta;
  return h;
}

double dirichlet_log_density(const std::vector<double>& x, const std::vector<double>& a) {
  double s = 0.0, lp = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i];
    lp += (a[i] - 1.0) * std::log(x[i]) - std::lgamma(a[i]);
  }
  return lp + std::lgamma(s);
}

Cohort cohort_from(const CountMatrix& y) {
  std::vector<std::string> codes;
  for (Eigen::Index v = 0; v < y.cols(); ++v) codes.push_back("c" + std::to_string(v));
  std::vector<PatientRecord> ps;
  for (Eigen::Index m = 0; m < y.rows(); ++m) {
    PatientRecord r;
    r.id = "p" + std::to_string(m);
    r.age_at_entry = 70;
    r.followup_years = r.survival_time = 5;
    ps.push_back(r);
  }
  return Cohort(DiseaseVocabulary(codes), ps, y);
}

}  // namespace

TEST_CASE("mh_accept_prob unit cases") {
  CHECK(std::abs(mh_accept_prob(0.0, std::log(2.0), 0.0, 0.0) - 1.0) < 1e-12);
  CHECK(std::abs(mh_accept_prob(0.0, std::log(0.5), 0.0, 0.0) - 0.5) < 1e-12);
  CHECK(std::abs(mh_accept_prob(-2.0, -1.0, -0.5, -1.5) - 1.0) < 1e-12);
  CHECK(std::abs(mh_accept_prob(-1.0, -2.0, -0.3, -0.3) - std::exp(-1.0)) < 1e-12);
  CHECK(mh_accept_prob(-1.0, -std::numeric_limits<double>::infinity(), 0.0, 0.0) == 0.0);
  // identical proposal and current state
  CHECK(mh_accept_prob(-7.25, -7.25, -3.5, -3.5) == 1.0);
}

TEST_CASE("mh_decide accepts iff log u <= log A") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-3.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const auto d = mh_decide(0.0, u(rng), 0.0, 0.0, rng);
    CHECK(d.log_acceptance <= 0.0);
    CHECK(d.uniform_draw >= 0.0);
    CHECK(d.uniform_draw < 1.0);
    CHECK(d.accepted == (std::log(d.uniform_draw) <= d.log_acceptance));
  }
}

TEST_CASE("random-walk MH targets Gamma(3, rate 2)") {
  Rng rng(12);
  std::normal_distribution<double> step(0.0, 1.2);
  auto logp = [](double x) { return x > 0 ? 2.0 * std::log(x) - 2.0 * x : -std::numeric_limits<double>::infinity(); };
  double x = 1.0, sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < 5000; ++i) {
    const double y = x + step(rng);
    if (mh_decide(logp(x), logp(y), 0.0, 0.0, rng).accepted) x = y;
  }
  for (int i = 0; i < n; ++i) {
    const double y = x + step(rng);
    if (mh_decide(logp(x), logp(y), 0.0, 0.0, rng).accepted) x = y;
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n, var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 1.5) < 0.02 * 1.5);
  CHECK(std::abs(var - 0.75) < 0.05 * 0.75);
}

TEST_CASE("z full conditional") {
  SUBCASE("hand example") {
    CountMatrix y(1, 1);
    y << 3;
    Eigen::MatrixXd e(1, 1);
    e << 10.0;
    const PdmData data(y, e);
    Eigen::MatrixXd theta(1, 2), phi(2, 1);
    theta << 0.5, 0.5;
    phi << 0.2, 0.1;  // one code, so rows are not simplex rows here; the formula only uses the entry
    const auto s = state_for(data, theta, phi, Eigen::VectorXd::Ones(1));
    const auto p = z_conditional_probs(s, data, 0);
    const double a = oracle::poisson_pmf(3, 2.0), b = oracle::poisson_pmf(3, 1.0);
    CHECK(p[0] == doctest::Approx(a / (a + b)).epsilon(1e-12));
    CHECK(p[0] == doctest::Approx(0.746).epsilon(1e-3));
  }
  SUBCASE("single cluster and symmetry") {
    CountMatrix y(1, 2);
    y << 2, 5;
    Eigen::MatrixXd e = Eigen::MatrixXd::Constant(1, 2, 3.0);
    const PdmData data(y, e);
    Eigen::MatrixXd phi1(1, 2);
    phi1 << 0.4, 0.6;
    const auto s1 = state_for(data, Eigen::MatrixXd::Ones(1, 1), phi1, Eigen::VectorXd::Ones(1));
    CHECK(z_conditional_probs(s1, data, 1)[0] == 1.0);
    Rng rng(1);
    CHECK(sample_z_conditional(s1, data, 1, rng) == 0);

    Eigen::MatrixXd phi2(2, 2);
    phi2 << 0.4, 0.6, 0.4, 0.6;
    const auto s2 = state_for(data, Eigen::MatrixXd::Constant(1, 2, 0.5), phi2, Eigen::VectorXd::Ones(1));
    const auto p = z_conditional_probs(s2, data, 0);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("e-invariance under gamma rescaling") {
    CountMatrix y(2, 3);
    y << 1, 4, 2,  //
        3, 0, 7;
    Eigen::MatrixXd e(2, 3);
    e << 1.5, 2.0, 0.7, 3.0, 1.0, 4.0;
    Eigen::MatrixXd theta(2, 3), phi(3, 3);
    theta << 0.2, 0.5, 0.3, 0.6, 0.1, 0.3;
    phi << 0.1, 0.3, 0.6, 0.5, 0.25, 0.25, 0.3, 0.3, 0.4;
    Eigen::VectorXd gamma(2);
    gamma << 0.8, 1.7;
    const double c = 3.7;
    for (bool zeros : {false, true}) {
      const PdmData d1(y, e, zeros), d2(y, e * c, zeros);
      const auto s1 = state_for(d1, theta, phi, gamma);
      const auto s2 = state_for(d2, theta, phi, gamma / c);
      for (std::size_t i = 0; i < d1.size(); ++i) {
        const auto p1 = z_conditional_probs(s1, d1, i), p2 = z_conditional_probs(s2, d2, i);
        for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(p1[k] - p2[k]) < 1e-12);
      }
    }
  }
}

TEST_CASE("gamma full conditional") {
  // Sum y = 10, sum phi*e = 5.
  CountMatrix y(1, 2);
  y << 4, 6;
  Eigen::MatrixXd e(1, 2);
  e << 4.0, 6.0;
  const PdmData data(y, e);
  Eigen::MatrixXd phi(1, 2);
  phi << 0.5, 0.5;
  const auto s = state_for(data, Eigen::MatrixXd::Ones(1, 1), phi, Eigen::VectorXd::Ones(1));
  const auto h = hyper(1);
  const auto post = gamma_conditional(s, h, data, 0);
  CHECK(post.shape == 12.0);
  CHECK(post.rate == 7.0);
  CHECK(post.shape / post.rate == doctest::Approx(12.0 / 7.0).epsilon(1e-15));

  // prior x likelihood normalized numerically
  auto unnorm = [&](double g) {
    double lp = (h.xi - 1.0) * std::log(g) - g / h.delta;
    lp += 4.0 * std::log(0.5 * 4.0 * g) - 0.5 * 4.0 * g;
    lp += 6.0 * std::log(0.5 * 6.0 * g) - 0.5 * 6.0 * g;
    return std::exp(lp);
  };
  const double Z = oracle::simpson(unnorm, 1e-12, 20.0, 200000);
  for (double g : {0.3, 1.0, 1.7, 2.5, 4.0}) CHECK(std::abs(post.log_density(g) - std::log(unnorm(g) / Z)) < 1e-6);

  // Monte-Carlo mean
  Rng rng(4);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += sample_gamma_conditional(s, h, data, 0, rng);
  const double se = std::sqrt(12.0) / 7.0 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sum / n - 12.0 / 7.0) < 3.0 * se);

  // vague prior: mean approaches sum y / sum phi e
  PdmHyperparams vague = h;
  vague.xi = 1e-6;
  vague.delta = 1e6;
  const auto pv = gamma_conditional(s, vague, data, 0);
  CHECK(pv.shape / pv.rate == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("gamma conditional sums only the patient's own pairs") {
  CountMatrix y(2, 2);
  y << 1, 0, 0, 2;
  const PdmData data(y, Eigen::MatrixXd::Ones(2, 2));
  PdmState s = state_for(data, Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Constant(1, 2, 0.5),
                         Eigen::VectorXd::Ones(2));
  const auto h = hyper(1);
  const auto post = gamma_conditional(s, h, data, 0);
  CHECK(post.shape == h.xi + 1.0);
  CHECK(post.rate == doctest::Approx(1.0 / h.delta + 0.5).epsilon(1e-15));
}

TEST_CASE("conditionals without diagnosed pairs fall back to the prior") {
  CountMatrix y(2, 2);
  y << 1, 3, 0, 0;
  const PdmData data(y, Eigen::MatrixXd::Ones(2, 2));
  CHECK(data.begin(1) == data.end(1));
  const PdmState s = state_for(data, Eigen::MatrixXd::Constant(2, 2, 0.5), Eigen::MatrixXd::Constant(2, 2, 0.5),
                               Eigen::VectorXd::Ones(2));
  const auto h = hyper(2, 0.7);
  const auto g = gamma_conditional(s, h, data, 1);
  CHECK(g.shape == h.xi);
  CHECK(g.rate == 1.0 / h.delta);
  CHECK(theta_conditional_concentration(s, h, data, 1) == std::vector<double>{0.7, 0.7});
}

TEST_CASE("theta full conditional") {
  // three pairs for one patient labelled (0, 0, 1) under K = 3
  CountMatrix y(1, 3);
  y << 1, 2, 1;
  const PdmData data(y, Eigen::MatrixXd::Ones(1, 3));
  Eigen::MatrixXd phi = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
  PdmState s = state_for(data, Eigen::MatrixXd::Constant(1, 3, 1.0 / 3.0), phi, Eigen::VectorXd::Ones(1));
  s.z = {0, 0, 1};
  const auto h = hyper(3, 2.0);
  const auto conc = theta_conditional_concentration(s, h, data, 0);
  CHECK(conc == std::vector<double>{4.0, 3.0, 2.0});

  // numerical normalization of Dirichlet(2) prior x theta_0^2 theta_1 over the 2-simplex
  auto unnorm = [](double a, double b) {
    const double c = 1.0 - a - b;
    if (a <= 0 || b <= 0 || c <= 0) return 0.0;
    return (a * b * c) * (a * a * b);
  };
  auto inner = [&](double a) {
    return oracle::simpson([&](double b) { return unnorm(a, b); }, 0.0, 1.0 - a, 400);
  };
  const double Z = oracle::simpson(inner, 0.0, 1.0, 400);
  for (auto [a, b] : {std::pair{0.2, 0.3}, std::pair{0.5, 0.2}, std::pair{0.1, 0.1}, std::pair{0.6, 0.3}}) {
    const double closed = dirichlet_log_density({a, b, 1.0 - a - b}, conc);
    CHECK(std::abs(closed - std::log(unnorm(a, b) / Z)) < 1e-6);
  }

  // scalar (1-simplex) case: K = 2, labels (0, 1, 1), alpha 1.5
  PdmState s2 = state_for(data, Eigen::MatrixXd::Constant(1, 2, 0.5), Eigen::MatrixXd::Constant(2, 3, 1.0 / 3.0),
                          Eigen::VectorXd::Ones(1));
  s2.z = {0, 1, 1};
  const auto conc2 = theta_conditional_concentration(s2, hyper(2, 1.5), data, 0);
  auto un2 = [](double t) { return std::pow(t, 0.5) * std::pow(1 - t, 0.5) * t * (1 - t) * (1 - t); };
  const double Z2 = oracle::simpson([&](double u) { return 2 * u * un2(u * u); }, 0.0, 1.0, 200000);
  for (double t : {0.1, 0.35, 0.5, 0.8})
    CHECK(std::abs(dirichlet_log_density({t, 1 - t}, conc2) - std::log(un2(t) / Z2)) < 1e-6);

  // Monte-Carlo posterior mean (alpha + c) / (K alpha + N)
  Rng rng(6);
  const int n = 100000;
  std::vector<double> sum(3, 0.0), sum2(3, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto t = sample_theta_conditional(s, h, data, 0, rng);
    for (int k = 0; k < 3; ++k) {
      sum[k] += t[k];
      sum2[k] += t[k] * t[k];
    }
  }
  for (int k = 0; k < 3; ++k) {
    const double mean = sum[k] / n;
    const double se = std::sqrt((sum2[k] / n - mean * mean) / n);
    CHECK(std::abs(mean - conc[k] / 9.0) < 3.0 * se);
  }

  // prior domination
  const auto hv = hyper(2, 1e6);
  double m = 0.0, m2 = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double t = sample_theta_conditional(s2, hv, data, 0, rng)[0];
    m += t;
    m2 += t * t;
  }
  m /= 2000;
  CHECK(m2 / 2000 - m * m < 1e-3);
  CHECK(std::abs(m - 0.5) < 1e-2);
}

TEST_CASE("phi row MH with no assigned pairs samples the Dirichlet prior") {
  CountMatrix y(1, 3);
  y << 1, 1, 1;
  const PdmData data(y, Eigen::MatrixXd::Ones(1, 3));
  Eigen::MatrixXd phi(2, 3);
  phi << 0.2, 0.3, 0.5, 0.6, 0.2, 0.2;
  PdmState s = state_for(data, Eigen::MatrixXd::Constant(1, 2, 0.5), phi, Eigen::VectorXd::Ones(1), 0);
  s.log_concentration = {std::log(20.0), std::log(20.0)};
  const auto h = hyper(2, 1.0, 0.8);
  const auto suff = phi_sufficient(s, data);
  CHECK(suff.counts.row(1).sum() == 0.0);
  Rng rng(8);
  const int n = 100000, batch = 1000;
  std::vector<double> batch_means;
  double acc = 0.0, total = 0.0;
  long long accepted = 0;
  for (int i = 0; i < n; ++i) {
    const auto d = mh_update_phi_row(s, h, suff, 1, rng);
    accepted += d.accepted ? 1 : 0;
    acc += s.phi(1, 0);
    total += s.phi(1, 0);
    if ((i + 1) % batch == 0) {
      batch_means.push_back(acc / batch);
      acc = 0.0;
    }
  }
  CHECK(s.accepted[1] == accepted);
  CHECK(s.proposed[1] == n);
  const double mean = total / n;
  double v = 0.0;
  for (double b : batch_means) v += (b - mean) * (b - mean);
  const double se = std::sqrt(v / (batch_means.size() - 1) / batch_means.size());
  CHECK(std::abs(mean - 1.0 / 3.0) < 3.0 * se);
  CHECK(std::abs(s.phi.row(1).sum() - 1.0) < 1e-9);
}

TEST_CASE("joint distribution check") {
  const auto r = geweke::run(200000, 200000, 1);
  for (const auto& s : r.stats) CHECK_MESSAGE(std::abs(s.z) < 3.0, s.name);
}

TEST_CASE("sampler sweeps keep invariants and are reproducible") {
  GeneratorConfig g;
  g.patients = 40;
  g.vocabulary_size = 15;
  g.clusters = 3;
  g.seed = 2;
  const auto [cohort, truth] = generate_synthetic_cohort(g);
  const PdmData data(cohort.counts(), truth.expected, true);
  auto run = [&](std::uint64_t seed) {
    PdmSampler sampler(data, hyper(3), PdmOptions{}, seed);
    sampler.initialize();
    for (int i = 0; i < 30; ++i) sampler.sweep(i < 15);
    return sampler.state();
  };
  const auto a = run(5), b = run(5);
  CHECK(a.z == b.z);
  CHECK(a.phi == b.phi);
  CHECK(a.accepted == b.accepted);
  for (Eigen::Index k = 0; k < a.phi.rows(); ++k) CHECK(std::abs(a.phi.row(k).sum() - 1.0) < 1e-9);
  for (Eigen::Index m = 0; m < a.theta.rows(); ++m) CHECK(std::abs(a.theta.row(m).sum() - 1.0) < 1e-9);
  CHECK(a.gamma.minCoeff() > 0.0);
  for (int z : a.z) CHECK((z >= 0 && z < 3));
  for (std::size_t k = 0; k < 3; ++k) CHECK(a.accepted[k] <= a.proposed[k]);
}

TEST_CASE("fit_pdm validation") {
  GeneratorConfig g;
  g.patients = 10;
  g.vocabulary_size = 6;
  g.clusters = 2;
  g.seed = 1;
  const auto [cohort, truth] = generate_synthetic_cohort(g);
  SamplerConfig c;
  c.chains = 1;
  c.burn_in = 2;
  c.samples = 2;
  CHECK_THROWS_AS(fit_pdm(cohort, Eigen::MatrixXd::Ones(3, 6), hyper(2), c), DataError);
  auto bad = hyper(2);
  bad.delta = 0.4;
  CHECK_THROWS_AS(fit_pdm(cohort, truth.expected, bad, c), ConfigError);
  c.samples = 0;
  CHECK_THROWS_AS(fit_pdm(cohort, truth.expected, hyper(2), c), ConfigError);
}

TEST_CASE("one-cluster fit tracks observed totals") {
  GeneratorConfig g;
  g.patients = 80;
  g.vocabulary_size = 10;
  g.clusters = 1;
  g.seed = 13;
  const auto [cohort, truth] = generate_synthetic_cohort(g);
  SamplerConfig c;
  c.chains = 1;
  c.burn_in = 100;
  c.samples = 200;
  const auto fit = fit_pdm(cohort, truth.expected, hyper(1), c);
  CHECK((fit.theta.array() == 1.0).all());
  for (Eigen::Index v = 0; v < 10; ++v) {
    double predicted = 0.0;
    for (Eigen::Index m = 0; m < 80; ++m) predicted += fit.phi(0, v) * truth.expected(m, v) * fit.gamma(m);
    const double observed = cohort.counts().col(v).cast<double>().sum();
    if (observed >= 50.0) CHECK(std::abs(predicted / observed - 1.0) < 0.05);
  }
  const auto post = patient_topic_posterior_pdm(fit, cohort, truth.expected, fit.gamma);
  CHECK((post.array() == 1.0).all());
}

TEST_CASE("fit_pdm is deterministic and reports acceptance") {
  GeneratorConfig g;
  g.patients = 30;
  g.vocabulary_size = 12;
  g.clusters = 2;
  g.seed = 3;
  const auto [cohort, truth] = generate_synthetic_cohort(g);
  SamplerConfig c;
  c.chains = 2;
  c.burn_in = 40;
  c.samples = 40;
  c.seed = 9;
  const auto a = fit_pdm(cohort, truth.expected, hyper(2), c);
  const auto b = fit_pdm(cohort, truth.expected, hyper(2), c);
  CHECK(a.theta == b.theta);
  CHECK(a.phi == b.phi);
  CHECK(a.gamma == b.gamma);
  CHECK(a.acceptance == b.acceptance);
  CHECK(a.acceptance.rows() == 2);
  CHECK(a.log_likelihood.size() == 2);
  CHECK(a.log_likelihood[0].size() == 80);
  CHECK((a.acceptance.array() >= 0.0).all());
  CHECK((a.acceptance.array() <= 1.0).all());
}

TEST_CASE("pdm posterior symmetry") {
  CountMatrix y(2, 2);
  y << 1, 3, 2, 0;
  const Cohort cohort = cohort_from(y);
  TopicFit fit;
  fit.model = ModelKind::pdm;
  fit.theta = Eigen::MatrixXd::Constant(2, 2, 0.5);
  fit.phi = Eigen::MatrixXd::Constant(2, 2, 0.5);
  fit.gamma = Eigen::VectorXd::Ones(2);
  const auto post = patient_topic_posterior_pdm(fit, cohort, Eigen::MatrixXd::Constant(2, 2, 2.0), fit.gamma);
  CHECK((post.array() - 0.5).abs().maxCoeff() < 1e-15);
}
