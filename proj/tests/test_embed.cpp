#include <doctest.h>

#include <random>
#include <map>

#include "latentdx/error.hpp"
#include "latentdx/random.hpp"
#include "latentdx/svg.hpp"
#include "latentdx/tsne.hpp"
#include "test_util.hpp"

using namespace latentdx;

namespace {

double binary_entropy(double p) { return -(p * std::log2(p) + (1 - p) * std::log2(1 - p)); }

// Mean silhouette by direct pairwise sums.
double silhouette_direct(const Eigen::MatrixXd& y, const std::vector<int>& labels) {
  const auto n = static_cast<std::size_t>(y.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, std::pair<double, double>> by;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      auto& e = by[labels[j]];
      e.first += (y.row(static_cast<Eigen::Index>(i)) - y.row(static_cast<Eigen::Index>(j))).norm();
      e.second += 1.0;
    }
    const double a = by[labels[i]].first / by[labels[i]].second;
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [g, e] : by)
      if (g != labels[i]) b = std::min(b, e.first / e.second);
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

Eigen::MatrixXd two_groups(int per, std::uint64_t seed, std::vector<int>& labels) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 0.01);
  Eigen::MatrixXd x(2 * per, 5);
  for (int i = 0; i < 2 * per; ++i) {
    const double shift = i < per ? 0.0 : 1.0;
    for (int j = 0; j < 5; ++j) x(i, j) = shift + n(rng);
    labels.push_back(i < per ? 0 : 1);
  }
  return x;
}

int count_of(const std::string& text, const std::string& needle) {
  int c = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++c;
  return c;
}

}  // namespace

TEST_CASE("perplexity calibration") {
  SUBCASE("equal distances give uniform affinities") {
    const std::vector<double> d(9, 2.5);
    const auto c = perplexity_calibration(d, 9.0);
    for (double p : c.p) CHECK(p == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
    CHECK(std::abs(c.perplexity - 9.0) < 1e-9);
  }
  SUBCASE("two neighbours") {
    const std::vector<double> d{1.0, 10.0};
    const auto c = perplexity_calibration(d, 1.5);
    CHECK(std::abs(c.perplexity - 1.5) < 1e-5);
    // solve binary entropy for p1 > 1/2, then the bandwidth in closed form
    double lo = 0.5, hi = 1.0 - 1e-15;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (binary_entropy(mid) > std::log2(1.5) ? lo : hi) = mid;
    }
    const double p1 = 0.5 * (lo + hi);
    const double sigma = std::sqrt(99.0 / (2.0 * std::log(p1 / (1.0 - p1))));
    CHECK(c.p[0] == doctest::Approx(p1).epsilon(1e-4));
    CHECK(c.sigma == doctest::Approx(sigma).epsilon(1e-4));
  }
  SUBCASE("normalization and duplicates") {
    Rng rng(2);
    std::vector<double> d(30);
    for (auto& v : d) v = 0.1 + uniform01(rng) * 5.0;
    const auto c = perplexity_calibration(d, 7.0);
    double s = 0.0;
    for (double p : c.p) s += p;
    CHECK(std::abs(s - 1.0) < 1e-12);
    const std::vector<double> zeros(4, 0.0);
    const auto z = perplexity_calibration(zeros, 2.0);
    CHECK(z.degenerate);
    CHECK(z.p[0] == 0.25);
  }
}

TEST_CASE("joint probabilities") {
  Rng rng(4);
  Eigen::MatrixXd x(25, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform01(rng);
  const auto p = joint_probabilities(x, 5.0);
  CHECK((p - p.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(p.minCoeff() >= 0.0);
  CHECK(std::abs(p.sum() - 1.0) < 1e-9);
  CHECK(p.diagonal().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient matches finite differences") {
  Rng rng(5);
  Eigen::MatrixXd x(6, 3), y(6, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform01(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = uniform01(rng) - 0.5;
  const auto p = joint_probabilities(x, 1.5);
  const auto g = tsne_gradient(p, y);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) {
      Eigen::MatrixXd a = y, b = y;
      a(i, j) += h;
      b(i, j) -= h;
      const double fd = (tsne_kl(p, a) - tsne_kl(p, b)) / (2 * h);
      CHECK(std::abs(g(i, j) - fd) <= 1e-4 * std::max(std::abs(fd), 1e-8));
    }
}

TEST_CASE("KL is invariant to translation") {
  Rng rng(6);
  Eigen::MatrixXd x(10, 3), y(10, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform01(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = uniform01(rng);
  const auto p = joint_probabilities(x, 2.0);
  Eigen::MatrixXd moved = y;
  moved.col(0).array() += 3.7;
  moved.col(1).array() -= 1.2;
  CHECK(std::abs(tsne_kl(p, y) - tsne_kl(p, moved)) < 1e-10);
  CHECK(tsne_kl(p, y) >= 0.0);
}

TEST_CASE("config validation") {
  EmbedConfig c;
  CHECK_THROWS_AS(c.validate(3), ConfigError);
  c.perplexity = 10.0;
  CHECK_THROWS_AS(c.validate(30), ConfigError);
  CHECK_NOTHROW(c.validate(40));
  c.iterations = 100;
  CHECK_THROWS_AS(c.validate(40), ConfigError);
}

TEST_CASE("separated groups stay separated") {
  std::vector<int> labels;
  const auto x = two_groups(20, 8, labels);
  EmbedConfig c;
  c.perplexity = 5.0;
  c.iterations = 1000;
  c.seed = 3;
  const auto e = tsne(x, c);
  CHECK(e.coordinates.allFinite());
  CHECK(silhouette_direct(e.coordinates, labels) > 0.5);
  CHECK(silhouette(e.coordinates, labels) == doctest::Approx(silhouette_direct(e.coordinates, labels)).epsilon(1e-12));
  CHECK(e.kl < e.kl_at(250));
  CHECK(e.kl >= 0.0);
  CHECK(e.kl_trace.front().first == 50);
  CHECK(e.kl_trace[1].first - e.kl_trace[0].first == 50);
}

TEST_CASE("full-size embedding is deterministic") {
  Rng rng(10);
  Eigen::MatrixXd phi(20, 285);
  for (Eigen::Index k = 0; k < 20; ++k) {
    const auto row = sample_dirichlet(std::vector<double>(285, 0.1), rng);
    for (Eigen::Index v = 0; v < 285; ++v) phi(k, v) = row[static_cast<std::size_t>(v)];
  }
  const Eigen::MatrixXd rows = phi.transpose();
  EmbedConfig c;
  c.perplexity = 10.0;
  c.iterations = 5000;
  c.seed = 7;
  const auto a = tsne(rows, c);
  const auto b = tsne(rows, c);
  CHECK(a.coordinates.rows() == 285);
  CHECK(a.coordinates.allFinite());
  CHECK(a.coordinates == b.coordinates);
  CHECK(a.kl < a.kl_at(250));
}

TEST_CASE("export") {
  TempDir dir;
  Embedding2D e;
  e.coordinates.resize(4, 2);
  e.coordinates << 0, 0, 1, 0, 0, 1, 1, 1;
  const std::vector<std::string> labels{"a", "b", "c", "d<"};
  export_embedding(e, labels, dir / "e.csv", dir / "e.svg", {0, 0, 1, 1});
  const auto svg = read_text(dir / "e.svg");
  CHECK(count_of(svg, "<circle") == 4);
  CHECK(svg.find("d&lt;") != std::string::npos);
  const auto csv = read_text(dir / "e.csv");
  CHECK(count_of(csv, "\n") == 5);
  CHECK(csv.rfind("code,x,y", 0) == 0);
  export_embedding(e, labels, dir / "f.csv", dir / "f.svg", {0, 0, 1, 1});
  CHECK(read_text(dir / "f.csv") == csv);
  CHECK(read_text(dir / "f.svg") == svg);
  CHECK_THROWS(export_embedding(e, {"a"}, dir / "g.csv", dir / "g.svg"));
}

TEST_CASE("km svg") {
  TempDir dir;
  const std::vector<SurvivalSample> s{{1, true, 0}, {2, false, 0}, {3, true, 0}};
  const auto km = kaplan_meier(s);
  write_km_svg({km, km}, {"one", "two"}, "curves", dir / "k.svg");
  const auto svg = read_text(dir / "k.svg");
  CHECK((svg.rfind("<svg", 0) == 0 || svg.rfind("<?xml", 0) == 0));
  CHECK(svg.find("two") != std::string::npos);
}
