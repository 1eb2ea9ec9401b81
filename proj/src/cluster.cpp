#include "latentdx/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <unordered_map>

#include "latentdx/csv.hpp"
#include "latentdx/error.hpp"
#include "latentdx/random.hpp"

namespace latentdx {

std::string_view algorithm_name(ClusterAlgorithm algorithm) {
  switch (algorithm) {
    case ClusterAlgorithm::hierarchical: return "hierarchical";
    case ClusterAlgorithm::kmeans: return "kmeans";
    case ClusterAlgorithm::birch: return "birch";
  }
  return "?";
}

ClusterAlgorithm parse_algorithm(std::string_view name) {
  for (auto a : all_algorithms())
    if (algorithm_name(a) == name) return a;
  throw ConfigError("unknown clustering algorithm '" + std::string(name) +
                    "' (expected hierarchical, kmeans or birch)");
}

const std::vector<ClusterAlgorithm>& all_algorithms() {
  static const std::vector<ClusterAlgorithm> all = {ClusterAlgorithm::hierarchical, ClusterAlgorithm::kmeans,
                                                    ClusterAlgorithm::birch};
  return all;
}

std::vector<std::size_t> SubgroupAssignment::sizes() const {
  std::vector<std::size_t> s(groups, 0);
  for (int l : labels) ++s[static_cast<std::size_t>(l)];
  return s;
}

namespace {

void check_groups(const Eigen::MatrixXd& x, std::size_t groups) {
  if (groups < 1) throw ConfigError("the number of subgroups must be at least 1");
  if (groups > static_cast<std::size_t>(x.rows()))
    throw ConfigError("cannot form " + std::to_string(groups) + " subgroups from " + std::to_string(x.rows()) +
                      " patients");
  if (!x.allFinite()) throw DataError("feature matrix has non-finite entries");
}

// Renumbers labels by order of first appearance.
std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::unordered_map<int, int> map;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = map.emplace(labels[i], static_cast<int>(map.size()));
    out[i] = it->second;
  }
  return out;
}

Eigen::MatrixXd group_means(const Eigen::MatrixXd& x, const std::vector<int>& labels, std::size_t groups,
                            std::vector<double>& counts) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups), x.cols());
  counts.assign(groups, 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto g = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    c.row(static_cast<Eigen::Index>(g)) += x.row(i);
    counts[g] += 1.0;
  }
  for (std::size_t g = 0; g < groups; ++g)
    if (counts[g] > 0) c.row(static_cast<Eigen::Index>(g)) /= counts[g];
  return c;
}

}  // namespace

double within_cluster_ss(const Eigen::MatrixXd& x, const std::vector<int>& labels, std::size_t groups) {
  std::vector<double> counts;
  const auto c = group_means(x, labels, groups, counts);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    ss += (x.row(i) - c.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return ss;
}

SubgroupAssignment kmeans(const Eigen::MatrixXd& x, std::size_t groups, std::uint64_t seed,
                          std::size_t max_iter, double tol) {
  check_groups(x, groups);
  const auto M = x.rows();
  const auto G = static_cast<Eigen::Index>(groups);
  Rng rng(seed);

  // k-means++ seeding
  Eigen::MatrixXd centers(G, x.cols());
  std::vector<bool> chosen(static_cast<std::size_t>(M), false);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(M) - 1)(rng);
  centers.row(0) = x.row(static_cast<Eigen::Index>(first));
  chosen[first] = true;
  Eigen::VectorXd d2(M);
  for (Eigen::Index i = 0; i < M; ++i) d2(i) = (x.row(i) - centers.row(0)).squaredNorm();
  for (Eigen::Index g = 1; g < G; ++g) {
    const double total = d2.sum();
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      pick = static_cast<std::size_t>(M) - 1;
      for (Eigen::Index i = 0; i < M; ++i) {
        u -= d2(i);
        if (u < 0.0 && d2(i) > 0.0) {
          pick = static_cast<std::size_t>(i);
          break;
        }
      }
    } else {
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < chosen.size(); ++i)
        if (!chosen[i]) free.push_back(i);
      pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
    chosen[pick] = true;
    centers.row(g) = x.row(static_cast<Eigen::Index>(pick));
    for (Eigen::Index i = 0; i < M; ++i) d2(i) = std::min(d2(i), (x.row(i) - centers.row(g)).squaredNorm());
  }

  SubgroupAssignment out;
  out.algorithm = ClusterAlgorithm::kmeans;
  out.groups = groups;
  std::vector<int> labels(static_cast<std::size_t>(M), 0);
  std::vector<double> counts;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    for (Eigen::Index i = 0; i < M; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index g = 0; g < G; ++g) {
        const double d = (x.row(i) - centers.row(g)).squaredNorm();
        if (d < best) {
          best = d;
          labels[static_cast<std::size_t>(i)] = static_cast<int>(g);
        }
      }
    }
    Eigen::MatrixXd updated = group_means(x, labels, groups, counts);
    // Repair empty clusters with the farthest point of the largest cluster.
    for (Eigen::Index g = 0; g < G; ++g) {
      if (counts[static_cast<std::size_t>(g)] > 0) continue;
      const auto largest = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      if (counts[static_cast<std::size_t>(largest)] < 2) break;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < M; ++i) {
        if (labels[static_cast<std::size_t>(i)] != largest) continue;
        const double d = (x.row(i) - updated.row(largest)).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      labels[static_cast<std::size_t>(far)] = static_cast<int>(g);
      updated = group_means(x, labels, groups, counts);
    }
    const double shift = (updated - centers).rowwise().norm().maxCoeff();
    centers = updated;
    out.trace.push_back(within_cluster_ss(x, labels, groups));
    if (shift < tol) break;
  }

  // Single-point moves: x leaves a (size na) for b when
  // nb/(nb+1)|x-cb|^2 < na/(na-1)|x-ca|^2.
  centers = group_means(x, labels, groups, counts);
  bool moved = true;
  for (std::size_t pass = 0; moved && pass < max_iter; ++pass) {
    moved = false;
    for (Eigen::Index i = 0; i < M; ++i) {
      const int a = labels[static_cast<std::size_t>(i)];
      const double na = counts[static_cast<std::size_t>(a)];
      if (na < 2) continue;
      const double remove_gain = na / (na - 1.0) * (x.row(i) - centers.row(a)).squaredNorm();
      double best = remove_gain;
      int target = a;
      for (Eigen::Index g = 0; g < G; ++g) {
        if (g == a) continue;
        const double nb = counts[static_cast<std::size_t>(g)];
        const double add_cost = nb / (nb + 1.0) * (x.row(i) - centers.row(g)).squaredNorm();
        if (add_cost < best - 1e-12 * (1.0 + remove_gain)) {
          best = add_cost;
          target = static_cast<int>(g);
        }
      }
      if (target == a) continue;
      const double nb = counts[static_cast<std::size_t>(target)];
      centers.row(a) = (centers.row(a) * na - x.row(i)) / (na - 1.0);
      centers.row(target) = (centers.row(target) * nb + x.row(i)) / (nb + 1.0);
      counts[static_cast<std::size_t>(a)] -= 1.0;
      counts[static_cast<std::size_t>(target)] += 1.0;
      labels[static_cast<std::size_t>(i)] = target;
      moved = true;
    }
    if (moved) out.trace.push_back(within_cluster_ss(x, labels, groups));
  }
  out.labels = canonical_labels(labels);
  out.objective = within_cluster_ss(x, out.labels, groups);
  return out;
}

std::vector<WardMerge> ward_dendrogram(const Eigen::MatrixXd& x, const std::vector<double>& weights) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  std::vector<double> w = weights.empty() ? std::vector<double>(n, 1.0) : weights;
  if (w.size() != n) throw ConfigError("weights do not match the number of rows");
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 2.0 * w[i] * w[j] / (w[i] + w[j]) *
                       (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).squaredNorm();
      d[i * n + j] = d[j * n + i] = v;
    }
  std::vector<bool> active(n, true);
  std::vector<std::size_t> slot(n);
  std::iota(slot.begin(), slot.end(), 0);
  std::vector<WardMerge> merges;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (d[i * n + j] < best) {
          best = d[i * n + j];
          bi = i;
          bj = j;
        }
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double v = ((w[bi] + w[k]) * d[bi * n + k] + (w[bj] + w[k]) * d[bj * n + k] - w[k] * best) /
                       (w[bi] + w[bj] + w[k]);
      d[bi * n + k] = d[k * n + bi] = v;
    }
    WardMerge merge;
    merge.left = std::min(slot[bi], slot[bj]);
    merge.right = std::max(slot[bi], slot[bj]);
    merge.height = best;
    w[bi] += w[bj];
    merge.size = static_cast<std::size_t>(std::llround(w[bi]));
    merges.push_back(merge);
    active[bj] = false;
    slot[bi] = n + step;
  }
  return merges;
}

std::vector<int> cut_dendrogram(const std::vector<WardMerge>& merges, std::size_t points, std::size_t groups) {
  if (groups < 1 || groups > points) throw ConfigError("invalid number of groups for the dendrogram cut");
  std::vector<std::size_t> parent(points + merges.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t s = 0; s < points - groups; ++s) {
    const auto& m = merges[s];
    parent[find(m.left)] = points + s;
    parent[find(m.right)] = points + s;
  }
  std::vector<int> roots(points);
  for (std::size_t i = 0; i < points; ++i) roots[i] = static_cast<int>(find(i));
  return canonical_labels(roots);
}

SubgroupAssignment hierarchical_ward(const Eigen::MatrixXd& x, std::size_t groups) {
  check_groups(x, groups);
  SubgroupAssignment out;
  out.algorithm = ClusterAlgorithm::hierarchical;
  out.groups = groups;
  const auto merges = ward_dendrogram(x);
  out.labels = cut_dendrogram(merges, static_cast<std::size_t>(x.rows()), groups);
  out.objective = within_cluster_ss(x, out.labels, groups);
  return out;
}

ClusteringFeature ClusteringFeature::of_point(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return {1.0, x, x.squaredNorm()};
}

void ClusteringFeature::merge(const ClusteringFeature& other) {
  if (n == 0.0) {
    *this = other;
    return;
  }
  n += other.n;
  linear += other.linear;
  squared += other.squared;
}

double ClusteringFeature::radius() const {
  const double v = squared / n - (linear / n).squaredNorm();
  return std::sqrt(std::max(0.0, v));
}

namespace {

struct CfNode {
  bool leaf = true;
  std::vector<ClusteringFeature> entries;
  std::vector<std::unique_ptr<CfNode>> children;
};

std::size_t closest_entry(const std::vector<ClusteringFeature>& entries, const Eigen::VectorXd& point) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double d = (entries[i].centroid() - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// Splits an overfull node around its two most distant entries.
std::pair<std::unique_ptr<CfNode>, std::unique_ptr<CfNode>> split_node(CfNode& node) {
  const std::size_t count = node.entries.size();
  std::size_t a = 0, b = 1;
  double far = -1.0;
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = i + 1; j < count; ++j) {
      const double d = (node.entries[i].centroid() - node.entries[j].centroid()).squaredNorm();
      if (d > far) {
        far = d;
        a = i;
        b = j;
      }
    }
  auto left = std::make_unique<CfNode>();
  auto right = std::make_unique<CfNode>();
  left->leaf = right->leaf = node.leaf;
  const Eigen::VectorXd ca = node.entries[a].centroid();
  const Eigen::VectorXd cb = node.entries[b].centroid();
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::VectorXd c = node.entries[i].centroid();
    CfNode* target = i == a ? left.get() : i == b ? right.get()
                     : (c - ca).squaredNorm() <= (c - cb).squaredNorm() ? left.get() : right.get();
    target->entries.push_back(std::move(node.entries[i]));
    if (!node.leaf) target->children.push_back(std::move(node.children[i]));
  }
  return {std::move(left), std::move(right)};
}

ClusteringFeature summarize(const CfNode& node) {
  ClusteringFeature s;
  for (const auto& e : node.entries) s.merge(e);
  return s;
}

void insert(CfNode& node, const ClusteringFeature& point, std::size_t branching, double threshold) {
  const Eigen::VectorXd x = point.centroid();
  if (node.leaf) {
    if (!node.entries.empty()) {
      const auto i = closest_entry(node.entries, x);
      ClusteringFeature merged = node.entries[i];
      merged.merge(point);
      if (merged.radius() <= threshold) {
        node.entries[i] = std::move(merged);
        return;
      }
    }
    node.entries.push_back(point);
    return;
  }
  const auto i = closest_entry(node.entries, x);
  insert(*node.children[i], point, branching, threshold);
  if (node.children[i]->entries.size() > branching) {
    auto [left, right] = split_node(*node.children[i]);
    node.entries[i] = summarize(*left);
    node.children[i] = std::move(left);
    node.entries.insert(node.entries.begin() + static_cast<std::ptrdiff_t>(i) + 1, summarize(*right));
    node.children.insert(node.children.begin() + static_cast<std::ptrdiff_t>(i) + 1, std::move(right));
  } else {
    node.entries[i].merge(point);
  }
}

void collect_leaves(const CfNode& node, std::vector<ClusteringFeature>& out) {
  if (node.leaf) {
    out.insert(out.end(), node.entries.begin(), node.entries.end());
    return;
  }
  for (const auto& c : node.children) collect_leaves(*c, out);
}

}  // namespace

std::vector<ClusteringFeature> build_cf_tree(const Eigen::MatrixXd& x, std::size_t branching_factor,
                                             double threshold) {
  if (branching_factor < 2) throw ConfigError("BIRCH branching factor must be at least 2");
  if (!(threshold > 0.0)) throw ConfigError("BIRCH threshold must be positive");
  auto root = std::make_unique<CfNode>();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    insert(*root, ClusteringFeature::of_point(x.row(i).transpose()), branching_factor, threshold);
    if (root->entries.size() > branching_factor) {
      auto [left, right] = split_node(*root);
      auto top = std::make_unique<CfNode>();
      top->leaf = false;
      top->entries.push_back(summarize(*left));
      top->entries.push_back(summarize(*right));
      top->children.push_back(std::move(left));
      top->children.push_back(std::move(right));
      root = std::move(top);
    }
  }
  std::vector<ClusteringFeature> leaves;
  collect_leaves(*root, leaves);
  return leaves;
}

double default_birch_threshold(const Eigen::MatrixXd& x, std::uint64_t seed) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  if (rows.size() > 200) {
    Rng rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(200);
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      total += (x.row(rows[i]) - x.row(rows[j])).norm();
      ++pairs;
    }
  const double mean = pairs > 0 ? total / static_cast<double>(pairs) : 0.0;
  return std::max(0.25 * mean, 1e-12);
}

SubgroupAssignment birch(const Eigen::MatrixXd& x, std::size_t groups, std::size_t branching_factor,
                         double threshold) {
  check_groups(x, groups);
  const auto leaves = build_cf_tree(x, branching_factor, threshold);
  if (groups > leaves.size())
    throw ConfigError("BIRCH produced " + std::to_string(leaves.size()) + " leaf entries, fewer than the " +
                      std::to_string(groups) + " requested subgroups; use a smaller threshold");
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(leaves.size()), x.cols());
  std::vector<double> weights(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    centroids.row(static_cast<Eigen::Index>(i)) = leaves[i].centroid().transpose();
    weights[i] = leaves[i].n;
  }
  const auto entry_labels = cut_dendrogram(ward_dendrogram(centroids, weights), leaves.size(), groups);
  std::vector<ClusteringFeature> finals(groups);
  for (std::size_t i = 0; i < leaves.size(); ++i) finals[static_cast<std::size_t>(entry_labels[i])].merge(leaves[i]);
  std::vector<int> labels(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < groups; ++g) {
      const double d = (x.row(i).transpose() - finals[g].centroid()).squaredNorm();
      if (d < best) {
        best = d;
        labels[static_cast<std::size_t>(i)] = static_cast<int>(g);
      }
    }
  }
  SubgroupAssignment out;
  out.algorithm = ClusterAlgorithm::birch;
  out.groups = groups;
  out.labels = canonical_labels(labels);
  const auto used = static_cast<std::size_t>(*std::max_element(out.labels.begin(), out.labels.end())) + 1;
  out.objective = within_cluster_ss(x, out.labels, std::max(used, groups));
  return out;
}

std::vector<SweepCell> sweep_subgroups(const Eigen::MatrixXd& x, const SweepOptions& options) {
  if (options.min_groups < 1 || options.max_groups < options.min_groups)
    throw ConfigError("invalid subgroup range");
  std::vector<SweepCell> cells;
  std::vector<WardMerge> merges;
  double threshold = options.birch_threshold;
  for (auto algorithm : options.algorithms) {
    for (std::size_t g = options.min_groups; g <= options.max_groups; ++g) {
      SweepCell cell;
      cell.algorithm = algorithm;
      cell.groups = g;
      try {
        switch (algorithm) {
          case ClusterAlgorithm::hierarchical: {
            check_groups(x, g);
            if (merges.empty()) merges = ward_dendrogram(x);
            SubgroupAssignment a;
            a.algorithm = algorithm;
            a.groups = g;
            a.labels = cut_dendrogram(merges, static_cast<std::size_t>(x.rows()), g);
            a.objective = within_cluster_ss(x, a.labels, g);
            cell.assignment = std::move(a);
            break;
          }
          case ClusterAlgorithm::kmeans:
            cell.assignment = kmeans(x, g, derive_seed(options.seed, g));
            break;
          case ClusterAlgorithm::birch:
            if (!(threshold > 0.0)) threshold = default_birch_threshold(x, options.seed);
            cell.assignment = birch(x, g, options.branching_factor, threshold);
            break;
        }
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ConfigError("label vectors differ in length");
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  auto c2 = [](double n) { return n * (n - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : joint) index += c2(v);
  for (const auto& [k, v] : ra) sa += c2(v);
  for (const auto& [k, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  const double maximum = 0.5 * (sa + sb);
  if (maximum == expected) return 1.0;
  return (index - expected) / (maximum - expected);
}

void write_assignments_csv(const std::vector<SweepCell>& cells, const Cohort& cohort,
                           const std::filesystem::path& path) {
  CsvWriter out(path);
  out.row("patient_id", "algorithm", "G", "label");
  for (const auto& cell : cells) {
    if (!cell.assignment) continue;
    for (std::size_t m = 0; m < cohort.size(); ++m)
      out.row(cohort.patient(m).id, algorithm_name(cell.algorithm), cell.groups, cell.assignment->labels[m]);
  }
}

SubgroupAssignment read_assignment(const std::filesystem::path& path, const Cohort& cohort,
                                   ClusterAlgorithm algorithm, std::size_t groups) {
  CsvReader reader(path);
  const auto c_id = reader.require_column("patient_id");
  const auto c_alg = reader.require_column("algorithm");
  const auto c_g = reader.require_column("G");
  const auto c_label = reader.require_column("label");
  std::unordered_map<std::string, std::size_t> rows;
  for (std::size_t m = 0; m < cohort.size(); ++m) rows.emplace(cohort.patient(m).id, m);
  SubgroupAssignment out;
  out.algorithm = algorithm;
  out.groups = groups;
  out.labels.assign(cohort.size(), -1);
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) throw DataError(reader.where("wrong number of fields"));
    if (f[c_alg] != algorithm_name(algorithm)) continue;
    if (parse_integer(f[c_g], reader) != static_cast<long long>(groups)) continue;
    auto it = rows.find(f[c_id]);
    if (it == rows.end()) throw DataError(reader.where("patient '" + f[c_id] + "' is not in the cohort"));
    const long long label = parse_integer(f[c_label], reader);
    if (label < 0 || label >= static_cast<long long>(groups)) throw DataError(reader.where("label out of range"));
    out.labels[it->second] = static_cast<int>(label);
  }
  for (std::size_t m = 0; m < cohort.size(); ++m)
    if (out.labels[m] < 0)
      throw DataError(path.string() + ": no " + std::string(algorithm_name(algorithm)) + " G=" +
                      std::to_string(groups) + " label for patient '" + cohort.patient(m).id + "'");
  return out;
}

}  // namespace latentdx
