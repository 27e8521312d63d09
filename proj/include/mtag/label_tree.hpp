#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "mtag/error.hpp"
#include "mtag/rng.hpp"
#include "mtag/sparse.hpp"

namespace mtag {

// Position of a label in the model's sorted label universe, so ascending
// LabelIndex is ascending label id.
using LabelIndex = std::uint32_t;
using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

struct LabelRepresentation {
  LabelIndex label;
  SparseVector vector;  // unit norm
};

struct TreeConfig {
  std::uint32_t num_trees = 3;
  std::uint32_t max_leaf_labels = 100;
  std::uint64_t seed = 0;
  std::uint32_t max_kmeans_iters = 50;
  double kmeans_tolerance = 1e-4;

  void validate() const {
    if (num_trees < 1) throw InputError("num_trees must be >= 1");
    if (max_leaf_labels < 2) throw InputError("max_leaf_labels must be >= 2");
  }
  friend bool operator==(const TreeConfig&, const TreeConfig&) = default;
};

struct LabelTreeNode {
  NodeId left = kNoNode;
  NodeId right = kNoNode;
  std::uint32_t depth = 0;
  std::vector<LabelIndex> labels;  // labels covered by the subtree, ascending

  bool is_leaf() const noexcept { return left == kNoNode; }
  friend bool operator==(const LabelTreeNode&, const LabelTreeNode&) = default;
};

// Binary label tree; node 0 is the root and ids follow breadth-first order.
struct LabelTree {
  std::vector<LabelTreeNode> nodes;

  const LabelTreeNode& root() const { return nodes.at(0); }
  std::size_t num_leaves() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
  }
  std::uint32_t depth() const {
    std::uint32_t d = 0;
    for (const auto& n : nodes) d = std::max(d, n.depth);
    return d;
  }
  friend bool operator==(const LabelTree&, const LabelTree&) = default;
};

// ---------------------------------------------------------------------------
// Label representations

// v_l = unit vector along the mean of the training points carrying label l.
// `label_sets[i]` lists the labels of `points[i]`. Every label in
// [0, num_labels) must occur at least once. A label whose mean is zero gets a
// seeded random unit vector instead, with a warning.
inline std::vector<LabelRepresentation> label_representations(std::span<const SparseView> points,
                                                              std::span<const std::vector<LabelIndex>> label_sets,
                                                              std::size_t num_labels, std::size_t dimension,
                                                              std::uint64_t seed = 0) {
  if (points.size() != label_sets.size()) throw InternalError("points/label_sets size mismatch");
  std::vector<std::vector<std::uint32_t>> members(num_labels);
  for (std::size_t i = 0; i < label_sets.size(); ++i)
    for (LabelIndex l : label_sets[i]) {
      if (l >= num_labels) throw InternalError("label index out of range");
      members[l].push_back(static_cast<std::uint32_t>(i));
    }

  std::vector<double> scratch(dimension, 0.0);
  std::vector<FeatureId> touched;
  std::vector<LabelRepresentation> reps;
  reps.reserve(num_labels);
  std::size_t zero_reps = 0;
  for (LabelIndex l = 0; l < num_labels; ++l) {
    if (members[l].empty())
      throw InputError("label #" + std::to_string(l) + " has no training points; cannot build its representation");
    touched.clear();
    for (auto i : members[l])
      for (const auto& e : points[i]) {
        if (scratch[e.index] == 0.0) touched.push_back(e.index);
        scratch[e.index] += e.weight;
      }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    const double inv_count = 1.0 / static_cast<double>(members[l].size());
    SparseVector v(dimension);
    for (FeatureId f : touched) {
      v.push_back(f, scratch[f] * inv_count);
      scratch[f] = 0.0;
    }
    v.normalize();
    if (v.empty()) {
      ++zero_reps;
      Rng rng(derive_seed(seed, 0x7e9000 + l));
      const std::size_t k = std::min<std::size_t>(dimension, 8);
      std::vector<SparseEntry> pairs;
      for (std::size_t j = 0; j < k; ++j)
        pairs.push_back({static_cast<FeatureId>(uniform_below(rng, dimension)), standard_normal(rng)});
      v = SparseVector::from_pairs(std::move(pairs), dimension);
      v.normalize();
      if (v.empty() && dimension > 0) v = SparseVector::from_pairs({{0, 1.0}}, dimension);
    }
    reps.push_back({l, std::move(v)});
  }
  if (zero_reps > 0)
    warn(std::to_string(zero_reps) + " label(s) have an all-zero mean feature vector; using seeded random directions");
  return reps;
}

// ---------------------------------------------------------------------------
// Balanced spherical 2-means

struct Bipartition {
  std::vector<LabelIndex> first;   // ceil(n/2) labels, ascending
  std::vector<LabelIndex> second;  // floor(n/2) labels, ascending
};

namespace detail {

inline void accumulate_centroid(const std::vector<const LabelRepresentation*>& reps, const std::vector<std::uint8_t>& assign,
                                std::uint8_t group, std::vector<double>& centroid) {
  std::fill(centroid.begin(), centroid.end(), 0.0);
  for (std::size_t i = 0; i < reps.size(); ++i)
    if (assign[i] == group) axpy(1.0, reps[i]->vector.view(), centroid);
  double n = 0.0;
  for (double c : centroid) n += c * c;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double& c : centroid) c /= n;
}

inline Bipartition to_bipartition(const std::vector<const LabelRepresentation*>& reps, const std::vector<std::uint8_t>& assign) {
  Bipartition out;
  for (std::size_t i = 0; i < reps.size(); ++i) (assign[i] == 0 ? out.first : out.second).push_back(reps[i]->label);
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

}  // namespace detail

// Splits labels into two groups of sizes ceil(n/2) and floor(n/2) by
// alternating spherical 2-means. Each assignment step ranks labels by
// (similarity to centroid 0) - (similarity to centroid 1) and fills group 0
// to capacity; ties go by ascending label index. Stops on an unchanged
// assignment, a mean-objective gain below the tolerance, or the iteration cap.
inline Bipartition balanced_2means(const std::vector<const LabelRepresentation*>& reps, std::uint64_t seed,
                                   const TreeConfig& config) {
  const std::size_t n = reps.size();
  if (n < 2) throw InternalError("balanced_2means needs at least two labels");
  const std::size_t cap0 = (n + 1) / 2;
  std::vector<std::uint8_t> assign(n, 1);

  if (n == 2) {
    const std::size_t lo = reps[0]->label < reps[1]->label ? 0 : 1;
    assign[lo] = 0;
    return detail::to_bipartition(reps, assign);
  }

  Rng rng(seed);
  std::size_t a = 0, b = 0;
  bool distinct = false;
  for (int attempt = 0; attempt < 11 && !distinct; ++attempt) {
    a = static_cast<std::size_t>(uniform_below(rng, n));
    b = static_cast<std::size_t>(uniform_below(rng, n - 1));
    if (b >= a) ++b;
    distinct = !(reps[a]->vector == reps[b]->vector);
  }
  if (!distinct) {
    for (std::size_t i = 0; i < n; ++i) assign[i] = (i % 2 == 0) ? 0 : 1;
    return detail::to_bipartition(reps, assign);
  }

  const std::size_t dim = reps[0]->vector.dimension();
  std::vector<double> c0(dim, 0.0), c1(dim, 0.0);
  axpy(1.0, reps[a]->vector.view(), c0);
  axpy(1.0, reps[b]->vector.view(), c1);

  std::vector<std::size_t> order(n);
  std::vector<double> s0(n), s1(n);
  std::vector<std::uint8_t> prev;
  double prev_obj = -std::numeric_limits<double>::infinity();
  for (std::uint32_t iter = 0; iter < std::max<std::uint32_t>(config.max_kmeans_iters, 1); ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      s0[i] = dot(reps[i]->vector.view(), c0);
      s1[i] = dot(reps[i]->vector.view(), c1);
    }
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      const double dx = s0[x] - s1[x], dy = s0[y] - s1[y];
      if (dx != dy) return dx > dy;
      return reps[x]->label < reps[y]->label;
    });
    for (std::size_t r = 0; r < n; ++r) assign[order[r]] = r < cap0 ? 0 : 1;

    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) obj += assign[i] == 0 ? s0[i] : s1[i];
    obj /= static_cast<double>(n);

    if (assign == prev) break;
    if (obj - prev_obj < config.kmeans_tolerance && iter > 0) break;
    prev = assign;
    prev_obj = obj;
    detail::accumulate_centroid(reps, assign, 0, c0);
    detail::accumulate_centroid(reps, assign, 1, c1);
  }
  return detail::to_bipartition(reps, assign);
}

inline Bipartition balanced_2means(const std::vector<LabelRepresentation>& reps, std::uint64_t seed,
                                   const TreeConfig& config) {
  std::vector<const LabelRepresentation*> ptrs;
  for (const auto& r : reps) ptrs.push_back(&r);
  return balanced_2means(ptrs, seed, config);
}

// Mean cosine similarity of each label to its own group's normalized mean.
inline double partition_objective(const std::vector<LabelRepresentation>& reps, const Bipartition& part) {
  if (reps.empty()) return 0.0;
  const std::size_t dim = reps[0].vector.dimension();
  std::vector<const SparseVector*> by_label;
  LabelIndex max_label = 0;
  for (const auto& r : reps) max_label = std::max(max_label, r.label);
  by_label.assign(max_label + 1, nullptr);
  for (const auto& r : reps) by_label[r.label] = &r.vector;
  double total = 0.0;
  for (const auto* group : {&part.first, &part.second}) {
    std::vector<double> c(dim, 0.0);
    for (auto l : *group) axpy(1.0, by_label[l]->view(), c);
    double norm = 0.0;
    for (double x : c) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (auto l : *group) total += dot(by_label[l]->view(), c) / norm;
  }
  return total / static_cast<double>(reps.size());
}

// ---------------------------------------------------------------------------
// Trees

// Recursive balanced splits until every node holds at most max_leaf_labels
// labels. The split at node k is seeded with derive_seed(seed, k).
inline LabelTree build_tree(const std::vector<LabelRepresentation>& reps, const TreeConfig& config, std::uint64_t seed) {
  config.validate();
  if (reps.empty()) throw InputError("cannot build a label tree without labels");
  std::vector<const LabelRepresentation*> by_label;
  LabelIndex max_label = 0;
  for (const auto& r : reps) max_label = std::max(max_label, r.label);
  by_label.assign(static_cast<std::size_t>(max_label) + 1, nullptr);
  for (const auto& r : reps) {
    if (by_label[r.label]) throw InputError("duplicate label representation");
    by_label[r.label] = &r;
  }

  LabelTree tree;
  LabelTreeNode root;
  for (const auto& r : reps) root.labels.push_back(r.label);
  std::sort(root.labels.begin(), root.labels.end());
  tree.nodes.push_back(std::move(root));

  for (NodeId id = 0; id < tree.nodes.size(); ++id) {
    if (tree.nodes[id].labels.size() <= config.max_leaf_labels) continue;
    std::vector<const LabelRepresentation*> group;
    for (auto l : tree.nodes[id].labels) group.push_back(by_label[l]);
    Bipartition part = balanced_2means(group, derive_seed(seed, id), config);
    const std::uint32_t depth = tree.nodes[id].depth + 1;
    LabelTreeNode left, right;
    left.depth = right.depth = depth;
    left.labels = std::move(part.first);
    right.labels = std::move(part.second);
    const auto l_id = static_cast<NodeId>(tree.nodes.size());
    tree.nodes[id].left = l_id;
    tree.nodes[id].right = l_id + 1;
    tree.nodes.push_back(std::move(left));
    tree.nodes.push_back(std::move(right));
  }
  return tree;
}

// config.num_trees trees seeded config.seed, config.seed + 1, ...
inline std::vector<LabelTree> build_forest(const std::vector<LabelRepresentation>& reps, const TreeConfig& config,
                                           unsigned threads = 1) {
  config.validate();
  std::vector<LabelTree> forest(config.num_trees);
  if (threads <= 1 || config.num_trees == 1) {
    for (std::uint32_t t = 0; t < config.num_trees; ++t) forest[t] = build_tree(reps, config, config.seed + t);
    return forest;
  }
  std::vector<std::future<LabelTree>> jobs;
  for (std::uint32_t t = 0; t < config.num_trees; ++t)
    jobs.push_back(std::async(std::launch::async, [&, t] { return build_tree(reps, config, config.seed + t); }));
  for (std::uint32_t t = 0; t < config.num_trees; ++t) forest[t] = jobs[t].get();
  return forest;
}

// One node per line, preorder, indented two spaces per level:
// `node_id depth leaf|internal label_count`.
inline void write_tree_topology(std::ostream& out, const LabelTree& tree) {
  if (tree.nodes.empty()) return;
  std::vector<NodeId> stack{0};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    const auto& n = tree.nodes[id];
    out << std::string(2 * n.depth, ' ') << id << ' ' << n.depth << ' ' << (n.is_leaf() ? "leaf" : "internal") << ' '
        << n.labels.size() << '\n';
    if (!n.is_leaf()) {
      stack.push_back(n.right);
      stack.push_back(n.left);
    }
  }
}

}  // namespace mtag
