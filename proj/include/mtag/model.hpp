#pragma once

#include <algorithm>
#include <cstdint>
#include <future>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mtag/corpus.hpp"
#include "mtag/error.hpp"
#include "mtag/features.hpp"
#include "mtag/label_tree.hpp"
#include "mtag/logistic.hpp"
#include "mtag/text.hpp"

namespace mtag {

struct TrainParams {
  LogisticParams logistic;
  double truncation = 0.1;  // |w| below this is dropped after training; 0 keeps all
  unsigned threads = 1;

  friend bool operator==(const TrainParams&, const TrainParams&) = default;
};

// Classifiers attached to one label tree. `routing[n]` decides whether to
// descend into node n from its parent (unused for the root). For a leaf n,
// `leaf[n][i]` scores label tree.nodes[n].labels[i].
struct TreeModel {
  LabelTree tree;
  std::vector<NodeClassifier> routing;
  std::vector<std::vector<NodeClassifier>> leaf;

  std::size_t num_classifiers() const {
    std::size_t n = 0;
    for (NodeId id = 0; id < tree.nodes.size(); ++id) {
      if (!tree.nodes[id].is_leaf()) n += 2;
      n += leaf[id].size();
    }
    return n;
  }
  friend bool operator==(const TreeModel&, const TreeModel&) = default;
};

struct Model {
  FeatureIndex index;
  FeatureOptions features;
  TreeConfig tree_config;
  TrainParams train;
  std::vector<LabelId> labels;  // sorted; LabelIndex i names labels[i]
  std::vector<TreeModel> trees;

  std::size_t dimension() const { return index.dimension(); }
  SparseVector featurize(const Paper& p) const { return mtag::featurize(p, index, features); }

  friend bool operator==(const Model&, const Model&) = default;
};

// Feature vectors with label sets over a fixed label universe.
struct TrainingSet {
  std::vector<SparseVector> x;
  std::vector<std::vector<LabelIndex>> y;  // ascending per point
  std::size_t dimension = 0;
  std::size_t num_labels = 0;

  std::vector<SparseView> views() const {
    std::vector<SparseView> v;
    v.reserve(x.size());
    for (const auto& p : x) v.push_back(p.view());
    return v;
  }
};

struct FitStats {
  std::size_t classifiers = 0;
  std::size_t single_class = 0;  // nodes trained on one class only
  std::size_t empty_nodes = 0;   // nodes no training point routes to
};

namespace detail {

// For each node, the training points with at least one label in its subtree.
inline std::vector<std::vector<std::uint32_t>> route_points(const LabelTree& tree, const TrainingSet& data) {
  const std::size_t n_nodes = tree.nodes.size();
  std::vector<NodeId> parent(n_nodes, kNoNode);
  for (NodeId id = 0; id < n_nodes; ++id)
    if (!tree.nodes[id].is_leaf()) {
      parent[tree.nodes[id].left] = id;
      parent[tree.nodes[id].right] = id;
    }
  std::vector<NodeId> leaf_of(data.num_labels, kNoNode);
  for (NodeId id = 0; id < n_nodes; ++id)
    if (tree.nodes[id].is_leaf())
      for (auto l : tree.nodes[id].labels) leaf_of[l] = id;

  std::vector<std::vector<std::uint32_t>> routed(n_nodes);
  std::vector<std::uint32_t> stamp(n_nodes, std::numeric_limits<std::uint32_t>::max());
  for (std::uint32_t i = 0; i < data.x.size(); ++i)
    for (auto l : data.y[i]) {
      NodeId n = leaf_of.at(l);
      if (n == kNoNode) throw InternalError("label missing from tree");
      while (n != kNoNode && stamp[n] != i) {
        stamp[n] = i;
        routed[n].push_back(i);
        n = parent[n];
      }
    }
  for (auto& r : routed) std::sort(r.begin(), r.end());
  return routed;
}

inline NodeClassifier train_split(const std::vector<SparseView>& views, const std::vector<std::uint32_t>& pos_ids,
                                  const std::vector<std::uint32_t>& neg_ids, std::size_t dim, const TrainParams& params,
                                  FitStats& stats) {
  ++stats.classifiers;
  NodeClassifier clf;
  if (pos_ids.empty() && neg_ids.empty()) {
    ++stats.empty_nodes;
    clf.weights = SparseVector(dim);
    clf.bias = -kSaturatedBias;
    return clf;
  }
  if (pos_ids.empty() || neg_ids.empty()) ++stats.single_class;
  std::vector<SparseView> pos, neg;
  pos.reserve(pos_ids.size());
  neg.reserve(neg_ids.size());
  for (auto i : pos_ids) pos.push_back(views[i]);
  for (auto i : neg_ids) neg.push_back(views[i]);
  clf = train_logistic(pos, neg, dim, params.logistic, nullptr, false);
  truncate_weights(clf, params.truncation);
  return clf;
}

}  // namespace detail

// Trains the classifiers of one tree. A child's positives are the points
// routed to it; its negatives are the parent's remaining points. A leaf
// label's positives are the leaf's points carrying it; the rest of the leaf's
// points are negatives.
inline TreeModel train_tree(const TrainingSet& data, LabelTree tree, const TrainParams& params, FitStats& stats) {
  const auto routed = detail::route_points(tree, data);
  const auto views = data.views();
  TreeModel tm;
  tm.routing.assign(tree.nodes.size(), NodeClassifier{SparseVector(data.dimension), 0.0});
  tm.leaf.assign(tree.nodes.size(), {});
  std::vector<std::uint32_t> pos, neg;
  for (NodeId id = 0; id < tree.nodes.size(); ++id) {
    const auto& node = tree.nodes[id];
    if (!node.is_leaf()) {
      for (NodeId child : {node.left, node.right}) {
        neg.clear();
        std::set_difference(routed[id].begin(), routed[id].end(), routed[child].begin(), routed[child].end(),
                            std::back_inserter(neg));
        tm.routing[child] = detail::train_split(views, routed[child], neg, data.dimension, params, stats);
      }
      continue;
    }
    for (auto label : node.labels) {
      pos.clear();
      neg.clear();
      for (auto i : routed[id])
        (std::binary_search(data.y[i].begin(), data.y[i].end(), label) ? pos : neg).push_back(i);
      tm.leaf[id].push_back(detail::train_split(views, pos, neg, data.dimension, params, stats));
    }
  }
  tm.tree = std::move(tree);
  return tm;
}

inline std::vector<TreeModel> train_forest(const TrainingSet& data, std::vector<LabelTree> forest,
                                           const TrainParams& params, FitStats* stats_out = nullptr) {
  std::vector<TreeModel> out(forest.size());
  std::vector<FitStats> stats(forest.size());
  if (params.threads <= 1 || forest.size() == 1) {
    for (std::size_t t = 0; t < forest.size(); ++t) out[t] = train_tree(data, std::move(forest[t]), params, stats[t]);
  } else {
    std::vector<std::future<TreeModel>> jobs;
    for (std::size_t t = 0; t < forest.size(); ++t)
      jobs.push_back(std::async(std::launch::async,
                                [&, t] { return train_tree(data, std::move(forest[t]), params, stats[t]); }));
    for (std::size_t t = 0; t < forest.size(); ++t) out[t] = jobs[t].get();
  }
  FitStats total;
  for (const auto& s : stats) {
    total.classifiers += s.classifiers;
    total.single_class += s.single_class;
    total.empty_nodes += s.empty_nodes;
  }
  if (total.single_class > 0)
    warn(std::to_string(total.single_class) + " of " + std::to_string(total.classifiers) +
         " node classifiers saw a single class and are constant");
  if (total.empty_nodes > 0)
    warn(std::to_string(total.empty_nodes) + " tree nodes have no routed training points");
  if (stats_out) *stats_out = total;
  return out;
}

// Featurizes the training papers over the sorted label universe they use.
inline TrainingSet make_training_set(const std::vector<Paper>& train, const FeatureIndex& index,
                                     const FeatureOptions& features, std::vector<LabelId>& labels_out) {
  std::set<LabelId> universe;
  for (const auto& p : train) universe.insert(p.labels.begin(), p.labels.end());
  labels_out.assign(universe.begin(), universe.end());
  std::map<LabelId, LabelIndex> pos;
  for (LabelIndex i = 0; i < labels_out.size(); ++i) pos[labels_out[i]] = i;

  TrainingSet data;
  data.dimension = index.dimension();
  data.num_labels = labels_out.size();
  std::size_t skipped = 0;
  for (const auto& p : train) {
    if (p.labels.empty()) {
      ++skipped;
      continue;
    }
    data.x.push_back(featurize(p, index, features));
    std::vector<LabelIndex> y;
    for (const auto& l : p.labels) y.push_back(pos.at(l));
    std::sort(y.begin(), y.end());
    data.y.push_back(std::move(y));
  }
  if (skipped > 0) warn(std::to_string(skipped) + " training papers without labels were skipped");
  if (data.x.empty()) throw InputError("no labelled training papers");
  return data;
}

// Full training pipeline: features, label representations, forest, classifiers.
inline Model fit(const std::vector<Paper>& train, FeatureIndex index, const FeatureOptions& features,
                 const TreeConfig& tree_config, const TrainParams& params, FitStats* stats = nullptr) {
  tree_config.validate();
  Model m;
  m.features = features;
  m.tree_config = tree_config;
  m.train = params;
  const TrainingSet data = make_training_set(train, index, features, m.labels);
  const auto views = data.views();
  const auto reps = label_representations(views, data.y, data.num_labels, data.dimension, tree_config.seed);
  auto forest = build_forest(reps, tree_config, params.threads);
  m.trees = train_forest(data, std::move(forest), params, stats);
  m.index = std::move(index);
  return m;
}

// ---------------------------------------------------------------------------
// Prediction

struct RankedLabel {
  LabelId label;
  double score;

  friend bool operator==(const RankedLabel&, const RankedLabel&) = default;
};

struct Prediction {
  std::string paper_id;
  std::vector<RankedLabel> ranked;  // score descending, ties by ascending label id

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

inline void sort_ranked(std::vector<RankedLabel>& r) {
  std::sort(r.begin(), r.end(), [](const RankedLabel& a, const RankedLabel& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.label < b.label;
  });
}

// Label scores of one tree: path probability times leaf probability for
// every label in the leaves that survive a level-wise beam of `beam_width`.
inline std::vector<std::pair<LabelIndex, double>> score_tree(const TreeModel& tm, SparseView x, std::size_t beam_width) {
  struct Item {
    NodeId node;
    double score;
  };
  const auto& nodes = tm.tree.nodes;
  std::vector<Item> beam{{0, 1.0}}, next;
  auto has_internal = [&] {
    return std::any_of(beam.begin(), beam.end(), [&](const Item& it) { return !nodes[it.node].is_leaf(); });
  };
  while (has_internal()) {
    next.clear();
    for (const auto& it : beam) {
      const auto& n = nodes[it.node];
      if (n.is_leaf()) {
        next.push_back(it);
        continue;
      }
      for (NodeId c : {n.left, n.right}) next.push_back({c, it.score * tm.routing[c].probability(x)});
    }
    std::sort(next.begin(), next.end(), [](const Item& a, const Item& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.node < b.node;
    });
    if (next.size() > beam_width) next.resize(beam_width);
    std::swap(beam, next);
  }
  std::vector<std::pair<LabelIndex, double>> out;
  for (const auto& it : beam) {
    const auto& n = nodes[it.node];
    for (std::size_t i = 0; i < n.labels.size(); ++i)
      out.emplace_back(n.labels[i], it.score * tm.leaf[it.node][i].probability(x));
  }
  return out;
}

// Averages per-tree label scores (a label a tree did not reach counts 0 for
// that tree) and returns the top_k labels.
inline Prediction predict_beam(const Model& model, SparseView x, std::size_t beam_width, std::size_t top_k,
                               std::string paper_id = {}) {
  if (beam_width < 1) throw InputError("beam width must be >= 1");
  if (top_k < 1) throw InputError("top_k must be >= 1");
  std::vector<std::pair<LabelIndex, double>> all;
  for (const auto& tm : model.trees) {
    auto s = score_tree(tm, x, beam_width);
    all.insert(all.end(), s.begin(), s.end());
  }
  // Stable sort keeps tree order within a label so the sum is tree-ordered.
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Prediction pred;
  pred.paper_id = std::move(paper_id);
  const double n_trees = static_cast<double>(model.trees.size());
  for (std::size_t i = 0; i < all.size();) {
    double sum = 0.0;
    std::size_t j = i;
    for (; j < all.size() && all[j].first == all[i].first; ++j) sum += all[j].second;
    pred.ranked.push_back({model.labels[all[i].first], sum / n_trees});
    i = j;
  }
  sort_ranked(pred.ranked);
  if (pred.ranked.size() > top_k) pred.ranked.resize(top_k);
  return pred;
}

inline Prediction predict_beam(const Model& model, const Paper& paper, std::size_t beam_width, std::size_t top_k) {
  const auto x = model.featurize(paper);
  return predict_beam(model, x.view(), beam_width, top_k, paper.id);
}

// ---------------------------------------------------------------------------
// Lexical re-ranking

// Tokenized label names, built once per taxonomy.
class LabelNameMatcher {
 public:
  explicit LabelNameMatcher(const Taxonomy& taxonomy) {
    for (const auto& [id, e] : taxonomy.entries()) {
      auto& names = names_[id];
      for (const auto& n : e.names) names.push_back(tokenize(n));
    }
  }

  // nullopt when the label is unknown.
  std::optional<bool> occurs(const LabelId& label, const std::vector<std::string>& text_tokens) const {
    auto it = names_.find(label);
    if (it == names_.end()) return std::nullopt;
    for (const auto& name : it->second)
      if (contains_sequence(text_tokens, name)) return true;
    return false;
  }

 private:
  std::map<LabelId, std::vector<std::vector<std::string>>> names_;
};

// z = y + 1 when any name of the label occurs, token for token, in the
// paper's title+abstract; the list is then re-sorted. Labels absent from the
// taxonomy are treated as unmatched.
inline Prediction lexical_rerank(const Prediction& prediction, const Paper& paper, const LabelNameMatcher& matcher) {
  const auto tokens = tokenize(paper.text());
  Prediction out = prediction;
  std::size_t unknown = 0;
  for (auto& r : out.ranked) {
    auto hit = matcher.occurs(r.label, tokens);
    if (!hit) ++unknown;
    if (hit.value_or(false)) r.score += 1.0;
  }
  if (unknown > 0)
    warn(std::to_string(unknown) + " predicted label(s) of paper '" + paper.id +
         "' are missing from the taxonomy; treated as unmatched");
  sort_ranked(out.ranked);
  return out;
}

inline Prediction lexical_rerank(const Prediction& prediction, const Paper& paper, const Taxonomy& taxonomy) {
  return lexical_rerank(prediction, paper, LabelNameMatcher(taxonomy));
}

// `paper_id<TAB>label:score,...` in rank order, scores with 6 decimals.
inline void write_prediction_line(std::ostream& out, const Prediction& p) {
  out << p.paper_id << '\t';
  char buf[32];
  for (std::size_t i = 0; i < p.ranked.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", p.ranked[i].score);
    out << (i ? "," : "") << p.ranked[i].label << ':' << buf;
  }
  out << '\n';
}

}  // namespace mtag
