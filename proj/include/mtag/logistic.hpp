#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mtag/error.hpp"
#include "mtag/rng.hpp"
#include "mtag/sparse.hpp"

namespace mtag {

// Bias used by single-class nodes: sigmoid(20) = 1 - 2.1e-9.
inline constexpr double kSaturatedBias = 20.0;

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(-m)) without overflow.
inline double logistic_loss(double margin) {
  return margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

struct NodeClassifier {
  SparseVector weights;
  double bias = 0.0;

  double score(SparseView x) const { return dot(x, weights.view()) + bias; }
  double probability(SparseView x) const { return sigmoid(score(x)); }

  friend bool operator==(const NodeClassifier&, const NodeClassifier&) = default;
};

// Drops every weight with magnitude below `threshold` (0 keeps all).
inline void truncate_weights(NodeClassifier& clf, double threshold) {
  if (threshold <= 0.0) return;
  std::vector<SparseEntry> kept;
  for (const auto& e : clf.weights.entries())
    if (std::abs(e.weight) >= threshold) kept.push_back(e);
  clf.weights = SparseVector::from_pairs(std::move(kept), clf.weights.dimension());
}

struct LogisticParams {
  double c = 1.0;            // loss weight; the regularizer is 0.5 * |w|^2
  double tolerance = 1e-2;   // stop once duality gap <= tolerance * primal objective
  std::uint32_t max_iters = 100;

  friend bool operator==(const LogisticParams&, const LogisticParams&) = default;
};

struct LogisticStats {
  std::uint32_t iterations = 0;
  double primal = 0.0;
  double dual = 0.0;
  bool converged = false;
};

namespace detail {

// Features actually used by the training rows, remapped to [0, d).
struct LocalProblem {
  std::vector<FeatureId> global;             // local -> global
  std::vector<std::size_t> row_start{0};
  std::vector<SparseEntry> entries;          // local indices
  std::vector<double> y;

  SparseView row(std::size_t i) const {
    return SparseView(entries.data() + row_start[i], row_start[i + 1] - row_start[i]);
  }
  std::size_t rows() const { return y.size(); }
};

inline LocalProblem make_local_problem(std::span<const SparseView> positives, std::span<const SparseView> negatives) {
  LocalProblem lp;
  for (auto rows : {positives, negatives})
    for (const auto& r : rows)
      for (const auto& e : r) lp.global.push_back(e.index);
  std::sort(lp.global.begin(), lp.global.end());
  lp.global.erase(std::unique(lp.global.begin(), lp.global.end()), lp.global.end());
  auto local = [&](FeatureId g) {
    return static_cast<FeatureId>(std::lower_bound(lp.global.begin(), lp.global.end(), g) - lp.global.begin());
  };
  auto add_rows = [&](std::span<const SparseView> rows, double label) {
    for (const auto& r : rows) {
      for (const auto& e : r) lp.entries.push_back({local(e.index), e.weight});
      lp.row_start.push_back(lp.entries.size());
      lp.y.push_back(label);
    }
  };
  add_rows(positives, 1.0);
  add_rows(negatives, -1.0);
  return lp;
}

}  // namespace detail

// L2-regularized logistic regression with an appended constant feature for
// the bias, solved in the dual by coordinate descent with a Newton step per
// coordinate (the two-variable formulation of Yu, Huang and Lin). The visit
// order is a seeded permutation, so results are a function of the data order.
// When one class is empty the result is a constant classifier saturated
// toward the present class, and a warning is emitted.
inline NodeClassifier train_logistic(std::span<const SparseView> positives, std::span<const SparseView> negatives,
                                     std::size_t dimension, const LogisticParams& params = {},
                                     LogisticStats* stats = nullptr, bool warn_single_class = true) {
  if (params.c <= 0.0) throw InputError("logistic regression needs c > 0");
  NodeClassifier clf;
  clf.weights = SparseVector(dimension);
  if (positives.empty() || negatives.empty()) {
    if (positives.empty() && negatives.empty()) throw InternalError("train_logistic called without data");
    clf.bias = positives.empty() ? -kSaturatedBias : kSaturatedBias;
    if (warn_single_class)
      warn(std::string("node classifier has no ") + (positives.empty() ? "positive" : "negative") +
           " examples; using a constant classifier");
    if (stats) *stats = LogisticStats{0, 0.0, 0.0, true};
    return clf;
  }

  const auto lp = detail::make_local_problem(positives, negatives);
  const std::size_t l = lp.rows();
  const std::size_t d = lp.global.size();
  const double C = params.c;

  std::vector<double> w(d + 1, 0.0);  // w[d] is the bias
  std::vector<double> alpha(2 * l);
  std::vector<double> xsq(l);
  for (std::size_t i = 0; i < l; ++i) {
    alpha[2 * i] = std::min(0.001 * C, 1e-8);
    alpha[2 * i + 1] = C - alpha[2 * i];
    double s = 1.0;
    for (const auto& e : lp.row(i)) s += e.weight * e.weight;
    xsq[i] = s;
    const double coef = lp.y[i] * alpha[2 * i];
    for (const auto& e : lp.row(i)) w[e.index] += coef * e.weight;
    w[d] += coef;
  }

  auto margin = [&](std::size_t i) {
    double s = w[d];
    for (const auto& e : lp.row(i)) s += w[e.index] * e.weight;
    return lp.y[i] * s;
  };
  auto xlogx = [](double v) { return v > 0.0 ? v * std::log(v) : 0.0; };
  auto objectives = [&](double& primal, double& dual) {
    double wsq = 0.0;
    for (double v : w) wsq += v * v;
    double loss = 0.0, ent = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
      loss += logistic_loss(margin(i));
      ent += xlogx(alpha[2 * i]) + xlogx(alpha[2 * i + 1]);
    }
    primal = 0.5 * wsq + C * loss;
    dual = -0.5 * wsq - ent + static_cast<double>(l) * C * std::log(C);
  };

  const std::size_t max_inner = 100;
  double inner_eps = 1e-2;
  const double inner_eps_min = std::min(1e-8, params.tolerance);
  std::vector<std::size_t> order(l);
  for (std::size_t i = 0; i < l; ++i) order[i] = i;
  Rng rng(derive_seed(l, d));

  LogisticStats st;
  double primal = 0.0, dual = 0.0;
  for (std::uint32_t iter = 0; iter < params.max_iters; ++iter) {
    shuffle(order, rng);
    std::size_t newton_iters = 0;
    for (std::size_t i : order) {
      const double yi = lp.y[i];
      const double a = xsq[i];
      const double b = margin(i);
      std::size_t ind1 = 2 * i, ind2 = 2 * i + 1;
      double sign = 1.0;
      if (0.5 * a * (alpha[ind2] - alpha[ind1]) + b < 0) {
        std::swap(ind1, ind2);
        sign = -1.0;
      }
      const double alpha_old = alpha[ind1];
      double z = alpha_old;
      if (C - z < 0.5 * C) z *= 0.1;
      double gp = a * (z - alpha_old) + sign * b + std::log(z / (C - z));
      std::size_t inner = 0;
      while (inner <= max_inner) {
        if (std::abs(gp) < inner_eps) break;
        const double gpp = a + C / (C - z) / z;
        const double tmpz = z - gp / gpp;
        z = tmpz <= 0 ? z * 0.1 : tmpz;
        gp = a * (z - alpha_old) + sign * b + std::log(z / (C - z));
        ++newton_iters;
        ++inner;
      }
      if (inner > 0) {
        alpha[ind1] = z;
        alpha[ind2] = C - z;
        const double coef = sign * (z - alpha_old) * yi;
        for (const auto& e : lp.row(i)) w[e.index] += coef * e.weight;
        w[d] += coef;
      }
    }
    ++st.iterations;
    objectives(primal, dual);
    if (primal - dual <= params.tolerance * primal) {
      st.converged = true;
      break;
    }
    if (newton_iters <= l / 10) inner_eps = std::max(inner_eps_min, 0.1 * inner_eps);
  }
  st.primal = primal;
  st.dual = dual;
  if (stats) *stats = st;

  std::vector<SparseEntry> pairs;
  for (std::size_t j = 0; j < d; ++j)
    if (w[j] != 0.0) pairs.push_back({lp.global[j], w[j]});
  clf.weights = SparseVector::from_pairs(std::move(pairs), dimension);
  clf.bias = w[d];
  return clf;
}

inline NodeClassifier train_logistic(const std::vector<SparseVector>& positives, const std::vector<SparseVector>& negatives,
                                     std::size_t dimension, const LogisticParams& params = {},
                                     LogisticStats* stats = nullptr) {
  std::vector<SparseView> p, n;
  for (const auto& v : positives) p.push_back(v.view());
  for (const auto& v : negatives) n.push_back(v.view());
  return train_logistic(p, n, dimension, params, stats);
}

}  // namespace mtag
