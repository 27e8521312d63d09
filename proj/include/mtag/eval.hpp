#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "mtag/corpus.hpp"
#include "mtag/error.hpp"
#include "mtag/io.hpp"
#include "mtag/model.hpp"

namespace mtag {

// Gold label sets are sorted, duplicate-free vectors (as in Paper::labels).
using GoldSet = std::vector<LabelId>;

namespace detail {
inline bool is_gold(const GoldSet& gold, const LabelId& l) { return std::binary_search(gold.begin(), gold.end(), l); }

inline void check_metric_args(const GoldSet& gold, std::size_t k) {
  if (k < 1) throw InputError("k must be >= 1");
  if (gold.empty()) throw InputError("metric undefined for a paper without gold labels");
}
}  // namespace detail

// (1/k) * #gold labels among the first k ranks; missing ranks are misses.
inline double precision_at_k(const Prediction& pred, const GoldSet& gold, std::size_t k) {
  detail::check_metric_args(gold, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, pred.ranked.size()); ++i) hits += detail::is_gold(gold, pred.ranked[i].label);
  return static_cast<double>(hits) / static_cast<double>(k);
}

// DCG@k / ideal DCG over min(k, |gold|) positions, log base 2.
inline double ndcg_at_k(const Prediction& pred, const GoldSet& gold, std::size_t k) {
  detail::check_metric_args(gold, k);
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, pred.ranked.size()); ++i)
    if (detail::is_gold(gold, pred.ranked[i].label)) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  double ideal = 0.0;
  for (std::size_t i = 0; i < std::min(k, gold.size()); ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / ideal;
}

// P@k after restricting both the ranking and the gold set to one taxonomy
// layer. nullopt when the paper has no gold label at that layer.
inline std::optional<double> layer_precision_at_k(const Prediction& pred, const GoldSet& gold, const Taxonomy& taxonomy,
                                                  int layer, std::size_t k) {
  if (k < 1) throw InputError("k must be >= 1");
  auto layer_of = [&](const LabelId& l) {
    auto v = taxonomy.layer_of(l);
    if (!v) throw InputError("label '" + l + "' has no layer in the taxonomy");
    return *v;
  };
  GoldSet layer_gold;
  for (const auto& g : gold)
    if (layer_of(g) == layer) layer_gold.push_back(g);
  if (layer_gold.empty()) return std::nullopt;
  std::size_t seen = 0, hits = 0;
  for (const auto& r : pred.ranked) {
    if (seen == k) break;
    if (layer_of(r.label) != layer) continue;
    ++seen;
    hits += detail::is_gold(layer_gold, r.label);
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

// Arithmetic mean, summed in input order.
inline double aggregate(const std::vector<double>& values) {
  if (values.empty()) throw InputError("cannot average an empty list");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

// Unweighted mean of per-dataset scores.
inline double macro_average(const std::vector<double>& per_dataset) { return aggregate(per_dataset); }

enum class DeltaMode { Absolute, Relative };

inline double delta(double with_meta, double text_only, DeltaMode mode) {
  if (mode == DeltaMode::Absolute) return with_meta - text_only;
  if (text_only == 0.0) throw InputError("relative change undefined for a zero baseline");
  return (with_meta - text_only) / text_only;
}

// ---------------------------------------------------------------------------
// Significance

enum class Direction { Better, Worse, Indistinguishable };

inline const char* to_string(Direction d) {
  switch (d) {
    case Direction::Better: return "better";
    case Direction::Worse: return "worse";
    case Direction::Indistinguishable: return "indistinguishable";
  }
  return "?";
}

struct SignificanceResult {
  std::string metric;
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;
  Direction direction = Direction::Indistinguishable;
  double threshold = 0.05;
};

// Welch's unequal-variance t-test, two-tailed. Direction describes sample_b
// relative to sample_a ("better" = mean(b) > mean(a) with p < threshold).
inline SignificanceResult two_tailed_t_test(const std::vector<double>& sample_a, const std::vector<double>& sample_b,
                                            double threshold = 0.05, std::string metric = {}) {
  if (sample_a.size() < 2 || sample_b.size() < 2) throw InputError("t-test needs at least two values per sample");
  auto moments = [](const std::vector<double>& s, double& mean, double& var) {
    mean = aggregate(s);
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    var = ss / static_cast<double>(s.size() - 1);
  };
  double ma, va, mb, vb;
  moments(sample_a, ma, va);
  moments(sample_b, mb, vb);
  const double na = static_cast<double>(sample_a.size()), nb = static_cast<double>(sample_b.size());
  const double sa = va / na, sb = vb / nb;
  const double diff = mb - ma;

  SignificanceResult r;
  r.metric = std::move(metric);
  r.threshold = threshold;
  if (sa + sb == 0.0) {
    r.degrees_of_freedom = na + nb - 2.0;
    if (diff == 0.0) {
      r.t_statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_statistic = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
    }
  } else {
    r.t_statistic = diff / std::sqrt(sa + sb);
    r.degrees_of_freedom = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    boost::math::students_t dist(r.degrees_of_freedom);
    r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_statistic))));
  }
  if (r.p_value < threshold && diff > 0)
    r.direction = Direction::Better;
  else if (r.p_value < threshold && diff < 0)
    r.direction = Direction::Worse;
  return r;
}

// ---------------------------------------------------------------------------
// Reports

struct RunRecord {
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
};

struct EvalReport {
  std::map<std::string, double> per_metric;  // mean over runs
  std::vector<RunRecord> runs;
  std::size_t n_test_papers = 0;
  std::size_t n_excluded_papers = 0;  // test papers without gold labels

  // Values of one metric across runs, in run order.
  std::vector<double> run_values(const std::string& metric) const {
    std::vector<double> v;
    for (const auto& r : runs)
      if (auto it = r.metrics.find(metric); it != r.metrics.end()) v.push_back(it->second);
    return v;
  }
};

inline std::string precision_name(std::size_t k) { return "P@" + std::to_string(k); }
inline std::string ndcg_name(std::size_t k) { return "N@" + std::to_string(k); }
inline std::string layer_precision_name(int layer, std::size_t k) {
  return "L" + std::to_string(layer) + "P@" + std::to_string(k);
}

struct MetricSpec {
  std::vector<std::size_t> ks{1, 3, 5};
  std::vector<std::pair<int, std::size_t>> layer_ks{{1, 1}, {2, 1}, {2, 3}, {3, 1}, {3, 3}};
};

struct RunMetrics {
  std::map<std::string, double> metrics;
  std::size_t n_papers = 0;
  std::size_t n_excluded = 0;
};

// Means over papers with nonempty gold sets; layer metrics average over the
// papers that have a gold label at that layer and are omitted when none do.
// `predictions[i]` belongs to `papers[i]`.
inline RunMetrics evaluate_predictions(const std::vector<Prediction>& predictions, const std::vector<Paper>& papers,
                                       const MetricSpec& spec, const Taxonomy* taxonomy = nullptr) {
  if (predictions.size() != papers.size()) throw InternalError("prediction/paper count mismatch");
  RunMetrics out;
  std::map<std::string, std::vector<double>> values;
  for (std::size_t i = 0; i < papers.size(); ++i) {
    const auto& gold = papers[i].labels;
    if (gold.empty()) {
      ++out.n_excluded;
      continue;
    }
    ++out.n_papers;
    for (auto k : spec.ks) {
      values[precision_name(k)].push_back(precision_at_k(predictions[i], gold, k));
      values[ndcg_name(k)].push_back(ndcg_at_k(predictions[i], gold, k));
    }
    if (taxonomy)
      for (auto [layer, k] : spec.layer_ks)
        if (auto v = layer_precision_at_k(predictions[i], gold, *taxonomy, layer, k))
          values[layer_precision_name(layer, k)].push_back(*v);
  }
  if (out.n_papers == 0) throw InputError("no test papers with gold labels to evaluate");
  for (const auto& [name, v] : values) out.metrics[name] = aggregate(v);
  return out;
}

// Recomputes per_metric as the mean over runs.
inline void finalize_report(EvalReport& report) {
  report.per_metric.clear();
  std::map<std::string, std::vector<double>> by_metric;
  for (const auto& r : report.runs)
    for (const auto& [k, v] : r.metrics) by_metric[k].push_back(v);
  for (const auto& [k, v] : by_metric) report.per_metric[k] = aggregate(v);
}

namespace detail {
inline std::string fmt_value(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.8f", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(where + ": not a number: '" + s + "'");
  }
}
}  // namespace detail

// Key-value text: `metric<TAB>value` lines (means), count lines, then a
// `[runs]` block with a header row `run<TAB>seed<TAB>metric...` and one row
// per run. Runs missing a metric print `-`.
inline std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  for (const auto& [k, v] : r.per_metric) out << k << '\t' << detail::fmt_value(v) << '\n';
  out << "n_test_papers\t" << r.n_test_papers << '\n';
  out << "n_excluded_papers\t" << r.n_excluded_papers << '\n';
  out << "repetitions\t" << r.runs.size() << '\n';
  out << "[runs]\n";
  std::vector<std::string> names;
  for (const auto& [k, _] : r.per_metric) names.push_back(k);
  out << "run\tseed";
  for (const auto& n : names) out << '\t' << n;
  out << '\n';
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    out << i << '\t' << r.runs[i].seed;
    for (const auto& n : names) {
      auto it = r.runs[i].metrics.find(n);
      out << '\t' << (it == r.runs[i].metrics.end() ? std::string("-") : detail::fmt_value(it->second));
    }
    out << '\n';
  }
  return out.str();
}

inline void write_report(const EvalReport& r, const std::string& path) { write_file_atomic(path, format_report(r)); }

// Parses format_report output. A report without a [runs] block is accepted
// and treated as a single run carrying the listed means (hand-written
// fixtures, e.g. copied table values).
inline EvalReport parse_report(const std::string& text, const std::string& source) {
  EvalReport r;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool in_runs = false;
  std::vector<std::string> header;
  bool have_runs_block = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.empty() || line[0] == '#') continue;
    if (line == "[runs]") {
      in_runs = have_runs_block = true;
      continue;
    }
    auto cols = detail::split(line, '\t');
    if (!in_runs) {
      if (cols.size() != 2) throw InputError(where + ": expected 'key<TAB>value'");
      if (cols[0] == "n_test_papers")
        r.n_test_papers = static_cast<std::size_t>(detail::parse_double(cols[1], where));
      else if (cols[0] == "n_excluded_papers")
        r.n_excluded_papers = static_cast<std::size_t>(detail::parse_double(cols[1], where));
      else if (cols[0] == "repetitions")
        continue;
      else
        r.per_metric[cols[0]] = detail::parse_double(cols[1], where);
      continue;
    }
    if (header.empty()) {
      if (cols.size() < 2 || cols[0] != "run" || cols[1] != "seed") throw InputError(where + ": bad [runs] header");
      header = cols;
      continue;
    }
    if (cols.size() != header.size()) throw InputError(where + ": run row has wrong column count");
    RunRecord rec;
    rec.seed = static_cast<std::uint64_t>(std::stoull(cols[1]));
    for (std::size_t c = 2; c < cols.size(); ++c)
      if (cols[c] != "-") rec.metrics[header[c]] = detail::parse_double(cols[c], where);
    r.runs.push_back(std::move(rec));
  }
  if (!have_runs_block) r.runs.push_back(RunRecord{0, r.per_metric});
  for (const auto& [k, v] : r.per_metric)
    if (!(v >= 0.0 && v <= 1.0)) throw InputError(source + ": metric " + k + " outside [0, 1]");
  return r;
}

inline EvalReport load_report(const std::string& path) { return parse_report(read_file(path), path); }

// One significance result per metric shared by both reports; b is compared
// against a.
inline std::vector<SignificanceResult> compare_reports(const EvalReport& a, const EvalReport& b, double threshold) {
  std::vector<SignificanceResult> out;
  for (const auto& [metric, _] : a.per_metric) {
    if (!b.per_metric.count(metric)) continue;
    auto va = a.run_values(metric), vb = b.run_values(metric);
    if (va.size() < 2 || vb.size() < 2)
      throw InputError("metric " + metric + " needs at least two runs in each report for a t-test");
    out.push_back(two_tailed_t_test(va, vb, threshold, metric));
  }
  if (out.empty()) throw InputError("the two reports share no metrics");
  return out;
}

// `metric,p_value,direction` with a header row.
inline std::string format_significance(const std::vector<SignificanceResult>& results) {
  std::ostringstream out;
  out << "metric,p_value,direction\n";
  char buf[48];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%.8g", r.p_value);
    out << r.metric << ',' << buf << ',' << to_string(r.direction) << '\n';
  }
  return out.str();
}

}  // namespace mtag
