#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mtag/corpus.hpp"
#include "mtag/error.hpp"
#include "mtag/eval.hpp"
#include "mtag/features.hpp"
#include "mtag/label_tree.hpp"
#include "mtag/model.hpp"

namespace mtag {

// Everything a run depends on. Defaults: 3 trees, at most 100 labels per
// leaf, beam width 10, min_df 5, 5 repetitions, k = 1,3,5.
struct RunConfig {
  std::string dataset;
  std::string taxonomy;
  DatasetSchema schema = DatasetSchema::Native;
  MetadataKinds kinds;
  int test_start_year = 2016;
  double valid_fraction = 0.2;
  std::uint32_t min_df = 5;
  FeatureOptions features;
  TreeConfig tree;
  TrainParams train;
  std::size_t beam = 10;
  std::size_t top_k = 10;
  bool rerank = false;
  std::uint32_t repetitions = 5;
  std::vector<std::size_t> ks{1, 3, 5};
  std::uint64_t seed = 0;
  double threshold = 0.05;

  void validate() const {
    if (repetitions < 1) throw InputError("repetitions must be >= 1");
    if (ks.empty()) throw InputError("k list is empty");
    std::set<std::size_t> uniq(ks.begin(), ks.end());
    if (uniq.size() != ks.size() || *uniq.begin() == 0) throw InputError("k values must be positive and distinct");
    if (beam < 1) throw InputError("beam must be >= 1");
    if (top_k < 1) throw InputError("top_k must be >= 1");
    if (min_df < 1) throw InputError("min_df must be >= 1");
    if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw InputError("valid_fraction must lie in (0, 1)");
    if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("threshold must lie in (0, 1)");
    if (train.logistic.c <= 0.0) throw InputError("c must be > 0");
    if (train.truncation < 0.0) throw InputError("truncation must be >= 0");
    if (train.threads < 1) throw InputError("threads must be >= 1");
    tree.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    auto x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw InputError("option '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw InputError("option '" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InputError("option '" + key + "' expects true or false, got '" + v + "'");
}

inline std::string fmt_real(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

inline MetadataKinds parse_metadata_list(const std::string& v) {
  MetadataKinds kinds;
  if (v.empty() || v == "none") return kinds;
  for (const auto& part : detail::split(v, ',')) kinds.insert(parse_metadata_kind(detail::trim(part)));
  return kinds;
}

inline std::vector<std::size_t> parse_k_list(const std::string& v) {
  std::vector<std::size_t> ks;
  for (const auto& part : detail::split(v, ',')) ks.push_back(detail::parse_uint("k", detail::trim(part)));
  return ks;
}

// Applies one `key = value` setting. Unknown keys are input errors.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  auto u32 = [&] {
    const auto v = parse_uint(key, value);
    if (v > UINT32_MAX) throw InputError("option '" + key + "' out of range");
    return static_cast<std::uint32_t>(v);
  };
  if (key == "dataset") c.dataset = value;
  else if (key == "taxonomy") c.taxonomy = value;
  else if (key == "schema") c.schema = parse_dataset_schema(value);
  else if (key == "metadata") c.kinds = parse_metadata_list(value);
  else if (key == "test_start_year") c.test_start_year = static_cast<int>(parse_uint(key, value));
  else if (key == "valid_fraction") c.valid_fraction = parse_real(key, value);
  else if (key == "min_df") c.min_df = u32();
  else if (key == "normalize") c.features.normalize = parse_bool(key, value);
  else if (key == "text_weight") c.features.text_weight = parse_real(key, value);
  else if (key == "metadata_weight") c.features.metadata_weight = parse_real(key, value);
  else if (key == "trees") c.tree.num_trees = u32();
  else if (key == "max_leaf") c.tree.max_leaf_labels = u32();
  else if (key == "kmeans_iters") c.tree.max_kmeans_iters = u32();
  else if (key == "kmeans_tolerance") c.tree.kmeans_tolerance = parse_real(key, value);
  else if (key == "c") c.train.logistic.c = parse_real(key, value);
  else if (key == "solver_tolerance") c.train.logistic.tolerance = parse_real(key, value);
  else if (key == "solver_max_iters") c.train.logistic.max_iters = u32();
  else if (key == "truncation") c.train.truncation = parse_real(key, value);
  else if (key == "threads") c.train.threads = u32();
  else if (key == "beam") c.beam = parse_uint(key, value);
  else if (key == "top_k") c.top_k = parse_uint(key, value);
  else if (key == "rerank") c.rerank = parse_bool(key, value);
  else if (key == "repetitions") c.repetitions = u32();
  else if (key == "k") c.ks = parse_k_list(value);
  else if (key == "seed") c.seed = parse_uint(key, value);
  else if (key == "threshold") c.threshold = parse_real(key, value);
  else throw InputError("unknown configuration key '" + key + "'");
}

// Line-oriented `key = value`; '#' starts a comment.
inline void apply_config_text(RunConfig& c, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const InputError& e) {
      throw InputError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& c, const std::string& path) { apply_config_text(c, read_file(path), path); }

// Every resolved setting, in a form apply_config_text accepts.
inline std::string format_config(const RunConfig& c) {
  using detail::fmt_real;
  std::ostringstream o;
  o << "dataset = " << c.dataset << '\n';
  o << "taxonomy = " << c.taxonomy << '\n';
  o << "schema = " << (c.schema == DatasetSchema::Native ? "native" : "maple") << '\n';
  o << "metadata = " << c.kinds.to_string() << '\n';
  o << "test_start_year = " << c.test_start_year << '\n';
  o << "valid_fraction = " << fmt_real(c.valid_fraction) << '\n';
  o << "min_df = " << c.min_df << '\n';
  o << "normalize = " << (c.features.normalize ? "true" : "false") << '\n';
  o << "text_weight = " << fmt_real(c.features.text_weight) << '\n';
  o << "metadata_weight = " << fmt_real(c.features.metadata_weight) << '\n';
  o << "trees = " << c.tree.num_trees << '\n';
  o << "max_leaf = " << c.tree.max_leaf_labels << '\n';
  o << "kmeans_iters = " << c.tree.max_kmeans_iters << '\n';
  o << "kmeans_tolerance = " << fmt_real(c.tree.kmeans_tolerance) << '\n';
  o << "c = " << fmt_real(c.train.logistic.c) << '\n';
  o << "solver_tolerance = " << fmt_real(c.train.logistic.tolerance) << '\n';
  o << "solver_max_iters = " << c.train.logistic.max_iters << '\n';
  o << "truncation = " << fmt_real(c.train.truncation) << '\n';
  o << "threads = " << c.train.threads << '\n';
  o << "beam = " << c.beam << '\n';
  o << "top_k = " << c.top_k << '\n';
  o << "rerank = " << (c.rerank ? "true" : "false") << '\n';
  o << "repetitions = " << c.repetitions << '\n';
  o << "k = ";
  for (std::size_t i = 0; i < c.ks.size(); ++i) o << (i ? "," : "") << c.ks[i];
  o << '\n';
  o << "seed = " << c.seed << '\n';
  o << "threshold = " << fmt_real(c.threshold) << '\n';
  return o.str();
}

}  // namespace mtag
