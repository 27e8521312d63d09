#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "mtag/corpus.hpp"
#include "mtag/sparse.hpp"
#include "mtag/text.hpp"

namespace mtag {

// idf(f) = ln(|D| / df(f)); zero for features present in every training paper.
inline double idf(FeatureId feature, const FeatureIndex& index) {
  const double df = index.document_frequency(feature);
  return std::log(static_cast<double>(index.corpus_size()) / df);
}

// Raw-count tf times idf over the vocabulary block, indices in [0, |V_D|).
inline SparseVector vectorize_text(const Paper& paper, const FeatureIndex& index) {
  std::map<FeatureId, std::uint32_t> counts;
  for (const auto& tok : tokenize(paper.text()))
    if (auto id = index.word_id(tok)) ++counts[*id];
  SparseVector v(index.num_words());
  for (const auto& [id, tf] : counts) v.push_back(id, static_cast<double>(tf) * idf(id, index));
  return v;
}

// Indicator tf times idf over the metadata block, indices in [0, |U_D|).
inline SparseVector vectorize_metadata(const Paper& paper, const FeatureIndex& index) {
  std::vector<FeatureId> ids;
  for (const auto& [kind, id] : metadata_of(paper, index.kinds()))
    if (auto f = index.metadata_id(kind, id)) ids.push_back(*f);
  std::sort(ids.begin(), ids.end());
  const auto offset = static_cast<FeatureId>(index.num_words());
  SparseVector v(index.num_metadata());
  for (FeatureId f : ids) v.push_back(f - offset, idf(f, index));
  return v;
}

struct FeatureOptions {
  bool normalize = true;         // unit Euclidean norm after concatenation
  double text_weight = 1.0;      // uniform multiplier on the word block
  double metadata_weight = 1.0;  // uniform multiplier on the metadata block

  friend bool operator==(const FeatureOptions&, const FeatureOptions&) = default;
};

// x_p || x~_p over [0, |V_D| + |U_D|).
inline SparseVector featurize(const Paper& paper, const FeatureIndex& index, const FeatureOptions& opts = {}) {
  SparseVector out(index.dimension());
  const auto text = vectorize_text(paper, index);
  for (const auto& e : text.entries()) out.push_back(e.index, opts.text_weight * e.weight);
  const auto offset = static_cast<FeatureId>(index.num_words());
  const auto meta = vectorize_metadata(paper, index);
  for (const auto& e : meta.entries())
    out.push_back(offset + e.index, opts.metadata_weight * e.weight);
  if (opts.normalize) out.normalize();
  return out;
}

inline SparseVector featurize(const Paper& paper, const FeatureIndex& index, bool normalize) {
  FeatureOptions opts;
  opts.normalize = normalize;
  return featurize(paper, index, opts);
}

// Debug line: `paper_id<TAB>index:weight,index:weight,...`, 6 decimals.
inline void write_vector_line(std::ostream& out, const std::string& paper_id, const SparseVector& v) {
  out << paper_id << '\t';
  char buf[64];
  bool first = true;
  for (const auto& e : v.entries()) {
    std::snprintf(buf, sizeof buf, "%s%u:%.6f", first ? "" : ",", e.index, e.weight);
    out << buf;
    first = false;
  }
  out << '\n';
}

}  // namespace mtag
