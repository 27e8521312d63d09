#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mtag/error.hpp"
#include "mtag/rng.hpp"
#include "mtag/sparse.hpp"
#include "mtag/text.hpp"

namespace mtag {

using LabelId = std::string;
using MetadataId = std::string;

struct Paper {
  std::string id;
  std::string title;
  std::string abstract;
  std::optional<MetadataId> venue;
  std::vector<MetadataId> authors;     // authorship order
  std::vector<MetadataId> references;
  std::vector<LabelId> labels;         // sorted, unique
  int year = 0;

  // Title and abstract joined by a space: the text the classifiers see.
  std::string text() const { return abstract.empty() ? title : title + " " + abstract; }

  friend bool operator==(const Paper&, const Paper&) = default;
};

// ---------------------------------------------------------------------------
// Metadata kinds

enum class MetadataKind : std::uint8_t { Venue = 0, Author = 1, Reference = 2 };

inline constexpr std::array<MetadataKind, 3> kAllMetadataKinds = {MetadataKind::Venue, MetadataKind::Author,
                                                                  MetadataKind::Reference};

inline const char* to_string(MetadataKind kind) {
  switch (kind) {
    case MetadataKind::Venue: return "venue";
    case MetadataKind::Author: return "author";
    case MetadataKind::Reference: return "reference";
  }
  return "?";
}

inline MetadataKind parse_metadata_kind(const std::string& s) {
  if (s == "venue") return MetadataKind::Venue;
  if (s == "author") return MetadataKind::Author;
  if (s == "reference") return MetadataKind::Reference;
  throw InputError("unknown metadata kind '" + s + "' (expected venue, author or reference)");
}

// Subset of {venue, author, reference}.
class MetadataKinds {
 public:
  MetadataKinds() = default;
  MetadataKinds(std::initializer_list<MetadataKind> kinds) {
    for (auto k : kinds) insert(k);
  }

  void insert(MetadataKind k) { bits_ |= bit(k); }
  bool contains(MetadataKind k) const { return (bits_ & bit(k)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::size_t size() const { return std::size_t(contains(MetadataKind::Venue)) + contains(MetadataKind::Author) + contains(MetadataKind::Reference); }
  std::uint8_t bits() const { return bits_; }
  static MetadataKinds from_bits(std::uint8_t b) {
    if (b > 7) throw InputError("invalid metadata kind mask");
    MetadataKinds k;
    k.bits_ = b;
    return k;
  }

  // "none" for the empty set, otherwise e.g. "venue,author".
  std::string to_string() const {
    std::string s;
    for (auto k : kAllMetadataKinds)
      if (contains(k)) s += (s.empty() ? "" : ",") + std::string(mtag::to_string(k));
    return s.empty() ? "none" : s;
  }

  friend bool operator==(const MetadataKinds&, const MetadataKinds&) = default;

 private:
  static std::uint8_t bit(MetadataKind k) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(k)); }
  std::uint8_t bits_ = 0;
};

// The metadata instances of a paper restricted to `kinds`, deduplicated.
inline std::vector<std::pair<MetadataKind, MetadataId>> metadata_of(const Paper& p, MetadataKinds kinds) {
  std::set<std::pair<MetadataKind, MetadataId>> out;
  if (kinds.contains(MetadataKind::Venue) && p.venue) out.emplace(MetadataKind::Venue, *p.venue);
  if (kinds.contains(MetadataKind::Author))
    for (const auto& a : p.authors) out.emplace(MetadataKind::Author, a);
  if (kinds.contains(MetadataKind::Reference))
    for (const auto& r : p.references) out.emplace(MetadataKind::Reference, r);
  return {out.begin(), out.end()};
}

// ---------------------------------------------------------------------------
// Dataset loading

enum class DatasetSchema {
  Native,  // id, title, abstract, venue, authors, references, labels, year
  Maple,   // paper, text (or title/abstract), venue, author, reference, label, year
};

inline DatasetSchema parse_dataset_schema(const std::string& s) {
  if (s == "native") return DatasetSchema::Native;
  if (s == "maple") return DatasetSchema::Maple;
  throw InputError("unknown dataset schema '" + s + "' (expected native or maple)");
}

namespace detail {

inline std::vector<std::string> unique_in_order(std::vector<std::string> v) {
  std::unordered_set<std::string> seen;
  std::vector<std::string> out;
  out.reserve(v.size());
  for (auto& s : v)
    if (seen.insert(s).second) out.push_back(std::move(s));
  return out;
}

inline std::string json_id(const nlohmann::json& v, const char* field) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw InputError(std::string("field '") + field + "' must be a string");
}

inline std::vector<std::string> json_id_list(const nlohmann::json& obj, const char* field, bool required) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) {
    if (required) throw InputError(std::string("missing required field '") + field + "'");
    return {};
  }
  if (!it->is_array()) throw InputError(std::string("field '") + field + "' must be an array");
  std::vector<std::string> out;
  out.reserve(it->size());
  for (const auto& v : *it) out.push_back(json_id(v, field));
  return out;
}

inline Paper paper_from_json(const nlohmann::json& obj, DatasetSchema schema) {
  if (!obj.is_object()) throw InputError("record is not an object");
  const bool maple = schema == DatasetSchema::Maple;
  const char* k_id = maple ? "paper" : "id";
  const char* k_authors = maple ? "author" : "authors";
  const char* k_refs = maple ? "reference" : "references";
  const char* k_labels = maple ? "label" : "labels";

  Paper p;
  auto id = obj.find(k_id);
  if (id == obj.end() || id->is_null()) throw InputError(std::string("missing required field '") + k_id + "'");
  p.id = json_id(*id, k_id);
  if (p.id.empty()) throw InputError("empty paper id");

  auto str_field = [&](const char* key, bool required) -> std::string {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required) throw InputError(std::string("missing required field '") + key + "'");
      return {};
    }
    if (!it->is_string()) throw InputError(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
  };
  if (maple && !obj.contains("title")) {
    p.title = str_field("text", true);
  } else {
    p.title = str_field("title", true);
    p.abstract = str_field("abstract", false);
  }

  if (auto v = obj.find("venue"); v != obj.end() && !v->is_null()) p.venue = json_id(*v, "venue");
  p.authors = unique_in_order(json_id_list(obj, k_authors, false));
  p.references = unique_in_order(json_id_list(obj, k_refs, false));
  p.labels = json_id_list(obj, k_labels, true);
  std::sort(p.labels.begin(), p.labels.end());
  p.labels.erase(std::unique(p.labels.begin(), p.labels.end()), p.labels.end());

  auto y = obj.find("year");
  if (y == obj.end() || y->is_null()) throw InputError("missing required field 'year'");
  if (!y->is_number_integer()) throw InputError("field 'year' must be an integer");
  const long long year = y->get<long long>();
  if (year < 1800 || year > 2100) throw InputError("year " + std::to_string(year) + " outside [1800, 2100]");
  p.year = static_cast<int>(year);
  return p;
}

}  // namespace detail

// Reads one JSON object per line. Blank lines are skipped. `source` names
// the input in diagnostics.
inline std::vector<Paper> read_papers(std::istream& in, DatasetSchema schema, const std::string& source) {
  std::vector<Paper> papers;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Paper p;
    try {
      p = detail::paper_from_json(nlohmann::json::parse(line), schema);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(source + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    } catch (const InputError& e) {
      throw InputError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
    auto [it, inserted] = seen.emplace(p.id, lineno);
    if (!inserted)
      throw InputError(source + ":" + std::to_string(lineno) + ": duplicate paper id '" + p.id +
                       "' (first seen on line " + std::to_string(it->second) + ")");
    papers.push_back(std::move(p));
  }
  return papers;
}

inline std::vector<Paper> load_papers(const std::string& path, DatasetSchema schema = DatasetSchema::Native) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read dataset file '" + path + "'");
  return read_papers(in, schema, path);
}

// ---------------------------------------------------------------------------
// Taxonomy

struct TaxonomyEntry {
  std::vector<std::string> names;  // canonical name first
  int layer = 1;
  std::vector<LabelId> parents;    // sorted

  friend bool operator==(const TaxonomyEntry&, const TaxonomyEntry&) = default;
};

class Taxonomy {
 public:
  Taxonomy() = default;

  // Validates parent links: unknown parents are recorded as external (with a
  // warning), cycles are rejected.
  explicit Taxonomy(std::map<LabelId, TaxonomyEntry> entries) : entries_(std::move(entries)) {
    for (auto& [id, e] : entries_) {
      if (e.names.empty()) throw InputError("label '" + id + "' has no names");
      if (e.layer < 1) throw InputError("label '" + id + "' has layer " + std::to_string(e.layer) + " (must be >= 1)");
      std::sort(e.parents.begin(), e.parents.end());
      e.parents.erase(std::unique(e.parents.begin(), e.parents.end()), e.parents.end());
      for (const auto& par : e.parents)
        if (!entries_.count(par) && external_.insert(par).second)
          warn("taxonomy parent '" + par + "' of label '" + id + "' is not defined; marked external");
    }
    check_acyclic();
  }

  const std::map<LabelId, TaxonomyEntry>& entries() const noexcept { return entries_; }
  const std::set<LabelId>& external_parents() const noexcept { return external_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(const LabelId& id) const { return entries_.count(id) != 0; }

  const TaxonomyEntry* find(const LabelId& id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::optional<int> layer_of(const LabelId& id) const {
    const auto* e = find(id);
    return e ? std::optional<int>(e->layer) : std::nullopt;
  }

  std::set<int> layers() const {
    std::set<int> out;
    for (const auto& [id, e] : entries_) out.insert(e.layer);
    return out;
  }

 private:
  void check_acyclic() const {
    enum class Mark : std::uint8_t { None, Active, Done };
    std::map<LabelId, Mark> mark;
    for (const auto& [id, e] : entries_) mark[id] = Mark::None;
    for (const auto& [root, _] : entries_) {
      if (mark[root] != Mark::None) continue;
      // Iterative DFS over parent links.
      std::vector<std::pair<const LabelId*, std::size_t>> stack{{&root, 0}};
      mark[root] = Mark::Active;
      while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto& parents = entries_.at(*node).parents;
        if (next == parents.size()) {
          mark[*node] = Mark::Done;
          stack.pop_back();
          continue;
        }
        const LabelId& par = parents[next++];
        auto it = mark.find(par);
        if (it == mark.end()) continue;  // external
        if (it->second == Mark::Active) throw InputError("taxonomy cycle detected through label '" + par + "'");
        if (it->second == Mark::None) {
          it->second = Mark::Active;
          stack.emplace_back(&it->first, 0);
        }
      }
    }
  }

  std::map<LabelId, TaxonomyEntry> entries_;
  std::set<LabelId> external_;
};

inline Taxonomy read_taxonomy(std::istream& in, const std::string& source) {
  std::map<LabelId, TaxonomyEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    try {
      auto obj = nlohmann::json::parse(line);
      if (!obj.is_object()) throw InputError("record is not an object");
      if (!obj.contains("id")) throw InputError("missing required field 'id'");
      LabelId id = detail::json_id(obj["id"], "id");
      TaxonomyEntry e;
      e.names = detail::json_id_list(obj, "names", true);
      if (e.names.empty()) throw InputError("label '" + id + "' has no names");
      if (!obj.contains("layer") || !obj["layer"].is_number_integer())
        throw InputError("missing or non-integer field 'layer'");
      e.layer = obj["layer"].get<int>();
      e.parents = detail::json_id_list(obj, "parents", false);
      if (!entries.emplace(id, std::move(e)).second) throw InputError("duplicate label id '" + id + "'");
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(where + "malformed record: " + ex.what());
    } catch (const InputError& ex) {
      throw InputError(where + ex.what());
    }
  }
  return Taxonomy(std::move(entries));
}

inline Taxonomy load_taxonomy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read taxonomy file '" + path + "'");
  return read_taxonomy(in, path);
}

// Restricts every paper's gold labels to the taxonomy's label space
// (L_p ∩ L_F). Papers left without labels are dropped and counted.
struct RestrictResult {
  std::vector<Paper> papers;
  std::size_t dropped = 0;
};

inline RestrictResult restrict_labels(std::vector<Paper> papers, const Taxonomy& taxonomy) {
  RestrictResult out;
  for (auto& p : papers) {
    std::erase_if(p.labels, [&](const LabelId& l) { return !taxonomy.contains(l); });
    if (p.labels.empty())
      ++out.dropped;
    else
      out.papers.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct DatasetSplit {
  std::vector<Paper> train;
  std::vector<Paper> valid;
  std::vector<Paper> test;
};

// Test = every paper with year >= test_start_year. The rest is shuffled
// with `seed` and round(valid_fraction * n) papers go to valid. Each part
// keeps input order.
inline DatasetSplit split_by_year(const std::vector<Paper>& papers, int test_start_year, double valid_fraction,
                                  std::uint64_t seed) {
  if (papers.empty()) throw InputError("cannot split an empty dataset");
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0))
    throw InputError("valid_fraction must lie in (0, 1)");
  DatasetSplit split;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < papers.size(); ++i) {
    if (papers[i].year >= test_start_year)
      split.test.push_back(papers[i]);
    else
      pool.push_back(i);
  }
  const auto n_valid = static_cast<std::size_t>(std::floor(valid_fraction * static_cast<double>(pool.size()) + 0.5));
  if (pool.size() - n_valid == 0)
    throw InputError("no training papers before " + std::to_string(test_start_year) + " after the validation split");

  Rng rng(derive_seed(seed, 0x5b117));
  std::vector<std::size_t> order = pool;
  shuffle(order, rng);
  std::vector<bool> is_valid(papers.size(), false);
  for (std::size_t i = 0; i < n_valid; ++i) is_valid[order[i]] = true;
  for (std::size_t i : pool) (is_valid[i] ? split.valid : split.train).push_back(papers[i]);
  return split;
}

// ---------------------------------------------------------------------------
// Feature index

struct MetadataKey {
  MetadataKind kind;
  MetadataId id;

  auto operator<=>(const MetadataKey&) const = default;
  bool operator==(const MetadataKey&) const = default;
};

// Vocabulary V_D and metadata instances U_D of a training corpus. Word ids
// come first (sorted by token), metadata ids follow (sorted by kind, then id),
// so a concatenated vector is x_p || x~_p.
class FeatureIndex {
 public:
  FeatureIndex() = default;

  FeatureIndex(std::vector<std::string> words, std::vector<MetadataKey> metadata,
               std::vector<std::uint32_t> document_frequency, std::uint32_t corpus_size, MetadataKinds kinds,
               std::uint32_t min_df)
      : words_(std::move(words)),
        metadata_(std::move(metadata)),
        df_(std::move(document_frequency)),
        corpus_size_(corpus_size),
        kinds_(kinds),
        min_df_(min_df) {
    if (df_.size() != words_.size() + metadata_.size()) throw InputError("feature index: df table size mismatch");
    for (std::size_t i = 0; i < df_.size(); ++i)
      if (df_[i] == 0 || df_[i] > corpus_size_) throw InputError("feature index: document frequency out of range");
    word_ids_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (!word_ids_.emplace(words_[i], static_cast<FeatureId>(i)).second)
        throw InputError("feature index: duplicate word '" + words_[i] + "'");
    for (std::size_t i = 0; i < metadata_.size(); ++i)
      if (!metadata_ids_.emplace(metadata_[i], static_cast<FeatureId>(words_.size() + i)).second)
        throw InputError("feature index: duplicate metadata instance");
  }

  std::size_t num_words() const noexcept { return words_.size(); }
  std::size_t num_metadata() const noexcept { return metadata_.size(); }
  std::size_t dimension() const noexcept { return words_.size() + metadata_.size(); }
  std::uint32_t corpus_size() const noexcept { return corpus_size_; }
  std::uint32_t min_df() const noexcept { return min_df_; }
  MetadataKinds kinds() const noexcept { return kinds_; }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::vector<MetadataKey>& metadata() const noexcept { return metadata_; }
  const std::vector<std::uint32_t>& document_frequencies() const noexcept { return df_; }

  std::uint32_t document_frequency(FeatureId f) const {
    if (f >= df_.size()) throw InputError("feature " + std::to_string(f) + " is not indexed");
    return df_[f];
  }

  std::optional<FeatureId> word_id(const std::string& token) const {
    auto it = word_ids_.find(token);
    return it == word_ids_.end() ? std::nullopt : std::optional<FeatureId>(it->second);
  }

  std::optional<FeatureId> metadata_id(MetadataKind kind, const MetadataId& id) const {
    auto it = metadata_ids_.find(MetadataKey{kind, id});
    return it == metadata_ids_.end() ? std::nullopt : std::optional<FeatureId>(it->second);
  }

  std::size_t count_metadata(MetadataKind kind) const {
    return static_cast<std::size_t>(std::count_if(metadata_.begin(), metadata_.end(),
                                                  [&](const MetadataKey& k) { return k.kind == kind; }));
  }

  friend bool operator==(const FeatureIndex& a, const FeatureIndex& b) {
    return a.words_ == b.words_ && a.metadata_ == b.metadata_ && a.df_ == b.df_ && a.corpus_size_ == b.corpus_size_ &&
           a.kinds_ == b.kinds_ && a.min_df_ == b.min_df_;
  }

 private:
  struct KeyHash {
    std::size_t operator()(const MetadataKey& k) const {
      return std::hash<std::string>{}(k.id) * 31 + static_cast<std::size_t>(k.kind);
    }
  };

  std::vector<std::string> words_;
  std::vector<MetadataKey> metadata_;
  std::vector<std::uint32_t> df_;
  std::uint32_t corpus_size_ = 0;
  MetadataKinds kinds_;
  std::uint32_t min_df_ = 1;
  std::unordered_map<std::string, FeatureId> word_ids_;
  std::unordered_map<MetadataKey, FeatureId, KeyHash> metadata_ids_;
};

// Indexes every token and metadata instance (of the requested kinds) that
// occurs in at least `min_df` training papers.
inline FeatureIndex build_feature_index(const std::vector<Paper>& train, std::uint32_t min_df, MetadataKinds kinds) {
  if (train.empty()) throw InputError("cannot build a feature index from an empty training set");
  if (min_df < 1) throw InputError("min_df must be >= 1");

  std::map<std::string, std::uint32_t> word_df;
  std::map<MetadataKey, std::uint32_t> meta_df;
  for (const auto& p : train) {
    auto tokens = tokenize(p.text());
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& t : tokens) ++word_df[std::move(t)];
    for (auto& [kind, id] : metadata_of(p, kinds)) ++meta_df[MetadataKey{kind, std::move(id)}];
  }

  std::vector<std::string> words;
  std::vector<MetadataKey> metadata;
  std::vector<std::uint32_t> df;
  for (auto& [w, n] : word_df)
    if (n >= min_df) {
      words.push_back(w);
      df.push_back(n);
    }
  if (words.empty())
    throw InputError("empty vocabulary: no word occurs in at least " + std::to_string(min_df) + " training papers");
  for (auto& [k, n] : meta_df)
    if (n >= min_df) {
      metadata.push_back(k);
      df.push_back(n);
    }
  return FeatureIndex(std::move(words), std::move(metadata), std::move(df), static_cast<std::uint32_t>(train.size()),
                      kinds, min_df);
}

}  // namespace mtag
