#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "mtag/error.hpp"
#include "mtag/io.hpp"
#include "mtag/model.hpp"

// Model file layout (little-endian throughout):
//
//   "MAPLTAG1"                  8-byte magic
//   u32 version                 kModelFormatVersion
//   section*                    u32 tag, u64 byte length, payload
//     'CONF'  feature options, tree config, training hyperparameters
//     'FIDX'  feature index (words, metadata keys, document frequencies)
//     'LABL'  sorted label universe
//   u64 tree count
//   section*
//     'TREE'  one per tree: topology, routing and leaf classifiers
//   u32 crc32                   over every preceding byte
//
// Strings are u32 length + bytes; sparse vectors are u32 dimension, u64
// count, then (u32 index, f64 weight) pairs.

namespace mtag {

inline constexpr char kModelMagic[8] = {'M', 'A', 'P', 'L', 'T', 'A', 'G', '1'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

constexpr std::uint32_t section_tag(const char (&s)[5]) {
  return std::uint32_t(std::uint8_t(s[0])) | std::uint32_t(std::uint8_t(s[1])) << 8 |
         std::uint32_t(std::uint8_t(s[2])) << 16 | std::uint32_t(std::uint8_t(s[3])) << 24;
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void bytes(std::string_view s) { buf_.append(s); }
  void sparse(const SparseVector& v) {
    u32(static_cast<std::uint32_t>(v.dimension()));
    u64(v.nnz());
    for (const auto& e : v.entries()) {
      u32(e.index);
      f64(e.weight);
    }
  }
  void section(std::uint32_t tag, const ByteWriter& body) {
    u32(tag);
    u64(body.buf_.size());
    buf_.append(body.buf_);
  }
  const std::string& data() const { return buf_; }
  std::string& data() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(s[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(s[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    return std::string(take(n));
  }
  // Element count about to be read; rejects counts the remaining bytes cannot hold.
  std::size_t count(std::size_t min_element_bytes) {
    const auto n = u64();
    if (min_element_bytes > 0 && n > remaining() / min_element_bytes) malformed("element count exceeds file size");
    return static_cast<std::size_t>(n);
  }
  SparseVector sparse() {
    const std::size_t dim = u32();
    const std::size_t n = count(12);
    SparseVector v(dim);
    for (std::size_t i = 0; i < n; ++i) {
      const FeatureId idx = u32();
      const double w = f64();
      if (idx >= dim || (v.nnz() > 0 && v.entries().back().index >= idx) || w == 0.0)
        malformed("invalid sparse vector entry");
      v.push_back(idx, w);
    }
    return v;
  }
  ByteReader section(std::uint32_t expected_tag) {
    const auto tag = u32();
    if (tag != expected_tag) malformed("unexpected section tag");
    const auto len = u64();
    if (len > remaining()) malformed("section overruns file");
    return ByteReader(take(static_cast<std::size_t>(len)));
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

  [[noreturn]] static void malformed(const std::string& why) {
    throw ModelFormatError(ModelFormatError::Kind::Malformed, "malformed model file: " + why);
  }

 private:
  std::string_view take(std::size_t n) {
    if (n > remaining()) malformed("unexpected end of data");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::string_view data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - off, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data.data() + off), chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline void write_classifier(ByteWriter& w, const NodeClassifier& c) {
  w.f64(c.bias);
  w.sparse(c.weights);
}

inline NodeClassifier read_classifier(ByteReader& r) {
  NodeClassifier c;
  c.bias = r.f64();
  c.weights = r.sparse();
  return c;
}

inline ByteWriter encode_feature_index(const FeatureIndex& index) {
  ByteWriter w;
  w.u32(index.corpus_size());
  w.u32(index.min_df());
  w.u8(index.kinds().bits());
  w.u64(index.words().size());
  for (const auto& s : index.words()) w.str(s);
  w.u64(index.metadata().size());
  for (const auto& k : index.metadata()) {
    w.u8(static_cast<std::uint8_t>(k.kind));
    w.str(k.id);
  }
  w.u64(index.document_frequencies().size());
  for (auto df : index.document_frequencies()) w.u32(df);
  return w;
}

inline FeatureIndex decode_feature_index(ByteReader r) {
  const auto corpus = r.u32();
  const auto min_df = r.u32();
  const auto kinds = MetadataKinds::from_bits(r.u8());
  std::vector<std::string> words(r.count(4));
  for (auto& s : words) s = r.str();
  std::vector<MetadataKey> meta(r.count(5));
  for (auto& k : meta) {
    const auto kind = r.u8();
    if (kind > 2) ByteReader::malformed("invalid metadata kind");
    k.kind = static_cast<MetadataKind>(kind);
    k.id = r.str();
  }
  std::vector<std::uint32_t> df(r.count(4));
  for (auto& d : df) d = r.u32();
  try {
    return FeatureIndex(std::move(words), std::move(meta), std::move(df), corpus, kinds, min_df);
  } catch (const InputError& e) {
    ByteReader::malformed(e.what());
  }
}

}  // namespace detail

// CRC-32 of the encoded feature index; identifies the feature space a model expects.
inline std::uint32_t feature_index_checksum(const FeatureIndex& index) {
  return detail::crc32_of(detail::encode_feature_index(index).data());
}

inline std::string serialize_model(const Model& m) {
  using detail::ByteWriter;
  using detail::section_tag;
  ByteWriter out;
  out.bytes(std::string_view(kModelMagic, 8));
  out.u32(kModelFormatVersion);

  ByteWriter conf;
  conf.u8(m.features.normalize ? 1 : 0);
  conf.f64(m.features.text_weight);
  conf.f64(m.features.metadata_weight);
  conf.u32(m.tree_config.num_trees);
  conf.u32(m.tree_config.max_leaf_labels);
  conf.u64(m.tree_config.seed);
  conf.u32(m.tree_config.max_kmeans_iters);
  conf.f64(m.tree_config.kmeans_tolerance);
  conf.f64(m.train.logistic.c);
  conf.f64(m.train.logistic.tolerance);
  conf.u32(m.train.logistic.max_iters);
  conf.f64(m.train.truncation);
  out.section(section_tag("CONF"), conf);

  out.section(section_tag("FIDX"), detail::encode_feature_index(m.index));

  ByteWriter labels;
  labels.u64(m.labels.size());
  for (const auto& l : m.labels) labels.str(l);
  out.section(section_tag("LABL"), labels);

  out.u64(m.trees.size());
  for (const auto& tm : m.trees) {
    ByteWriter t;
    t.u64(tm.tree.nodes.size());
    for (NodeId id = 0; id < tm.tree.nodes.size(); ++id) {
      const auto& n = tm.tree.nodes[id];
      t.u32(n.left);
      t.u32(n.right);
      t.u32(n.depth);
      t.u64(n.labels.size());
      for (auto l : n.labels) t.u32(l);
      detail::write_classifier(t, tm.routing[id]);
      t.u64(tm.leaf[id].size());
      for (const auto& c : tm.leaf[id]) detail::write_classifier(t, c);
    }
    out.section(section_tag("TREE"), t);
  }
  out.u32(detail::crc32_of(out.data()));
  return std::move(out.data());
}

inline Model deserialize_model(std::string_view bytes) {
  using detail::ByteReader;
  using detail::section_tag;
  using Kind = ModelFormatError::Kind;
  const std::string expected(kModelMagic, 8);
  const std::size_t prefix = std::min<std::size_t>(bytes.size(), 8);
  if (bytes.substr(0, prefix) != std::string_view(expected).substr(0, prefix) || bytes.empty())
    throw ModelFormatError(Kind::BadMagic, "not a model file: expected magic '" + expected + "'");
  if (bytes.size() < 16)
    throw ModelFormatError(Kind::BadChecksum, "model file truncated (" + std::to_string(bytes.size()) + " bytes)");
  const auto body = bytes.substr(0, bytes.size() - 4);
  ByteReader tail(bytes.substr(bytes.size() - 4));
  const auto stored = tail.u32();
  const auto actual = detail::crc32_of(body);
  if (stored != actual) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "model checksum mismatch (stored %08x, computed %08x); file truncated or corrupt",
                  stored, actual);
    throw ModelFormatError(Kind::BadChecksum, buf);
  }

  ByteReader r(body.substr(8));
  const auto version = r.u32();
  if (version != kModelFormatVersion)
    throw ModelFormatError(Kind::BadVersion, "unsupported model format version " + std::to_string(version) +
                                                 " (expected " + std::to_string(kModelFormatVersion) + ")");
  Model m;
  {
    auto c = r.section(section_tag("CONF"));
    m.features.normalize = c.u8() != 0;
    m.features.text_weight = c.f64();
    m.features.metadata_weight = c.f64();
    m.tree_config.num_trees = c.u32();
    m.tree_config.max_leaf_labels = c.u32();
    m.tree_config.seed = c.u64();
    m.tree_config.max_kmeans_iters = c.u32();
    m.tree_config.kmeans_tolerance = c.f64();
    m.train.logistic.c = c.f64();
    m.train.logistic.tolerance = c.f64();
    m.train.logistic.max_iters = c.u32();
    m.train.truncation = c.f64();
  }
  m.index = detail::decode_feature_index(r.section(section_tag("FIDX")));
  {
    auto l = r.section(section_tag("LABL"));
    m.labels.resize(l.count(4));
    for (auto& s : m.labels) s = l.str();
    if (!std::is_sorted(m.labels.begin(), m.labels.end())) ByteReader::malformed("label universe not sorted");
  }
  const std::size_t n_trees = r.count(12);
  const std::size_t dim = m.index.dimension();
  for (std::size_t t = 0; t < n_trees; ++t) {
    auto s = r.section(section_tag("TREE"));
    TreeModel tm;
    const std::size_t n_nodes = s.count(24);
    tm.tree.nodes.resize(n_nodes);
    tm.routing.resize(n_nodes);
    tm.leaf.resize(n_nodes);
    for (std::size_t id = 0; id < n_nodes; ++id) {
      auto& n = tm.tree.nodes[id];
      n.left = s.u32();
      n.right = s.u32();
      n.depth = s.u32();
      if ((n.left == kNoNode) != (n.right == kNoNode) ||
          (n.left != kNoNode && (n.left >= n_nodes || n.right >= n_nodes || n.left <= id || n.right <= id)))
        ByteReader::malformed("invalid tree topology");
      n.labels.resize(s.count(4));
      for (auto& l : n.labels) {
        l = s.u32();
        if (l >= m.labels.size()) ByteReader::malformed("label index out of range");
      }
      tm.routing[id] = detail::read_classifier(s);
      tm.leaf[id].resize(s.count(12));
      for (auto& c : tm.leaf[id]) c = detail::read_classifier(s);
      if (tm.leaf[id].size() != (n.is_leaf() ? n.labels.size() : 0)) ByteReader::malformed("leaf classifier count");
    }
    for (std::size_t id = 0; id < n_nodes; ++id) {
      if (tm.routing[id].weights.dimension() != dim) ByteReader::malformed("classifier dimension mismatch");
      for (const auto& c : tm.leaf[id])
        if (c.weights.dimension() != dim) ByteReader::malformed("classifier dimension mismatch");
    }
    if (!s.done()) ByteReader::malformed("trailing bytes in tree section");
    m.trees.push_back(std::move(tm));
  }
  if (!r.done()) ByteReader::malformed("trailing bytes after trees");
  if (m.trees.size() != m.tree_config.num_trees) ByteReader::malformed("tree count mismatch");
  return m;
}

inline void save_model(const Model& m, const std::string& path) { write_file_atomic(path, serialize_model(m)); }

inline Model load_model(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    return deserialize_model(bytes);
  } catch (const ModelFormatError& e) {
    throw ModelFormatError(e.kind(), path + ": " + e.what());
  }
}

}  // namespace mtag
