#pragma once

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mtag/error.hpp"
#include "mtag/eval.hpp"
#include "mtag/io.hpp"

namespace mtag {

struct EffectComponent {
  std::string combo;   // e.g. "parabel-venue"
  std::string metric;  // P@1, P@3 or P@5
  double relative_change = 0.0;

  std::string tag() const { return combo + ":" + metric; }
};

// Per-field vector of relative P@k changes. Components are combo-major
// (combos in ascending tag order), metric-minor (P@1, P@3, P@5).
struct EffectVector {
  std::string field;
  std::vector<EffectComponent> components;

  std::vector<double> values() const {
    std::vector<double> v;
    for (const auto& c : components) v.push_back(c.relative_change);
    return v;
  }
};

// combo tag -> (text-only report, text+metadata report), both on the same test split.
using ReportPairs = std::map<std::string, std::pair<EvalReport, EvalReport>>;

inline const std::vector<std::size_t>& effect_ks() {
  static const std::vector<std::size_t> ks{1, 3, 5};
  return ks;
}

inline EffectVector effect_vector(const std::string& field, const ReportPairs& reports) {
  EffectVector out;
  out.field = field;
  for (const auto& [combo, pair] : reports) {
    for (auto k : effect_ks()) {
      const auto name = precision_name(k);
      auto find = [&](const EvalReport& r, const char* which) {
        auto it = r.per_metric.find(name);
        if (it == r.per_metric.end())
          throw InputError("field '" + field + "', combo '" + combo + "': " + which + " report lacks " + name);
        return it->second;
      };
      const double base = find(pair.first, "text-only");
      const double with = find(pair.second, "with-metadata");
      out.components.push_back({combo, name, delta(with, base, DeltaMode::Relative)});
    }
  }
  return out;
}

// Header `field,<combo:metric>...` then one row per field, 6 decimals.
inline std::string format_effect_csv(const std::vector<EffectVector>& vectors) {
  std::ostringstream out;
  out << "field";
  if (!vectors.empty())
    for (const auto& c : vectors.front().components) out << ',' << c.tag();
  out << '\n';
  char buf[48];
  for (const auto& v : vectors) {
    if (v.components.size() != vectors.front().components.size())
      throw InputError("effect vector for '" + v.field + "' has " + std::to_string(v.components.size()) +
                       " components, expected " + std::to_string(vectors.front().components.size()));
    for (std::size_t i = 0; i < v.components.size(); ++i)
      if (v.components[i].tag() != vectors.front().components[i].tag())
        throw InputError("effect vector for '" + v.field + "' uses a different component order");
    if (v.field.find_first_of(",\n") != std::string::npos)
      throw InputError("field name '" + v.field + "' contains a comma or newline");
    out << v.field;
    for (const auto& c : v.components) {
      std::snprintf(buf, sizeof buf, "%.6f", c.relative_change);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

inline void export_vectors(const std::vector<EffectVector>& vectors, const std::string& path) {
  write_file_atomic(path, format_effect_csv(vectors));
}

inline std::vector<EffectVector> parse_effect_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError("effect CSV is empty");
  auto header = detail::split(line, ',');
  if (header.empty() || header[0] != "field") throw InputError("effect CSV header must start with 'field'");
  std::vector<EffectVector> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = detail::split(line, ',');
    if (cols.size() != header.size()) throw InputError("effect CSV row has wrong column count");
    EffectVector v;
    v.field = cols[0];
    for (std::size_t i = 1; i < cols.size(); ++i) {
      const auto colon = header[i].rfind(':');
      v.components.push_back({header[i].substr(0, colon), header[i].substr(colon + 1),
                              detail::parse_double(cols[i], "effect CSV")});
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace mtag
