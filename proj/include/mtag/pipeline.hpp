#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mtag/analysis.hpp"
#include "mtag/config.hpp"
#include "mtag/corpus.hpp"
#include "mtag/eval.hpp"
#include "mtag/features.hpp"
#include "mtag/io.hpp"
#include "mtag/model.hpp"
#include "mtag/model_io.hpp"

// End-to-end commands. Each writes its outputs atomically and logs phase
// timings to `log` when given.

namespace mtag {

class PhaseTimer {
 public:
  PhaseTimer(std::ostream* log, std::string phase)
      : log_(log), phase_(std::move(phase)), start_(std::chrono::steady_clock::now()) {}
  ~PhaseTimer() {
    if (!log_) return;
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", s);
    *log_ << "[mtag] " << phase_ << ": " << buf << " s\n";
  }

 private:
  std::ostream* log_;
  std::string phase_;
  std::chrono::steady_clock::time_point start_;
};

struct LoadedData {
  std::vector<Paper> papers;
  std::optional<Taxonomy> taxonomy;
  std::size_t dropped = 0;  // papers without labels in the taxonomy
};

// Loads the dataset; with a taxonomy, gold labels are restricted to it.
inline LoadedData load_data(const RunConfig& cfg, std::ostream* log = nullptr) {
  PhaseTimer t(log, "load");
  if (cfg.dataset.empty()) throw InputError("no dataset given (--dataset)");
  if (!std::filesystem::exists(cfg.dataset)) throw InputError("dataset file not found: " + cfg.dataset);
  LoadedData d;
  d.papers = load_papers(cfg.dataset, cfg.schema);
  if (!cfg.taxonomy.empty()) {
    if (!std::filesystem::exists(cfg.taxonomy)) throw InputError("taxonomy file not found: " + cfg.taxonomy);
    d.taxonomy = load_taxonomy(cfg.taxonomy);
    auto r = restrict_labels(std::move(d.papers), *d.taxonomy);
    d.papers = std::move(r.papers);
    d.dropped = r.dropped;
  }
  if (d.papers.empty()) throw InputError("dataset '" + cfg.dataset + "' contains no usable papers");
  return d;
}

inline Model train_on(const std::vector<Paper>& train, const RunConfig& cfg, std::uint64_t seed,
                      std::ostream* log = nullptr) {
  if (cfg.kinds.size() > 1) warn("combining metadata kinds (" + cfg.kinds.to_string() + ") is experimental");
  FeatureIndex index = [&] {
    PhaseTimer t(log, "feature index");
    return build_feature_index(train, cfg.min_df, cfg.kinds);
  }();
  TreeConfig tc = cfg.tree;
  tc.seed = seed;
  PhaseTimer t(log, "fit");
  return fit(train, std::move(index), cfg.features, tc, cfg.train);
}

inline std::vector<Prediction> predict_all(const Model& model, const std::vector<Paper>& papers, std::size_t beam,
                                           std::size_t top_k, const Taxonomy* rerank_with) {
  std::optional<LabelNameMatcher> matcher;
  if (rerank_with) matcher.emplace(*rerank_with);
  std::vector<Prediction> out;
  out.reserve(papers.size());
  // Re-ranking sees every label the beam reached, then the list is cut.
  const std::size_t candidates = matcher ? std::max<std::size_t>(model.labels.size(), 1) : top_k;
  for (const auto& p : papers) {
    auto pred = predict_beam(model, p, beam, candidates);
    if (matcher) {
      pred = lexical_rerank(pred, p, *matcher);
      if (pred.ranked.size() > top_k) pred.ranked.resize(top_k);
    }
    out.push_back(std::move(pred));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct TrainResult {
  Model model;
  std::string manifest;
};

inline std::string manifest_text(const RunConfig& cfg, const Model& model, const DatasetSplit& split,
                                 std::size_t dropped) {
  std::ostringstream o;
  o << "# mtag training manifest\n" << format_config(cfg);
  o << "# resolved\n";
  o << "tree_seeds = ";
  for (std::uint32_t t = 0; t < model.tree_config.num_trees; ++t) o << (t ? "," : "") << model.tree_config.seed + t;
  o << '\n';
  o << "split_seed = " << cfg.seed << '\n';
  o << "n_train = " << split.train.size() << '\n';
  o << "n_valid = " << split.valid.size() << '\n';
  o << "n_test = " << split.test.size() << '\n';
  o << "n_dropped_unlabelled = " << dropped << '\n';
  o << "n_labels = " << model.labels.size() << '\n';
  o << "n_words = " << model.index.num_words() << '\n';
  o << "n_metadata = " << model.index.num_metadata() << '\n';
  o << "feature_dimension = " << model.dimension() << '\n';
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", feature_index_checksum(model.index));
  o << "feature_index_checksum = " << buf << '\n';
  return o.str();
}

// Trains on the training part of the split seeded with cfg.seed; writes the
// model to `out` and the manifest to `out + ".manifest"`.
inline TrainResult cmd_train(const RunConfig& cfg, const std::string& out, std::ostream* log = nullptr) {
  cfg.validate();
  auto data = load_data(cfg, log);
  const auto split = split_by_year(data.papers, cfg.test_start_year, cfg.valid_fraction, cfg.seed);
  TrainResult r{train_on(split.train, cfg, cfg.seed, log), {}};
  r.manifest = manifest_text(cfg, r.model, split, data.dropped);
  if (!out.empty()) {
    PhaseTimer t(log, "save");
    save_model(r.model, out);
    write_file_atomic(out + ".manifest", r.manifest);
  }
  return r;
}

inline std::string manifest_value(const std::string& manifest, const std::string& key) {
  std::istringstream in(manifest);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && detail::trim(line.substr(0, eq)) == key) return detail::trim(line.substr(eq + 1));
  }
  return {};
}

// Writes one prediction line per paper of `cfg.dataset` (every paper, no
// split). When `manifest_path` is given, its feature index checksum must
// match the model's.
inline std::size_t cmd_predict(const RunConfig& cfg, const std::string& model_path, const std::string& out,
                               const std::string& manifest_path = {}, std::ostream* log = nullptr) {
  if (cfg.beam < 1 || cfg.top_k < 1) throw InputError("beam and top_k must be >= 1");
  Model model = [&] {
    PhaseTimer t(log, "load model");
    return load_model(model_path);
  }();
  if (!manifest_path.empty()) {
    const auto expected = manifest_value(read_file(manifest_path), "feature_index_checksum");
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", feature_index_checksum(model.index));
    if (expected != buf)
      throw InputError("feature index mismatch: manifest '" + manifest_path + "' expects " +
                       (expected.empty() ? std::string("<none>") : expected) + ", model '" + model_path + "' has " +
                       buf);
  }
  if (cfg.dataset.empty()) throw InputError("no dataset given (--dataset)");
  if (!std::filesystem::exists(cfg.dataset)) throw InputError("dataset file not found: " + cfg.dataset);
  const auto papers = load_papers(cfg.dataset, cfg.schema);
  std::optional<Taxonomy> taxonomy;
  if (cfg.rerank) {
    if (cfg.taxonomy.empty()) throw InputError("--rerank needs --taxonomy for label names");
    taxonomy = load_taxonomy(cfg.taxonomy);
  }
  std::ostringstream text;
  {
    PhaseTimer t(log, "predict");
    for (const auto& p : predict_all(model, papers, cfg.beam, cfg.top_k, taxonomy ? &*taxonomy : nullptr))
      write_prediction_line(text, p);
  }
  if (out.empty() || out == "-")
    std::fwrite(text.str().data(), 1, text.str().size(), stdout);
  else
    write_file_atomic(out, text.str());
  return papers.size();
}

// One evaluation of `model` on the test part of `split`.
inline RunRecord evaluate_run(const Model& model, const DatasetSplit& split, const RunConfig& cfg,
                              const Taxonomy* taxonomy, std::size_t& n_papers, std::size_t& n_excluded) {
  const Taxonomy* rerank = cfg.rerank ? taxonomy : nullptr;
  if (cfg.rerank && !taxonomy) throw InputError("--rerank needs --taxonomy for label names");
  const auto preds = predict_all(model, split.test, cfg.beam, std::max<std::size_t>(model.labels.size(), 1), rerank);
  MetricSpec spec;
  spec.ks = cfg.ks;
  const auto m = evaluate_predictions(preds, split.test, spec, taxonomy);
  n_papers = m.n_papers;
  n_excluded = m.n_excluded;
  return RunRecord{0, m.metrics};
}

// `repetitions` train+test cycles with seeds seed, seed+1, ...; or, with
// `fixed_model`, a single evaluation of that model on the split seeded with
// cfg.seed.
inline EvalReport cmd_evaluate(const RunConfig& cfg, const std::string& out, const std::string& fixed_model = {},
                               std::ostream* log = nullptr) {
  cfg.validate();
  auto data = load_data(cfg, log);
  const Taxonomy* tax = data.taxonomy ? &*data.taxonomy : nullptr;
  EvalReport report;
  if (!fixed_model.empty()) {
    const Model model = load_model(fixed_model);
    const auto split = split_by_year(data.papers, cfg.test_start_year, cfg.valid_fraction, cfg.seed);
    if (split.test.empty()) throw InputError("no test papers from " + std::to_string(cfg.test_start_year) + " on");
    PhaseTimer t(log, "evaluate");
    auto rec = evaluate_run(model, split, cfg, tax, report.n_test_papers, report.n_excluded_papers);
    rec.seed = cfg.seed;
    report.runs.push_back(std::move(rec));
  } else {
    for (std::uint32_t r = 0; r < cfg.repetitions; ++r) {
      const std::uint64_t seed = cfg.seed + r;
      if (log) *log << "[mtag] run " << r << " seed " << seed << '\n';
      const auto split = split_by_year(data.papers, cfg.test_start_year, cfg.valid_fraction, seed);
      if (split.test.empty()) throw InputError("no test papers from " + std::to_string(cfg.test_start_year) + " on");
      const Model model = train_on(split.train, cfg, seed, log);
      PhaseTimer t(log, "evaluate");
      auto rec = evaluate_run(model, split, cfg, tax, report.n_test_papers, report.n_excluded_papers);
      rec.seed = seed;
      report.runs.push_back(std::move(rec));
    }
  }
  finalize_report(report);
  if (!out.empty()) write_report(report, out);
  return report;
}

inline std::vector<SignificanceResult> cmd_compare(const std::string& report_a, const std::string& report_b,
                                                   double threshold, const std::string& out) {
  auto results = compare_reports(load_report(report_a), load_report(report_b), threshold);
  const auto text = format_significance(results);
  if (out.empty() || out == "-")
    std::fwrite(text.data(), 1, text.size(), stdout);
  else
    write_file_atomic(out, text);
  return results;
}

// Report files named `<field>__<classifier>__<condition>.report`, condition
// in {text, venue, author, reference}. Each metadata condition is paired with
// the same field and classifier's `text` report; combo tag is
// `<classifier>-<condition>`.
inline std::vector<EffectVector> cmd_analyze(const std::string& reports_dir, const std::string& out) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(reports_dir)) throw InputError("report directory not found: " + reports_dir);
  std::map<std::string, std::map<std::string, std::map<std::string, fs::path>>> files;  // field/classifier/condition
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(reports_dir))
    if (e.is_regular_file() && e.path().extension() == ".report") entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto& p : entries) {
    const auto stem = p.stem().string();
    const auto a = stem.find("__");
    const auto b = a == std::string::npos ? a : stem.find("__", a + 2);
    if (b == std::string::npos) throw InputError("report file name not '<field>__<classifier>__<condition>': " + p.string());
    const std::string field = stem.substr(0, a), clf = stem.substr(a + 2, b - a - 2), cond = stem.substr(b + 2);
    if (cond != "text") parse_metadata_kind(cond);
    files[field][clf][cond] = p;
  }
  std::vector<std::string> missing;
  std::vector<EffectVector> vectors;
  for (const auto& [field, by_clf] : files) {
    ReportPairs pairs;
    for (const auto& [clf, by_cond] : by_clf) {
      auto text = by_cond.find("text");
      for (const auto& [cond, path] : by_cond) {
        if (cond == "text") continue;
        if (text == by_cond.end()) {
          missing.push_back(field + "__" + clf + "__text.report (needed by " + path.filename().string() + ")");
          continue;
        }
        pairs[clf + "-" + cond] = {load_report(text->second.string()), load_report(path.string())};
      }
    }
    if (!pairs.empty()) vectors.push_back(effect_vector(field, pairs));
  }
  if (!missing.empty()) {
    std::string msg = "incomplete report pairs; missing:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw InputError(msg);
  }
  if (!out.empty()) export_vectors(vectors, out);
  return vectors;
}

}  // namespace mtag
