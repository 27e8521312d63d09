// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//
//   acceptance            run every criterion; exit 1 on any FAIL
//   acceptance --only N   run criterion N; exit 77 when it is skipped
//
// Criterion 6 needs the published Art dataset. Point MTAG_ART_DATASET at its
// JSONL file (MTAG_ART_SCHEMA=maple for the original field names, optional
// MTAG_ART_TAXONOMY); without it the criterion is skipped.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mtag/mtag.hpp"
#include "support/oracles.hpp"
#include "support/properties.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

namespace {

using namespace mtag;

// Tolerances.
constexpr double kMetricTol = 1e-9;
constexpr double kFeatureTol = 1e-12;
constexpr double kBeamTol = 1e-12;
constexpr double kEffectTol = 1e-5;
constexpr double kPValueTol = 1e-6;
constexpr double kArtP1 = 0.7203;
constexpr double kArtP1Tol = 0.03;

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1 -------------------------------------------------------------------------

Outcome metric_oracles() {
  Rng rng(20240101);
  double worst = 0.0;
  for (int fixture = 0; fixture < 1000; ++fixture) {
    const std::size_t universe = 2 + uniform_below(rng, 30);
    std::vector<std::string> names;
    std::map<std::string, int> layer;
    std::map<LabelId, TaxonomyEntry> entries;
    for (std::size_t i = 0; i < universe; ++i) {
      names.push_back("l" + std::to_string(i));
      layer[names.back()] = 1 + static_cast<int>(uniform_below(rng, 3));
      entries[names.back()] = TaxonomyEntry{{names.back()}, layer[names.back()], {}};
    }
    const Taxonomy tax(entries);
    auto order = names;
    shuffle(order, rng);
    order.resize(uniform_below(rng, universe + 1));
    std::set<std::string> gold;
    const std::size_t n_gold = 1 + uniform_below(rng, universe);
    while (gold.size() < n_gold) gold.insert(names[uniform_below(rng, universe)]);
    const GoldSet gold_vec(gold.begin(), gold.end());
    Prediction pred;
    for (std::size_t i = 0; i < order.size(); ++i) pred.ranked.push_back({order[i], 1.0 - 0.01 * static_cast<double>(i)});
    const std::size_t k = 1 + uniform_below(rng, 10);
    const int j = 1 + static_cast<int>(uniform_below(rng, 3));

    const double dp = std::abs(precision_at_k(pred, gold_vec, k) - oracle::precision(order, gold, k));
    const double dn = std::abs(ndcg_at_k(pred, gold_vec, k) - oracle::ndcg(order, gold, k));
    const auto lp = layer_precision_at_k(pred, gold_vec, tax, j, k);
    const auto lo = oracle::layer_precision(order, gold, layer, j, k);
    if (lp.has_value() != lo.has_value()) return fail("fixture " + std::to_string(fixture) + ": layer defined-ness differs");
    const double dl = lp ? std::abs(*lp - *lo) : 0.0;
    worst = std::max({worst, dp, dn, dl});
    if (worst > kMetricTol) return fail("fixture " + std::to_string(fixture) + ": deviation " + fmt("%.3g", worst));
  }
  Prediction ex;
  ex.ranked = {{"a", 3}, {"c", 2}, {"b", 1}};
  const double worked = ndcg_at_k(ex, {"a", "b"}, 3);
  if (std::abs(worked - 0.91972) > 5e-6) return fail("worked NDCG@3 = " + fmt("%.6f", worked));
  return pass("1000 fixtures, max deviation " + fmt("%.2g", worst) + "; worked NDCG@3 " + fmt("%.5f", worked));
}

// 2 -------------------------------------------------------------------------

Outcome tfidf_fidelity() {
  fixtures::SyntheticSpec spec;
  spec.papers = 20;
  spec.labels = 4;
  spec.background_words = 15;
  spec.seed = 77;
  auto papers = fixtures::synthetic_papers(spec);
  papers[3].abstract = "common1 common2 common1 topic0w0";
  const std::vector<MetadataKinds> configs = {MetadataKinds{}, MetadataKinds{MetadataKind::Venue},
                                              MetadataKinds{MetadataKind::Author},
                                              MetadataKinds{MetadataKind::Reference}};
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& kinds : configs) {
    const auto index = build_feature_index(papers, 5, kinds);
    // Vocabulary from the raw corpus: tokens and metadata ids in >= 5 papers.
    std::map<std::string, int> df;
    std::map<MetadataKey, int> mdf;
    for (const auto& p : papers) {
      const auto t = tokenize(p.title + " " + p.abstract);
      for (const auto& w : std::set<std::string>(t.begin(), t.end())) ++df[w];
      for (const auto& [k, id] : metadata_of(p, kinds)) ++mdf[MetadataKey{k, id}];
    }
    std::vector<std::string> words;
    for (const auto& [w, n] : df)
      if (n >= 5) words.push_back(w);
    std::vector<MetadataKey> meta;
    for (const auto& [k, n] : mdf)
      if (n >= 5) meta.push_back(k);
    if (index.words() != words) return fail("word vocabulary differs for metadata=" + kinds.to_string());
    if (std::set<MetadataKey>(index.metadata().begin(), index.metadata().end()) !=
        std::set<MetadataKey>(meta.begin(), meta.end()))
      return fail("metadata vocabulary differs for metadata=" + kinds.to_string());
    for (bool normalize : {false, true}) {
      for (const auto& p : papers) {
        const auto x = featurize(p, index, normalize);
        const auto dense = oracle::dense_features(p, papers, index.words(), index.metadata(), normalize);
        if (dense.size() != x.dimension()) return fail("dimension mismatch");
        for (std::size_t f = 0; f < dense.size(); ++f) {
          worst = std::max(worst, std::abs(dense[f] - x.get(static_cast<FeatureId>(f))));
          ++checked;
        }
      }
    }
    if (worst > kFeatureTol) return fail("metadata=" + kinds.to_string() + ": deviation " + fmt("%.3g", worst));
  }
  return pass(std::to_string(checked) + " entries over 4 metadata configurations, max deviation " + fmt("%.2g", worst));
}

// 3 -------------------------------------------------------------------------

Outcome tree_structure() {
  Rng rng(3);
  std::size_t total_labels = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = trial == 0 ? 2 : trial == 1 ? 2000 : 2 + uniform_below(rng, 1999);
    const auto reps = fixtures::random_representations(n, 64, 6, rng);
    TreeConfig cfg;
    cfg.max_leaf_labels = static_cast<std::uint32_t>(2 + uniform_below(rng, 99));
    const auto tree = build_tree(reps, cfg, rng());
    if (auto err = fixtures::check_tree(tree, n, cfg.max_leaf_labels); !err.empty())
      return fail("trial " + std::to_string(trial) + " (n=" + std::to_string(n) + "): " + err);
    total_labels += n;
  }
  Rng fixed(250);
  const auto reps = fixtures::random_representations(250, 64, 6, fixed);
  TreeConfig cfg;
  cfg.max_leaf_labels = 100;
  const auto tree = build_tree(reps, cfg, 0);
  if (tree.num_leaves() != 4 || tree.depth() != 2)
    return fail("250-label fixture: " + std::to_string(tree.num_leaves()) + " leaves at depth " +
                std::to_string(tree.depth()));
  for (const auto& node : tree.nodes)
    if (node.is_leaf() && (node.depth != 2 || node.labels.size() < 62 || node.labels.size() > 63))
      return fail("250-label fixture: uneven leaf");
  return pass("100 random trees (" + std::to_string(total_labels) + " labels); 250 labels -> 4 leaves at depth 2");
}

// 4 -------------------------------------------------------------------------

Outcome beam_equivalence() {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    fixtures::SyntheticSpec spec;
    spec.labels = 2 + uniform_below(rng, 49);
    spec.papers = spec.labels * 6;
    spec.seed = 1000 + static_cast<std::uint64_t>(trial);
    const auto papers = fixtures::synthetic_papers(spec);
    MetadataKinds kinds;
    if (trial % 2) kinds.insert(MetadataKind::Venue);
    auto index = build_feature_index(papers, 2, kinds);
    TreeConfig tc;
    tc.num_trees = static_cast<std::uint32_t>(1 + uniform_below(rng, 3));
    tc.max_leaf_labels = static_cast<std::uint32_t>(2 + uniform_below(rng, 7));
    tc.seed = static_cast<std::uint64_t>(trial);
    TrainParams params;
    params.truncation = trial % 3 == 0 ? 0.0 : 0.1;
    const Model model = fit(papers, std::move(index), FeatureOptions{}, tc, params);
    std::size_t leaves = 0;
    for (const auto& tm : model.trees) leaves = std::max(leaves, tm.tree.num_leaves());
    for (std::size_t i = 0; i < papers.size(); i += 7) {
      const auto x = model.featurize(papers[i]);
      const auto pred = predict_beam(model, x.view(), leaves, model.labels.size());
      std::map<LabelId, double> expect;
      for (const auto& tm : model.trees)
        for (const auto& [l, s] : oracle::exhaustive_tree_scores(tm, x.view())) expect[model.labels[l]] += s;
      for (auto& [l, s] : expect) s /= static_cast<double>(model.trees.size());
      if (pred.ranked.size() != expect.size())
        return fail("trial " + std::to_string(trial) + ": ranking covers " + std::to_string(pred.ranked.size()) +
                    " of " + std::to_string(expect.size()) + " labels");
      for (std::size_t r = 0; r < pred.ranked.size(); ++r) {
        const auto& e = pred.ranked[r];
        if (std::abs(expect.at(e.label) - e.score) > kBeamTol)
          return fail("trial " + std::to_string(trial) + ": score of " + e.label + " differs");
        if (r > 0 && expect.at(pred.ranked[r - 1].label) < expect.at(e.label) - kBeamTol)
          return fail("trial " + std::to_string(trial) + ": ranking out of order at " + std::to_string(r));
      }
    }
  }
  return pass("50 random models, full rankings equal exhaustive scoring");
}

// 5 -------------------------------------------------------------------------

Outcome rerank_dominance() {
  Rng rng(5);
  const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "delta", "heart", "attack", "cell", "wall"};
  for (int trial = 0; trial < 500; ++trial) {
    std::map<LabelId, TaxonomyEntry> entries;
    const std::size_t n = 1 + uniform_below(rng, 12);
    for (std::size_t l = 0; l < n; ++l) {
      TaxonomyEntry e;
      const std::size_t n_names = 1 + uniform_below(rng, 3);
      for (std::size_t k = 0; k < n_names; ++k) {
        std::string name;
        const std::size_t len = 1 + uniform_below(rng, 2);
        for (std::size_t t = 0; t < len; ++t) name += (t ? " " : "") + vocab[uniform_below(rng, vocab.size())];
        if (uniform01(rng) < 0.3) name[0] = static_cast<char>(std::toupper(name[0]));
        e.names.push_back(name);
      }
      entries["x" + std::to_string(l)] = e;
    }
    const Taxonomy tax(entries);
    Paper paper;
    paper.id = "p";
    for (int t = 0; t < 6; ++t) paper.title += vocab[uniform_below(rng, vocab.size())] + (t % 2 ? ", " : " ");
    Prediction pred;
    for (const auto& [id, e] : entries) pred.ranked.push_back({id, uniform01(rng)});
    sort_ranked(pred.ranked);
    const auto out = lexical_rerank(pred, paper, tax);
    // Matched: some name's lowercase word sequence occurs contiguously in the text.
    const auto text = tokenize(paper.text());
    auto matched = [&](const LabelId& id) {
      for (const auto& name : entries.at(id).names) {
        const auto toks = tokenize(name);
        for (std::size_t s = 0; s + toks.size() <= text.size(); ++s)
          if (std::equal(toks.begin(), toks.end(), text.begin() + static_cast<std::ptrdiff_t>(s))) return true;
      }
      return false;
    };
    bool seen_unmatched = false;
    for (const auto& r : out.ranked) {
      if (!matched(r.label))
        seen_unmatched = true;
      else if (seen_unmatched)
        return fail("trial " + std::to_string(trial) + ": matched label " + r.label + " below an unmatched one");
    }
  }
  std::map<LabelId, TaxonomyEntry> mesh;
  mesh["D009203"] = TaxonomyEntry{{"Myocardial Infarction", "Heart Attack"}, 1, {}};
  mesh["D006331"] = TaxonomyEntry{{"Heart Diseases"}, 1, {}};
  Paper p;
  p.id = "entry-term";
  p.title = "Outcomes after a heart attack in older adults";
  Prediction pred;
  pred.ranked = {{"D006331", 0.9}, {"D009203", 0.2}};
  const auto out = lexical_rerank(pred, p, Taxonomy(mesh));
  if (out.ranked.front().label != "D009203" || std::abs(out.ranked.front().score - 1.2) > 1e-12)
    return fail("entry-term fixture: top label " + out.ranked.front().label);
  return pass("500 random fixtures; entry-term fixture promotes D009203 to 1.2");
}

// 6 -------------------------------------------------------------------------

Outcome art_reproduction() {
  const char* path = std::getenv("MTAG_ART_DATASET");
  if (!path || !*path) return {Status::Skip, "MTAG_ART_DATASET not set; the Art dataset is not available offline"};
  RunConfig cfg;
  cfg.dataset = path;
  if (const char* s = std::getenv("MTAG_ART_SCHEMA")) cfg.schema = parse_dataset_schema(s);
  if (const char* t = std::getenv("MTAG_ART_TAXONOMY")) cfg.taxonomy = t;
  cfg.repetitions = 5;
  const auto text = cmd_evaluate(cfg, {});
  cfg.kinds = MetadataKinds{MetadataKind::Venue};
  const auto venue = cmd_evaluate(cfg, {});
  const double p1_text = text.per_metric.at("P@1"), p1_venue = venue.per_metric.at("P@1");
  const auto sig = two_tailed_t_test(text.run_values("P@1"), venue.run_values("P@1"), 0.05, "P@1");
  const std::string d = "text P@1 " + fmt("%.4f", p1_text) + ", +venue P@1 " + fmt("%.4f", p1_venue) + ", p " +
                        fmt("%.3g", sig.p_value);
  const bool within = std::abs(p1_text - kArtP1) <= kArtP1Tol;
  if (within && p1_venue > p1_text) return pass(d);
  if (p1_venue > p1_text && sig.direction == Direction::Better) return pass(d + " (outside band; improvement significant)");
  return fail(d);
}

// 7 -------------------------------------------------------------------------

Outcome effect_arithmetic() {
  auto report = [](double p1, double p3, double p5) {
    EvalReport r;
    r.per_metric = {{"P@1", p1}, {"P@3", p3}, {"P@5", p5}};
    r.runs.push_back({0, r.per_metric});
    return r;
  };
  ReportPairs pairs;
  pairs["parabel-venue"] = {report(0.7203, 0.4829, 0.3392), report(0.7235, 0.4861, 0.3417)};
  const auto v = effect_vector("art", pairs).values();
  const std::vector<double> expect{0.00444, 0.00663, 0.00737};
  for (std::size_t i = 0; i < 3; ++i)
    if (std::abs(v[i] - expect[i]) > kEffectTol) return fail("component " + std::to_string(i) + " = " + fmt("%.6f", v[i]));
  return pass("(" + fmt("%.5f", v[0]) + ", " + fmt("%.5f", v[1]) + ", " + fmt("%.5f", v[2]) + ")");
}

// 8 -------------------------------------------------------------------------

Outcome statistical_protocol() {
  double worst = 0.0;
  for (const auto& f : oracle::welch_fixtures()) {
    const auto r = two_tailed_t_test(f.a, f.b);
    worst = std::max(worst, std::abs(r.p_value - f.p));
    if (std::abs(r.t_statistic - f.t) > 1e-6) return fail("t statistic " + fmt("%.8f", r.t_statistic));
  }
  if (worst > kPValueTol) return fail("p-value deviation " + fmt("%.3g", worst));
  const std::vector<double> same{0.7, 0.71, 0.72, 0.7, 0.71};
  const auto r = two_tailed_t_test(same, same);
  if (r.p_value != 1.0 || r.direction != Direction::Indistinguishable) return fail("identical samples: p " + fmt("%.6g", r.p_value));
  const std::vector<double> flat{0.5, 0.5, 0.5};
  if (two_tailed_t_test(flat, flat).p_value != 1.0) return fail("identical constant samples: p != 1");
  return pass("20 fixtures, max p deviation " + fmt("%.2g", worst) + "; identical samples p = 1");
}

// 9 -------------------------------------------------------------------------

Outcome determinism() {
  fixtures::TempDir dir;
  fixtures::SyntheticSpec spec;
  spec.papers = 300;
  spec.labels = 16;
  spec.seed = 9;
  const auto papers = fixtures::synthetic_papers(spec);
  RunConfig cfg;
  cfg.dataset = dir.write("data.jsonl", fixtures::to_jsonl(papers));
  cfg.taxonomy = dir.write("tax.jsonl", fixtures::synthetic_taxonomy_jsonl(spec.labels));
  cfg.kinds = MetadataKinds{MetadataKind::Venue};
  cfg.min_df = 2;
  cfg.tree.max_leaf_labels = 4;
  cfg.repetitions = 2;
  cmd_train(cfg, dir.file("a.model"));
  cmd_train(cfg, dir.file("b.model"));
  if (read_file(dir.file("a.model")) != read_file(dir.file("b.model"))) return fail("model files differ");
  if (read_file(dir.file("a.model.manifest")) != read_file(dir.file("b.model.manifest"))) return fail("manifests differ");
  cmd_evaluate(cfg, dir.file("a.report"));
  cmd_evaluate(cfg, dir.file("b.report"));
  if (read_file(dir.file("a.report")) != read_file(dir.file("b.report"))) return fail("reports differ");

  std::vector<Paper> fifty(papers.begin(), papers.begin() + 50);
  auto index = build_feature_index(fifty, 2, cfg.kinds);
  TreeConfig tc;
  tc.max_leaf_labels = 3;
  const Model model = fit(fifty, std::move(index), FeatureOptions{}, tc, TrainParams{});
  save_model(model, dir.file("fifty.model"));
  const Model loaded = load_model(dir.file("fifty.model"));
  if (!(loaded == model)) return fail("loaded model differs from the saved one");
  for (const auto& p : fifty) {
    const auto a = predict_beam(model, p, 10, 10), b = predict_beam(loaded, p, 10, 10);
    if (a.ranked.size() != b.ranked.size()) return fail("prediction length differs for " + p.id);
    for (std::size_t i = 0; i < a.ranked.size(); ++i)
      if (a.ranked[i].label != b.ranked[i].label ||
          std::memcmp(&a.ranked[i].score, &b.ranked[i].score, sizeof(double)) != 0)
        return fail("prediction differs for " + p.id);
  }
  return pass("identical model/manifest/report bytes across runs; 50-paper round-trip predictions bit-identical");
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);

  mtag::set_warning_sink([](const std::string&) {});
  const std::vector<Criterion> criteria = {
      {1, "formula oracles", metric_oracles},
      {2, "tf-idf fidelity", tfidf_fidelity},
      {3, "tree structure", tree_structure},
      {4, "beam/brute-force equivalence", beam_equivalence},
      {5, "rerank dominance", rerank_dominance},
      {6, "Art reproduction", art_reproduction},
      {7, "effect-vector arithmetic", effect_arithmetic},
      {8, "statistical protocol", statistical_protocol},
      {9, "determinism and persistence", determinism},
  };
  int failed = 0, skipped = 0, ran = 0;
  for (const auto& c : criteria) {
    if (only && c.id != only) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    std::printf("criterion %d %-4s %-30s %s [%.2fs]\n", c.id, tag, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.status == Status::Fail;
    skipped += o.status == Status::Skip;
  }
  if (failed) return 1;
  if (only && ran == 1 && skipped == 1) return 77;
  return 0;
}
