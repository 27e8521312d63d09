// mtag: train, predict, evaluate, compare and analyze metadata-aware
// label-tree taggers from the command line.
//
// Exit codes: 0 success, 1 internal error, 2 usage or input error.

#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mtag/mtag.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct RunOptions {
  std::string config_file;
  Overrides overrides;

  mtag::RunConfig resolve() const {
    mtag::RunConfig cfg;
    if (!config_file.empty()) mtag::apply_config_file(cfg, config_file);
    for (const auto& [k, v] : overrides) mtag::apply_setting(cfg, k, v);
    return cfg;
  }
};

void add_value(CLI::App* app, RunOptions& ro, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&ro, key](const std::string& v) { ro.overrides.emplace_back(key, v); }, help);
}

void add_run_options(CLI::App* app, RunOptions& ro, bool training, bool evaluation) {
  app->add_option("--config", ro.config_file, "key = value configuration file (flags override it)");
  add_value(app, ro, "--dataset", "dataset", "dataset file, one JSON record per line");
  add_value(app, ro, "--taxonomy", "taxonomy", "taxonomy file, one JSON record per line");
  add_value(app, ro, "--schema", "schema", "dataset field names: native or maple");
  add_value(app, ro, "--beam", "beam", "beam width at prediction time (default 10)");
  app->add_flag_function(
      "--rerank", [&ro](std::int64_t) { ro.overrides.emplace_back("rerank", "true"); },
      "promote labels whose name occurs in the paper text");
  if (training) {
    app->add_option_function<std::vector<std::string>>(
        "--metadata",
        [&ro](const std::vector<std::string>& kinds) {
          std::string joined;
          for (const auto& k : kinds) joined += (joined.empty() ? "" : ",") + k;
          ro.overrides.emplace_back("metadata", joined);
        },
        "metadata kind to add to the text: venue|author|reference (repeatable)");
    add_value(app, ro, "--trees", "trees", "number of label trees (default 3)");
    add_value(app, ro, "--max-leaf", "max_leaf", "maximum labels per leaf (default 100)");
    add_value(app, ro, "--min-df", "min_df", "minimum document frequency of a feature (default 5)");
    add_value(app, ro, "--seed", "seed", "base seed (default 0)");
    add_value(app, ro, "--test-start-year", "test_start_year", "first year of the test split (default 2016)");
    add_value(app, ro, "--valid-fraction", "valid_fraction", "validation share of pre-test papers (default 0.2)");
    add_value(app, ro, "--threads", "threads", "worker threads across trees (default 1)");
    add_value(app, ro, "--c", "c", "logistic loss weight (default 1)");
    add_value(app, ro, "--truncation", "truncation", "drop weights below this magnitude (default 0.1)");
    add_value(app, ro, "--normalize", "normalize", "unit-normalize feature vectors: true|false (default true)");
  }
  if (evaluation) {
    add_value(app, ro, "--repetitions", "repetitions", "train+evaluate cycles (default 5)");
    add_value(app, ro, "--k", "k", "cutoffs, comma separated (default 1,3,5)");
  } else {
    add_value(app, ro, "--top-k", "top_k", "labels written per paper (default 10)");
  }
}

void write_dumps(const mtag::Model& model, const mtag::RunConfig& cfg, const std::string& tree_path,
                 const std::string& vector_path) {
  if (!tree_path.empty()) {
    std::ostringstream out;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      out << "# tree " << t << '\n';
      mtag::write_tree_topology(out, model.trees[t].tree);
    }
    mtag::write_file_atomic(tree_path, out.str());
  }
  if (!vector_path.empty()) {
    std::ostringstream out;
    for (const auto& p : mtag::load_papers(cfg.dataset, cfg.schema)) mtag::write_vector_line(out, p.id, model.featurize(p));
    mtag::write_file_atomic(vector_path, out.str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metadata-aware label-tree tagger for scientific papers"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "suppress timing logs");

  RunOptions train_opts, predict_opts, eval_opts;
  std::string train_out, dump_tree, dump_vectors;
  auto* train = app.add_subcommand("train", "train a model and write it with a manifest");
  add_run_options(train, train_opts, true, false);
  train->add_option("--out", train_out, "model output path")->required();
  train->add_option("--dump-tree", dump_tree, "write tree topologies here");
  train->add_option("--dump-vectors", dump_vectors, "write dataset feature vectors here");

  std::string model_path, predict_out = "-", manifest_path;
  auto* predict = app.add_subcommand("predict", "write ranked labels for every paper of a dataset");
  add_run_options(predict, predict_opts, false, false);
  predict->add_option("--model", model_path, "model file")->required();
  predict->add_option("--manifest", manifest_path, "training manifest to check the feature index against");
  predict->add_option("--out", predict_out, "prediction output path (default stdout)");

  std::string eval_out, fixed_model;
  auto* evaluate = app.add_subcommand("evaluate", "repeated train+test cycles, or one pass with --fixed-model");
  add_run_options(evaluate, eval_opts, true, true);
  evaluate->add_option("--fixed-model", fixed_model, "evaluate this model once instead of retraining");
  evaluate->add_option("--out", eval_out, "report output path")->required();

  std::string report_a, report_b, compare_out = "-";
  double threshold = 0.05;
  auto* compare = app.add_subcommand("compare", "Welch t-tests of report B against report A");
  compare->add_option("report_a", report_a, "baseline report")->required();
  compare->add_option("report_b", report_b, "candidate report")->required();
  compare->add_option("--threshold", threshold, "significance level (default 0.05)");
  compare->add_option("--out", compare_out, "significance output path (default stdout)");

  std::string reports_dir, analyze_out;
  auto* analyze = app.add_subcommand("analyze", "effect vectors from <field>__<classifier>__<condition>.report files");
  analyze->add_option("--reports", reports_dir, "directory of report files")->required();
  analyze->add_option("--out", analyze_out, "CSV output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::ostream* log = quiet ? nullptr : &std::cerr;
  try {
    if (*train) {
      const auto cfg = train_opts.resolve();
      auto r = mtag::cmd_train(cfg, train_out, log);
      write_dumps(r.model, cfg, dump_tree, dump_vectors);
    } else if (*predict) {
      mtag::cmd_predict(predict_opts.resolve(), model_path, predict_out, manifest_path, log);
    } else if (*evaluate) {
      mtag::cmd_evaluate(eval_opts.resolve(), eval_out, fixed_model, log);
    } else if (*compare) {
      if (!(threshold > 0.0 && threshold < 1.0)) throw mtag::InputError("threshold must lie in (0, 1)");
      mtag::cmd_compare(report_a, report_b, threshold, compare_out);
    } else if (*analyze) {
      mtag::cmd_analyze(reports_dir, analyze_out);
    }
  } catch (const mtag::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
