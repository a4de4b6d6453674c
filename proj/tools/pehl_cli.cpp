// Command-line front end: extraction, corpus generation, training, evaluation,
// importance, calibration and regularization-path reports.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "pehl/error.hpp"
#include "pehl/experiment.hpp"
#include "pehl/header_features.hpp"
#include "pehl/ngram.hpp"
#include "pehl/synthetic.hpp"

namespace {

using namespace pehl;

struct Loaded {
  std::vector<HeaderRegion> regions;
  std::vector<int> labels;
};

Loaded load_rows(const DatasetManifest& m, Split split) {
  Loaded out;
  for (std::size_t i : m.indices(split)) {
    out.regions.push_back(extract_header_region(read_file_bytes(m.resolve(m.entries[i]))));
    out.labels.push_back(m.entries[i].label);
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << text;
}

template <class T>
void apply(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

// Flags override the config file; each flag names one config field.
struct TrainFlags {
  std::string config_file;
  std::optional<std::string> method;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> forest_kind;
  std::optional<int> trees, max_features, max_depth, min_samples_split;
  std::optional<bool> bootstrap;
  std::optional<std::vector<int>> ngram_sizes;
  std::optional<double> min_doc_frac, tolerance;
  std::optional<std::vector<double>> c_grid;
  std::optional<int> cv_folds;
  std::optional<int> embed_dim, hidden, hidden_layers, state, lstm_layers;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr, clip_norm, validation_fraction;
  std::optional<std::size_t> calibration_points, top_k;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_file, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("--method", method, "fields-trees | ngram-linear | fc | attn-lstm");
    app->add_option("--seed", seed);
    app->add_option("--forest-kind", forest_kind, "random-forest | extra-trees");
    app->add_option("--trees", trees);
    app->add_option("--max-features", max_features);
    app->add_option("--max-depth", max_depth);
    app->add_option("--min-samples-split", min_samples_split);
    app->add_option("--bootstrap", bootstrap);
    app->add_option("--ngram-sizes", ngram_sizes)->delimiter(',');
    app->add_option("--min-doc-frac", min_doc_frac);
    app->add_option("--c-grid", c_grid)->delimiter(',');
    app->add_option("--cv-folds", cv_folds);
    app->add_option("--tolerance", tolerance, "elastic-net KKT tolerance");
    app->add_option("--embed-dim", embed_dim);
    app->add_option("--hidden", hidden, "fc hidden units");
    app->add_option("--hidden-layers", hidden_layers);
    app->add_option("--state", state, "lstm state size");
    app->add_option("--lstm-layers", lstm_layers);
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", lr);
    app->add_option("--clip-norm", clip_norm, "attn-lstm global-norm clip, 0 disables");
    app->add_option("--validation-fraction", validation_fraction);
    app->add_option("--calibration-points", calibration_points);
    app->add_option("--top-k", top_k, "importance positions reported");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw DataError(config_file + ": " + e.what());
      }
      c = ExperimentConfig::from_json(j);
    }
    if (method) c.method = method_from_string(*method);
    apply(seed, c.seed);
    if (forest_kind) c.forest.kind = forest_kind_from_string(*forest_kind);
    apply(trees, c.forest.n_trees);
    apply(max_features, c.forest.max_features);
    apply(max_depth, c.forest.max_depth);
    apply(min_samples_split, c.forest.min_samples_split);
    apply(bootstrap, c.forest.bootstrap);
    apply(ngram_sizes, c.ngram_sizes);
    apply(min_doc_frac, c.min_doc_frac);
    apply(c_grid, c.c_grid);
    apply(cv_folds, c.cv_folds);
    apply(tolerance, c.enet.tolerance);
    apply(embed_dim, c.fc.embed_dim);
    apply(embed_dim, c.attn.embed_dim);
    apply(hidden, c.fc.hidden);
    apply(hidden_layers, c.fc.hidden_layers);
    apply(state, c.attn.state);
    apply(lstm_layers, c.attn.lstm_layers);
    for (nn::TrainConfig* t : {&c.fc_train, &c.attn_train}) {
      apply(epochs, t->epochs);
      apply(batch_size, t->batch_size);
      apply(lr, t->learning_rate);
    }
    apply(clip_norm, c.attn_train.clip_norm);
    apply(validation_fraction, c.validation_fraction);
    apply(calibration_points, c.calibration_points);
    apply(top_k, c.importance_top_k);
    return c;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"PE header malware classifiers"};
  app.require_subcommand(1);

  // extract
  auto* extract = app.add_subcommand("extract", "Print a file's header region or parsed features");
  std::string ex_input;
  std::string ex_output;
  bool ex_features = false;
  bool ex_schema = false;
  extract->add_option("input", ex_input, "PE file");
  extract->add_option("-o,--output", ex_output, "output file (default stdout)");
  extract->add_flag("--features", ex_features, "emit parsed schema fields as JSON");
  extract->add_flag("--schema", ex_schema, "emit the feature schema as JSON");

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Write a planted-rule synthetic corpus");
  CorpusOptions gen_opts;
  std::string gen_out;
  std::string gen_rule;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n", gen_opts.n)->capture_default_str();
  gen->add_option("--noise", gen_opts.noise)->capture_default_str();
  gen->add_option("--seed", gen_opts.seed)->capture_default_str();
  gen->add_option("--train-fraction", gen_opts.train_fraction)->capture_default_str();
  gen->add_option("--calibrate", gen_opts.calibrate, "rows moved to the calibrate split")->capture_default_str();
  gen->add_option("--pe32plus-fraction", gen_opts.pe32plus_fraction)->capture_default_str();
  gen->add_option("--rule", gen_rule, "Field=value[,Field=value...]");

  // train
  auto* train = app.add_subcommand("train", "Train, evaluate and write reports");
  TrainFlags flags;
  std::string tr_manifest;
  std::string tr_reports = "reports";
  train->add_option("--manifest", tr_manifest)->required()->check(CLI::ExistingFile);
  train->add_option("--report-dir", tr_reports)->capture_default_str();
  flags.add_to(train);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a manifest split with a saved model");
  std::string ev_model;
  std::string ev_manifest;
  std::string ev_split = "test";
  std::string ev_out;
  std::string ev_roc;
  evaluate->add_option("--model", ev_model)->required();
  evaluate->add_option("--manifest", ev_manifest)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--split", ev_split)->capture_default_str();
  evaluate->add_option("-o,--output", ev_out, "EvalReport JSON (default stdout)");
  evaluate->add_option("--roc", ev_roc, "ROC curve CSV");

  // importance
  auto* importance = app.add_subcommand("importance", "MDI (forest) or attention (attn-lstm) importance");
  std::string im_model;
  std::string im_manifest;
  std::string im_split = "train";
  std::string im_out;
  std::size_t im_top = 70;
  bool im_json = false;
  importance->add_option("--model", im_model)->required();
  importance->add_option("--manifest", im_manifest, "attention needs input files")->check(CLI::ExistingFile);
  importance->add_option("--split", im_split)->capture_default_str();
  importance->add_option("--top-k", im_top)->capture_default_str();
  importance->add_option("-o,--output", im_out);
  importance->add_flag("--json", im_json);

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Fit Platt scaling on calibrate rows");
  std::string ca_model;
  std::string ca_manifest;
  std::size_t ca_points = 20;
  double ca_shift = 0.0;
  std::string ca_out;
  calibrate->add_option("--model", ca_model)->required();
  calibrate->add_option("--manifest", ca_manifest)->required()->check(CLI::ExistingFile);
  calibrate->add_option("--points", ca_points)->capture_default_str();
  calibrate->add_option("--shift", ca_shift, "added to every score before fitting")->capture_default_str();
  calibrate->add_option("-o,--output", ca_out);

  // path
  auto* path = app.add_subcommand("path", "Elastic-net regularization path over an n-gram vocabulary");
  std::string pa_manifest;
  std::string pa_out;
  std::vector<int> pa_sizes{2};
  double pa_min_doc = 0.01;
  std::vector<double> pa_grid;
  int pa_folds = 0;
  std::uint64_t pa_seed = 0;
  path->add_option("--manifest", pa_manifest)->required()->check(CLI::ExistingFile);
  path->add_option("--ngram-sizes", pa_sizes)->delimiter(',')->capture_default_str();
  path->add_option("--min-doc-frac", pa_min_doc)->capture_default_str();
  path->add_option("--c-grid", pa_grid)->delimiter(',');
  path->add_option("--cv-folds", pa_folds)->capture_default_str();
  path->add_option("--seed", pa_seed)->capture_default_str();
  path->add_option("-o,--output", pa_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*extract) {
    if (ex_schema) {
      write_text(ex_output, schema_to_json().dump(2) + "\n");
      return 0;
    }
    if (ex_input.empty()) throw DataError("extract: input file required");
    const HeaderRegion region = extract_header_region(read_file_bytes(ex_input));
    if (!ex_features) {
      write_text(ex_output, region_hex_dump(region));
      return 0;
    }
    const FeatureVector fv = parse_features(region);
    nlohmann::json j;
    j["is_64bit"] = fv.is_64bit;
    j["degenerate"] = region.degenerate;
    const auto row = fv.as_row();
    const auto& schema = feature_schema();
    for (std::size_t i = 0; i < schema.size(); ++i) j["fields"][schema[i].name] = row[i];
    write_text(ex_output, j.dump(2) + "\n");
    return 0;
  }

  if (*gen) {
    if (!gen_rule.empty()) gen_opts.rule = PlantedRule::parse(gen_rule);
    const auto corpus = generate_synthetic_corpus(gen_opts);
    const DatasetManifest m = write_corpus(corpus, gen_out);
    std::cerr << "wrote " << m.entries.size() << " files to " << gen_out << "\n";
    return 0;
  }

  if (*train) {
    const ExperimentConfig cfg = flags.resolve();
    ExperimentHooks hooks;
    hooks.log = [](const std::string& s) { std::cerr << s << "\n"; };
    hooks.on_phase = [](std::string_view p) { std::cerr << "[" << p << "]\n"; };
    const auto result = run_experiment(load_manifest(tr_manifest), cfg, hooks);
    result.write_reports(tr_reports);
    std::cout << result.test.to_json().dump(2) << "\n";
    return 0;
  }

  if (*evaluate) {
    const TrainedModel model = load_model(ev_model);
    const Loaded data = load_rows(load_manifest(ev_manifest), split_from_string(ev_split));
    const auto scores = model.score(data.regions);
    const EvalReport report = evaluate_scores(scores, data.labels);
    write_text(ev_out, report.to_json().dump(2) + "\n");
    if (!ev_roc.empty()) {
      std::ostringstream os;
      write_roc_csv(os, report.roc);
      write_text(ev_roc, os.str());
    }
    return 0;
  }

  if (*importance) {
    const TrainedModel model = load_model(im_model);
    std::ostringstream os;
    if (const auto* forest = std::get_if<TreeEnsemble>(&model.impl)) {
      const MdiReport r = mdi_scores(*forest);
      if (im_json) {
        os << r.to_json().dump(2) << "\n";
      } else {
        r.write_tsv(os);
      }
    } else if (const auto* net = std::get_if<AttnLstmNet>(&model.impl)) {
      if (im_manifest.empty()) throw DataError("importance: attention importance needs --manifest");
      const Loaded data = load_rows(load_manifest(im_manifest), split_from_string(im_split));
      const ImportanceReport r = attention_importance(*net, region_views(data.regions));
      if (im_json) {
        os << r.to_json(im_top).dump(2) << "\n";
      } else {
        r.write_tsv(os, im_top);
      }
    } else {
      throw DataError("importance: available for fields-trees and attn-lstm models only");
    }
    write_text(im_out, os.str());
    return 0;
  }

  if (*calibrate) {
    const TrainedModel model = load_model(ca_model);
    const DatasetManifest m = load_manifest(ca_manifest);
    const Loaded cal = load_rows(m, Split::calibrate);
    if (cal.labels.empty()) throw DataError("calibrate: manifest has no calibrate rows");
    auto scores = model.score(cal.regions);
    for (double& s : scores) s += ca_shift;
    const std::size_t k = std::min(ca_points, scores.size());
    CalibrationResult r;
    if (k < scores.size()) {
      r = calibrate_scores(std::span(scores).first(k), std::span(cal.labels).first(k),
                           std::span(scores).subspan(k), std::span(cal.labels).subspan(k));
    } else {
      const Loaded test = load_rows(m, Split::test);
      auto test_scores = model.score(test.regions);
      for (double& s : test_scores) s += ca_shift;
      r = calibrate_scores(scores, cal.labels, test_scores, test.labels);
      r.evaluated_on_test = true;
    }
    nlohmann::json j = r.to_json();
    j["shift"] = ca_shift;
    write_text(ca_out, j.dump(2) + "\n");
    return 0;
  }

  if (*path) {
    const Loaded data = load_rows(load_manifest(pa_manifest), Split::train);
    const NGramVocabulary vocab = build_vocabulary(data.regions, pa_sizes, pa_min_doc);
    SparseDataset ds;
    ds.dim = vocab.dim();
    for (std::size_t i = 0; i < data.regions.size(); ++i) {
      ds.rows.push_back(vectorize(data.regions[i], vocab));
      ds.labels.push_back(data.labels[i] == 1 ? 1 : -1);
    }
    const std::vector<double> grid = pa_grid.empty() ? log_spaced_grid(1e-3, 10.0, 9) : pa_grid;
    const RegularizationPath rp = regularization_path(ds, grid, pa_folds, pa_seed);
    std::ostringstream os;
    rp.write_csv(os);
    write_text(pa_out, os.str());
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pehl::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const pehl::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 3;
  } catch (const pehl::ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
