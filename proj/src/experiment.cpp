#include "pehl/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "pehl/artifact.hpp"
#include "pehl/error.hpp"
#include "pehl/header_features.hpp"
#include "pehl/ngram.hpp"

namespace pehl {

namespace {

nlohmann::json train_config_json(const nn::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"epochs", c.epochs}, {"clip_norm", c.clip_norm}};
}

nn::TrainConfig train_config_from(const nlohmann::json& j, nn::TrainConfig c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  return c;
}

struct Loaded {
  std::vector<HeaderRegion> regions;
  std::vector<int> labels;
};

Loaded load_split(const DatasetManifest& manifest, std::span<const std::size_t> rows,
                  const ExperimentHooks& hooks) {
  Loaded out;
  for (std::size_t i : rows) {
    const auto& e = manifest.entries[i];
    const auto bytes = hooks.read_file ? hooks.read_file(manifest.resolve(e))
                                       : read_file_bytes(manifest.resolve(e));
    out.regions.push_back(extract_header_region(bytes));
    out.labels.push_back(e.label);
  }
  return out;
}

void phase(const ExperimentHooks& hooks, std::string_view name) {
  if (hooks.on_phase) hooks.on_phase(name);
}

void log(const ExperimentHooks& hooks, const std::string& msg) {
  if (hooks.log) hooks.log(msg);
}

std::string csv_digest(const auto& writer) {
  std::ostringstream os;
  writer.write_csv(os);
  return crc32_hex(os.str());
}

// Deterministic stratified hold-out: returns (fit rows, validation rows).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout(std::span<const int> labels,
                                                                      double fraction,
                                                                      std::uint64_t seed) {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> val;
  Rng rng(derive_seed(seed, 0x686f6c64));
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) idx.push_back(i);
    }
    nn::shuffle_order(idx, rng);
    const auto n_val = static_cast<std::size_t>(static_cast<double>(idx.size()) * fraction + 0.5);
    val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(n_val, idx.size() - 1)));
    fit.insert(fit.end(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(n_val, idx.size() - 1)), idx.end());
  }
  std::sort(fit.begin(), fit.end());
  std::sort(val.begin(), val.end());
  return {fit, val};
}

nn::SeqDataset seq_subset(std::span<const HeaderRegion> regions, std::span<const int> labels,
                          std::span<const std::size_t> rows) {
  nn::SeqDataset d;
  for (std::size_t i : rows) {
    d.inputs.push_back(regions[i].view());
    d.labels.push_back(labels[i]);
  }
  return d;
}

template <class Net>
nn::TrainingTrace fit_network(Net& net, const Loaded& train, const ExperimentConfig& cfg,
                              nn::TrainConfig tc) {
  tc.seed = derive_seed(cfg.seed, 0x6e6574);
  if (cfg.validation_fraction > 0.0) {
    const auto [fit_rows, val_rows] = holdout(train.labels, cfg.validation_fraction, cfg.seed);
    const auto fit = seq_subset(train.regions, train.labels, fit_rows);
    const auto val = seq_subset(train.regions, train.labels, val_rows);
    return nn::train_network(net, fit, val.size() > 0 ? &val : nullptr, tc);
  }
  std::vector<std::size_t> all(train.labels.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return nn::train_network(net, seq_subset(train.regions, train.labels, all), nullptr, tc);
}

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["method"] = to_string(method);
  j["seed"] = seed;
  j["forest"] = {{"kind", to_string(forest.kind)}, {"n_trees", forest.n_trees},
                 {"max_features", forest.max_features}, {"max_depth", forest.max_depth},
                 {"min_samples_split", forest.min_samples_split}, {"bootstrap", forest.bootstrap}};
  j["ngram"] = {{"sizes", ngram_sizes}, {"min_doc_frac", min_doc_frac}, {"c_grid", c_grid},
                {"cv_folds", cv_folds}, {"tolerance", enet.tolerance},
                {"max_outer_iterations", enet.max_outer_iterations}};
  j["fc"] = fc.to_json();
  j["fc_train"] = train_config_json(fc_train);
  j["attn"] = attn.to_json();
  j["attn_train"] = train_config_json(attn_train);
  j["validation_fraction"] = validation_fraction;
  j["calibration_points"] = calibration_points;
  j["importance_top_k"] = importance_top_k;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, ExperimentConfig c) {
  try {
    if (j.contains("method")) c.method = method_from_string(j["method"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("forest")) {
      const auto& f = j["forest"];
      if (f.contains("kind")) c.forest.kind = forest_kind_from_string(f["kind"].get<std::string>());
      c.forest.n_trees = f.value("n_trees", c.forest.n_trees);
      c.forest.max_features = f.value("max_features", c.forest.max_features);
      c.forest.max_depth = f.value("max_depth", c.forest.max_depth);
      c.forest.min_samples_split = f.value("min_samples_split", c.forest.min_samples_split);
      c.forest.bootstrap = f.value("bootstrap", c.forest.bootstrap);
    }
    if (j.contains("ngram")) {
      const auto& g = j["ngram"];
      c.ngram_sizes = g.value("sizes", c.ngram_sizes);
      c.min_doc_frac = g.value("min_doc_frac", c.min_doc_frac);
      c.c_grid = g.value("c_grid", c.c_grid);
      c.cv_folds = g.value("cv_folds", c.cv_folds);
      c.enet.tolerance = g.value("tolerance", c.enet.tolerance);
      c.enet.max_outer_iterations = g.value("max_outer_iterations", c.enet.max_outer_iterations);
    }
    if (j.contains("fc")) c.fc = FcConfig::from_json(j["fc"]);
    if (j.contains("fc_train")) c.fc_train = train_config_from(j["fc_train"], c.fc_train);
    if (j.contains("attn")) c.attn = AttnConfig::from_json(j["attn"]);
    if (j.contains("attn_train")) c.attn_train = train_config_from(j["attn_train"], c.attn_train);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.calibration_points = j.value("calibration_points", c.calibration_points);
    c.importance_top_k = j.value("importance_top_k", c.importance_top_k);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  return from_json(j, ExperimentConfig{});
}

nlohmann::json CalibrationResult::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"fit_points", fit_points},
          {"eval_points", eval_points},
          {"evaluated_on_test", evaluated_on_test},
          {"pre_balanced_accuracy", pre_balanced_accuracy},
          {"post_balanced_accuracy", post_balanced_accuracy},
          {"pre_auc", opt(pre_auc)},
          {"post_auc", opt(post_auc)},
          {"calibrator", calibrator.to_json()}};
}

CalibrationResult calibrate_scores(std::span<const double> fit_scores, std::span<const int> fit_labels,
                                   std::span<const double> eval_scores, std::span<const int> eval_labels) {
  CalibrationResult r;
  r.calibrator = platt_calibrate(fit_scores, fit_labels);
  r.fit_points = fit_scores.size();
  r.eval_points = eval_scores.size();
  const std::vector<double> post = r.calibrator.apply(eval_scores);
  r.pre_balanced_accuracy = balanced_accuracy(eval_scores, eval_labels);
  r.post_balanced_accuracy = balanced_accuracy(post, eval_labels);
  r.pre_auc = roc_auc_points(eval_scores, eval_labels).auc;
  r.post_auc = roc_auc_points(post, eval_labels).auc;
  return r;
}

ExperimentResult run_experiment(const DatasetManifest& manifest, const ExperimentConfig& config,
                                const ExperimentHooks& hooks) {
  const auto train_rows = manifest.indices(Split::train);
  const auto test_rows = manifest.indices(Split::test);
  const auto cal_rows = manifest.indices(Split::calibrate);
  const std::string ctx = std::string(to_string(config.method)) + ": ";
  if (test_rows.empty()) throw DataError(ctx + "manifest has no test rows");
  if (train_rows.empty()) throw DataError(ctx + "manifest has no train rows");
  {
    bool pos = false;
    bool neg = false;
    for (std::size_t i : train_rows) (manifest.entries[i].label == 1 ? pos : neg) = true;
    if (!pos || !neg) throw DataError(ctx + "train split must contain both classes");
  }

  ExperimentResult res{config, TrainedModel{TreeEnsemble{}, {}}, {}, {}, {}, {}, {}, {}, {}, {}, {}};
  phase(hooks, "load-train");
  const Loaded train = load_split(manifest, train_rows, hooks);
  log(hooks, "loaded " + std::to_string(train.regions.size()) + " train regions");

  phase(hooks, "fit");
  nlohmann::json meta;
  meta["hyperparameters"] = config.to_json();
  meta["seed"] = config.seed;
  try {
    switch (config.method) {
      case Method::fields_trees: {
        FeatureTable table = FeatureTable::for_header_schema();
        for (const auto& r : train.regions) table.append(parse_features(r).as_row());
        ForestOptions opts = config.forest;
        opts.seed = config.seed;
        TreeEnsemble forest = train_forest(table, train.labels, opts);
        res.mdi = mdi_scores(forest);
        std::ostringstream os;
        res.mdi->write_tsv(os);
        meta["trace_digest"] = crc32_hex(os.str());
        res.model.impl = std::move(forest);
        break;
      }
      case Method::ngram_linear: {
        NgramLinear lin;
        lin.vocab = build_vocabulary(train.regions, config.ngram_sizes, config.min_doc_frac);
        log(hooks, "n-gram vocabulary: " + std::to_string(lin.vocab.dim()) + " columns");
        SparseDataset data;
        data.dim = lin.vocab.dim();
        for (std::size_t i = 0; i < train.regions.size(); ++i) {
          data.rows.push_back(vectorize(train.regions[i], lin.vocab));
          data.labels.push_back(train.labels[i] == 1 ? 1 : -1);
        }
        const std::vector<double> grid = config.c_grid.empty() ? log_spaced_grid(1e-3, 10.0, 9) : config.c_grid;
        res.path = regularization_path(data, grid, config.cv_folds, config.seed, config.enet);
        std::size_t best = 0;
        for (std::size_t k = 0; k < res.path->steps.size(); ++k) {
          const auto& s = res.path->steps[k];
          const auto& b = res.path->steps[best];
          const double sv = s.cv_balanced_accuracy.value_or(s.train_balanced_accuracy);
          const double bv = b.cv_balanced_accuracy.value_or(b.train_balanced_accuracy);
          if (sv > bv) best = k;
        }
        lin.model = res.path->steps[best].model;
        res.chosen_c = lin.model.C;
        meta["trace_digest"] = csv_digest(*res.path);
        res.model.impl = std::move(lin);
        break;
      }
      case Method::fc: {
        FcNet net(config.fc, config.seed);
        res.trace = fit_network(net, train, config, config.fc_train);
        meta["trace_digest"] = res.trace->digest();
        res.model.impl = std::move(net);
        break;
      }
      case Method::attn_lstm: {
        AttnLstmNet net(config.attn, config.seed);
        res.trace = fit_network(net, train, config, config.attn_train);
        meta["trace_digest"] = res.trace->digest();
        const auto views = region_views(train.regions);
        res.importance = attention_importance(net, views);
        res.model.impl = std::move(net);
        break;
      }
    }
  } catch (const DivergenceError& e) {
    throw DivergenceError(ctx + e.what());
  } catch (const DataError& e) {
    throw DataError(ctx + e.what());
  }
  res.model.metadata = std::move(meta);

  phase(hooks, "load-test");
  const Loaded test = load_split(manifest, test_rows, hooks);
  phase(hooks, "evaluate");
  res.test_scores = res.model.score(test.regions);
  res.test_labels = test.labels;
  res.test = evaluate_scores(res.test_scores, res.test_labels);
  log(hooks, "test balanced accuracy " + std::to_string(res.test.balanced_accuracy));

  if (!cal_rows.empty()) {
    phase(hooks, "load-calibrate");
    const Loaded cal = load_split(manifest, cal_rows, hooks);
    phase(hooks, "calibrate");
    const std::size_t k = std::min(config.calibration_points, cal.labels.size());
    const std::vector<double> cal_scores = res.model.score(cal.regions);
    const std::span<const double> fit_s(cal_scores.data(), k);
    const std::span<const int> fit_y(cal.labels.data(), k);
    try {
      if (k < cal_scores.size()) {
        res.calibration = calibrate_scores(fit_s, fit_y, std::span(cal_scores).subspan(k),
                                           std::span(cal.labels).subspan(k));
      } else {
        res.calibration = calibrate_scores(fit_s, fit_y, res.test_scores, res.test_labels);
        res.calibration->evaluated_on_test = true;
      }
    } catch (const DataError& e) {
      throw DataError(ctx + "calibration: " + e.what());
    }
  }
  return res;
}

void ExperimentResult::write_reports(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  save_model(model, dir / "model.pehl");
  {
    nlohmann::json j = test.to_json();
    j["method"] = to_string(config.method);
    j["seed"] = config.seed;
    if (chosen_c) j["chosen_C"] = *chosen_c;
    if (trace) j["best_epoch"] = trace->best_epoch;
    auto f = open("eval.json");
    f << j.dump(2) << '\n';
  }
  {
    auto f = open("config.json");
    f << config.to_json().dump(2) << '\n';
  }
  {
    auto f = open("roc.csv");
    write_roc_csv(f, test.roc);
  }
  if (trace) {
    auto f = open("trace.csv");
    trace->write_csv(f);
  }
  if (path) {
    auto f = open("path.csv");
    path->write_csv(f);
  }
  if (mdi) {
    auto f = open("mdi.tsv");
    mdi->write_tsv(f);
    auto g = open("mdi.json");
    g << mdi->to_json().dump(2) << '\n';
  }
  if (importance) {
    auto f = open("importance.tsv");
    importance->write_tsv(f, config.importance_top_k);
    auto g = open("importance.json");
    g << importance->to_json(config.importance_top_k).dump(2) << '\n';
  }
  if (calibration) {
    auto f = open("calibration.json");
    f << calibration->to_json().dump(2) << '\n';
  }
}

}  // namespace pehl
