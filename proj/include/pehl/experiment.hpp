#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pehl/attn_lstm.hpp"
#include "pehl/elastic_net.hpp"
#include "pehl/fc_net.hpp"
#include "pehl/forest.hpp"
#include "pehl/manifest.hpp"
#include "pehl/metrics.hpp"
#include "pehl/model.hpp"

namespace pehl {

struct ExperimentConfig {
  Method method = Method::fields_trees;
  std::uint64_t seed = 0;

  ForestOptions forest;  // seed taken from `seed`

  std::vector<int> ngram_sizes{2};
  double min_doc_frac = 0.01;
  std::vector<double> c_grid;  // empty: 9 points log-spaced over [1e-3, 1e1]
  int cv_folds = 3;            // C is chosen by cross-validated balanced accuracy
  ElasticNetOptions enet;

  FcConfig fc;
  nn::TrainConfig fc_train{1e-3, 64, 35, 0, 0.0};
  AttnConfig attn;
  nn::TrainConfig attn_train{1e-3, 64, 35, 0, 1.0};
  // Share of the train split held out for best-epoch selection.
  double validation_fraction = 0.1;

  std::size_t calibration_points = 20;
  std::size_t importance_top_k = 70;

  nlohmann::json to_json() const;
  // Keys absent from j keep the values already in base.
  static ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base);
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct ExperimentHooks {
  // Returns a file's bytes; defaults to reading the whole file.
  std::function<std::vector<std::uint8_t>(const std::filesystem::path&)> read_file;
  // Called on entering each phase: load-train, fit, load-test, evaluate,
  // load-calibrate, calibrate.
  std::function<void(std::string_view)> on_phase;
  std::function<void(const std::string&)> log;
};

struct CalibrationResult {
  std::size_t fit_points = 0;
  std::size_t eval_points = 0;
  bool evaluated_on_test = false;  // no calibrate rows were left over
  double pre_balanced_accuracy = 0.0;
  double post_balanced_accuracy = 0.0;
  std::optional<double> pre_auc;
  std::optional<double> post_auc;
  Calibrator calibrator{PlattCalibrator{}};

  nlohmann::json to_json() const;
};

struct ExperimentResult {
  ExperimentConfig config;
  TrainedModel model;
  EvalReport test;
  std::vector<double> test_scores;
  std::vector<int> test_labels;
  std::optional<nn::TrainingTrace> trace;
  std::optional<RegularizationPath> path;
  std::optional<double> chosen_c;
  std::optional<MdiReport> mdi;
  std::optional<ImportanceReport> importance;
  std::optional<CalibrationResult> calibration;

  // model.pehl, eval.json, config.json, roc.csv and whichever of trace.csv, path.csv,
  // mdi.tsv/json, importance.tsv/json, calibration.json apply.
  void write_reports(const std::filesystem::path& dir) const;
};

/// Extraction, featurization and training on the train split only, then
/// evaluation on the test split and, when a calibrate split exists, Platt
/// scaling fitted on its first calibration_points rows. Test files are read
/// only after training has finished. Throws DataError on an empty test split
/// or a single-class train split before anything is trained.
ExperimentResult run_experiment(const DatasetManifest& manifest, const ExperimentConfig& config,
                                const ExperimentHooks& hooks = {});

// Scores of fixed regions under a calibrate-style protocol: fit Platt on
// scores[fit], report balanced accuracy and AUC before and after on scores[eval].
CalibrationResult calibrate_scores(std::span<const double> fit_scores, std::span<const int> fit_labels,
                                   std::span<const double> eval_scores, std::span<const int> eval_labels);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace pehl
