#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pehl/error.hpp"
#include "pehl/metrics.hpp"
#include "pehl/nn/layers.hpp"

namespace pehl::nn {

/// Views over byte sequences and their 0/1 labels; the bytes are not owned.
struct SeqDataset {
  std::vector<ByteSeq> inputs;
  std::vector<int> labels;

  std::size_t size() const { return inputs.size(); }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 35;
  std::uint64_t seed = 0;
  double clip_norm = 0.0;  // 0 disables clipping
  // Training sequences (a prefix of each epoch's order) over which the
  // batch-norm inference statistics are measured after every epoch.
  std::size_t norm_samples = 512;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // sample-weighted mean of the per-batch objective
  std::optional<double> val_balacc;
  std::optional<double> val_auc;
};

struct TrainingTrace {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;  // epoch whose parameters the model holds after training

  void write_csv(std::ostream& out) const;
  std::string digest() const;  // crc32 of the CSV rendering, hex
};

struct Snapshot {
  std::vector<Matrix> params;
  std::vector<RowVector> buffers;
};

template <class Net>
Snapshot take_snapshot(Net& net) {
  Snapshot s;
  for (Param* p : net.parameters()) s.params.push_back(p->value);
  for (RowVector* b : net.buffers()) s.buffers.push_back(*b);
  return s;
}

template <class Net>
void restore_snapshot(Net& net, const Snapshot& s) {
  const ParamList params = net.parameters();
  const auto buffers = net.buffers();
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = s.params[k];
  for (std::size_t k = 0; k < buffers.size(); ++k) *buffers[k] = s.buffers[k];
}

// Splits a shuffled order into batches; a trailing batch of one sample is
// folded into its predecessor so batch statistics are always defined.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, int batch_size);

void shuffle_order(std::vector<std::size_t>& order, Rng& rng);

/// Minibatch Adam over `train`. Net must provide parameters(), buffers(),
/// loss_and_gradients(batch, labels, Mode, Rng&) (which zeroes and fills the
/// grads and updates running statistics), refresh_norm_statistics(data,
/// batch_size) and predict(batch). With a
/// validation set the parameters of the epoch with the highest validation
/// balanced accuracy (earliest on ties) are restored at the end.
template <class Net>
TrainingTrace train_network(Net& net, const SeqDataset& train, const SeqDataset* validation,
                            const TrainConfig& cfg) {
  if (train.size() < 2) throw DataError("training needs at least 2 samples");
  bool has_pos = false;
  bool has_neg = false;
  for (int y : train.labels) (y == 1 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw DataError("training data must contain both classes");
  if (cfg.batch_size < 2) throw DataError("batch size must be at least 2");

  Adam adam(AdamOptions{cfg.learning_rate});
  Rng order_rng(derive_seed(cfg.seed, 0x6f72646572));
  Rng noise_rng(derive_seed(cfg.seed, 0x6e6f697365));
  const ParamList params = net.parameters();

  TrainingTrace trace;
  std::optional<Snapshot> best;
  double best_score = -1.0;
  std::vector<std::size_t> order(train.size());
  std::vector<ByteSeq> batch;
  std::vector<int> batch_labels;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_order(order, order_rng);
    double loss_sum = 0.0;
    for (const auto& [lo, hi] : batch_ranges(order.size(), cfg.batch_size)) {
      batch.clear();
      batch_labels.clear();
      for (std::size_t k = lo; k < hi; ++k) {
        batch.push_back(train.inputs[order[k]]);
        batch_labels.push_back(train.labels[order[k]]);
      }
      const double loss = net.loss_and_gradients(batch, batch_labels, Mode::train, noise_rng);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      if (cfg.clip_norm > 0.0) clip_global_norm(params, cfg.clip_norm);
      adam.step(params);
      loss_sum += loss * static_cast<double>(hi - lo);
    }
    const std::size_t n_norm = std::min(order.size(), std::max<std::size_t>(cfg.norm_samples, 2));
    batch.clear();
    for (std::size_t k = 0; k < n_norm; ++k) batch.push_back(train.inputs[order[k]]);
    net.refresh_norm_statistics(batch, cfg.batch_size);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(order.size());
    if (validation != nullptr && validation->size() > 0) {
      const std::vector<double> scores = net.predict(validation->inputs);
      const EvalReport rep = evaluate_scores(scores, validation->labels);
      rec.val_balacc = rep.balanced_accuracy;
      rec.val_auc = rep.auc;
      if (rep.balanced_accuracy > best_score) {
        best_score = rep.balanced_accuracy;
        best = take_snapshot(net);
        trace.best_epoch = epoch;
      }
    }
    trace.epochs.push_back(rec);
  }
  if (best) {
    restore_snapshot(net, *best);
  } else {
    trace.best_epoch = cfg.epochs;
  }
  return trace;
}

}  // namespace pehl::nn
