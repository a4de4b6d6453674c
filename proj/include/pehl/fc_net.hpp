#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

#include "pehl/nn/layers.hpp"
#include "pehl/nn/trainer.hpp"

namespace pehl {

struct FcConfig {
  int seq_len = 328;
  int embed_dim = 16;
  int hidden = 256;
  int hidden_layers = 4;
  double embed_dropout = 0.2;  // whole embedding rows, per position
  double hidden_dropout = 0.5;
  double embed_l2 = 1e-4;
  double hidden_l2 = 1e-4;
  double first_l1 = 1e-4;
  double decov_weight = 0.1;  // on the last hidden layer, after ELU

  nlohmann::json to_json() const;
  static FcConfig from_json(const nlohmann::json& j);
  bool operator==(const FcConfig&) const = default;
};

/// Embedding, flatten, hidden_layers x (affine, batch norm, ELU, dropout),
/// affine to one logit, sigmoid.
class FcNet {
 public:
  FcNet(const FcConfig& config, std::uint64_t seed);

  const FcConfig& config() const { return cfg_; }

  struct Output {
    std::vector<double> scores;
    double penalty = 0.0;  // L1 + L2 + DeCov at the current parameters
  };

  // Train mode draws dropout masks from rng and uses batch statistics
  // (batch >= 2); running statistics are not modified.
  Output forward(std::span<const nn::ByteSeq> batch, nn::Mode mode, Rng& rng) const;

  // Mean binary cross-entropy plus penalties. Zeroes and fills every gradient.
  // In train mode the batch-norm running statistics are updated.
  double loss_and_gradients(std::span<const nn::ByteSeq> batch, std::span<const int> labels,
                            nn::Mode mode, Rng& rng);

  std::vector<double> predict(std::span<const nn::ByteSeq> batch) const;

  // Replaces the batch-norm running statistics by population statistics
  // measured over data (>= 2 sequences) without dropout.
  void refresh_norm_statistics(std::span<const nn::ByteSeq> data, int batch_size);

  nn::ParamList parameters();
  std::vector<nn::RowVector*> buffers();

 private:
  struct Pass;
  nn::Matrix run(std::span<const nn::ByteSeq> batch, nn::Mode mode, Rng& rng, Pass& pass) const;
  double penalty_value() const;

  FcConfig cfg_;
  nn::Embedding embedding_;
  std::vector<nn::Affine> dense_;
  std::vector<nn::BatchNorm> norms_;
  nn::Affine out_;
};

nn::TrainingTrace fc_train(FcNet& net, const nn::SeqDataset& train,
                           const nn::SeqDataset* validation, const nn::TrainConfig& cfg);

}  // namespace pehl
