#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pehl/nn/layers.hpp"
#include "pehl/nn/trainer.hpp"

namespace pehl {

// Sequence tensors for a batch of B sequences of length T are stored as
// (T*B) x units matrices with row t*B + b.

struct LstmLayer {
  nn::Param w;  // in x 4S, gate blocks [i f g o]
  nn::Param u;  // S x 4S
  nn::Param b;  // 1 x 4S
};

/// Stacked LSTM with forget gates and per-sequence (variational) dropout
/// masks on the input and recurrent connections.
struct LstmStack {
  std::vector<LstmLayer> layers;
  int state = 0;
  double input_dropout = 0.0;
  double recurrent_dropout = 0.0;
  bool concat_layers = true;  // output all layers' states, else the last only

  static LstmStack init(int input_dim, int state, int n_layers, double forget_bias, Rng& rng);
  int output_dim() const;

  struct LayerCache {
    nn::Matrix x;         // masked input
    nn::Matrix in_mask;   // B x in, reused at every timestep
    nn::Matrix rec_mask;  // B x S, reused at every timestep
    nn::Matrix gates;     // activated gates
    nn::Matrix c;
    nn::Matrix tanh_c;
    nn::Matrix h;
    nn::Matrix h_prev;    // masked recurrent input
  };
  struct Cache {
    std::vector<LayerCache> layers;
    int batch = 0;
    int steps = 0;
  };
  nn::Matrix forward(const nn::Matrix& x, int batch, nn::Mode mode, Rng& rng, Cache& cache) const;
  // Accumulates parameter gradients and returns d x.
  nn::Matrix backward(const nn::Matrix& d_out, const Cache& cache);
};

struct AttentionTrace {
  std::vector<double> alpha;
  std::vector<double> alpha_raw;
  nn::RowVector h_bar;
  nn::Matrix h_seq;  // T x state_size
};

/// Single-sequence attention: a shared dense on [h_i, h_bar], time-distributed
/// batch norm, tanh, dropout, dense to one logit, softmax over time.
struct AttentionBlock {
  nn::Param w0;      // D x S, applied to h_i
  nn::Param w1;      // D x S, applied to h_bar
  nn::Param bias;    // 1 x S
  nn::BatchNorm norm;
  nn::Param v;       // S x 1
  nn::Param v_bias;  // 1 x 1, cancels in the softmax
  double dropout = 0.0;

  static AttentionBlock init(int state_size, int units, Rng& rng);

  struct Cache {
    int batch = 0;
    int steps = 0;
    nn::Matrix h;
    nn::Matrix h_bar;  // B x D
    nn::BatchNorm::Cache bn;
    nn::Matrix q;      // tanh output
    nn::Matrix mask;
    nn::Matrix q_drop;
    nn::Matrix alpha_raw;  // B x T
    nn::Matrix alpha;      // B x T
  };

  // Returns the B x D context sum_t alpha_t h_t.
  nn::Matrix forward(const nn::Matrix& h, int batch, nn::Mode mode, Rng& rng, Cache& cache) const;
  // Returns d h for the (T*B) x D input.
  nn::Matrix backward(const nn::Matrix& d_context, const Cache& cache);
};

// Infer-mode attention over one sequence of states (T x D).
AttentionTrace attention_weights(const nn::Matrix& h_seq, const AttentionBlock& block);
nn::RowVector attention_output(const AttentionTrace& trace);

struct AttnConfig {
  int embed_dim = 16;
  int state = 256;
  int lstm_layers = 3;
  double embed_dropout = 0.2;
  double embed_l2 = 1e-4;
  double lstm_dropout = 0.5;  // input and recurrent
  double lstm_l2 = 1e-5;      // W and U
  double attn_dropout = 0.5;
  double dense_l2 = 1e-4;     // attention and head dense layers
  double head_dropout = 0.5;
  double forget_bias = 1.0;
  bool concat_layers = true;

  nlohmann::json to_json() const;
  static AttnConfig from_json(const nlohmann::json& j);
  bool operator==(const AttnConfig&) const = default;
};

class AttnLstmNet {
 public:
  AttnLstmNet(const AttnConfig& config, std::uint64_t seed);

  const AttnConfig& config() const { return cfg_; }
  int state_size() const { return lstm_.output_dim(); }

  std::vector<double> forward(std::span<const nn::ByteSeq> batch, nn::Mode mode, Rng& rng) const;
  double loss_and_gradients(std::span<const nn::ByteSeq> batch, std::span<const int> labels,
                            nn::Mode mode, Rng& rng);
  std::vector<double> predict(std::span<const nn::ByteSeq> batch) const;

  // Replaces the batch-norm running statistics by population statistics
  // measured over data (>= 2 sequences) without dropout.
  void refresh_norm_statistics(std::span<const nn::ByteSeq> data, int batch_size);

  // Hidden states of one embedded sequence (T x embed_dim) -> T x state_size.
  nn::Matrix lstm_forward(const nn::Matrix& embedded, nn::Mode mode, Rng& rng) const;
  AttentionTrace trace(nn::ByteSeq seq) const;

  nn::ParamList parameters();
  std::vector<nn::RowVector*> buffers();

  nn::Embedding& embedding() { return embedding_; }
  LstmStack& lstm() { return lstm_; }
  AttentionBlock& attention() { return attn_; }
  const AttentionBlock& attention() const { return attn_; }

 private:
  struct Pass;
  nn::Matrix run(std::span<const nn::ByteSeq> batch, nn::Mode mode, Rng& rng, Pass& pass) const;
  double penalty(bool accumulate);

  AttnConfig cfg_;
  nn::Embedding embedding_;
  LstmStack lstm_;
  AttentionBlock attn_;
  nn::Affine head_;
  nn::BatchNorm head_norm_;
  nn::Affine out_;
};

nn::TrainingTrace attn_lstm_train(AttnLstmNet& net, const nn::SeqDataset& train,
                                  const nn::SeqDataset* validation, const nn::TrainConfig& cfg);

struct ImportanceEntry {
  int position = 0;
  double score = 0.0;
  std::vector<std::string> fields32;  // schema fields covering the position
  std::vector<std::string> fields64;
};

struct ImportanceReport {
  std::vector<double> mean_alpha;  // one per position

  // Positions by descending score, ties by position.
  std::vector<ImportanceEntry> top(std::size_t k) const;
  void write_tsv(std::ostream& out, std::size_t k) const;
  nlohmann::json to_json(std::size_t k) const;
};

/// Mean infer-mode attention weight per position over the dataset.
ImportanceReport attention_importance(const AttnLstmNet& net, std::span<const nn::ByteSeq> data);

}  // namespace pehl
