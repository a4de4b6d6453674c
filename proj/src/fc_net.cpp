#include "pehl/fc_net.hpp"

#include <cmath>

#include "pehl/error.hpp"

namespace pehl {

using nn::Matrix;
using nn::Mode;

nlohmann::json FcConfig::to_json() const {
  return {{"seq_len", seq_len},         {"embed_dim", embed_dim},
          {"hidden", hidden},           {"hidden_layers", hidden_layers},
          {"embed_dropout", embed_dropout}, {"hidden_dropout", hidden_dropout},
          {"embed_l2", embed_l2},       {"hidden_l2", hidden_l2},
          {"first_l1", first_l1},       {"decov_weight", decov_weight}};
}

FcConfig FcConfig::from_json(const nlohmann::json& j) {
  FcConfig c;
  c.seq_len = j.value("seq_len", c.seq_len);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.embed_dropout = j.value("embed_dropout", c.embed_dropout);
  c.hidden_dropout = j.value("hidden_dropout", c.hidden_dropout);
  c.embed_l2 = j.value("embed_l2", c.embed_l2);
  c.hidden_l2 = j.value("hidden_l2", c.hidden_l2);
  c.first_l1 = j.value("first_l1", c.first_l1);
  c.decov_weight = j.value("decov_weight", c.decov_weight);
  return c;
}

struct FcNet::Pass {
  Matrix emb_mask;                             // batch x seq_len
  std::vector<Matrix> inputs;                  // input to each hidden layer
  std::vector<nn::BatchNorm::Cache> bn;
  std::vector<Matrix> act;                     // ELU outputs
  std::vector<Matrix> mask;                    // hidden dropout masks
  Matrix last;                                 // input to the output layer
  double decov_loss = 0.0;
  Matrix decov_grad;
};

FcNet::FcNet(const FcConfig& config, std::uint64_t seed) : cfg_(config) {
  if (cfg_.seq_len < 1 || cfg_.embed_dim < 1 || cfg_.hidden < 1 || cfg_.hidden_layers < 1) {
    throw DataError("fc: dimensions must be positive");
  }
  Rng rng(derive_seed(seed, 0x6663));
  embedding_ = nn::Embedding::init(cfg_.embed_dim, rng);
  int in = cfg_.seq_len * cfg_.embed_dim;
  for (int k = 0; k < cfg_.hidden_layers; ++k) {
    const std::string name = "dense" + std::to_string(k + 1);
    dense_.push_back(nn::Affine::init(in, cfg_.hidden, rng, name));
    norms_.push_back(nn::BatchNorm::init(cfg_.hidden, name + ".bn"));
    in = cfg_.hidden;
  }
  out_ = nn::Affine::init(in, 1, rng, "output");
}

nn::ParamList FcNet::parameters() {
  nn::ParamList out{&embedding_.table};
  for (std::size_t k = 0; k < dense_.size(); ++k) {
    out.insert(out.end(), {&dense_[k].weight, &dense_[k].bias, &norms_[k].gamma, &norms_[k].beta});
  }
  out.insert(out.end(), {&out_.weight, &out_.bias});
  return out;
}

std::vector<nn::RowVector*> FcNet::buffers() {
  std::vector<nn::RowVector*> out;
  for (auto& bn : norms_) out.insert(out.end(), {&bn.running_mean, &bn.running_var});
  return out;
}

Matrix FcNet::run(std::span<const nn::ByteSeq> batch, Mode mode, Rng& rng, Pass& pass) const {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const int t_len = cfg_.seq_len;
  const int e = cfg_.embed_dim;
  pass.emb_mask = nn::dropout_mask(b, t_len, cfg_.embed_dropout, mode, rng);
  Matrix x(b, static_cast<Eigen::Index>(t_len) * e);
  for (Eigen::Index i = 0; i < b; ++i) {
    const nn::ByteSeq seq = batch[static_cast<std::size_t>(i)];
    if (seq.size() != static_cast<std::size_t>(t_len)) {
      throw DataError("fc: input length " + std::to_string(seq.size()) + ", expected " +
                      std::to_string(t_len));
    }
    for (int t = 0; t < t_len; ++t) {
      x.row(i).segment(static_cast<Eigen::Index>(t) * e, e) =
          embedding_.table.value.row(seq[static_cast<std::size_t>(t)]) * pass.emb_mask(i, t);
    }
  }
  pass.inputs.clear();
  pass.bn.assign(dense_.size(), {});
  pass.act.clear();
  pass.mask.clear();
  pass.decov_loss = 0.0;
  for (std::size_t k = 0; k < dense_.size(); ++k) {
    pass.inputs.push_back(std::move(x));
    const Matrix a = dense_[k].forward(pass.inputs.back());
    const Matrix z = nn::elu(norms_[k].forward(a, mode, &pass.bn[k]));
    if (k + 1 == dense_.size() && cfg_.decov_weight != 0.0 && b >= 2) {
      auto d = nn::decov_penalty(z, cfg_.decov_weight);
      pass.decov_loss = d.loss;
      pass.decov_grad = std::move(d.grad);
    }
    pass.mask.push_back(nn::dropout_mask(z.rows(), z.cols(), cfg_.hidden_dropout, mode, rng));
    x = z.cwiseProduct(pass.mask.back());
    pass.act.push_back(z);
  }
  pass.last = x;
  return out_.forward(pass.last);
}

double FcNet::penalty_value() const {
  double p = cfg_.embed_l2 * embedding_.table.value.squaredNorm();
  for (std::size_t k = 0; k < dense_.size(); ++k) {
    p += cfg_.hidden_l2 * dense_[k].weight.value.squaredNorm();
  }
  p += cfg_.first_l1 * dense_[0].weight.value.cwiseAbs().sum();
  return p;
}

FcNet::Output FcNet::forward(std::span<const nn::ByteSeq> batch, Mode mode, Rng& rng) const {
  Pass pass;
  const Matrix logits = run(batch, mode, rng, pass);
  Output out;
  out.scores.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.scores[i] = nn::sigmoid(logits(static_cast<Eigen::Index>(i), 0));
  }
  out.penalty = penalty_value() + pass.decov_loss;
  return out;
}

std::vector<double> FcNet::predict(std::span<const nn::ByteSeq> batch) const {
  std::vector<double> scores;
  scores.reserve(batch.size());
  Rng unused(0);
  constexpr std::size_t kChunk = 256;
  for (std::size_t lo = 0; lo < batch.size(); lo += kChunk) {
    const auto part = batch.subspan(lo, std::min(kChunk, batch.size() - lo));
    Pass pass;
    const Matrix logits = run(part, Mode::infer, unused, pass);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) scores.push_back(nn::sigmoid(logits(i, 0)));
  }
  return scores;
}

void FcNet::refresh_norm_statistics(std::span<const nn::ByteSeq> data, int batch_size) {
  std::vector<nn::NormStatistics> stats(norms_.size());
  Rng unused(0);
  for (const auto& [lo, hi] : nn::batch_ranges(data.size(), batch_size)) {
    Pass pass;
    run(data.subspan(lo, hi - lo), Mode::population, unused, pass);
    for (std::size_t k = 0; k < norms_.size(); ++k) stats[k].add(pass.bn[k], static_cast<Eigen::Index>(hi - lo));
  }
  for (std::size_t k = 0; k < norms_.size(); ++k) stats[k].apply(norms_[k]);
}

double FcNet::loss_and_gradients(std::span<const nn::ByteSeq> batch, std::span<const int> labels,
                                 Mode mode, Rng& rng) {
  if (labels.size() != batch.size()) throw DataError("fc: labels and batch differ in length");
  nn::zero_grads(parameters());
  Pass pass;
  const Matrix logits = run(batch, mode, rng, pass);
  const auto b = static_cast<Eigen::Index>(batch.size());
  const double inv_b = 1.0 / static_cast<double>(b);

  double loss = 0.0;
  Matrix dlogit(b, 1);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double z = logits(i, 0);
    const double y = labels[static_cast<std::size_t>(i)];
    // softplus(z) - y z, stable on both tails.
    loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y * z;
    dlogit(i, 0) = (nn::sigmoid(z) - y) * inv_b;
  }
  loss *= inv_b;

  Matrix dx = out_.backward(pass.last, dlogit);
  for (std::size_t k = dense_.size(); k-- > 0;) {
    Matrix dz = dx.cwiseProduct(pass.mask[k]);
    if (k + 1 == dense_.size() && pass.decov_grad.size() > 0) dz += pass.decov_grad;
    const Matrix dn = nn::elu_backward(pass.act[k], dz);
    const Matrix da = norms_[k].backward(dn, pass.bn[k]);
    dx = dense_[k].backward(pass.inputs[k], da);
  }
  const int e = cfg_.embed_dim;
  for (Eigen::Index i = 0; i < b; ++i) {
    const nn::ByteSeq seq = batch[static_cast<std::size_t>(i)];
    for (int t = 0; t < cfg_.seq_len; ++t) {
      const double m = pass.emb_mask(i, t);
      if (m == 0.0) continue;
      embedding_.table.grad.row(seq[static_cast<std::size_t>(t)]) +=
          m * dx.row(i).segment(static_cast<Eigen::Index>(t) * e, e);
    }
  }

  loss += pass.decov_loss;
  loss += nn::add_l2(embedding_.table, cfg_.embed_l2);
  for (auto& d : dense_) loss += nn::add_l2(d.weight, cfg_.hidden_l2);
  loss += nn::add_l1(dense_[0].weight, cfg_.first_l1);

  if (mode == Mode::train) {
    for (std::size_t k = 0; k < norms_.size(); ++k) norms_[k].update_running(pass.bn[k]);
  }
  return loss;
}

nn::TrainingTrace fc_train(FcNet& net, const nn::SeqDataset& train,
                           const nn::SeqDataset* validation, const nn::TrainConfig& cfg) {
  return nn::train_network(net, train, validation, cfg);
}

}  // namespace pehl
