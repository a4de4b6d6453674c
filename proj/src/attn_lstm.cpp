#include "pehl/attn_lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pehl/error.hpp"
#include "pehl/header_features.hpp"

namespace pehl {

using nn::Matrix;
using nn::Mode;
using nn::RowVector;

namespace {

using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Elementwise 1 / (1 + e^-x), vectorized; saturates to 0 or 1 without NaN.
template <class Derived>
Matrix logistic(const Eigen::MatrixBase<Derived>& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

// Rows t*B .. t*B+B-1 of a sequence tensor.
inline auto step_rows(Matrix& m, int t, int batch) {
  return m.middleRows(static_cast<Eigen::Index>(t) * batch, batch);
}
inline auto step_rows(const Matrix& m, int t, int batch) {
  return m.middleRows(static_cast<Eigen::Index>(t) * batch, batch);
}

}  // namespace

LstmStack LstmStack::init(int input_dim, int state, int n_layers, double forget_bias, Rng& rng) {
  if (input_dim < 1 || state < 1 || n_layers < 1) throw DataError("lstm: dimensions must be positive");
  LstmStack s;
  s.state = state;
  int in = input_dim;
  for (int l = 0; l < n_layers; ++l) {
    const std::string name = "lstm" + std::to_string(l + 1);
    Matrix b = Matrix::Zero(1, 4 * state);
    b.middleCols(state, state).setConstant(forget_bias);
    s.layers.push_back(LstmLayer{nn::Param(name + ".W", nn::glorot_uniform(in, 4 * state, rng)),
                                 nn::Param(name + ".U", nn::glorot_uniform(state, 4 * state, rng)),
                                 nn::Param(name + ".b", std::move(b))});
    in = state;
  }
  return s;
}

int LstmStack::output_dim() const {
  return concat_layers ? state * static_cast<int>(layers.size()) : state;
}

Matrix LstmStack::forward(const Matrix& x, int batch, Mode mode, Rng& rng, Cache& cache) const {
  if (batch < 1 || x.rows() % batch != 0 || x.rows() == 0) throw DataError("lstm: bad sequence shape");
  const int steps = static_cast<int>(x.rows() / batch);
  const int s = state;
  cache.batch = batch;
  cache.steps = steps;
  cache.layers.assign(layers.size(), {});
  Matrix out(x.rows(), output_dim());

  const Matrix* layer_in = &x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LstmLayer& p = layers[l];
    LayerCache& lc = cache.layers[l];
    const Eigen::Index in_dim = layer_in->cols();
    if (in_dim != p.w.value.rows()) throw DataError("lstm: input width mismatch");
    lc.in_mask = nn::dropout_mask(batch, in_dim, input_dropout, mode, rng);
    lc.rec_mask = nn::dropout_mask(batch, s, recurrent_dropout, mode, rng);
    lc.x.resize(x.rows(), in_dim);
    for (int t = 0; t < steps; ++t) {
      step_rows(lc.x, t, batch) = step_rows(*layer_in, t, batch).cwiseProduct(lc.in_mask);
    }
    lc.gates.noalias() = lc.x * p.w.value;
    lc.gates.rowwise() += p.b.value.row(0);
    lc.c.resize(x.rows(), s);
    lc.tanh_c.resize(x.rows(), s);
    lc.h.resize(x.rows(), s);
    lc.h_prev.resize(x.rows(), s);

    for (int t = 0; t < steps; ++t) {
      auto hp = step_rows(lc.h_prev, t, batch);
      if (t == 0) {
        hp.setZero();
      } else {
        hp = step_rows(lc.h, t - 1, batch).cwiseProduct(lc.rec_mask);
      }
      auto z = step_rows(lc.gates, t, batch);
      z.noalias() += hp * p.u.value;
      // Gate blocks [i f g o]; tanh(x) = 2 sigmoid(2x) - 1.
      z.leftCols(2 * s) = logistic(z.leftCols(2 * s));
      z.middleCols(2 * s, s) = 2.0 * logistic(2.0 * z.middleCols(2 * s, s)).array() - 1.0;
      z.rightCols(s) = logistic(z.rightCols(s));
      auto c = step_rows(lc.c, t, batch);
      if (t == 0) {
        c = z.leftCols(s).cwiseProduct(z.middleCols(2 * s, s));
      } else {
        c = z.middleCols(s, s).cwiseProduct(step_rows(lc.c, t - 1, batch)) +
            z.leftCols(s).cwiseProduct(z.middleCols(2 * s, s));
      }
      auto tc = step_rows(lc.tanh_c, t, batch);
      tc = 2.0 * logistic(2.0 * c).array() - 1.0;
      step_rows(lc.h, t, batch) = z.rightCols(s).cwiseProduct(tc);
    }
    if (concat_layers) out.middleCols(static_cast<Eigen::Index>(l) * s, s) = lc.h;
    layer_in = &lc.h;
  }
  if (!concat_layers) out = cache.layers.back().h;
  return out;
}

Matrix LstmStack::backward(const Matrix& d_out, const Cache& cache) {
  const int batch = cache.batch;
  const int steps = cache.steps;
  const int s = state;
  Matrix d_from_above;
  for (std::size_t l = layers.size(); l-- > 0;) {
    LstmLayer& p = layers[l];
    const LayerCache& lc = cache.layers[l];
    Matrix dh_seq;
    if (concat_layers) {
      dh_seq = d_out.middleCols(static_cast<Eigen::Index>(l) * s, s);
      if (d_from_above.size() > 0) dh_seq += d_from_above;
    } else {
      dh_seq = l + 1 == layers.size() ? d_out : d_from_above;
    }

    Matrix dz(lc.gates.rows(), 4 * s);
    Matrix dh_next = Matrix::Zero(batch, s);
    Matrix dc_next = Matrix::Zero(batch, s);
    for (int t = steps - 1; t >= 0; --t) {
      const auto gates = step_rows(lc.gates, t, batch).array();
      const auto i = gates.leftCols(s);
      const auto f = gates.middleCols(s, s);
      const auto g = gates.middleCols(2 * s, s);
      const auto o = gates.rightCols(s);
      const auto tc = step_rows(lc.tanh_c, t, batch).array();
      const RowArray dh = step_rows(dh_seq, t, batch).array() + dh_next.array();
      const RowArray dc = dh * o * (1.0 - tc.square()) + dc_next.array();
      auto dzt = step_rows(dz, t, batch).array();
      dzt.leftCols(s) = dc * g * i * (1.0 - i);
      if (t == 0) {
        dzt.middleCols(s, s).setZero();
      } else {
        dzt.middleCols(s, s) = dc * step_rows(lc.c, t - 1, batch).array() * f * (1.0 - f);
      }
      dzt.middleCols(2 * s, s) = dc * i * (1.0 - g.square());
      dzt.rightCols(s) = dh * tc * o * (1.0 - o);
      dc_next = (dc * f).matrix();
      dh_next.noalias() = step_rows(dz, t, batch) * p.u.value.transpose();
      dh_next.array() *= lc.rec_mask.array();
    }
    p.u.grad.noalias() += lc.h_prev.transpose() * dz;
    p.w.grad.noalias() += lc.x.transpose() * dz;
    p.b.grad.row(0) += dz.colwise().sum();
    Matrix dx = dz * p.w.value.transpose();
    for (int t = 0; t < steps; ++t) step_rows(dx, t, batch).array() *= lc.in_mask.array();
    d_from_above = std::move(dx);
  }
  return d_from_above;
}

AttentionBlock AttentionBlock::init(int state_size, int units, Rng& rng) {
  AttentionBlock a;
  const Matrix w = nn::glorot_uniform(2 * state_size, units, rng);
  a.w0 = nn::Param("attn.W0", w.topRows(state_size));
  a.w1 = nn::Param("attn.W1", w.bottomRows(state_size));
  a.bias = nn::Param("attn.b", Matrix::Zero(1, units));
  a.norm = nn::BatchNorm::init(units, "attn.bn");
  a.v = nn::Param("attn.v", nn::glorot_uniform(units, 1, rng));
  a.v_bias = nn::Param("attn.v_b", Matrix::Zero(1, 1));
  return a;
}

Matrix AttentionBlock::forward(const Matrix& h, int batch, Mode mode, Rng& rng, Cache& cache) const {
  if (batch < 1 || h.rows() % batch != 0 || h.rows() == 0) throw DataError("attention: bad shape");
  const int steps = static_cast<int>(h.rows() / batch);
  cache.batch = batch;
  cache.steps = steps;
  cache.h = h;
  cache.h_bar = Matrix::Zero(batch, h.cols());
  for (int t = 0; t < steps; ++t) cache.h_bar += step_rows(h, t, batch);
  cache.h_bar /= static_cast<double>(steps);

  Matrix p = h * w0.value;
  Matrix hb = cache.h_bar * w1.value;
  hb.rowwise() += bias.value.row(0);
  for (int t = 0; t < steps; ++t) step_rows(p, t, batch) += hb;
  cache.q = norm.forward(p, mode, &cache.bn).array().tanh().matrix();
  cache.mask = nn::dropout_mask(cache.q.rows(), cache.q.cols(), dropout, mode, rng);
  cache.q_drop = cache.q.cwiseProduct(cache.mask);
  const Matrix logits = cache.q_drop * v.value;

  cache.alpha_raw.resize(batch, steps);
  cache.alpha.resize(batch, steps);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < steps; ++t) {
      cache.alpha_raw(b, t) = logits(static_cast<Eigen::Index>(t) * batch + b, 0) + v_bias.value(0, 0);
    }
    const double mx = cache.alpha_raw.row(b).maxCoeff();
    double total = 0.0;
    for (int t = 0; t < steps; ++t) {
      cache.alpha(b, t) = std::exp(cache.alpha_raw(b, t) - mx);
      total += cache.alpha(b, t);
    }
    cache.alpha.row(b) /= total;
  }

  Matrix context = Matrix::Zero(batch, h.cols());
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) {
      context.row(b) += cache.alpha(b, t) * h.row(static_cast<Eigen::Index>(t) * batch + b);
    }
  }
  return context;
}

Matrix AttentionBlock::backward(const Matrix& d_context, const Cache& cache) {
  const int batch = cache.batch;
  const int steps = cache.steps;
  Matrix dh = Matrix::Zero(cache.h.rows(), cache.h.cols());
  Matrix dalpha(batch, steps);
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) {
      const Eigen::Index row = static_cast<Eigen::Index>(t) * batch + b;
      dalpha(b, t) = d_context.row(b).dot(cache.h.row(row));
      dh.row(row) += cache.alpha(b, t) * d_context.row(b);
    }
  }
  Matrix dlogits(cache.h.rows(), 1);
  for (int b = 0; b < batch; ++b) {
    const double inner = cache.alpha.row(b).dot(dalpha.row(b));
    for (int t = 0; t < steps; ++t) {
      dlogits(static_cast<Eigen::Index>(t) * batch + b, 0) =
          cache.alpha(b, t) * (dalpha(b, t) - inner);
    }
  }
  v.grad.noalias() += cache.q_drop.transpose() * dlogits;
  v_bias.grad(0, 0) += dlogits.sum();
  Matrix dq = (dlogits * v.value.transpose()).cwiseProduct(cache.mask);
  dq.array() *= 1.0 - cache.q.array().square();
  const Matrix dp = norm.backward(dq, cache.bn);

  w0.grad.noalias() += cache.h.transpose() * dp;
  dh.noalias() += dp * w0.value.transpose();
  Matrix dp_sum = Matrix::Zero(batch, dp.cols());
  for (int t = 0; t < steps; ++t) dp_sum += step_rows(dp, t, batch);
  bias.grad.row(0) += dp_sum.colwise().sum();
  w1.grad.noalias() += cache.h_bar.transpose() * dp_sum;
  const Matrix dh_bar = dp_sum * w1.value.transpose() / static_cast<double>(steps);
  for (int t = 0; t < steps; ++t) step_rows(dh, t, batch) += dh_bar;
  return dh;
}

AttentionTrace attention_weights(const Matrix& h_seq, const AttentionBlock& block) {
  AttentionBlock::Cache cache;
  Rng unused(0);
  block.forward(h_seq, 1, Mode::infer, unused, cache);
  AttentionTrace tr;
  tr.alpha.assign(cache.alpha.data(), cache.alpha.data() + cache.alpha.size());
  tr.alpha_raw.assign(cache.alpha_raw.data(), cache.alpha_raw.data() + cache.alpha_raw.size());
  tr.h_bar = cache.h_bar.row(0);
  tr.h_seq = h_seq;
  return tr;
}

RowVector attention_output(const AttentionTrace& trace) {
  RowVector out = RowVector::Zero(trace.h_seq.cols());
  for (std::size_t t = 0; t < trace.alpha.size(); ++t) {
    out += trace.alpha[t] * trace.h_seq.row(static_cast<Eigen::Index>(t));
  }
  return out;
}

nlohmann::json AttnConfig::to_json() const {
  return {{"embed_dim", embed_dim},       {"state", state},
          {"lstm_layers", lstm_layers},   {"embed_dropout", embed_dropout},
          {"embed_l2", embed_l2},         {"lstm_dropout", lstm_dropout},
          {"lstm_l2", lstm_l2},           {"attn_dropout", attn_dropout},
          {"dense_l2", dense_l2},         {"head_dropout", head_dropout},
          {"forget_bias", forget_bias},   {"concat_layers", concat_layers}};
}

AttnConfig AttnConfig::from_json(const nlohmann::json& j) {
  AttnConfig c;
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.state = j.value("state", c.state);
  c.lstm_layers = j.value("lstm_layers", c.lstm_layers);
  c.embed_dropout = j.value("embed_dropout", c.embed_dropout);
  c.embed_l2 = j.value("embed_l2", c.embed_l2);
  c.lstm_dropout = j.value("lstm_dropout", c.lstm_dropout);
  c.lstm_l2 = j.value("lstm_l2", c.lstm_l2);
  c.attn_dropout = j.value("attn_dropout", c.attn_dropout);
  c.dense_l2 = j.value("dense_l2", c.dense_l2);
  c.head_dropout = j.value("head_dropout", c.head_dropout);
  c.forget_bias = j.value("forget_bias", c.forget_bias);
  c.concat_layers = j.value("concat_layers", c.concat_layers);
  return c;
}

struct AttnLstmNet::Pass {
  int batch = 0;
  int steps = 0;
  Matrix emb_mask;  // B x T
  LstmStack::Cache lstm;
  AttentionBlock::Cache attn;
  Matrix context;
  nn::BatchNorm::Cache head_bn;
  Matrix head_q;
  Matrix head_mask;
  Matrix head_drop;
};

AttnLstmNet::AttnLstmNet(const AttnConfig& config, std::uint64_t seed) : cfg_(config) {
  Rng rng(derive_seed(seed, 0x61746e));
  embedding_ = nn::Embedding::init(cfg_.embed_dim, rng);
  lstm_ = LstmStack::init(cfg_.embed_dim, cfg_.state, cfg_.lstm_layers, cfg_.forget_bias, rng);
  lstm_.input_dropout = cfg_.lstm_dropout;
  lstm_.recurrent_dropout = cfg_.lstm_dropout;
  lstm_.concat_layers = cfg_.concat_layers;
  const int d = lstm_.output_dim();
  attn_ = AttentionBlock::init(d, cfg_.state, rng);
  attn_.dropout = cfg_.attn_dropout;
  head_ = nn::Affine::init(d, d, rng, "head");
  head_norm_ = nn::BatchNorm::init(d, "head.bn");
  out_ = nn::Affine::init(d, 1, rng, "output");
}

nn::ParamList AttnLstmNet::parameters() {
  nn::ParamList out{&embedding_.table};
  for (auto& l : lstm_.layers) out.insert(out.end(), {&l.w, &l.u, &l.b});
  out.insert(out.end(), {&attn_.w0, &attn_.w1, &attn_.bias, &attn_.norm.gamma, &attn_.norm.beta,
                         &attn_.v, &attn_.v_bias, &head_.weight, &head_.bias, &head_norm_.gamma,
                         &head_norm_.beta, &out_.weight, &out_.bias});
  return out;
}

std::vector<RowVector*> AttnLstmNet::buffers() {
  return {&attn_.norm.running_mean, &attn_.norm.running_var, &head_norm_.running_mean,
          &head_norm_.running_var};
}

Matrix AttnLstmNet::run(std::span<const nn::ByteSeq> batch, Mode mode, Rng& rng, Pass& pass) const {
  if (batch.empty()) throw DataError("attention lstm: empty batch");
  const int b_n = static_cast<int>(batch.size());
  const int steps = static_cast<int>(batch[0].size());
  if (steps < 1) throw DataError("attention lstm: empty sequence");
  for (const auto& seq : batch) {
    if (static_cast<int>(seq.size()) != steps) throw DataError("attention lstm: ragged batch");
  }
  pass.batch = b_n;
  pass.steps = steps;
  pass.emb_mask = nn::dropout_mask(b_n, steps, cfg_.embed_dropout, mode, rng);
  Matrix x(static_cast<Eigen::Index>(steps) * b_n, cfg_.embed_dim);
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < b_n; ++b) {
      x.row(static_cast<Eigen::Index>(t) * b_n + b) =
          embedding_.table.value.row(batch[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)]) *
          pass.emb_mask(b, t);
    }
  }
  const Matrix h = lstm_.forward(x, b_n, mode, rng, pass.lstm);
  pass.context = attn_.forward(h, b_n, mode, rng, pass.attn);
  pass.head_q = head_norm_.forward(head_.forward(pass.context), mode, &pass.head_bn)
                    .array().tanh().matrix();
  pass.head_mask = nn::dropout_mask(pass.head_q.rows(), pass.head_q.cols(), cfg_.head_dropout, mode, rng);
  pass.head_drop = pass.head_q.cwiseProduct(pass.head_mask);
  return out_.forward(pass.head_drop);
}

std::vector<double> AttnLstmNet::forward(std::span<const nn::ByteSeq> batch, Mode mode, Rng& rng) const {
  Pass pass;
  const Matrix logits = run(batch, mode, rng, pass);
  std::vector<double> scores(batch.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = nn::sigmoid(logits(static_cast<Eigen::Index>(i), 0));
  return scores;
}

std::vector<double> AttnLstmNet::predict(std::span<const nn::ByteSeq> batch) const {
  std::vector<double> scores;
  scores.reserve(batch.size());
  Rng unused(0);
  constexpr std::size_t kChunk = 64;
  for (std::size_t lo = 0; lo < batch.size(); lo += kChunk) {
    const auto part = batch.subspan(lo, std::min(kChunk, batch.size() - lo));
    const auto s = forward(part, Mode::infer, unused);
    scores.insert(scores.end(), s.begin(), s.end());
  }
  return scores;
}

double AttnLstmNet::penalty(bool accumulate) {
  auto l2 = [accumulate](nn::Param& p, double w) {
    return accumulate ? nn::add_l2(p, w) : w * p.value.squaredNorm();
  };
  double total = l2(embedding_.table, cfg_.embed_l2);
  for (auto& l : lstm_.layers) total += l2(l.w, cfg_.lstm_l2) + l2(l.u, cfg_.lstm_l2);
  total += l2(attn_.w0, cfg_.dense_l2) + l2(attn_.w1, cfg_.dense_l2) + l2(attn_.v, cfg_.dense_l2);
  total += l2(head_.weight, cfg_.dense_l2);
  return total;
}

double AttnLstmNet::loss_and_gradients(std::span<const nn::ByteSeq> batch, std::span<const int> labels,
                                       Mode mode, Rng& rng) {
  if (labels.size() != batch.size()) throw DataError("attention lstm: labels and batch differ in length");
  nn::zero_grads(parameters());
  Pass pass;
  const Matrix logits = run(batch, mode, rng, pass);
  const auto b_n = static_cast<Eigen::Index>(batch.size());
  const double inv_b = 1.0 / static_cast<double>(b_n);
  double loss = 0.0;
  Matrix dlogit(b_n, 1);
  for (Eigen::Index i = 0; i < b_n; ++i) {
    const double z = logits(i, 0);
    const double y = labels[static_cast<std::size_t>(i)];
    loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y * z;
    dlogit(i, 0) = (nn::sigmoid(z) - y) * inv_b;
  }
  loss *= inv_b;

  Matrix dq = out_.backward(pass.head_drop, dlogit).cwiseProduct(pass.head_mask);
  dq.array() *= 1.0 - pass.head_q.array().square();
  const Matrix du = head_norm_.backward(dq, pass.head_bn);
  const Matrix dctx = head_.backward(pass.context, du);
  const Matrix dh = attn_.backward(dctx, pass.attn);
  const Matrix dx = lstm_.backward(dh, pass.lstm);
  for (int t = 0; t < pass.steps; ++t) {
    for (int b = 0; b < pass.batch; ++b) {
      const double m = pass.emb_mask(b, t);
      if (m == 0.0) continue;
      embedding_.table.grad.row(batch[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)]) +=
          m * dx.row(static_cast<Eigen::Index>(t) * pass.batch + b);
    }
  }
  loss += penalty(true);
  if (mode == Mode::train) {
    attn_.norm.update_running(pass.attn.bn);
    head_norm_.update_running(pass.head_bn);
  }
  return loss;
}

void AttnLstmNet::refresh_norm_statistics(std::span<const nn::ByteSeq> data, int batch_size) {
  nn::NormStatistics attn_stats;
  nn::NormStatistics head_stats;
  Rng unused(0);
  for (const auto& [lo, hi] : nn::batch_ranges(data.size(), batch_size)) {
    Pass pass;
    run(data.subspan(lo, hi - lo), Mode::population, unused, pass);
    attn_stats.add(pass.attn.bn, static_cast<Eigen::Index>(hi - lo) * pass.steps);
    head_stats.add(pass.head_bn, static_cast<Eigen::Index>(hi - lo));
  }
  attn_stats.apply(attn_.norm);
  head_stats.apply(head_norm_);
}

Matrix AttnLstmNet::lstm_forward(const Matrix& embedded, Mode mode, Rng& rng) const {
  LstmStack::Cache cache;
  return lstm_.forward(embedded, 1, mode, rng, cache);
}

AttentionTrace AttnLstmNet::trace(nn::ByteSeq seq) const {
  if (seq.empty()) throw DataError("attention lstm: empty sequence");
  Rng unused(0);
  return attention_weights(lstm_forward(embedding_.forward(seq), Mode::infer, unused), attn_);
}

nn::TrainingTrace attn_lstm_train(AttnLstmNet& net, const nn::SeqDataset& train,
                                  const nn::SeqDataset* validation, const nn::TrainConfig& cfg) {
  return nn::train_network(net, train, validation, cfg);
}

std::vector<ImportanceEntry> ImportanceReport::top(std::size_t k) const {
  std::vector<int> order(mean_alpha.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return mean_alpha[static_cast<std::size_t>(a)] > mean_alpha[static_cast<std::size_t>(b)];
  });
  order.resize(std::min(k, order.size()));
  std::vector<ImportanceEntry> out;
  for (int pos : order) {
    out.push_back({pos, mean_alpha[static_cast<std::size_t>(pos)],
                   fields_covering(static_cast<std::size_t>(pos), false),
                   fields_covering(static_cast<std::size_t>(pos), true)});
  }
  return out;
}

namespace {
std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : "|") + x;
  return s;
}
}  // namespace

void ImportanceReport::write_tsv(std::ostream& out, std::size_t k) const {
  const auto old = out.precision(17);
  out << "rank\tposition\tmean_alpha\tfield32\tfield64\n";
  int rank = 1;
  for (const auto& e : top(k)) {
    out << rank++ << '\t' << e.position << '\t' << e.score << '\t' << join(e.fields32) << '\t'
        << join(e.fields64) << '\n';
  }
  out.precision(old);
}

nlohmann::json ImportanceReport::to_json(std::size_t k) const {
  nlohmann::json ranked = nlohmann::json::array();
  for (const auto& e : top(k)) {
    ranked.push_back({{"position", e.position}, {"mean_alpha", e.score},
                      {"fields32", e.fields32}, {"fields64", e.fields64}});
  }
  return {{"mean_alpha", mean_alpha}, {"top", ranked}};
}

ImportanceReport attention_importance(const AttnLstmNet& net, std::span<const nn::ByteSeq> data) {
  if (data.empty()) throw DataError("attention importance of an empty dataset");
  const std::size_t steps = data[0].size();
  // Neumaier-compensated sums keep the mean independent of accumulation order
  // to within the final rounding.
  std::vector<double> sum(steps, 0.0);
  std::vector<double> comp(steps, 0.0);
  for (const auto& seq : data) {
    if (seq.size() != steps) throw DataError("attention importance: ragged dataset");
    const AttentionTrace tr = net.trace(seq);
    for (std::size_t t = 0; t < steps; ++t) {
      const double x = tr.alpha[t];
      const double s = sum[t] + x;
      comp[t] += std::abs(sum[t]) >= std::abs(x) ? (sum[t] - s) + x : (x - s) + sum[t];
      sum[t] = s;
    }
  }
  ImportanceReport rep;
  rep.mean_alpha.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    rep.mean_alpha[t] = (sum[t] + comp[t]) / static_cast<double>(data.size());
  }
  return rep;
}

}  // namespace pehl
