#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "grad_fixtures.hpp"
#include "pehl/attn_lstm.hpp"
#include "pehl/error.hpp"

using namespace pehl;
using nn::Matrix;
using pehl::testing::TinyBatch;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  return nn::uniform_matrix(r, c, scale, rng);
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Random attention block with non-trivial inference statistics.
AttentionBlock random_block(int d, int units, Rng& rng) {
  AttentionBlock a = AttentionBlock::init(d, units, rng);
  a.bias.value = random_matrix(1, units, rng);
  a.norm.gamma.value = random_matrix(1, units, rng).array() + 1.5;
  a.norm.beta.value = random_matrix(1, units, rng);
  a.norm.running_mean = random_matrix(1, units, rng);
  a.norm.running_var = random_matrix(1, units, rng).array().abs() + 0.1;
  return a;
}

AttnConfig tiny_config(int state, int layers) {
  AttnConfig c;
  c.embed_dim = 4;
  c.state = state;
  c.lstm_layers = layers;
  return c;
}

}  // namespace

TEST(Lstm, ZeroParametersGiveZeroStates) {
  Rng rng(1);
  LstmStack s = LstmStack::init(3, 4, 3, 1.0, rng);
  for (auto& l : s.layers) {
    l.w.value.setZero();
    l.u.value.setZero();
    l.b.value.setZero();
  }
  LstmStack::Cache cache;
  const Matrix h = s.forward(random_matrix(12, 3, rng), 2, nn::Mode::infer, rng, cache);
  EXPECT_EQ(h.rows(), 12);
  EXPECT_EQ(h.cols(), 12);
  EXPECT_EQ(h.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Lstm, ForgetBiasInitialisedToOne) {
  Rng rng(2);
  LstmStack s = LstmStack::init(3, 5, 2, 1.0, rng);
  for (const auto& l : s.layers) {
    EXPECT_EQ(l.b.value.middleCols(5, 5), Matrix::Ones(1, 5));
    EXPECT_EQ(l.b.value.leftCols(5), Matrix::Zero(1, 5));
    EXPECT_EQ(l.b.value.rightCols(10), Matrix::Zero(1, 10));
  }
  EXPECT_EQ(s.output_dim(), 10);
  s.concat_layers = false;
  EXPECT_EQ(s.output_dim(), 5);
}

TEST(Lstm, Causality) {
  AttnLstmNet net(tiny_config(3, 3), 4);
  Rng rng(3);
  const Matrix x2 = random_matrix(2, 4, rng);
  const Matrix h1 = net.lstm_forward(x2.topRows(1), nn::Mode::infer, rng);
  const Matrix h2 = net.lstm_forward(x2, nn::Mode::infer, rng);
  EXPECT_EQ(h1.row(0), h2.row(0));
}

TEST(Lstm, MatchesScalarRecurrenceOracle) {
  Rng rng(4);
  const int s = 3;
  const int steps = 5;
  const int in = 2;
  LstmStack stack = LstmStack::init(in, s, 2, 1.0, rng);
  for (auto& l : stack.layers) l.b.value = random_matrix(1, 4 * s, rng);
  const Matrix x = random_matrix(steps, in, rng, 2.0);
  LstmStack::Cache cache;
  const Matrix got = stack.forward(x, 1, nn::Mode::infer, rng, cache);

  std::vector<std::vector<double>> layer_in(steps);
  for (int t = 0; t < steps; ++t) layer_in[t] = {x(t, 0), x(t, 1)};
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const auto& p = stack.layers[l];
    std::vector<double> h(s, 0.0);
    std::vector<double> c(s, 0.0);
    std::vector<std::vector<double>> outs;
    for (int t = 0; t < steps; ++t) {
      const auto& xt = layer_in[static_cast<std::size_t>(t)];
      auto pre = [&](int gate, int j) {
        const int col = gate * s + j;
        double z = p.b.value(0, col);
        for (std::size_t k = 0; k < xt.size(); ++k) z += xt[k] * p.w.value(static_cast<Eigen::Index>(k), col);
        for (int k = 0; k < s; ++k) z += h[static_cast<std::size_t>(k)] * p.u.value(k, col);
        return z;
      };
      std::vector<double> nh(s);
      for (int j = 0; j < s; ++j) {
        const double ig = sig(pre(0, j));
        const double fg = sig(pre(1, j));
        const double gg = std::tanh(pre(2, j));
        const double og = sig(pre(3, j));
        c[static_cast<std::size_t>(j)] = fg * c[static_cast<std::size_t>(j)] + ig * gg;
        nh[static_cast<std::size_t>(j)] = og * std::tanh(c[static_cast<std::size_t>(j)]);
      }
      h = nh;
      outs.push_back(h);
      for (int j = 0; j < s; ++j) {
        EXPECT_NEAR(got(t, static_cast<Eigen::Index>(l) * s + j), h[static_cast<std::size_t>(j)], 1e-12);
      }
    }
    layer_in = outs;
  }
}

TEST(Lstm, VariationalMasksSharedAcrossTime) {
  Rng rng(5);
  LstmStack s = LstmStack::init(4, 6, 2, 1.0, rng);
  s.input_dropout = 0.5;
  s.recurrent_dropout = 0.5;
  const int batch = 3;
  const int steps = 7;
  LstmStack::Cache cache;
  s.forward(Matrix::Ones(batch * steps, 4), batch, nn::Mode::train, rng, cache);
  const auto& lc = cache.layers[0];
  for (int b = 0; b < batch; ++b) {
    EXPECT_EQ(lc.x.row(b), lc.x.row((steps - 1) * batch + b));
    EXPECT_EQ(lc.x.row(b), lc.in_mask.row(b));
  }
  EXPECT_GT((lc.in_mask.array() == 0.0).count(), 0);
  for (const auto& layer : cache.layers) {
    for (int t = 1; t < steps; ++t) {
      for (int b = 0; b < batch; ++b) {
        EXPECT_EQ(layer.h_prev.row(t * batch + b),
                  layer.h.row((t - 1) * batch + b).cwiseProduct(layer.rec_mask.row(b)));
      }
    }
  }
}

TEST(Attention, SingletonAndIdenticalStates) {
  Rng rng(6);
  const AttentionBlock a = random_block(4, 3, rng);
  const Matrix h1 = random_matrix(1, 4, rng);
  const auto t1 = attention_weights(h1, a);
  ASSERT_EQ(t1.alpha.size(), 1u);
  EXPECT_EQ(t1.alpha[0], 1.0);
  EXPECT_EQ(attention_output(t1), h1.row(0));

  const Matrix same = h1.replicate(5, 1);
  const auto t5 = attention_weights(same, a);
  for (double v : t5.alpha) EXPECT_NEAR(v, 0.2, 1e-15);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(attention_output(t5)(j), t5.h_bar(j), 1e-15);
}

TEST(Attention, HandComputedTwoSteps) {
  AttentionBlock a;
  a.w0 = nn::Param("W0", Matrix::Identity(2, 2));
  Matrix w1(2, 2);
  w1 << 0.5, 0.0, 0.0, -0.5;
  a.w1 = nn::Param("W1", w1);
  Matrix b(1, 2);
  b << 0.1, -0.2;
  a.bias = nn::Param("b", b);
  a.norm = nn::BatchNorm::init(2, "bn");
  a.norm.epsilon = 0.0;
  Matrix v(2, 1);
  v << 1.0, 2.0;
  a.v = nn::Param("v", v);
  a.v_bias = nn::Param("vb", Matrix::Zero(1, 1));
  Matrix h(2, 2);
  h << 1.0, 0.0, 0.0, 1.0;
  const auto tr = attention_weights(h, a);
  // h_bar = (0.5, 0.5); pre-activations (1.35, -0.45) and (0.35, 0.55).
  const double r1 = std::tanh(1.35) + 2.0 * std::tanh(-0.45);
  const double r2 = std::tanh(0.35) + 2.0 * std::tanh(0.55);
  EXPECT_NEAR(tr.alpha_raw[0], r1, 1e-15);
  EXPECT_NEAR(tr.alpha_raw[1], r2, 1e-15);
  EXPECT_NEAR(tr.alpha[0], std::exp(r1) / (std::exp(r1) + std::exp(r2)), 1e-15);
  EXPECT_NEAR(tr.alpha[1], std::exp(r2) / (std::exp(r1) + std::exp(r2)), 1e-15);
}

TEST(Attention, SimplexAndConvexHull) {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 1 + static_cast<int>(uniform_index(rng, 6));
    const int units = 1 + static_cast<int>(uniform_index(rng, 5));
    const int steps = 1 + static_cast<int>(uniform_index(rng, 30));
    const AttentionBlock a = random_block(d, units, rng);
    const Matrix h = random_matrix(steps, d, rng, 3.0);
    const auto tr = attention_weights(h, a);
    double sum = 0.0;
    for (double v : tr.alpha) {
      ASSERT_GE(v, 0.0);
      sum += v;
    }
    ASSERT_NEAR(sum, 1.0, 1e-9);
    const auto ctx = attention_output(tr);
    for (int j = 0; j < d; ++j) {
      ASSERT_GE(ctx(j), h.col(j).minCoeff() - 1e-12);
      ASSERT_LE(ctx(j), h.col(j).maxCoeff() + 1e-12);
    }
  }
}

TEST(Attention, OutputMatchesNaiveSum) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    AttentionTrace tr;
    const int steps = 1 + static_cast<int>(uniform_index(rng, 20));
    tr.h_seq = random_matrix(steps, 5, rng);
    double total = 0.0;
    for (int t = 0; t < steps; ++t) tr.alpha.push_back(uniform01(rng));
    for (double v : tr.alpha) total += v;
    for (double& v : tr.alpha) v /= total;
    const auto got = attention_output(tr);
    for (int j = 0; j < 5; ++j) {
      double want = 0.0;
      for (int t = 0; t < steps; ++t) want += tr.alpha[static_cast<std::size_t>(t)] * tr.h_seq(t, j);
      EXPECT_NEAR(got(j), want, 1e-12);
    }
  }
}

TEST(Attention, BatchedForwardMatchesPerSequence) {
  Rng rng(9);
  const AttentionBlock a = random_block(3, 4, rng);
  const int batch = 4;
  const int steps = 6;
  const Matrix h = random_matrix(batch * steps, 3, rng);
  AttentionBlock::Cache cache;
  const Matrix ctx = a.forward(h, batch, nn::Mode::infer, rng, cache);
  for (int b = 0; b < batch; ++b) {
    Matrix seq(steps, 3);
    for (int t = 0; t < steps; ++t) seq.row(t) = h.row(t * batch + b);
    const auto tr = attention_weights(seq, a);
    for (int t = 0; t < steps; ++t) EXPECT_NEAR(cache.alpha(b, t), tr.alpha[static_cast<std::size_t>(t)], 1e-15);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(ctx(b, j), attention_output(tr)(j), 1e-14);
  }
}

TEST(AttnLstm, ZeroParametersScoreHalf) {
  AttnLstmNet net(tiny_config(3, 2), 1);
  for (nn::Param* p : net.parameters()) p->value.setZero();
  Rng rng(10);
  TinyBatch b(3, 6, rng);
  for (double s : net.predict(b.views)) EXPECT_EQ(s, 0.5);
}

TEST(AttnLstm, GradientCheckS4T6) {
  Rng rng(11);
  TinyBatch b(8, 6, rng);
  AttnConfig c = tiny_config(4, 3);
  c.embed_dropout = c.lstm_dropout = c.attn_dropout = c.head_dropout = 0.0;
  AttnLstmNet net(c, 11);
  const auto r = pehl::testing::check_net(net, b);
  EXPECT_LE(r.max_relative_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(AttnLstm, GradientCheckRandomConfigurations) {
  for (int trial = 0; trial < 4; ++trial) {
    const auto r = pehl::testing::lstm_grad_trial(trial, 8 + trial % 5);
    EXPECT_LE(r.max_relative_error, 1e-4) << "trial " << trial << " " << r.worst_param;
  }
}

TEST(AttnLstm, InferIsDeterministicAndBatchIndependent) {
  AttnLstmNet net(tiny_config(4, 2), 3);
  Rng rng(12);
  TinyBatch b(6, 9, rng);
  net.refresh_norm_statistics(b.views, 3);
  const auto all = net.predict(b.views);
  EXPECT_EQ(all, net.predict(b.views));
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_NEAR(net.predict(std::span(&b.views[i], 1))[0], all[i], 1e-15);
  }
}

TEST(AttnLstm, Errors) {
  AttnLstmNet net(tiny_config(3, 1), 0);
  std::vector<std::uint8_t> a(4, 1);
  std::vector<std::uint8_t> b(5, 1);
  std::vector<nn::ByteSeq> ragged{a, b};
  EXPECT_THROW(net.predict(ragged), DataError);
  EXPECT_TRUE(net.predict(std::span<const nn::ByteSeq>{}).empty());
  EXPECT_THROW(attention_importance(net, std::span<const nn::ByteSeq>{}), DataError);
}

TEST(AttnLstm, TrainingIsDeterministic) {
  Rng rng(13);
  TinyBatch b(12, 8, rng);
  nn::SeqDataset ds{b.views, b.labels};
  nn::TrainConfig tc{1e-3, 4, 2, 5, 1.0};
  AttnLstmNet a(tiny_config(3, 2), 2);
  AttnLstmNet c(tiny_config(3, 2), 2);
  EXPECT_EQ(attn_lstm_train(a, ds, nullptr, tc).digest(), attn_lstm_train(c, ds, nullptr, tc).digest());
  for (std::size_t k = 0; k < a.parameters().size(); ++k) {
    EXPECT_EQ(a.parameters()[k]->value, c.parameters()[k]->value);
  }
}

TEST(AttnLstm, MemorizesTenSamples) {
  Rng rng(14);
  std::vector<std::vector<std::uint8_t>> data(10, std::vector<std::uint8_t>(328));
  for (auto& s : data)
    for (auto& v : s) v = static_cast<std::uint8_t>(rng());
  nn::SeqDataset ds;
  ds.inputs.assign(data.begin(), data.end());
  for (int i = 0; i < 10; ++i) ds.labels.push_back(i % 2);
  AttnConfig c;
  c.state = 16;
  c.lstm_layers = 1;
  c.embed_dropout = c.lstm_dropout = c.attn_dropout = c.head_dropout = 0.0;
  AttnLstmNet net(c, 14);
  attn_lstm_train(net, ds, nullptr, nn::TrainConfig{3e-3, 10, 150, 14, 1.0});
  const auto scores = net.predict(ds.inputs);
  int correct = 0;
  for (std::size_t i = 0; i < 10; ++i) correct += (scores[i] >= 0.5) == (ds.labels[i] == 1);
  EXPECT_GE(correct / 10.0, 0.99);
}

TEST(Importance, MeanOfAlphas) {
  AttnLstmNet net(tiny_config(3, 2), 6);
  Rng rng(15);
  TinyBatch b(100, 12, rng);
  net.refresh_norm_statistics(b.views, 50);

  const auto one = attention_importance(net, std::span(&b.views[0], 1));
  EXPECT_EQ(one.mean_alpha, net.trace(b.views[0]).alpha);

  const auto rep = attention_importance(net, b.views);
  std::vector<long double> sum(12, 0.0L);
  for (const auto& v : b.views) {
    const auto tr = net.trace(v);
    for (std::size_t t = 0; t < 12; ++t) sum[t] += tr.alpha[t];
  }
  double total = 0.0;
  for (std::size_t t = 0; t < 12; ++t) {
    EXPECT_EQ(rep.mean_alpha[t], static_cast<double>(sum[t]) / 100.0) << t;
    total += rep.mean_alpha[t];
  }
  EXPECT_NEAR(total, 1.0, 1e-6);

  std::vector<nn::ByteSeq> reversed(b.views.rbegin(), b.views.rend());
  EXPECT_EQ(attention_importance(net, reversed).mean_alpha, rep.mean_alpha);
}

TEST(Importance, TopKRanksAndLabelsFields) {
  ImportanceReport rep;
  rep.mean_alpha.assign(328, 0.0);
  rep.mean_alpha[87] = 0.5;
  rep.mean_alpha[0] = 0.3;
  rep.mean_alpha[156] = 0.3;
  const auto top = rep.top(3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].position, 87);
  EXPECT_EQ(top[1].position, 0);
  EXPECT_EQ(top[2].position, 156);
  EXPECT_NE(std::find(top[0].fields32.begin(), top[0].fields32.end(), "IMAGE_FILE_DLL"), top[0].fields32.end());
  EXPECT_EQ(top[1].fields32, (std::vector<std::string>{"e_magic"}));
  EXPECT_EQ(top[2].fields32, (std::vector<std::string>{"Subsystem"}));
  EXPECT_EQ(rep.top(1000).size(), 328u);
  const auto j = rep.to_json(2);
  EXPECT_EQ(j["top"].size(), 2u);
}
