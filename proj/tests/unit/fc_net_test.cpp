#include <gtest/gtest.h>
#include <limits>

#include "grad_fixtures.hpp"
#include "pehl/error.hpp"
#include "pehl/fc_net.hpp"

using namespace pehl;
using pehl::testing::TinyBatch;

namespace {

FcConfig small_config(int steps, int hidden) {
  FcConfig c;
  c.seq_len = steps;
  c.embed_dim = 4;
  c.hidden = hidden;
  return c;
}

FcConfig no_dropout(FcConfig c) {
  c.embed_dropout = 0.0;
  c.hidden_dropout = 0.0;
  return c;
}

nn::SeqDataset dataset(const TinyBatch& b) { return nn::SeqDataset{b.views, b.labels}; }

}  // namespace

TEST(FcNet, ZeroParametersScoreHalf) {
  FcNet net(small_config(8, 5), 1);
  for (nn::Param* p : net.parameters()) p->value.setZero();
  Rng rng(1);
  TinyBatch b(3, 8, rng);
  for (double s : net.predict(b.views)) EXPECT_EQ(s, 0.5);
}

TEST(FcNet, InferIsDeterministicAndBatchIndependent) {
  FcNet net(small_config(8, 5), 2);
  Rng rng(2);
  TinyBatch b(6, 8, rng);
  // Move the running statistics away from their initial values.
  for (int i = 0; i < 3; ++i) net.loss_and_gradients(b.views, b.labels, nn::Mode::train, rng);
  const auto all = net.predict(b.views);
  EXPECT_EQ(all, net.predict(b.views));
  for (std::size_t i = 0; i < b.views.size(); ++i) {
    // Equal up to the rounding of differently blocked matrix products.
    EXPECT_NEAR(net.predict(std::span(&b.views[i], 1))[0], all[i], 1e-15);
  }
  std::vector<nn::ByteSeq> reordered(b.views.rbegin(), b.views.rend());
  const auto rev = net.predict(reordered);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_NEAR(rev[all.size() - 1 - i], all[i], 1e-15);
}

TEST(FcNet, RejectsWrongLength) {
  FcNet net(small_config(8, 5), 3);
  std::vector<std::uint8_t> bad(7, 0);
  std::vector<nn::ByteSeq> batch{bad};
  EXPECT_ANY_THROW(net.predict(batch));
}

TEST(FcNet, PenaltyTermsAndStructure) {
  Rng rng(4);
  TinyBatch b(4, 6, rng);
  FcConfig with = small_config(6, 3);
  FcConfig without = with;
  without.decov_weight = 0.0;
  FcNet a(with, 9);
  FcNet z(without, 9);
  Rng r1(5);
  Rng r2(5);
  const auto oa = a.forward(b.views, nn::Mode::train, r1);
  const auto oz = z.forward(b.views, nn::Mode::train, r2);
  EXPECT_EQ(oa.scores, oz.scores);
  EXPECT_GT(oa.penalty, oz.penalty);
  EXPECT_GT(oz.penalty, 0.0);
  EXPECT_EQ(a.predict(b.views), z.predict(b.views));
  ASSERT_EQ(a.parameters().size(), z.parameters().size());
  for (std::size_t k = 0; k < a.parameters().size(); ++k) {
    EXPECT_EQ(a.parameters()[k]->value.rows(), z.parameters()[k]->value.rows());
    EXPECT_EQ(a.parameters()[k]->value.cols(), z.parameters()[k]->value.cols());
  }
}

TEST(FcNet, DefaultShape) {
  FcNet net(FcConfig{}, 0);
  const auto params = net.parameters();
  // Layer-1 input width is 328 * 16.
  bool found = false;
  for (const nn::Param* p : params) {
    if (p->value.rows() == 5248 && p->value.cols() == 256) found = true;
  }
  EXPECT_TRUE(found);
}

TEST(FcNet, GradientCheckHidden3Batch4) {
  Rng rng(6);
  TinyBatch b(4, 5, rng);
  FcConfig c = no_dropout(small_config(5, 3));
  c.embed_dim = 3;
  FcNet net(c, 6);
  const auto r = pehl::testing::check_net(net, b);
  EXPECT_LE(r.max_relative_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(FcNet, GradientCheckRandomConfigurations) {
  for (int trial = 0; trial < 6; ++trial) {
    const auto r = pehl::testing::fc_grad_trial(trial, 8 + trial % 5);
    EXPECT_LE(r.max_relative_error, 1e-4) << "trial " << trial << " " << r.worst_param;
  }
}

TEST(FcNet, TrainingIsDeterministic) {
  Rng rng(7);
  TinyBatch b(12, 10, rng);
  nn::TrainConfig tc{1e-3, 4, 3, 11, 0.0};
  FcNet a(small_config(10, 6), 1);
  FcNet c(small_config(10, 6), 1);
  const auto ta = fc_train(a, dataset(b), nullptr, tc);
  const auto tb = fc_train(c, dataset(b), nullptr, tc);
  EXPECT_EQ(ta.digest(), tb.digest());
  for (std::size_t k = 0; k < a.parameters().size(); ++k) {
    EXPECT_EQ(a.parameters()[k]->value, c.parameters()[k]->value);
  }
  EXPECT_EQ(a.predict(b.views), c.predict(b.views));
}

TEST(FcNet, MemorizesTenSamples) {
  Rng rng(8);
  std::vector<std::vector<std::uint8_t>> data(10, std::vector<std::uint8_t>(328));
  for (auto& s : data)
    for (auto& v : s) v = static_cast<std::uint8_t>(rng());
  nn::SeqDataset ds;
  ds.inputs.assign(data.begin(), data.end());
  for (int i = 0; i < 10; ++i) ds.labels.push_back(static_cast<int>(uniform_index(rng, 2)));
  ds.labels[0] = 0;
  ds.labels[1] = 1;
  FcConfig c = no_dropout(FcConfig{});
  c.hidden = 64;
  FcNet net(c, 3);
  fc_train(net, ds, nullptr, nn::TrainConfig{1e-3, 10, 200, 3, 0.0});
  const auto scores = net.predict(ds.inputs);
  int correct = 0;
  for (std::size_t i = 0; i < 10; ++i) correct += (scores[i] >= 0.5) == (ds.labels[i] == 1);
  EXPECT_GE(correct / 10.0, 0.99);
}

TEST(FcNet, LossMostlyNonIncreasingAtSmallRate) {
  int pairs = 0;
  int non_increasing = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    TinyBatch b(16, 12, rng);
    FcNet net(no_dropout(small_config(12, 8)), seed);
    // One batch per epoch so the objective is a fixed function of the weights.
    const auto trace = fc_train(net, dataset(b), nullptr, nn::TrainConfig{1e-4, 16, 30, seed, 0.0});
    for (std::size_t e = 1; e < trace.epochs.size(); ++e) {
      ++pairs;
      non_increasing += trace.epochs[e].loss <= trace.epochs[e - 1].loss;
    }
  }
  EXPECT_GE(non_increasing, 0.9 * pairs);
}

TEST(FcNet, TrainingErrors) {
  Rng rng(9);
  TinyBatch b(6, 4, rng);
  FcNet net(small_config(4, 3), 0);
  auto ds = dataset(b);
  ds.labels.assign(6, 1);
  EXPECT_THROW(fc_train(net, ds, nullptr, nn::TrainConfig{}), DataError);
}

TEST(FcNet, DivergenceIsReported) {
  Rng rng(10);
  TinyBatch b(6, 4, rng);
  FcNet net(no_dropout(small_config(4, 3)), 0);
  for (nn::Param* p : net.parameters()) p->value.setConstant(std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(fc_train(net, dataset(b), nullptr, nn::TrainConfig{1e-3, 6, 1, 0, 0.0}), DivergenceError);
}

TEST(FcNet, BestEpochRestored) {
  Rng rng(11);
  TinyBatch b(20, 6, rng);
  TinyBatch v(10, 6, rng);
  FcNet net(small_config(6, 4), 5);
  const auto trace = fc_train(net, dataset(b), nullptr, nn::TrainConfig{1e-3, 5, 4, 0, 0.0});
  EXPECT_EQ(trace.best_epoch, 4);
  auto vd = dataset(v);
  FcNet net2(small_config(6, 4), 5);
  const auto t2 = fc_train(net2, dataset(b), &vd, nn::TrainConfig{1e-3, 5, 4, 0, 0.0});
  ASSERT_GE(t2.best_epoch, 1);
  double best = -1.0;
  for (const auto& e : t2.epochs) best = std::max(best, *e.val_balacc);
  EXPECT_EQ(*t2.epochs[static_cast<std::size_t>(t2.best_epoch - 1)].val_balacc, best);
  const auto rep = evaluate_scores(net2.predict(vd.inputs), vd.labels);
  EXPECT_EQ(rep.balanced_accuracy, best);
}
