#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "curlm/error.hpp"
#include "curlm/model.hpp"
#include "curlm/rng.hpp"
#include "reference_model.hpp"

using namespace curlm;
using namespace curlm::model;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.hidden = 8;
  c.ffn_mult = 2;
  c.vocab_size = 12;
  c.n_tag_labels = 32;
  c.max_seq_len = 6;
  c.dropout = 0.1;
  return c;
}

// Larger-than-default weights so every nonlinearity is exercised.
ModelParams<double> spread_params(const ModelConfig& c, std::uint64_t seed) {
  auto p = init_model<double>(c, seed);
  Rng rng(seed + 100);
  for (auto& x : p.data) x += 0.3 * rng.normal();
  return p;
}

TokenBatch padded_batch() {
  TokenBatch b;
  b.batch = 2;
  b.seq = 6;
  b.ids = {3, 7, 1, 9, 1, 4, 3, 11, 1, 4, 0, 0};
  b.valid = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
  return b;
}

LossTargets padded_targets() {
  LossTargets t;
  t.vocab_target = {-1, -1, 8, -1, 5, -1, -1, -1, 10, -1, -1, -1};
  t.tag_target = {0, 0, 12, 0, 3, 0, 0, 0, 12, 0, 0, 0};
  return t;
}

double max_abs_diff(const Matrix<double>& a, const Matrix<double>& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(ModelConfig, PresetsAndValidation) {
  const auto d = ModelConfig::desk();
  EXPECT_EQ(d.n_layers, 2);
  EXPECT_EQ(d.hidden, 64);
  const auto p = ModelConfig::full_scale();
  EXPECT_EQ(p.n_layers, 8);
  EXPECT_EQ(p.n_heads, 8);
  EXPECT_EQ(p.hidden, 256);
  EXPECT_EQ(p.vocab_size, 8192);
  auto bad = d;
  bad.n_heads = 3;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = d;
  bad.hidden = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(InitModel, DeterministicWithExpectedStatistics) {
  const auto c = ModelConfig::desk();
  const auto a = init_model<float>(c, 7);
  const auto b = init_model<float>(c, 7);
  const auto other = init_model<float>(c, 8);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, other.data);
  for (const auto& t : a.layout.tensors) {
    if (t.name.ends_with(".gain")) {
      for (float g : a.tensor(t.name)) ASSERT_EQ(g, 1.0f);
    } else if (!t.decay) {
      for (float g : a.tensor(t.name)) ASSERT_EQ(g, 0.0f);
    }
  }
  const auto emb = a.tensor("tok_emb");
  double sum = 0.0, sq = 0.0;
  for (float x : emb) {
    sum += x;
    sq += static_cast<double>(x) * x;
  }
  const double n = static_cast<double>(emb.size());
  const double var = sq / n - (sum / n) * (sum / n);
  EXPECT_NEAR(var, 0.0004, 0.00004);
}

TEST(ParamLayout, TensorsTileTheBuffer) {
  const auto c = ModelConfig::desk();
  const auto layout = ParamLayout::build(c);
  std::size_t offset = 0;
  for (const auto& t : layout.tensors) {
    EXPECT_EQ(t.offset, offset) << t.name;
    const auto n = std::accumulate(t.shape.begin(), t.shape.end(), std::size_t{1},
                                   [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
    EXPECT_EQ(t.size, n) << t.name;
    offset += t.size;
  }
  EXPECT_EQ(offset, layout.total);
  const auto p = init_model<float>(c, 0);
  EXPECT_EQ(p.tensor("vocab_head.w").size(), static_cast<std::size_t>(c.hidden * c.vocab_size));
  EXPECT_EQ(p.tensor("tag_head.w").size(), static_cast<std::size_t>(c.hidden * c.n_tag_labels));
  EXPECT_THROW(p.tensor("nope"), InvalidArgument);
}

TEST(Forward, OutputShapes) {
  const auto c = ModelConfig::desk();
  auto small = c;
  small.vocab_size = 100;
  const auto p = init_model<float>(small, 1);
  TokenBatch b;
  b.batch = 3;
  b.seq = 5;
  b.ids.assign(15, 7);
  b.valid.assign(15, 1);
  const auto cache = forward(p, b);
  EXPECT_EQ(cache.vocab_logits.rows(), 15);
  EXPECT_EQ(cache.vocab_logits.cols(), 100);
  EXPECT_EQ(cache.tag_logits.rows(), 15);
  EXPECT_EQ(cache.tag_logits.cols(), 32);
}

TEST(Forward, RejectsBadInput) {
  const auto p = init_model<double>(tiny_config(), 1);
  TokenBatch b;
  b.batch = 1;
  b.seq = 2;
  b.ids = {3, 12};
  b.valid = {1, 1};
  EXPECT_THROW(forward(p, b), InvalidArgument);
  b.ids = {3, 4};
  b.valid = {1};
  EXPECT_THROW(forward(p, b), InvalidArgument);
  b.seq = 7;
  b.ids.assign(7, 5);
  b.valid.assign(7, 1);
  EXPECT_THROW(forward(p, b), InvalidArgument);
}

TEST(Forward, MatchesLoopReference) {
  auto c = tiny_config();
  c.n_layers = 1;
  c.hidden = 4;
  c.n_heads = 2;
  const auto p = spread_params(c, 3);
  const std::vector<std::int32_t> ids{3, 5, 1, 9, 4};
  TokenBatch b{1, 5, ids, std::vector<std::uint8_t>(5, 1)};
  const auto cache = forward(p, b);
  const auto [vocab, tag] = testkit::reference_forward(p, ids);
  for (int r = 0; r < 5; ++r) {
    for (int v = 0; v < c.vocab_size; ++v) EXPECT_NEAR(cache.vocab_logits(r, v), vocab[r][v], 1e-12);
    for (int t = 0; t < c.n_tag_labels; ++t) EXPECT_NEAR(cache.tag_logits(r, t), tag[r][t], 1e-12);
  }
}

TEST(Forward, PaddingInvariance) {
  const auto p = spread_params(tiny_config(), 4);
  TokenBatch alone{1, 4, {3, 11, 1, 4}, {1, 1, 1, 1}};
  const auto a = forward(p, alone);
  const auto padded = forward(p, padded_batch());
  for (int r = 0; r < 4; ++r) {
    EXPECT_LT((a.vocab_logits.row(r) - padded.vocab_logits.row(6 + r)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, BatchPermutationEquivariance) {
  const auto p = spread_params(tiny_config(), 5);
  TokenBatch b{3, 3, {3, 5, 4, 3, 6, 7, 3, 8, 4}, std::vector<std::uint8_t>(9, 1)};
  TokenBatch swapped{3, 3, {3, 8, 4, 3, 5, 4, 3, 6, 7}, std::vector<std::uint8_t>(9, 1)};
  const auto x = forward(p, b);
  const auto y = forward(p, swapped);
  EXPECT_LT(max_abs_diff(x.vocab_logits.middleRows(0, 3), y.vocab_logits.middleRows(3, 3)), 1e-12);
  EXPECT_LT(max_abs_diff(x.vocab_logits.middleRows(3, 3), y.vocab_logits.middleRows(6, 3)), 1e-12);
  EXPECT_LT(max_abs_diff(x.vocab_logits.middleRows(6, 3), y.vocab_logits.middleRows(0, 3)), 1e-12);
}

TEST(Forward, DropoutOnlyWhenTraining) {
  const auto p = spread_params(tiny_config(), 6);
  const auto b = padded_batch();
  const auto eval1 = forward(p, b, {false, 1});
  const auto eval2 = forward(p, b, {false, 2});
  EXPECT_EQ(max_abs_diff(eval1.vocab_logits, eval2.vocab_logits), 0.0);
  const auto t1 = forward(p, b, {true, 1});
  const auto t1b = forward(p, b, {true, 1});
  const auto t2 = forward(p, b, {true, 2});
  EXPECT_EQ(max_abs_diff(t1.vocab_logits, t1b.vocab_logits), 0.0);
  EXPECT_GT(max_abs_diff(t1.vocab_logits, t2.vocab_logits), 0.0);
}

TEST(Loss, UniformLogitsGiveLogV) {
  const Matrix<double> vocab = Matrix<double>::Zero(3, 50);
  const Matrix<double> tag = Matrix<double>::Zero(3, 32);
  LossTargets t{{-1, 7, 9}, {0, 0, 0}};
  const auto value = loss(vocab, tag, t, LossSpec{{}, 1.0});
  EXPECT_NEAR(value.mlm, std::log(50.0), 1e-12);
  EXPECT_EQ(value.tag, 0.0);
  EXPECT_EQ(value.n_masked, 2);
  EXPECT_EQ(value.n_tagged, 0);
}

TEST(Loss, TwoClassHandComputed) {
  Matrix<double> vocab(1, 2);
  vocab << 0.0, std::log(3.0);
  Matrix<double> tag(1, 3);
  tag << std::log(2.0), 0.0, 0.0;
  LossTargets t{{0}, {1}};
  LogitGradients<double> g;
  const auto value = loss(vocab, tag, t, LossSpec{{1}, 2.0}, &g);
  EXPECT_NEAR(value.mlm, std::log(4.0), 1e-12);
  EXPECT_NEAR(value.tag, std::log(4.0), 1e-12);
  EXPECT_NEAR(value.total, 3.0 * std::log(4.0), 1e-12);
  EXPECT_NEAR(g.vocab(0, 0), 0.25 - 1.0, 1e-12);
  EXPECT_NEAR(g.vocab(0, 1), 0.75, 1e-12);
  EXPECT_NEAR(g.tag(0, 1), 2.0 * (0.25 - 1.0), 1e-12);
}

TEST(Loss, InactiveTagsAreSkipped) {
  const Matrix<double> vocab = Matrix<double>::Zero(2, 4);
  const Matrix<double> tag = Matrix<double>::Zero(2, 5);
  LossTargets t{{1, 2}, {3, 4}};
  const auto value = loss(vocab, tag, t, LossSpec{{3}, 1.0});
  EXPECT_EQ(value.n_tagged, 1);
  EXPECT_NEAR(value.tag, std::log(5.0), 1e-12);
  const auto none = loss(vocab, tag, LossTargets{{-1, -1}, {3, 4}}, LossSpec{{3}, 1.0});
  EXPECT_EQ(none.total, 0.0);
  EXPECT_EQ(none.n_masked, 0);
}

TEST(Loss, LambdaLinearity) {
  const auto p = spread_params(tiny_config(), 7);
  const auto cache = forward(p, padded_batch());
  const auto targets = padded_targets();
  const auto l0 = loss(cache.vocab_logits, cache.tag_logits, targets, LossSpec{{12, 3}, 0.0});
  const auto l1 = loss(cache.vocab_logits, cache.tag_logits, targets, LossSpec{{12, 3}, 1.0});
  const auto l2 = loss(cache.vocab_logits, cache.tag_logits, targets, LossSpec{{12, 3}, 2.0});
  EXPECT_NEAR(l0.total, l0.mlm, 1e-14);
  EXPECT_NEAR(l1.total, l1.mlm + l1.tag, 1e-12);
  EXPECT_NEAR(l2.total - l1.total, l1.total - l0.total, 1e-12);
}

class GradientCheck : public ::testing::TestWithParam<std::tuple<double, bool>> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto [lambda, training] = GetParam();
  const auto c = tiny_config();
  auto p = spread_params(c, 11);
  ASSERT_LE(p.data.size(), 5000u);
  const auto batch = padded_batch();
  const auto targets = padded_targets();
  const LossSpec spec{{12, 3}, lambda};
  const ForwardOptions options{training, 99};
  const auto analytic = loss_and_gradients(p, batch, targets, spec, options);
  ASSERT_EQ(analytic.grads.size(), p.data.size());

  const double h = 1e-4;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& t : p.layout.tensors) {
    for (std::size_t i = 0; i < t.size; ++i) {
      const std::size_t k = t.offset + i;
      const double saved = p.data[k];
      p.data[k] = saved + h;
      const double up = loss_and_gradients(p, batch, targets, spec, options).value.total;
      p.data[k] = saved - h;
      const double down = loss_and_gradients(p, batch, targets, spec, options).value.total;
      p.data[k] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.grads[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-7});
      if (rel > worst) {
        worst = rel;
        worst_name = t.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  EXPECT_LT(worst, 1e-3) << "worst at " << worst_name;
}

INSTANTIATE_TEST_SUITE_P(LambdaAndDropout, GradientCheck,
                         ::testing::Combine(::testing::Values(0.0, 1.0, 2.0), ::testing::Bool()));

TEST(Backward, PaddingGetsNoGradient) {
  const auto c = tiny_config();
  const auto p = spread_params(c, 12);
  TokenBatch b{1, 6, {3, 7, 1, 4, 0, 0}, {1, 1, 1, 1, 0, 0}};
  LossTargets t{{-1, -1, 9, -1, -1, -1}, {0, 0, 12, 0, 0, 0}};
  const auto g = loss_and_gradients(p, b, t, LossSpec{{12}, 1.0});
  const auto& layout = p.layout;
  const auto H = static_cast<std::size_t>(c.hidden);
  for (std::size_t h = 0; h < H; ++h) {
    EXPECT_EQ(g.grads[layout.tok_emb + h], 0.0);               // PAD embedding
    EXPECT_EQ(g.grads[layout.tok_emb + 2 * H + h], 0.0);       // unused token
    EXPECT_EQ(g.grads[layout.pos_emb + 4 * H + h], 0.0);       // padded positions
    EXPECT_EQ(g.grads[layout.pos_emb + 5 * H + h], 0.0);
    EXPECT_NE(g.grads[layout.pos_emb + 3 * H + h], 0.0);
  }
}

TEST(AdamW, FirstStepClosedForm) {
  auto c = tiny_config();
  auto p = init_model<double>(c, 1);
  const auto before = p.data;
  std::vector<double> grads(p.data.size());
  Rng rng(5);
  for (auto& g : grads) g = rng.normal();
  auto state = OptimizerState<double>::zeros(p.data.size());
  const double lr = 0.01;
  const AdamWConfig cfg;
  adamw_step(p, std::span<const double>(grads), state, lr, cfg);
  EXPECT_EQ(state.step, 1);
  for (const auto& t : p.layout.tensors) {
    for (std::size_t i = 0; i < t.size; ++i) {
      const std::size_t k = t.offset + i;
      const double decayed = t.decay ? before[k] * (1.0 - lr * cfg.weight_decay) : before[k];
      const double expected = decayed - lr * grads[k] / (std::abs(grads[k]) + cfg.eps);
      ASSERT_NEAR(p.data[k], expected, 1e-12) << t.name;
      ASSERT_NEAR(state.m[k], 0.1 * grads[k], 1e-15);
      ASSERT_NEAR(state.v[k], 0.001 * grads[k] * grads[k], 1e-15);
    }
  }
}

TEST(AdamW, SecondStepBiasCorrection) {
  ModelConfig c = tiny_config();
  auto p = init_model<double>(c, 1);
  std::fill(p.data.begin(), p.data.end(), 0.0);
  std::vector<double> g1(p.data.size(), 1.0), g2(p.data.size(), 3.0);
  auto state = OptimizerState<double>::zeros(p.data.size());
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(p, std::span<const double>(g1), state, 0.1, cfg);
  adamw_step(p, std::span<const double>(g2), state, 0.1, cfg);
  const double m = (0.9 * 0.1 * 1.0 + 0.1 * 3.0) / (1 - 0.81);
  const double v = (0.999 * 0.001 * 1.0 + 0.001 * 9.0) / (1 - 0.999 * 0.999);
  const double expected = -0.1 / (1.0 + 1e-8) - 0.1 * m / (std::sqrt(v) + 1e-8);
  EXPECT_NEAR(p.data[0], expected, 1e-12);
}

TEST(LrSchedule, KnownValues) {
  EXPECT_EQ(lr_at(0), 0.0);
  EXPECT_EQ(lr_at(100000), 0.001);
  EXPECT_EQ(lr_at(400000), 0.0);
  EXPECT_NEAR(lr_at(250000), 0.0005, 1e-12);
  EXPECT_NEAR(lr_at(50000), 0.0005, 1e-12);
  EXPECT_THROW(lr_at(-1), InvalidArgument);
  EXPECT_THROW(lr_at(400001), InvalidArgument);
}

TEST(LrSchedule, PiecewiseMonotone) {
  for (std::int64_t s = 1; s <= 100; ++s) EXPECT_GT(lr_at(s, 200, 100, 1.0), lr_at(s - 1, 200, 100, 1.0));
  for (std::int64_t s = 101; s <= 200; ++s) EXPECT_LT(lr_at(s, 200, 100, 1.0), lr_at(s - 1, 200, 100, 1.0));
  EXPECT_EQ(lr_at(0, 10, 0, 0.5), 0.5);
}
