#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace modcap;
using namespace modcap::testing;

namespace {

constexpr std::size_t kVocab = 40;

Tensor<double> random_features(std::mt19937_64& rng, std::size_t regions = 6) {
  return random_tensor(Shape{regions, 64}, rng, -1.0, 1.0);
}

}  // namespace

TEST(Lstm, ZeroParametersGiveZeroState) {
  Tape<double> t;
  LstmVars<double> blk{t.variable(Tensor<double>(Shape{16, 7})), t.variable(Tensor<double>(Shape{16}))};
  std::mt19937_64 rng(1);
  auto x = t.constant(random_tensor(Shape{3}, rng));
  auto z = t.constant(Tensor<double>(Shape{4}));
  auto [h, c] = lstm_cell_step(blk, x, z, z);
  EXPECT_EQ(h.value(), Tensor<double>(Shape{4}));
  EXPECT_EQ(c.value(), Tensor<double>(Shape{4}));
}

TEST(Lstm, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(2);
  const Fn f = [](Tape<double>& t, const std::vector<Var<double>>& v) {
    auto [h, c] = lstm_cell_step(LstmVars<double>{v[0], v[1]}, v[2], v[3], v[4]);
    auto [h2, c2] = lstm_cell_step(LstmVars<double>{v[0], v[1]}, v[2], h, c);
    return add(weighted_sum(t, h2, 5), weighted_sum(t, c2, 6));
  };
  EXPECT_LT(max_rel_grad_error(f, {random_tensor(Shape{16, 7}, rng), random_tensor(Shape{16}, rng),
                                   random_tensor(Shape{3}, rng), random_tensor(Shape{4}, rng),
                                   random_tensor(Shape{4}, rng)}),
            1e-5);
}

TEST(Lstm, ShapeMismatchRejected) {
  Tape<double> t;
  LstmVars<double> blk{t.variable(Tensor<double>(Shape{16, 6})), t.variable(Tensor<double>(Shape{16}))};
  auto x = t.constant(Tensor<double>(Shape{3}));
  auto z = t.constant(Tensor<double>(Shape{4}));
  EXPECT_THROW(lstm_cell_step(blk, x, z, z), DimensionError);
}

TEST(RegionAttention, ZeroScoringVectorIsUniform) {
  Model<double> m(tiny_desk_config(kVocab), 1);
  m.params().at("att.w_b").fill(0.0);
  std::mt19937_64 rng(3);
  const auto feats = random_features(rng);
  Tape<double> t;
  auto b = m.bind(t);
  auto ctx = m.scene_context(t, b, feats);
  auto [a, v] = m.region_attention(b, ctx, t.constant(random_tensor(Shape{4}, rng)));
  for (std::size_t r = 0; r < 6; ++r) EXPECT_NEAR(a.value()[r], 1.0 / 6.0, 1e-15);
  for (std::size_t j = 0; j < 64; ++j) EXPECT_NEAR(v.value()[j], ctx.mean_feature.value()[j], 1e-14);
}

TEST(RegionAttention, IdenticalRegionsReturnThatRegion) {
  Model<double> m(tiny_desk_config(kVocab), 4);
  std::mt19937_64 rng(4);
  auto one = random_tensor(Shape{64}, rng);
  Tensor<double> feats(Shape{6, 64});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t j = 0; j < 64; ++j) feats(r, j) = one[j];
  Tape<double> t;
  auto b = m.bind(t);
  auto ctx = m.scene_context(t, b, feats);
  auto [a, v] = m.region_attention(b, ctx, t.constant(random_tensor(Shape{4}, rng)));
  for (std::size_t j = 0; j < 64; ++j) EXPECT_NEAR(v.value()[j], one[j], 1e-12);
}

TEST(InitEstimate, OneHotAndUniform) {
  Model<double> m(tiny_desk_config(kVocab), 5);
  Tape<double> t;
  auto b = m.bind(t);
  const auto& emb = m.params().at("embed");
  Tensor<double> onehot(Shape{kVocab});
  onehot[7] = 1.0;
  auto w = matmul(b.embed_t, t.constant(onehot)).value();
  for (std::size_t e = 0; e < 4; ++e) EXPECT_DOUBLE_EQ(w[e], emb(7, e));
  auto u = matmul(b.embed_t, t.constant(Tensor<double>(Shape{kVocab}, 1.0 / kVocab))).value();
  for (std::size_t e = 0; e < 4; ++e) {
    double mean = 0;
    for (std::size_t k = 0; k < kVocab; ++k) mean += emb(k, e);
    EXPECT_NEAR(u[e], mean / kVocab, 1e-15);
  }
}

TEST(Captioner, EmbeddingGetsGradientThroughBothPaths) {
  Model<double> m(tiny_desk_config(kVocab), 6);
  std::mt19937_64 rng(6);
  const auto feats = random_features(rng);
  const std::size_t emb = m.params().id("embed");
  // prev-token path only: loss on h^a
  auto ga = model_gradients(m, [&](Tape<double>& t, const BoundParams<double>& b) {
    auto ctx = m.scene_context(t, b, feats);
    auto st = m.initial_state(t);
    return weighted_sum(t, m.attention_lstm_step(b, st, ctx.mean_feature, row(b.embed, 9)));
  });
  double row9 = 0, other = 0;
  for (std::size_t k = 0; k < kVocab; ++k)
    for (std::size_t e = 0; e < 4; ++e) (k == 9 ? row9 : other) += std::abs(ga[emb](k, e));
  EXPECT_GT(row9, 0.0);
  EXPECT_EQ(other, 0.0);
  // init-estimate path reaches every row
  auto gi = model_gradients(m, [&](Tape<double>& t, const BoundParams<double>& b) {
    auto ctx = m.scene_context(t, b, feats);
    auto st = m.initial_state(t);
    return weighted_sum(t, m.forward_step(t, b, ctx, kBos, st).init_word);
  });
  for (std::size_t k = 0; k < kVocab; ++k) {
    double s = 0;
    for (std::size_t e = 0; e < 4; ++e) s += std::abs(gi[emb](k, e));
    EXPECT_GT(s, 0.0) << "row " << k;
  }
}

TEST(Captioner, FullStepGradientMatchesFiniteDifference) {
  Model<double> m(tiny_desk_config(kVocab), 7);
  std::mt19937_64 rng(7);
  const auto feats = random_features(rng, 2);
  const ModelLoss loss = [&](Tape<double>& t, const BoundParams<double>& b) {
    auto ctx = m.scene_context(t, b, feats);
    auto steps = m.forward_sequence(t, b, ctx, {kBos, 11, 12});
    std::vector<Var<double>> terms;
    for (std::size_t k = 0; k < steps.size(); ++k) terms.push_back(weighted_sum(t, steps[k].word_probs, 20 + k));
    return sum_all(std::span<const Var<double>>(terms));
  };
  EXPECT_LT(model_rel_grad_error(m, loss, 400), 1e-5);
}

TEST(Captioner, DeterministicForSeed) {
  Model<double> a(tiny_desk_config(kVocab), 11), b(tiny_desk_config(kVocab), 11), c(tiny_desk_config(kVocab), 12);
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i], b.params()[i]);
  EXPECT_NE(a.params()[0], c.params()[0]);
  std::mt19937_64 rng(8);
  const auto feats = random_features(rng);
  auto run = [&](const Model<double>& m) {
    Tape<double> t;
    auto bp = m.bind(t);
    auto ctx = m.scene_context(t, bp, feats);
    return m.forward_sequence(t, bp, ctx, {kBos, 5, 6}).back().word_probs.value();
  };
  EXPECT_EQ(run(a), run(b));
}

TEST(Captioner, RejectsBadInputs) {
  Model<double> m(tiny_desk_config(kVocab), 1);
  Tape<double> t;
  auto b = m.bind(t);
  EXPECT_THROW(m.scene_context(t, b, Tensor<double>(Shape{6, 63})), DimensionError);
  auto ctx = m.scene_context(t, b, Tensor<double>(Shape{6, 64}));
  auto st = m.initial_state(t);
  EXPECT_THROW(m.forward_step(t, b, ctx, kVocab, st), ContractError);
  auto cfg = tiny_desk_config(kVocab);
  cfg.module_word_ids[0] = {1, 2};
  EXPECT_THROW(Model<double>(cfg, 1), ConfigError);
}

TEST(Captioner, DistributionInvariantsHold) {
  Model<double> m(tiny_desk_config(kVocab), 13);
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> tok(0, kVocab - 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto feats = random_tensor(Shape{6, 64}, rng, -3.0, 3.0);
    Tape<double> t;
    auto b = m.bind(t);
    auto ctx = m.scene_context(t, b, feats);
    auto st = m.initial_state(t);
    auto out = m.forward_step(t, b, ctx, tok(rng), st);
    ASSERT_NEAR(sum_values(out.region_attention.value()), 1.0, 1e-12);
    ASSERT_NEAR(sum_values(out.init_probs.value()), 1.0, 1e-12);
    ASSERT_NEAR(sum_values(out.word_probs.value()), 1.0, 1e-12);
    ASSERT_NEAR(sum_values(out.alpha_hat.value()), 1.0, 1e-12);
    const double beta = out.beta.value().item();
    ASSERT_GE(beta, 0.0);
    ASSERT_LE(beta, 1.0);
    for (std::size_t j = 0; j < 64; ++j) {
      double lo = feats(0, j), hi = feats(0, j);
      for (std::size_t r = 1; r < 6; ++r) lo = std::min(lo, feats(r, j)), hi = std::max(hi, feats(r, j));
      ASSERT_GE(out.attended.value()[j], lo - 1e-12);
      ASSERT_LE(out.attended.value()[j], hi + 1e-12);
    }
    for (std::size_t k = 0; k < m.config().num_objects; ++k) ASSERT_GE((*out.object_scores).value()[k], 0.0);
  }
}
