#include <gtest/gtest.h>

#include <cmath>

#include "sfg/denoiser.hpp"
#include "sfg/errors.hpp"

namespace sfg {
namespace {

struct Fixture {
  ModelConfig cfg;
  DenoiserParams params;
  EncoderParams encoder;
  NoiseSchedule sched = make_schedule(20);

  explicit Fixture(ModelConfig c = {}) : cfg(c), params(DenoiserParams::init(c, 5)), encoder(EncoderParams::random({})) {}

  Tensor latent(std::uint64_t seed) const {
    Rng r(seed);
    return randn(r, {static_cast<std::size_t>(cfg.patches()), static_cast<std::size_t>(cfg.latent_dim)});
  }
  TextEmbeddings prompt(const char* text) const { return encode(tokenize(text), encoder); }
  Tensor patch_features(std::uint64_t seed) const {
    Rng r(seed);
    return randn(r, {static_cast<std::size_t>(cfg.patches()), static_cast<std::size_t>(cfg.width)});
  }
};

// Central differences on `count` randomly chosen weights, compared to the
// analytic gradient.
double worst_fd_error(Fixture& f, int count, std::uint64_t seed) {
  const Tensor z = f.latent(seed);
  Rng er(seed + 1);
  const Tensor eps = randn(er, z.shape());
  const TextEmbeddings c = f.prompt("a red square left of a blue circle");
  const double lambda = f.sched.lambda(7);
  ParamSet grad = f.params.weights().zeros_like();
  denoising_loss_grad(f.params, z, lambda, c, eps, grad);

  Rng pick(seed + 2);
  double worst = 0.0;
  int checked = 0;
  while (checked < count) {
    const std::size_t ti = pick.uniform_index(f.params.weights().size());
    Tensor& w = f.params.weights().tensor(ti);
    const std::size_t i = pick.uniform_index(w.size());
    const double analytic = grad.tensor(ti)[i];
    if (std::abs(analytic) < 1e-7) continue;  // relative error is meaningless at zero
    const double h = 1e-5;
    const double saved = w[i];
    w[i] = saved + h;
    const double up = denoising_loss(f.params, z, lambda, c, eps);
    w[i] = saved - h;
    const double down = denoising_loss(f.params, z, lambda, c, eps);
    w[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
    worst = std::max(worst, rel);
    ++checked;
  }
  return worst;
}

TEST(DenoiserGradient, MatchesCentralDifferencesOnRandomWeights) {
  Fixture f;
  EXPECT_LT(worst_fd_error(f, 10, 31), 1e-4);
}

TEST(DenoiserGradient, MatchesCentralDifferencesWithTwoHeadsAndThreeLayers) {
  ModelConfig cfg;
  cfg.heads = 2;
  cfg.layers = 3;
  Fixture f(cfg);
  EXPECT_LT(worst_fd_error(f, 30, 32), 1e-4);
}

TEST(DenoiserGradient, EveryTensorReceivesGradient) {
  Fixture f;
  const Tensor z = f.latent(33);
  Rng er(34);
  ParamSet grad = f.params.weights().zeros_like();
  denoising_loss_grad(f.params, z, 0.5, f.prompt("a green cross"), randn(er, z.shape()), grad);
  for (std::size_t i = 0; i < grad.size(); ++i) EXPECT_GT(frobenius_norm(grad.tensor(i)), 0.0) << grad.name(i);
}

TEST(CrossAttention, DisabledOverrideLeavesProbabilityRows) {
  Fixture f;
  const CrossAttentionResult r = cross_attention(f.patch_features(35), f.prompt("a red square"),
                                                 OverrideSpec::disabled(), f.params, 0);
  EXPECT_TRUE(r.record.selected.empty());
  EXPECT_EQ(r.record.applied, r.record.weights);
  for (std::size_t p = 0; p < r.record.weights.rows(); ++p) {
    double sum = 0.0;
    for (double v : r.record.weights.row(p)) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(CrossAttention, OverrideTouchesExactlyOneNonBosEntryPerRow) {
  for (int heads : {1, 2, 4}) {
    ModelConfig cfg;
    cfg.heads = heads;
    Fixture f(cfg);
    const double a = 10.0;
    const CrossAttentionResult r = cross_attention(f.patch_features(36), f.prompt("a blue circle above a red cross"),
                                                   OverrideSpec::with_scale(a), f.params, 1);
    const Tensor& w = r.record.weights;
    const Tensor& applied = r.record.applied;
    ASSERT_EQ(r.record.selected.size(), w.rows());
    for (std::size_t p = 0; p < w.rows(); ++p) {
      const int s = r.record.selected[p];
      EXPECT_GE(s, 1);
      int changed = 0;
      for (std::size_t i = 0; i < w.cols(); ++i) {
        if (static_cast<int>(i) == s) {
          EXPECT_NEAR(applied(p, i), -a * w(p, i), 1e-15);
          ++changed;
        } else {
          EXPECT_EQ(applied(p, i), w(p, i));
        }
        if (i >= 1) {
          EXPECT_GE(w(p, static_cast<std::size_t>(s)), w(p, i));
        }
      }
      EXPECT_EQ(changed, 1);
    }
  }
}

TEST(CrossAttention, ZeroScaleMatchesPassWithSelectedEntryZeroed) {
  Fixture f;
  const Tensor x = f.patch_features(37);
  const TextEmbeddings c = f.prompt("a yellow square");
  const CrossAttentionResult r = cross_attention(x, c, OverrideSpec::with_scale(0.0), f.params, 0);
  Tensor zeroed = r.record.weights;
  for (std::size_t p = 0; p < zeroed.rows(); ++p) zeroed(p, static_cast<std::size_t>(r.record.selected[p])) = 0.0;
  const Tensor& wv = f.params.weights().at("block0.cross.wv");
  const Tensor& wo = f.params.weights().at("block0.cross.wo");
  const Tensor reference = matmul(matmul(zeroed, matmul(c.vectors, wv)), wo);
  EXPECT_LT(frobenius_norm(sub(r.out, reference)), 1e-12);
}

TEST(CrossAttention, BosOnlyPromptMakesOverrideANoOp) {
  Fixture f;
  const Tensor x = f.patch_features(38);
  const TextEmbeddings null = null_embeddings(f.encoder);
  const CrossAttentionResult on = cross_attention(x, null, OverrideSpec::with_scale(10.0), f.params, 0);
  const CrossAttentionResult off = cross_attention(x, null, OverrideSpec::disabled(), f.params, 0);
  EXPECT_EQ(on.out, off.out);
  EXPECT_TRUE(on.record.selected.empty());
}

TEST(CrossAttention, RejectsBadInputs) {
  Fixture f;
  EXPECT_THROW(cross_attention(Tensor::matrix(64, 5), f.prompt("a"), {}, f.params, 0), DimensionError);
  EXPECT_THROW(cross_attention(f.patch_features(1), f.prompt("a"), {}, f.params, 2), DomainError);
  EXPECT_THROW(OverrideSpec::with_scale(-1.0), ConfigError);
}

TEST(PredictScore, DeterministicAndIndependentOfDisabledScale) {
  Fixture f;
  const Tensor z = f.latent(39);
  const TextEmbeddings c = f.prompt("a red square");
  const ScoreResult a = predict_score(z, 5, f.sched, c, OverrideSpec::disabled(), f.params);
  const ScoreResult b = predict_score(z, 5, f.sched, c, OverrideSpec{false, 123.0}, f.params);
  EXPECT_EQ(a.score, b.score);
  EXPECT_EQ(a.score, predict_score(z, 5, f.sched, c, OverrideSpec::disabled(), f.params).score);
  ASSERT_EQ(a.attention.size(), 2u);
  EXPECT_EQ(a.score.shape(), z.shape());
}

TEST(PredictScore, OverrideChangesScoreAndRecordsPreOverrideWeights) {
  Fixture f;
  const Tensor z = f.latent(40);
  const TextEmbeddings c = f.prompt("a red square left of a blue circle");
  const ScoreResult plain = predict_score(z, 5, f.sched, c, OverrideSpec::disabled(), f.params);
  const ScoreResult bar = predict_score(z, 5, f.sched, c, OverrideSpec::with_scale(10.0), f.params);
  EXPECT_GT(frobenius_norm(sub(plain.score, bar.score)), 0.0);
  // The first layer sees identical inputs in both passes.
  EXPECT_EQ(plain.attention[0].weights, bar.attention[0].weights);
  for (const AttentionRecord& rec : bar.attention) {
    for (std::size_t p = 0; p < rec.weights.rows(); ++p) {
      double sum = 0.0;
      for (double v : rec.weights.row(p)) sum += v;
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(PredictScore, CountsOneForwardPassPerCall) {
  Fixture f;
  const Tensor z = f.latent(41);
  const std::uint64_t before = forward_pass_count();
  predict_score(z, 3, f.sched, null_embeddings(f.encoder), {}, f.params);
  EXPECT_EQ(forward_pass_count() - before, 1u);
}

TEST(PredictScore, ShapeMismatchThrows) {
  Fixture f;
  EXPECT_THROW(predict_score(Tensor::matrix(10, 8), 1, f.sched, f.prompt("a"), {}, f.params), DimensionError);
}

TEST(DenoiserParams, RoundTripAndShapeValidation) {
  Fixture f;
  EXPECT_EQ(DenoiserParams::from_params(f.params.to_params()), f.params);
  ParamSet broken = f.params.to_params();
  broken.at("out.w") = Tensor::matrix(3, 3);
  EXPECT_THROW(DenoiserParams::from_params(broken), Error);
  EXPECT_EQ(DenoiserParams::init({}, 5), f.params);
  EXPECT_NE(DenoiserParams::init({}, 6), f.params);
}

TEST(ModelConfig, RejectsInconsistentShapes) {
  ModelConfig cfg;
  cfg.heads = 3;  // width 32 is not divisible by 3
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace sfg
