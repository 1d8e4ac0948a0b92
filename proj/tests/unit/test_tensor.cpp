#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sfg/errors.hpp"
#include "sfg/rng.hpp"
#include "sfg/tensor.hpp"

namespace sfg {
namespace {

// Reference product with the textbook loop order.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor random_spd(Rng& rng, std::size_t d) {
  const Tensor x = randn(rng, {d, d});
  Tensor s = matmul_nt(x, x);
  for (std::size_t i = 0; i < d; ++i) s(i, i) += 0.1;
  return s;
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(Tensor::identity(2), m), m);
}

TEST(Matmul, RowTimesColumn) {
  const Tensor r = matmul(Tensor::from_rows({{1, 2}}), Tensor::from_rows({{3}, {4}}));
  ASSERT_EQ(r.shape(), (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(r[0], 11.0);
}

TEST(Matmul, MatchesNaiveTripleLoop) {
  Rng rng(11);
  const Tensor a = randn(rng, {5, 7});
  const Tensor b = randn(rng, {7, 3});
  EXPECT_LT(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, TransposedVariantsMatchNaive) {
  Rng rng(12);
  const Tensor a = randn(rng, {6, 4});
  const Tensor b = randn(rng, {5, 4});
  const Tensor c = randn(rng, {6, 3});
  EXPECT_LT(max_abs_diff(matmul_nt(a, b), naive_matmul(a, transpose(b))), 1e-12);
  EXPECT_LT(max_abs_diff(matmul_tn(a, c), naive_matmul(transpose(a), c)), 1e-12);
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::matrix(2, 3), Tensor::matrix(2, 3)), DimensionError);
  EXPECT_THROW(matmul(Tensor::vector(3), Tensor::matrix(3, 3)), DimensionError);
}

TEST(Matmul, AssociativeOnRandomTriples) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = randn(rng, {4, 6});
    const Tensor b = randn(rng, {6, 5});
    const Tensor c = randn(rng, {5, 3});
    const Tensor left = matmul(matmul(a, b), c);
    const Tensor right = matmul(a, matmul(b, c));
    EXPECT_LT(frobenius_norm(sub(left, right)) / frobenius_norm(left), 1e-9);
  }
}

TEST(Softmax, EqualValuesGiveUniformRow) {
  const Tensor s = softmax_rows(Tensor::from_rows({{3, 3, 3, 3}}));
  for (double v : s.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, ShiftInvariant) {
  const Tensor a = softmax_rows(Tensor::from_rows({{0.5, -1.0, 2.0}}));
  const Tensor b = softmax_rows(Tensor::from_rows({{100.5, 99.0, 102.0}}));
  EXPECT_LT(max_abs_diff(a, b), 1e-15);
}

TEST(Softmax, Saturates) {
  const Tensor s = softmax_rows(Tensor::from_rows({{0, 100}}));
  EXPECT_NEAR(s[0], 0.0, 1e-6);
  EXPECT_NEAR(s[1], 1.0, 1e-6);
}

TEST(Softmax, NonFiniteInputThrows) {
  EXPECT_THROW(softmax_rows(Tensor::from_rows({{0, std::nan("")}})), DomainError);
  EXPECT_THROW(softmax_rows(Tensor::from_rows({{0, std::numeric_limits<double>::infinity()}})), DomainError);
}

TEST(SoftmaxProperty, RowsAreProbabilityVectors) {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t cols = 1 + rng.uniform_index(12);
    const Tensor s = softmax_rows(scale(randn(rng, {7, cols}), 1.0 + 20.0 * rng.uniform()));
    for (std::size_t r = 0; r < s.rows(); ++r) {
      double sum = 0.0;
      for (double v : s.row(r)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Sqrtm, IdentityAndDiagonal) {
  EXPECT_LT(max_abs_diff(sqrtm_spd(Tensor::identity(3)), Tensor::identity(3)), 1e-14);
  const Tensor s = sqrtm_spd(Tensor::from_rows({{4, 0}, {0, 9}}));
  EXPECT_LT(max_abs_diff(s, Tensor::from_rows({{2, 0}, {0, 3}})), 1e-14);
}

TEST(Sqrtm, MultiplyBackReconstructs) {
  Rng rng(15);
  for (std::size_t d : {1u, 2u, 5u, 16u, 40u}) {
    const Tensor sigma = random_spd(rng, d);
    const Tensor s = sqrtm_spd(sigma);
    EXPECT_LT(frobenius_norm(sub(matmul(s, s), sigma)) / frobenius_norm(sigma), 1e-8) << "d=" << d;
    EXPECT_LT(max_abs_diff(s, transpose(s)), 1e-14);
  }
}

TEST(Sqrtm, ClampsTinyNegativeEigenvalues) {
  // Rank-1 PSD matrix; rounding can push the zero eigenvalue slightly negative.
  const Tensor v = Tensor::from_rows({{1.0}, {1.0 / 3.0}, {2.0}});
  const Tensor sigma = matmul_nt(v, v);
  const Tensor s = sqrtm_spd(sigma);
  EXPECT_TRUE(s.all_finite());
  EXPECT_LT(frobenius_norm(sub(matmul(s, s), sigma)) / frobenius_norm(sigma), 1e-8);
}

TEST(Sqrtm, RejectsAsymmetricAndIndefinite) {
  EXPECT_THROW(sqrtm_spd(Tensor::from_rows({{1, 0.5}, {0, 1}})), DomainError);
  EXPECT_THROW(sqrtm_spd(Tensor::from_rows({{1, 0}, {0, -1}})), DomainError);
  EXPECT_THROW(sqrtm_spd(Tensor::matrix(2, 3)), DimensionError);
}

TEST(MeanCov, IdenticalRowsGiveZeroCovariance) {
  const MeanCov mc = mean_cov(Tensor::from_rows({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}}));
  for (double v : mc.cov.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(mc.mean, Tensor({3}, std::vector<double>{1, 2, 3}));
}

TEST(MeanCov, UnbiasedDivisor) {
  const MeanCov mc = mean_cov(Tensor::from_rows({{0}, {2}}));
  EXPECT_DOUBLE_EQ(mc.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(mc.cov[0], 2.0);
}

TEST(MeanCov, MatchesTwoPassReference) {
  Rng rng(16);
  const Tensor x = randn(rng, {100, 4});
  const MeanCov mc = mean_cov(x);
  std::vector<double> mean(4, 0.0);
  for (std::size_t r = 0; r < 100; ++r)
    for (std::size_t c = 0; c < 4; ++c) mean[c] += x(r, c) / 100.0;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(mc.mean[i], mean[i], 1e-12);
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < 100; ++r) acc += (x(r, i) - mean[i]) * (x(r, j) - mean[j]);
      EXPECT_NEAR(mc.cov(i, j), acc / 99.0, 1e-12);
      EXPECT_EQ(mc.cov(i, j), mc.cov(j, i));
    }
  }
}

TEST(MeanCov, NeedsTwoRows) {
  EXPECT_THROW(mean_cov(Tensor::matrix(1, 3)), InsufficientDataError);
}

TEST(TensorShape, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor::vector(3).rows(), DimensionError);
}

}  // namespace
}  // namespace sfg
