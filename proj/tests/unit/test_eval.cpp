#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "sfg/errors.hpp"
#include "sfg/eval.hpp"

namespace sfg {
namespace {

EmbeddingSet gaussian_set(Rng& r, std::size_t n, std::size_t d, double shift = 0.0, double stretch = 1.0) {
  EmbeddingSet s;
  s.rows = randn(r, {n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.rows(i, j) = shift + stretch * s.rows(i, j) * (1.0 + 0.3 * j);
  return s;
}

TEST(Frechet, ZeroOnIdenticalSets) {
  Rng r(81);
  const EmbeddingSet x = gaussian_set(r, 200, 6);
  EXPECT_NEAR(frechet(x, x), 0.0, 1e-8);
}

TEST(Frechet, OneDimensionalClosedForm) {
  Rng r(82);
  for (int trial = 0; trial < 50; ++trial) {
    const EmbeddingSet a = gaussian_set(r, 30, 1, 4.0 * r.uniform() - 2.0, 0.2 + 3.0 * r.uniform());
    const EmbeddingSet b = gaussian_set(r, 40, 1, 4.0 * r.uniform() - 2.0, 0.2 + 3.0 * r.uniform());
    const MeanCov ma = mean_cov(a.rows), mb = mean_cov(b.rows);
    const double dm = ma.mean[0] - mb.mean[0];
    const double ds = std::sqrt(ma.cov[0]) - std::sqrt(mb.cov[0]);
    EXPECT_NEAR(frechet(a, b), dm * dm + ds * ds, 1e-8);
  }
}

TEST(Frechet, MeanShiftCostsSquaredNorm) {
  Rng r(83);
  const EmbeddingSet a = gaussian_set(r, 100, 5);
  EmbeddingSet b = a;
  const std::vector<double> delta = {0.5, -1.0, 2.0, 0.0, 0.25};
  double norm2 = 0.0;
  for (double d : delta) norm2 += d * d;
  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t j = 0; j < 5; ++j) b.rows(i, j) += delta[j];
  EXPECT_NEAR(frechet(a, b), norm2, 1e-8);
}

TEST(FrechetProperty, SymmetricAndRotationInvariant) {
  Rng r(84);
  for (int trial = 0; trial < 10; ++trial) {
    const EmbeddingSet a = gaussian_set(r, 80, 4, 0.0, 1.0);
    const EmbeddingSet b = gaussian_set(r, 60, 4, 0.5, 1.5);
    EXPECT_NEAR(frechet(a, b), frechet(b, a), 1e-9);
    // Random orthogonal matrix from Gram-Schmidt.
    Tensor q = randn(r, {4, 4});
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t k = 0; k < i; ++k) {
        double d = 0.0;
        for (std::size_t j = 0; j < 4; ++j) d += q(i, j) * q(k, j);
        for (std::size_t j = 0; j < 4; ++j) q(i, j) -= d * q(k, j);
      }
      double n = 0.0;
      for (std::size_t j = 0; j < 4; ++j) n += q(i, j) * q(i, j);
      for (std::size_t j = 0; j < 4; ++j) q(i, j) /= std::sqrt(n);
    }
    const EmbeddingSet ra{matmul(a.rows, q), {}};
    const EmbeddingSet rb{matmul(b.rows, q), {}};
    EXPECT_NEAR(frechet(ra, rb), frechet(a, b), 1e-8);
  }
}

TEST(Frechet, Errors) {
  Rng r(85);
  EXPECT_THROW(frechet(gaussian_set(r, 10, 3), gaussian_set(r, 10, 4)), DimensionError);
  EXPECT_THROW(frechet(gaussian_set(r, 1, 3), gaussian_set(r, 10, 3)), InsufficientDataError);
}

TEST(DiversityCurve, FullSizeIsZeroAndSingleTrialHasNoSpread) {
  Rng r(86);
  const EmbeddingSet x = gaussian_set(r, 120, 4);
  const std::vector<std::size_t> sizes = {20, 120};
  const auto rows = diversity_curve(x, sizes, 5, Rng(1));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NEAR(rows[1].mean, 0.0, 1e-8);
  EXPECT_NEAR(rows[1].stddev, 0.0, 1e-8);
  EXPECT_GT(rows[0].stddev, 0.0);
  const auto single = diversity_curve(x, sizes, 1, Rng(1));
  EXPECT_EQ(single[0].stddev, 0.0);
  const std::vector<std::size_t> too_big = {121};
  EXPECT_THROW(diversity_curve(x, too_big, 2, Rng(1)), InsufficientDataError);
}

TEST(DiversityCurve, LargerSubsetsSitCloser) {
  const EmbeddingSet prompts = prompt_embeddings(
      [] {
        std::vector<std::string> p;
        for (const ToyScene& s : gen_dataset(600, Rng(87))) p.push_back(s.prompt);
        return p;
      }(),
      EncoderParams::random({}));
  const std::vector<std::size_t> sizes = {50, 300};
  const auto rows = diversity_curve(prompts, sizes, 5, Rng(2));
  EXPECT_LT(rows[1].mean, rows[0].mean);
  std::ostringstream csv;
  write_curve_csv(csv, rows);
  EXPECT_EQ(csv.str().rfind("size,mean,std\n50,", 0), 0u);
}

struct AlignmentFixture {
  EncoderParams encoder = EncoderParams::random({});
  AlignmentModel model = fit_alignment_model(encoder);
};

TEST(Alignment, MatchedScenesOutscoreMismatchedOnes) {
  AlignmentFixture f;
  const auto scenes = gen_dataset(1000, Rng(88));
  int wins = 0;
  for (int i = 0; i < 500; ++i) {
    const ToyScene& s = scenes[static_cast<std::size_t>(2 * i)];
    const ToyScene& other = scenes[static_cast<std::size_t>(2 * i + 1)];
    wins += alignment_score(s.latent, s.prompt, f.encoder, f.model) >
            alignment_score(other.latent, s.prompt, f.encoder, f.model);
  }
  EXPECT_GE(wins, 450);
}

TEST(Alignment, ScaleInvariantAndZeroForBlankImage) {
  AlignmentFixture f;
  const ToyScene s = gen_dataset(1, Rng(89))[0];
  const double base = alignment_score(s.latent, s.prompt, f.encoder, f.model);
  EXPECT_NEAR(alignment_score(scale(s.latent, 2.0), s.prompt, f.encoder, f.model), base, 1e-12);
  EXPECT_GE(base, -1.0);
  EXPECT_LE(base, 1.0);
  EXPECT_EQ(alignment_score(Tensor::matrix(64, 8), s.prompt, f.encoder, f.model), 0.0);
}

std::vector<std::string> numbered(std::size_t n) {
  std::vector<std::string> p;
  for (std::size_t i = 0; i < n; ++i) p.push_back("p" + std::to_string(i));
  return p;
}

TEST(SubsetSelect, SmallHandTrace) {
  const auto prompts = numbered(10);
  std::vector<double> scores = {0.5, 0.1, 0.9, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 1.0};
  const std::vector<double> bands = {90, 50, 10};
  const SubsetReport rep = subset_select(prompts, scores, 3, bands);
  ASSERT_EQ(rep.bands.size(), 3u);
  EXPECT_EQ(rep.bands[0].items[0].rank, 9u);
  EXPECT_EQ(rep.bands[1].items[0].rank, 5u);
  EXPECT_EQ(rep.bands[2].items[0].rank, 1u);
  EXPECT_EQ(rep.bands[0].items[0].prompt, "p2");  // 9th smallest is 0.9
  EXPECT_EQ(rep.bands[2].items[0].prompt, "p1");
  std::ostringstream csv;
  rep.write_csv(csv);
  EXPECT_EQ(csv.str(), "band,rank,prompt,score\n90,9,\"p2\",0.90000000000000002\n50,5,\"p0\",0.5\n10,1,\"p1\",0.10000000000000001\n");
}

TEST(SubsetSelect, TiesFollowInputOrder) {
  const auto prompts = numbered(10);
  const std::vector<double> scores(10, 1.0);
  const std::vector<double> bands = {90, 50, 10};
  const SubsetReport rep = subset_select(prompts, scores, 3, bands);
  EXPECT_EQ(rep.bands[0].items[0].id, 8u);
  EXPECT_EQ(rep.bands[1].items[0].id, 4u);
  EXPECT_EQ(rep.bands[2].items[0].id, 0u);
}

TEST(SubsetSelect, FiveThousandToOneFifty) {
  const auto prompts = numbered(5000);
  Rng r(90);
  std::vector<double> scores;
  for (int i = 0; i < 5000; ++i) scores.push_back(r.uniform());
  const std::vector<double> bands = {90, 50, 10};
  const SubsetReport rep = subset_select(prompts, scores, 150, bands);
  std::set<std::size_t> ids;
  for (const SubsetBand& b : rep.bands) {
    EXPECT_EQ(b.items.size(), 50u);
    for (std::size_t i = 1; i < b.items.size(); ++i) EXPECT_EQ(b.items[i].rank, b.items[i - 1].rank + 1);
    for (const SubsetItem& it : b.items) ids.insert(it.id);
  }
  EXPECT_EQ(ids.size(), 150u);
  EXPECT_EQ(rep.bands[0].center_rank, 4500u);
  EXPECT_EQ(rep.bands[0].items.front().rank, 4476u);
  EXPECT_EQ(rep.bands[2].center_rank, 500u);
}

TEST(SubsetSelect, WindowsClampAtTheEnds) {
  const auto prompts = numbered(20);
  std::vector<double> scores;
  for (int i = 0; i < 20; ++i) scores.push_back(i);
  const std::vector<double> bands = {100, 0};
  const SubsetReport rep = subset_select(prompts, scores, 8, bands);
  EXPECT_EQ(rep.bands[0].items.front().rank, 17u);
  EXPECT_EQ(rep.bands[0].items.back().rank, 20u);
  EXPECT_EQ(rep.bands[1].items.front().rank, 1u);
}

TEST(SubsetSelect, Errors) {
  const auto prompts = numbered(10);
  const std::vector<double> scores(10, 0.0);
  const std::vector<double> bands = {90, 50, 10};
  EXPECT_THROW(subset_select(prompts, scores, 4, bands), ConfigError);
  EXPECT_THROW(subset_select(prompts, scores, 12, bands), InsufficientDataError);
  const std::vector<double> close = {50, 55};  // both centre on rank 5
  EXPECT_THROW(subset_select(prompts, scores, 4, close), DomainError);
  std::vector<double> bad = scores;
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(subset_select(prompts, bad, 3, bands), DomainError);
  EXPECT_EQ(subset_select(prompts, scores, 9, bands).bands[2].items.back().rank, 3u);
}

TEST(StepBenchmark, CountsTwoPassesPerModeAndRejectsZeroRepeats) {
  const DenoiserParams params = DenoiserParams::init({}, 5);
  const EncoderParams enc = EncoderParams::random({});
  const TextEmbeddings c = encode(tokenize("a red square"), enc);
  const NoiseSchedule sched = make_schedule(20);
  const StepTiming t = step_benchmark(params, c, null_embeddings(enc), {}, sched, 3, 1);
  EXPECT_EQ(t.classifier_free_passes, 2);
  EXPECT_EQ(t.segmentation_free_passes, 2);
  EXPECT_GT(t.classifier_free_seconds, 0.0);
  EXPECT_GT(t.segmentation_free_seconds, 0.0);
  EXPECT_THROW(step_benchmark(params, c, null_embeddings(enc), {}, sched, 0), ConfigError);
}

TEST(EmbeddingFiles, CsvAndBinaryRoundTrip) {
  Rng r(91);
  const EmbeddingSet x = gaussian_set(r, 7, 3);
  const auto dir = std::filesystem::temp_directory_path() / "sfg_eval_test";
  std::filesystem::create_directories(dir);
  write_embeddings(dir / "e.csv", x);
  write_embeddings(dir / "e.sfge", x);
  EXPECT_EQ(read_embeddings(dir / "e.csv").rows, x.rows);
  EXPECT_EQ(read_embeddings(dir / "e.sfge").rows, x.rows);
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "a,b\n1,2\n3\n";
  }
  EXPECT_THROW(read_embeddings(dir / "bad.csv"), FormatError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace sfg
