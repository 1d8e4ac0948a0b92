#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sfg/denoiser.hpp"
#include "sfg/guidance.hpp"
#include "sfg/rng.hpp"
#include "sfg/schedule.hpp"
#include "sfg/tensor.hpp"
#include "sfg/text_encoder.hpp"
#include "sfg/toy_world.hpp"

namespace sfg {

/// N×d pooled embeddings, one row per prompt or image.
struct EmbeddingSet {
  Tensor rows;
  std::vector<std::string> labels;  // optional; empty or one per row

  std::size_t size() const { return rows.rank() == 2 ? rows.rows() : 0; }
  std::size_t dim() const { return rows.rank() == 2 ? rows.cols() : 0; }
  EmbeddingSet subset(std::span<const std::size_t> indices) const;
};

/// Pooled (row-mean) text embedding of each prompt.
EmbeddingSet prompt_embeddings(std::span<const std::string> prompts, const EncoderParams& encoder);

/// Fréchet distance between Gaussian fits of two embedding sets:
///   ‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2·(Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2})
/// Covariances use divisor N−1. Result is clamped at 0.
double frechet(const EmbeddingSet& a, const EmbeddingSet& b);

struct CurveRow {
  std::size_t size = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample stddev over trials; 0 for a single trial
};

/// For each size, `trials` random subsets drawn without replacement (trial j
/// of size i uses rng.substream(i·trials + j)); reports the Fréchet distance
/// of each subset to the full set.
std::vector<CurveRow> diversity_curve(const EmbeddingSet& prompts, std::span<const std::size_t> sizes,
                                      int trials, const Rng& rng);
void write_curve_csv(std::ostream& out, std::span<const CurveRow> rows);

/// Frozen linear map from pooled prompt embedding (plus a bias term) to the
/// expected mean-pooled image vector, ridge-fitted once on seeded toy scenes.
struct AlignmentModel {
  Tensor projection;  // (text_dim + 1)×latent_dim
};

AlignmentModel fit_alignment_model(const EncoderParams& encoder, const Grammar& grammar = {},
                                   std::uint64_t seed = 7, int scenes = 2000, double ridge = 1e-3);

/// Cosine similarity between the mean-pooled image and the projected prompt.
/// Returns 0 when either vector is zero.
double alignment_score(const Tensor& image, const std::string& prompt, const EncoderParams& encoder,
                       const AlignmentModel& model);

struct SubsetItem {
  std::size_t rank = 0;  // 1-based, ascending score
  std::size_t id = 0;    // index into the input
  std::string prompt;
  double score = 0.0;
};

struct SubsetBand {
  double percentile = 0.0;
  std::size_t center_rank = 0;
  std::vector<SubsetItem> items;
};

struct SubsetReport {
  std::vector<SubsetBand> bands;

  /// CSV with header "band,rank,prompt,score"; prompts are quoted.
  void write_csv(std::ostream& out) const;
};

/// 1-based rank of percentile q among n sorted items: ⌊q/100·(n−1)⌋ + 1.
std::size_t percentile_rank(double q, std::size_t n);

/// Sorts prompts by ascending score (stable: ties keep input order), then for
/// every band takes total/len(bands) contiguous ranks centered on its
/// percentile rank, shifted inward at the ends. Throws when total is not a
/// multiple of the band count, there are too few prompts, or windows overlap.
SubsetReport subset_select(std::span<const std::string> prompts, std::span<const double> scores,
                           std::size_t total, std::span<const double> bands);

struct StepTiming {
  double classifier_free_seconds = 0.0;
  double segmentation_free_seconds = 0.0;
  int classifier_free_passes = 0;
  int segmentation_free_passes = 0;
};

/// Mean wall time of one guided reverse step (score + posterior update) in
/// each mode, on identical inputs at t = T/2 (at least 2). The modes are
/// interleaved; `warmup` untimed rounds come first.
StepTiming step_benchmark(const DenoiserParams& params, const TextEmbeddings& c, const TextEmbeddings& neg,
                          const GuidanceConfig& cfg, const NoiseSchedule& sched, int repeats, int warmup = 5);

/// Embedding files: the SFGE container (first rank-2 tensor, preferring one
/// named "embeddings") or CSV with one row per line. A non-numeric first
/// line is taken as a header.
EmbeddingSet read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);

}  // namespace sfg
