#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sfg/denoiser.hpp"
#include "sfg/schedule.hpp"
#include "sfg/tensor.hpp"
#include "sfg/text_encoder.hpp"

namespace sfg {

enum class GuidanceMode { kClassifierFree, kSegmentationFree };

std::string_view to_string(GuidanceMode mode);
/// Accepts "cfg", "classifier_free", "segfree", "segmentation_free".
GuidanceMode parse_guidance_mode(std::string_view text);

/// Sampling hyperparameters. Defaults: w = 7.5, w̄ = 2.5, a = 10, t_s = T/2.
struct GuidanceConfig {
  double w = 7.5;
  double w_bar = 2.5;
  double a = 10.0;
  int t_s = -1;  // negative means T/2
  GuidanceMode mode = GuidanceMode::kSegmentationFree;

  /// t_s with the T/2 default resolved.
  int resolved_ts(int steps) const { return t_s < 0 ? steps / 2 : t_s; }
  /// Throws ConfigError on w, w̄, a < 0 or t_s outside [0, T].
  void validate(int steps) const;
};

/// (1 + w)·ε_cond − w·ε_uncond.
Tensor classifier_free_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w);
/// (1 + w̄)·ε_cond − w̄·ε̄.
Tensor segmentation_free_combine(const Tensor& eps_cond, const Tensor& eps_bar, double w_bar);

/// Per layer, per patch token index in 1..n.
struct SemanticMap {
  std::vector<std::vector<int>> layers;

  friend bool operator==(const SemanticMap&, const SemanticMap&) = default;
};

/// argmax over columns 1..n of each row, ties to the lowest index; column 0
/// (BOS) is never returned. Throws EmptyPromptError when n = 0.
std::vector<int> local_semantics(const Tensor& weights);

/// local_semantics of each layer's pre-override weights.
SemanticMap semantic_map(const std::vector<AttentionRecord>& records);

struct OracleReport {
  std::vector<int> semantics;            // per patch, 1..n
  std::vector<double> layer_agreement;   // fraction of patches agreeing with local_semantics
};

/// Diagnostic only, n+1 forward passes. For each i ≥ 1, the score is recomputed
/// with embedding row i deleted (not re-encoded); each patch takes the i with
/// the largest ‖ε(z, c) − ε(z, c − {c_i})‖₂ over its channels, ties to the
/// lowest i. Agreement is measured against local_semantics of the conditional
/// pass at every layer.
OracleReport global_semantics_oracle(const Tensor& z, int t, const NoiseSchedule& sched,
                                     const TextEmbeddings& c, const DenoiserParams& params);

}  // namespace sfg
