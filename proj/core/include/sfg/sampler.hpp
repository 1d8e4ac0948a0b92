#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "sfg/denoiser.hpp"
#include "sfg/guidance.hpp"
#include "sfg/rng.hpp"
#include "sfg/schedule.hpp"
#include "sfg/text_encoder.hpp"

namespace sfg {

struct TraceEntry {
  int t = 0;
  GuidanceMode mode = GuidanceMode::kClassifierFree;
  double lambda = 0.0;
  double eps_norm = 0.0;  // ‖ε̃‖₂ over the whole grid
  int passes = 0;         // denoiser forward passes spent on this step
  // Classifier-free steps: argmax of the conditional pass. Segmentation-free
  // steps: the columns the ε̄ pass actually overrode. Empty prompt: none.
  std::optional<SemanticMap> semantics;
  std::vector<AttentionRecord> attention;  // conditional pass, only with capture_attention
};

/// One entry per reverse step, ordered t = T … 1.
///
/// Text form, one line per step after a '#' header line:
///   t,mode,lambda,eps_norm,passes,semantics
/// mode is "cf" or "sf"; reals use 17 significant digits; semantics is
/// "-" or layers joined by ';', each layer the per-patch indices joined by ' '.
struct SampleTrace {
  std::vector<TraceEntry> steps;

  void write(std::ostream& out) const;
};

struct SampleOptions {
  bool capture_attention = false;
  double variance_scale = 1.0;  // multiplies the posterior σ̃; 0 gives a deterministic sampler
};

struct SampleResult {
  Tensor z0;
  SampleTrace trace;
};

/// Which guidance a given reverse step uses. Classifier-free while
/// t ≥ T − t_s (so t_s + 1 steps when t_s < T), segmentation-free after.
/// Prompts without non-BOS tokens, and kClassifierFree configs, always get
/// classifier-free guidance.
GuidanceMode step_mode(int t, int steps, const GuidanceConfig& cfg, bool prompt_has_tokens);

struct GuidedScore {
  Tensor eps;  // ε̃
  int passes = 0;
  std::vector<AttentionRecord> cond_attention;
  std::vector<AttentionRecord> bar_attention;  // segmentation-free steps only
};

/// ε̃ for one step: two forward passes in either mode.
GuidedScore guided_score(const DenoiserParams& params, const Tensor& z, int t, const NoiseSchedule& sched,
                         const TextEmbeddings& c, const TextEmbeddings& neg, const GuidanceConfig& cfg,
                         GuidanceMode mode);

/// Full reverse process from z_T ~ N(0, I). `neg` is the negative prompt used
/// by classifier-free steps, normally null_embeddings.
SampleResult sample(const DenoiserParams& params, const TextEmbeddings& c, const TextEmbeddings& neg,
                    const GuidanceConfig& cfg, const NoiseSchedule& sched, Rng& rng,
                    const SampleOptions& options = {});

}  // namespace sfg
