#include "sfg/guidance.hpp"

#include <cmath>

#include "sfg/errors.hpp"

namespace sfg {

std::string_view to_string(GuidanceMode mode) {
  return mode == GuidanceMode::kClassifierFree ? "classifier_free" : "segmentation_free";
}

GuidanceMode parse_guidance_mode(std::string_view text) {
  if (text == "cfg" || text == "classifier_free" || text == "cf") return GuidanceMode::kClassifierFree;
  if (text == "segfree" || text == "segmentation_free" || text == "sf") return GuidanceMode::kSegmentationFree;
  throw ConfigError("unknown guidance mode: " + std::string(text));
}

void GuidanceConfig::validate(int steps) const {
  if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("guidance w must be >= 0");
  if (!(w_bar >= 0.0) || !std::isfinite(w_bar)) throw ConfigError("guidance w_bar must be >= 0");
  if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("segmentation-free scale a must be >= 0");
  const int ts = resolved_ts(steps);
  if (ts < 0 || ts > steps) {
    throw ConfigError("t_s must lie in [0, T]; got " + std::to_string(ts) + " with T = " + std::to_string(steps));
  }
}

namespace {

// (1 + w)·a − w·b evaluated as a + w·(a − b): equal inputs and w = 0 return a exactly.
Tensor extrapolate(const Tensor& a, const Tensor& b, double w, const char* what) {
  require_same_shape(a, b, what);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + w * (a[i] - b[i]);
  return out;
}

}  // namespace

Tensor classifier_free_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w) {
  return extrapolate(eps_cond, eps_uncond, w, "classifier_free_combine");
}

Tensor segmentation_free_combine(const Tensor& eps_cond, const Tensor& eps_bar, double w_bar) {
  return extrapolate(eps_cond, eps_bar, w_bar, "segmentation_free_combine");
}

std::vector<int> local_semantics(const Tensor& weights) {
  require_matrix(weights, "local_semantics");
  if (weights.cols() < 2) throw EmptyPromptError("local_semantics: prompt has no non-BOS tokens");
  std::vector<int> out(weights.rows());
  for (std::size_t p = 0; p < weights.rows(); ++p) {
    std::size_t best = 1;
    for (std::size_t i = 2; i < weights.cols(); ++i) {
      if (weights(p, i) > weights(p, best)) best = i;
    }
    out[p] = static_cast<int>(best);
  }
  return out;
}

SemanticMap semantic_map(const std::vector<AttentionRecord>& records) {
  SemanticMap map;
  for (const auto& r : records) map.layers.push_back(local_semantics(r.weights));
  return map;
}

OracleReport global_semantics_oracle(const Tensor& z, int t, const NoiseSchedule& sched,
                                     const TextEmbeddings& c, const DenoiserParams& params) {
  const std::size_t n = c.content_tokens();
  if (n == 0) throw EmptyPromptError("global_semantics_oracle: prompt has no non-BOS tokens");

  const ScoreResult full = predict_score(z, t, sched, c, OverrideSpec::disabled(), params);
  const std::size_t patches = full.score.rows();
  std::vector<double> best_norm(patches, -1.0);
  OracleReport report;
  report.semantics.assign(patches, 1);

  for (std::size_t i = 1; i <= n; ++i) {
    const ScoreResult omitted = predict_score(z, t, sched, c.without_row(i), OverrideSpec::disabled(), params);
    for (std::size_t p = 0; p < patches; ++p) {
      double sq = 0.0;
      for (std::size_t ch = 0; ch < full.score.cols(); ++ch) {
        const double d = full.score(p, ch) - omitted.score(p, ch);
        sq += d * d;
      }
      const double norm = std::sqrt(sq);
      if (norm > best_norm[p]) {
        best_norm[p] = norm;
        report.semantics[p] = static_cast<int>(i);
      }
    }
  }

  for (const auto& rec : full.attention) {
    const std::vector<int> local = local_semantics(rec.weights);
    std::size_t agree = 0;
    for (std::size_t p = 0; p < patches; ++p) agree += local[p] == report.semantics[p] ? 1 : 0;
    report.layer_agreement.push_back(static_cast<double>(agree) / static_cast<double>(patches));
  }
  return report;
}

}  // namespace sfg
