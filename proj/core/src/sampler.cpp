#include "sfg/sampler.hpp"

#include <cstdio>
#include <ostream>

#include "sfg/errors.hpp"

namespace sfg {

namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

SemanticMap selected_map(const std::vector<AttentionRecord>& records) {
  SemanticMap map;
  for (const auto& r : records) map.layers.push_back(r.selected);
  return map;
}

}  // namespace

void SampleTrace::write(std::ostream& out) const {
  out << "# t,mode,lambda,eps_norm,passes,semantics\n";
  for (const auto& e : steps) {
    out << e.t << ',' << (e.mode == GuidanceMode::kClassifierFree ? "cf" : "sf") << ','
        << format_real(e.lambda) << ',' << format_real(e.eps_norm) << ',' << e.passes << ',';
    if (!e.semantics) {
      out << '-';
    } else {
      for (std::size_t l = 0; l < e.semantics->layers.size(); ++l) {
        if (l) out << ';';
        const auto& layer = e.semantics->layers[l];
        for (std::size_t p = 0; p < layer.size(); ++p) out << (p ? " " : "") << layer[p];
      }
    }
    out << '\n';
  }
}

GuidanceMode step_mode(int t, int steps, const GuidanceConfig& cfg, bool prompt_has_tokens) {
  if (cfg.mode == GuidanceMode::kClassifierFree || !prompt_has_tokens) return GuidanceMode::kClassifierFree;
  return t >= steps - cfg.resolved_ts(steps) ? GuidanceMode::kClassifierFree : GuidanceMode::kSegmentationFree;
}

GuidedScore guided_score(const DenoiserParams& params, const Tensor& z, int t, const NoiseSchedule& sched,
                         const TextEmbeddings& c, const TextEmbeddings& neg, const GuidanceConfig& cfg,
                         GuidanceMode mode) {
  GuidedScore out;
  ScoreResult cond = predict_score(z, t, sched, c, OverrideSpec::disabled(), params);
  ++out.passes;
  if (mode == GuidanceMode::kClassifierFree) {
    const ScoreResult uncond = predict_score(z, t, sched, neg, OverrideSpec::disabled(), params);
    ++out.passes;
    out.eps = classifier_free_combine(cond.score, uncond.score, cfg.w);
  } else {
    ScoreResult bar = predict_score(z, t, sched, c, OverrideSpec::with_scale(cfg.a), params);
    ++out.passes;
    out.eps = segmentation_free_combine(cond.score, bar.score, cfg.w_bar);
    out.bar_attention = std::move(bar.attention);
  }
  out.cond_attention = std::move(cond.attention);
  return out;
}

SampleResult sample(const DenoiserParams& params, const TextEmbeddings& c, const TextEmbeddings& neg,
                    const GuidanceConfig& cfg, const NoiseSchedule& sched, Rng& rng,
                    const SampleOptions& options) {
  const int steps = sched.steps();
  cfg.validate(steps);
  const ModelConfig& mc = params.config();
  const bool has_tokens = c.content_tokens() > 0;

  Tensor z = randn(rng, {static_cast<std::size_t>(mc.patches()), static_cast<std::size_t>(mc.latent_dim)});
  SampleResult result;
  result.trace.steps.reserve(static_cast<std::size_t>(steps));

  for (int t = steps; t >= 1; --t) {
    const GuidanceMode mode = step_mode(t, steps, cfg, has_tokens);
    GuidedScore g = guided_score(params, z, t, sched, c, neg, cfg, mode);

    TraceEntry entry;
    entry.t = t;
    entry.mode = mode;
    entry.lambda = sched.lambda(t);
    entry.eps_norm = frobenius_norm(g.eps);
    entry.passes = g.passes;
    if (has_tokens) {
      entry.semantics = mode == GuidanceMode::kSegmentationFree ? selected_map(g.bar_attention)
                                                                 : semantic_map(g.cond_attention);
    }
    if (options.capture_attention) entry.attention = std::move(g.cond_attention);
    result.trace.steps.push_back(std::move(entry));

    if (t > 1) {
      z = posterior_step(z, g.eps, t, sched, rng, options.variance_scale).z_prev;
    } else {
      z = final_step(z, g.eps, sched);
    }
  }
  result.z0 = std::move(z);
  return result;
}

}  // namespace sfg
