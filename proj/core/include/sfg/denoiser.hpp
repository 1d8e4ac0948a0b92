#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfg/param_set.hpp"
#include "sfg/schedule.hpp"
#include "sfg/tensor.hpp"
#include "sfg/text_encoder.hpp"

namespace sfg {

/// Shape of the toy score network. Latents are grid_h·grid_w patches of
/// latent_dim channels, stored as a P×latent_dim matrix (patch p = row·W + col).
struct ModelConfig {
  int grid_h = 8;
  int grid_w = 8;
  int latent_dim = 8;
  int width = 32;
  int layers = 2;
  int heads = 1;
  int mlp_hidden = 64;
  int text_dim = 32;
  int time_features = 16;

  int patches() const { return grid_h * grid_w; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Cross-attention weight override. When enabled, each patch's most attended
/// non-BOS token has its post-softmax weight multiplied by −scale. Rows are
/// not renormalised afterwards.
struct OverrideSpec {
  bool enabled = false;
  double scale = 0.0;

  static OverrideSpec disabled() { return {}; }
  static OverrideSpec with_scale(double a);
};

/// One cross-attention layer's weights, P×(n+1), averaged over heads.
struct AttentionRecord {
  Tensor weights;             // before the override; rows sum to 1
  Tensor applied;             // the weights multiplied into the token values
  std::vector<int> selected;  // overridden column per patch; empty when no override ran
};

/// Weights of the score network ε_θ plus its configuration.
class DenoiserParams {
 public:
  DenoiserParams() = default;
  static DenoiserParams init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamSet& weights() { return weights_; }
  const ParamSet& weights() const { return weights_; }

  /// Weights plus a "config" entry; the inverse is from_params.
  ParamSet to_params() const;
  static DenoiserParams from_params(const ParamSet& params);

  friend bool operator==(const DenoiserParams&, const DenoiserParams&) = default;

 private:
  ModelConfig config_;
  ParamSet weights_;
};

struct ScoreResult {
  Tensor score;                             // P×latent_dim
  std::vector<AttentionRecord> attention;   // one per layer
};

/// Sinusoidal features of the log-SNR fed to the learned time projection.
std::vector<double> time_features(double lambda, int count);

/// Standalone cross-attention of `layer` over prompt embeddings `c`.
/// `patches` is the P×width input of that module (after its layer norm).
struct CrossAttentionResult {
  Tensor out;  // P×width
  AttentionRecord record;
};
CrossAttentionResult cross_attention(const Tensor& patches, const TextEmbeddings& c,
                                     const OverrideSpec& override_spec,
                                     const DenoiserParams& params, int layer);

/// Full forward pass at step t of `sched`. With the override disabled this is
/// ε_θ(z_t, c); enabled, it is the segmentation-free pass ε̄ where each layer
/// picks its own argmax from the weights it just computed.
ScoreResult predict_score(const Tensor& z, int t, const NoiseSchedule& sched,
                          const TextEmbeddings& c, const OverrideSpec& override_spec,
                          const DenoiserParams& params);
ScoreResult predict_score_lambda(const Tensor& z, double lambda, const TextEmbeddings& c,
                                 const OverrideSpec& override_spec, const DenoiserParams& params);

/// mean((ε_θ(z_t, c) − ε)²) over all entries.
double denoising_loss(const DenoiserParams& params, const Tensor& z_t, double lambda,
                      const TextEmbeddings& c, const Tensor& eps);

/// Same loss; adds weight·∂loss/∂θ into `grad` (shaped like params.weights()).
double denoising_loss_grad(const DenoiserParams& params, const Tensor& z_t, double lambda,
                           const TextEmbeddings& c, const Tensor& eps, ParamSet& grad,
                           double weight = 1.0);

/// Total forward passes executed in this process, for structural cost checks.
std::uint64_t forward_pass_count();

}  // namespace sfg
