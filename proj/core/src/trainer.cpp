#include "sfg/trainer.hpp"

#include <cmath>

#include "sfg/errors.hpp"

namespace sfg {

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train steps must be >= 0");
  if (batch < 1) throw ConfigError("train batch must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw ConfigError("dropout probability must lie in [0, 1]");
}

std::vector<double> train(DenoiserParams& params, std::span<const TrainingExample> data,
                          const TextEmbeddings& null_cond, const TrainConfig& config,
                          const NoiseSchedule& sched, Rng& rng, const TrainCallback& on_step) {
  config.validate();
  if (data.empty()) throw InsufficientDataError("train: empty dataset");

  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(config.steps));
  ParamSet grad = params.weights().zeros_like();
  const double inv_batch = 1.0 / config.batch;

  for (int step = 1; step <= config.steps; ++step) {
    grad.fill(0.0);
    double loss = 0.0;
    for (int b = 0; b < config.batch; ++b) {
      const TrainingExample& ex = data[rng.uniform_index(data.size())];
      const int t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(sched.steps())));
      const Tensor eps = randn(rng, ex.latent.shape());
      const bool drop = rng.bernoulli(config.dropout);
      const Tensor z_t = add_noise(ex.latent, t, eps, sched);
      loss += inv_batch * denoising_loss_grad(params, z_t, sched.lambda(t), drop ? null_cond : ex.cond, eps,
                                              grad, inv_batch);
    }
    params.weights().axpy(-config.learning_rate, grad);
    losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return losses;
}

double evaluate_loss(const DenoiserParams& params, std::span<const TrainingExample> data,
                     const NoiseSchedule& sched, Rng rng, int samples) {
  if (data.empty()) throw InsufficientDataError("evaluate_loss: empty dataset");
  if (samples < 1) throw ConfigError("evaluate_loss: samples must be >= 1");
  double total = 0.0;
  for (int i = 0; i < samples; ++i) {
    const TrainingExample& ex = data[static_cast<std::size_t>(i) % data.size()];
    const int t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(sched.steps())));
    const Tensor eps = randn(rng, ex.latent.shape());
    total += denoising_loss(params, add_noise(ex.latent, t, eps, sched), sched.lambda(t), ex.cond, eps);
  }
  return total / samples;
}

}  // namespace sfg
