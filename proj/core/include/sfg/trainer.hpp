#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sfg/denoiser.hpp"
#include "sfg/rng.hpp"
#include "sfg/schedule.hpp"
#include "sfg/text_encoder.hpp"

namespace sfg {

struct TrainConfig {
  int steps = 2000;
  int batch = 8;
  double learning_rate = 0.1;
  double dropout = 0.1;  // probability of replacing the prompt by the empty prompt

  void validate() const;
};

struct TrainingExample {
  Tensor latent;  // clean x, P×latent_dim
  TextEmbeddings cond;
};

/// Called after every step with (step index starting at 1, minibatch loss).
using TrainCallback = std::function<void(int, double)>;

/// Plain gradient descent on E‖ε_θ(z_t, c) − ε‖² with conditioning dropout.
/// Each minibatch entry draws an example uniformly with replacement, t
/// uniformly from 1..T, ε ~ N(0, I), and with probability `dropout` swaps its
/// prompt for `null_cond`. Updates `params` in place; returns per-step
/// minibatch losses.
std::vector<double> train(DenoiserParams& params, std::span<const TrainingExample> data,
                          const TextEmbeddings& null_cond, const TrainConfig& config,
                          const NoiseSchedule& sched, Rng& rng, const TrainCallback& on_step = {});

/// Mean loss on `samples` fixed draws (example i mod N, random t and ε from
/// `rng`), no dropout. Used to compare checkpoints on identical noise.
double evaluate_loss(const DenoiserParams& params, std::span<const TrainingExample> data,
                     const NoiseSchedule& sched, Rng rng, int samples);

}  // namespace sfg
