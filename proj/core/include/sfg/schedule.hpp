#pragma once

#include <vector>

#include "sfg/rng.hpp"
#include "sfg/tensor.hpp"

namespace sfg {

/// Variance-preserving log-SNR schedule. Steps are 1-based: t = 1 is the
/// least noisy, t = T the most.
///
///   α_t² = 1 / (1 + e^{−λ_t}),  σ_t² = 1 / (1 + e^{λ_t})
///
/// σ_t² is evaluated directly rather than as 1 − α_t² so it keeps full
/// relative precision at large λ; the two still sum to 1 to within rounding.
class NoiseSchedule {
 public:
  /// λ_1..λ_T; throws ConfigError unless strictly decreasing and finite.
  static NoiseSchedule from_lambdas(std::vector<double> lambdas);

  int steps() const { return static_cast<int>(lambda_.size()); }
  double lambda(int t) const { return lambda_.at(index(t)); }
  double alpha(int t) const { return alpha_.at(index(t)); }
  double sigma(int t) const { return sigma_.at(index(t)); }

  const std::vector<double>& lambdas() const { return lambda_; }
  const std::vector<double>& alphas() const { return alpha_; }
  const std::vector<double>& sigmas() const { return sigma_; }

 private:
  std::size_t index(int t) const;

  std::vector<double> lambda_, alpha_, sigma_;
};

inline constexpr double kDefaultLambdaMax = 10.0;
inline constexpr double kDefaultLambdaMin = -10.0;

/// λ linearly spaced from lambda_max at t = 1 to lambda_min at t = T.
NoiseSchedule make_schedule(int steps, double lambda_max = kDefaultLambdaMax,
                            double lambda_min = kDefaultLambdaMin);

/// z_t = α_t·x + σ_t·ε.
Tensor add_noise(const Tensor& x, int t, const Tensor& eps, const NoiseSchedule& sched);

struct PosteriorStep {
  Tensor z_prev;  // z_{t−1}
  Tensor x_hat;   // (z_t − σ_t·ε̃) / α_t
};

/// One ancestral step from t to t−1 (t ≥ 2) using the Gaussian posterior
/// q(z_{t−1} | z_t, x̂) with its own variance σ̃_t² (the lower bound choice):
///
///   α_{t|s} = α_t/α_s,  σ²_{t|s} = σ_t² − α_{t|s}² σ_s²      (s = t−1)
///   μ = (α_{t|s} σ_s² / σ_t²) z_t + (α_s σ²_{t|s} / σ_t²) x̂
///   σ̃² = σ²_{t|s} σ_s² / σ_t²
///
/// `variance_scale` multiplies σ̃; with 0 no noise is drawn from `rng`.
PosteriorStep posterior_step(const Tensor& z, const Tensor& eps_tilde, int t,
                             const NoiseSchedule& sched, Rng& rng, double variance_scale = 1.0);

/// Posterior standard deviation σ̃_t for t ≥ 2.
double posterior_stddev(int t, const NoiseSchedule& sched);

/// z_0 = (z_1 − σ_1·ε̃) / α_1.
Tensor final_step(const Tensor& z1, const Tensor& eps_tilde, const NoiseSchedule& sched);

}  // namespace sfg
