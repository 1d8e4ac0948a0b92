#include "sfg/schedule.hpp"

#include <cmath>

#include "sfg/errors.hpp"

namespace sfg {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

NoiseSchedule NoiseSchedule::from_lambdas(std::vector<double> lambdas) {
  if (lambdas.empty()) throw ConfigError("schedule needs at least one step");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!std::isfinite(lambdas[i])) throw ConfigError("schedule log-SNR must be finite");
    if (i > 0 && !(lambdas[i] < lambdas[i - 1])) {
      throw ConfigError("schedule log-SNR must be strictly decreasing in t");
    }
  }
  NoiseSchedule s;
  s.lambda_ = std::move(lambdas);
  for (double l : s.lambda_) {
    s.alpha_.push_back(std::sqrt(sigmoid(l)));
    s.sigma_.push_back(std::sqrt(sigmoid(-l)));
  }
  return s;
}

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > steps()) {
    throw DomainError("step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

NoiseSchedule make_schedule(int steps, double lambda_max, double lambda_min) {
  if (steps < 1) throw ConfigError("schedule needs T >= 1");
  if (!(lambda_max > lambda_min)) throw ConfigError("schedule needs lambda_max > lambda_min");
  std::vector<double> lambdas(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    lambdas[static_cast<std::size_t>(t - 1)] = lambda_max + (lambda_min - lambda_max) * frac;
  }
  return NoiseSchedule::from_lambdas(std::move(lambdas));
}

Tensor add_noise(const Tensor& x, int t, const Tensor& eps, const NoiseSchedule& sched) {
  require_same_shape(x, eps, "add_noise");
  const double a = sched.alpha(t), s = sched.sigma(t);
  Tensor z = x;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = a * x[i] + s * eps[i];
  return z;
}

double posterior_stddev(int t, const NoiseSchedule& sched) {
  if (t < 2) throw DomainError("posterior_stddev needs t >= 2");
  const double a_t = sched.alpha(t), s_t = sched.sigma(t);
  const double a_s = sched.alpha(t - 1), s_s = sched.sigma(t - 1);
  const double a_ts = a_t / a_s;
  const double var_ts = std::max(0.0, s_t * s_t - a_ts * a_ts * s_s * s_s);
  return std::sqrt(var_ts * s_s * s_s / (s_t * s_t));
}

PosteriorStep posterior_step(const Tensor& z, const Tensor& eps_tilde, int t,
                             const NoiseSchedule& sched, Rng& rng, double variance_scale) {
  if (t < 2) throw DomainError("posterior_step needs t >= 2; use final_step at t = 1");
  require_same_shape(z, eps_tilde, "posterior_step");
  const double a_t = sched.alpha(t), s_t = sched.sigma(t);
  const double a_s = sched.alpha(t - 1), s_s = sched.sigma(t - 1);
  const double a_ts = a_t / a_s;
  const double var_ts = std::max(0.0, s_t * s_t - a_ts * a_ts * s_s * s_s);
  const double coef_z = a_ts * s_s * s_s / (s_t * s_t);
  const double coef_x = a_s * var_ts / (s_t * s_t);
  const double stddev = variance_scale * posterior_stddev(t, sched);

  PosteriorStep out{Tensor(z.shape()), Tensor(z.shape())};
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.x_hat[i] = (z[i] - s_t * eps_tilde[i]) / a_t;
    out.z_prev[i] = coef_z * z[i] + coef_x * out.x_hat[i];
  }
  if (stddev != 0.0) {
    for (double& v : out.z_prev.values()) v += stddev * rng.normal();
  }
  return out;
}

Tensor final_step(const Tensor& z1, const Tensor& eps_tilde, const NoiseSchedule& sched) {
  require_same_shape(z1, eps_tilde, "final_step");
  const double a = sched.alpha(1), s = sched.sigma(1);
  Tensor z0 = z1;
  for (std::size_t i = 0; i < z0.size(); ++i) z0[i] = (z1[i] - s * eps_tilde[i]) / a;
  return z0;
}

}  // namespace sfg
