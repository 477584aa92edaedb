#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dptext/common.hpp"

namespace dptext::dp {

struct PrivacyParams {
  double epsilon = 8.0;
  double delta = 0.0;  // 0 means "use default_delta(dataset_size)"
  double clip_norm = 1.0;
  std::size_t dataset_size = 0;
  std::size_t batch_size = 4;
  std::size_t epochs = 4;

  static double default_delta(std::size_t n) { return 1.0 / (2.0 * static_cast<double>(n)); }

  double resolved_delta() const { return delta > 0.0 ? delta : default_delta(dataset_size); }
  double sampling_rate() const {
    return static_cast<double>(batch_size) / static_cast<double>(dataset_size);
  }
  std::size_t steps_per_epoch() const { return (dataset_size + batch_size - 1) / batch_size; }
  std::size_t total_steps() const { return epochs * steps_per_epoch(); }

  // Throws ConfigError naming the offending field.
  void validate() const;

  nlohmann::json to_json() const;
};

struct GradientBatch {
  std::vector<std::vector<double>> per_sample;

  std::size_t size() const { return per_sample.size(); }
  std::size_t dim() const { return per_sample.empty() ? 0 : per_sample.front().size(); }
};

double l2_norm(std::span<const double> v);

// g / max(1, ||g||_2 / C). Returns g unchanged (exactly) when ||g||_2 <= C.
std::vector<double> clip_gradient(std::span<const double> g, double clip_norm);

struct NoiseDrawRecord {
  std::size_t dim = 0;
  double sigma_cc = 0.0;  // sigma * C, per-coordinate stddev before the 1/B scale
  double noise_l2 = 0.0;
  std::uint64_t rng_draws = 0;
};

struct DpStepResult {
  std::vector<double> update;
  NoiseDrawRecord noise;
};

// One DPSGD step over per-sample gradients:
//   update = -lr * ( sum_i clip(g_i, C) + N(0, sigma^2 C^2 I) ) / B
// Noise is drawn once per step from the supplied rng. With sigma = 0 the
// update is exactly -lr times the mean clipped gradient.
DpStepResult dp_step(const GradientBatch& batch, double clip_norm, double sigma, double lr,
                     Rng& rng, bool parallel = true);
// Serial reference twin; must agree bitwise with the parallel kernel.
DpStepResult dp_step_serial(const GradientBatch& batch, double clip_norm, double sigma, double lr,
                            Rng& rng);

// Per-step Renyi-DP cost of the subsampled Gaussian mechanism at order alpha.
// q = 1 is the plain Gaussian mechanism, alpha / (2 sigma^2). Integer orders
// use the binomial expansion; fractional orders the two-sided series.
double rdp_of_subsampled_gaussian(double q, double sigma, double alpha);

// {1.25, 1.5, ..., 63.75} plus the integers 2..64, deduplicated.
std::vector<double> default_rdp_orders();

struct EpsilonResult {
  double epsilon = 0.0;
  double best_order = 0.0;
};

// (eps, delta) after `steps` compositions: min over orders of
// steps * rdp(order) + log(1/delta) / (order - 1).
EpsilonResult account_epsilon(double sigma, double q, std::size_t steps, double delta,
                              std::span<const double> orders);

// Smallest sigma in [1e-2, 1e3] with account_epsilon(sigma) <= target_epsilon,
// located by bisection to `tolerance` on epsilon or 1e-4 bracket width.
// Throws ConfigError when no sigma in range reaches the target.
double calibrate_noise(double target_epsilon, double delta, double q, std::size_t steps,
                       std::span<const double> orders, double tolerance = 1e-3);

// Consumed-budget trajectory for one training run. epsilon_spent() is
// nondecreasing in steps_taken.
class AccountantLedger {
 public:
  AccountantLedger() = default;
  AccountantLedger(double sigma, double q, double delta, std::vector<double> orders);

  void record_steps(std::size_t n) { steps_taken_ += n; }
  std::size_t steps_taken() const { return steps_taken_; }
  double sigma() const { return sigma_; }
  double q() const { return q_; }
  double delta() const { return delta_; }

  EpsilonResult epsilon_spent() const;
  // Epsilon after taking n more steps; used for mid-run budget enforcement.
  EpsilonResult epsilon_after(std::size_t additional_steps) const;

  nlohmann::json to_json() const;

 private:
  double sigma_ = 0.0;
  double q_ = 0.0;
  double delta_ = 0.0;
  std::vector<double> orders_;
  std::size_t steps_taken_ = 0;
};

}  // namespace dptext::dp
