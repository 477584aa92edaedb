#include "dptext/dp_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dptext/parallel.hpp"

namespace dptext::dp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

// log(exp(a) - exp(b)) for a >= b.
double log_sub(double a, double b) {
  if (b == kNegInf) return a;
  if (a == b) return kNegInf;
  return a + std::log1p(-std::exp(b - a));
}

double log_erfc(double x) {
  const double r = std::erfc(x);
  if (r > 1e-300) return std::log(r);
  // Asymptotic expansion; erfc underflows around x ~ 26.6.
  const double x2 = x * x;
  return -x2 - std::log(x) - 0.5 * std::log(M_PI) +
         std::log1p(-0.5 / x2 + 0.75 / (x2 * x2));
}

// Plain Gaussian mechanism at sensitivity/sigma ratio 1.
double gaussian_rdp(double sigma, double alpha) { return alpha / (2.0 * sigma * sigma); }

// Integer-order subsampled Gaussian: binomial expansion evaluated in log space.
double rdp_integer_order(double q, double sigma, int alpha) {
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double log_a = kNegInf;
  for (int j = 0; j <= alpha; ++j) {
    const double log_binom =
        std::lgamma(alpha + 1.0) - std::lgamma(j + 1.0) - std::lgamma(alpha - j + 1.0);
    const double term = log_binom + j * log_q + (alpha - j) * log_1mq +
                        (static_cast<double>(j) * j - j) / (2.0 * sigma * sigma);
    log_a = log_add(log_a, term);
  }
  return std::max(0.0, log_a) / (alpha - 1.0);
}

// Fractional-order subsampled Gaussian: two-sided series with erfc tail
// weights. Terms are accumulated by coefficient sign in log space.
double rdp_fractional_order(double q, double sigma, double alpha) {
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double sigma2 = sigma * sigma;
  const double z0 = sigma2 * std::log(1.0 / q - 1.0) + 0.5;
  const double sqrt2_sigma = std::sqrt(2.0) * sigma;
  const double log_half = std::log(0.5);

  double log_a0_pos = kNegInf, log_a0_neg = kNegInf;
  double log_a1_pos = kNegInf, log_a1_neg = kNegInf;

  // Running log|binom(alpha, i)| with sign, updated incrementally.
  double log_binom = 0.0;
  double binom_sign = 1.0;

  const int max_terms = 20000;
  for (int i = 0; i < max_terms; ++i) {
    if (i > 0) {
      const double factor = (alpha - i + 1.0) / i;
      if (factor == 0.0) break;
      log_binom += std::log(std::abs(factor));
      if (factor < 0.0) binom_sign = -binom_sign;
    }
    const double j = alpha - i;
    const double log_t0 = log_binom + i * log_q + j * log_1mq;
    const double log_t1 = log_binom + j * log_q + i * log_1mq;
    const double log_e0 = log_half + log_erfc((i - z0) / sqrt2_sigma);
    const double log_e1 = log_half + log_erfc((z0 - j) / sqrt2_sigma);
    const double log_s0 = log_t0 + (static_cast<double>(i) * i - i) / (2.0 * sigma2) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma2) + log_e1;

    if (binom_sign > 0.0) {
      log_a0_pos = log_add(log_a0_pos, log_s0);
      log_a1_pos = log_add(log_a1_pos, log_s1);
    } else {
      log_a0_neg = log_add(log_a0_neg, log_s0);
      log_a1_neg = log_add(log_a1_neg, log_s1);
    }
    if (i > alpha && std::max(log_s0, log_s1) < -40.0) break;
  }

  const double log_a0 = log_sub(log_a0_pos, log_a0_neg);
  const double log_a1 = log_sub(log_a1_pos, log_a1_neg);
  const double log_a = log_add(log_a0, log_a1);
  return std::max(0.0, log_a) / (alpha - 1.0);
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ConfigError(std::string(what) + ": non-finite component");
  }
}

}  // namespace

void PrivacyParams::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("privacy.epsilon must be > 0");
  if (delta < 0.0 || delta >= 1.0) throw ConfigError("privacy.delta must be in [0,1)");
  if (!(clip_norm > 0.0)) throw ConfigError("privacy.clip_norm must be > 0");
  if (dataset_size == 0) throw ConfigError("privacy.dataset_size must be >= 1");
  if (batch_size == 0) throw ConfigError("privacy.batch_size must be >= 1");
  if (batch_size > dataset_size) {
    throw ConfigError("privacy.batch_size must not exceed dataset_size");
  }
  if (epochs == 0) throw ConfigError("privacy.epochs must be >= 1");
  const double d = resolved_delta();
  if (!(d > 0.0 && d < 1.0)) throw ConfigError("privacy.delta resolves outside (0,1)");
}

nlohmann::json PrivacyParams::to_json() const {
  nlohmann::json j;
  j["epsilon"] = epsilon;
  j["delta"] = resolved_delta();
  j["clip_norm"] = clip_norm;
  j["dataset_size"] = dataset_size;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["sampling_rate"] = sampling_rate();
  j["total_steps"] = total_steps();
  return j;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> clip_gradient(std::span<const double> g, double clip_norm) {
  if (!(clip_norm > 0.0)) throw ConfigError("clip_gradient: clip norm must be > 0");
  check_finite(g, "clip_gradient");
  const double norm = l2_norm(g);
  std::vector<double> out(g.begin(), g.end());
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (double& x : out) x *= scale;
  }
  return out;
}

namespace {

DpStepResult dp_step_impl(const GradientBatch& batch, double clip_norm, double sigma, double lr,
                          Rng& rng, bool parallel) {
  if (batch.per_sample.empty()) throw ConfigError("dp_step: empty batch");
  const std::size_t dim = batch.dim();
  if (dim == 0) throw ConfigError("dp_step: zero-dimension gradients");
  for (const auto& g : batch.per_sample) {
    if (g.size() != dim) throw ConfigError("dp_step: per-sample dimension mismatch");
    check_finite(g, "dp_step");
  }
  if (sigma < 0.0) throw ConfigError("dp_step: sigma must be >= 0");
  if (sigma > 0.0 && !std::isfinite(clip_norm)) {
    throw ConfigError("dp_step: finite clip norm required when sigma > 0");
  }

  const std::size_t b = batch.size();
  std::vector<std::vector<double>> clipped(b);
  par::for_each_index(
      b, [&](std::size_t i) { clipped[i] = clip_gradient(batch.per_sample[i], clip_norm); },
      parallel);

  NoiseDrawRecord record;
  record.dim = dim;
  std::vector<double> noise(dim, 0.0);
  if (sigma > 0.0) {
    const std::uint64_t draws_before = rng.draws();
    const double stddev = sigma * clip_norm;
    for (std::size_t d = 0; d < dim; ++d) noise[d] = rng.gaussian() * stddev;
    record.sigma_cc = stddev;
    record.rng_draws = rng.draws() - draws_before;
    record.noise_l2 = l2_norm(noise);
  }

  std::vector<double> update(dim, 0.0);
  const double inv_b = 1.0 / static_cast<double>(b);
  // Per-dimension reduction with a fixed sample order keeps the result
  // independent of the thread count.
  par::for_each_index(
      dim,
      [&](std::size_t d) {
        double sum = 0.0;
        for (std::size_t i = 0; i < b; ++i) sum += clipped[i][d];
        update[d] = -lr * (sum + noise[d]) * inv_b;
      },
      parallel);

  return DpStepResult{std::move(update), record};
}

}  // namespace

DpStepResult dp_step(const GradientBatch& batch, double clip_norm, double sigma, double lr,
                     Rng& rng, bool parallel) {
  return dp_step_impl(batch, clip_norm, sigma, lr, rng, parallel);
}

DpStepResult dp_step_serial(const GradientBatch& batch, double clip_norm, double sigma, double lr,
                            Rng& rng) {
  return dp_step_impl(batch, clip_norm, sigma, lr, rng, false);
}

double rdp_of_subsampled_gaussian(double q, double sigma, double alpha) {
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("rdp: q must be in (0,1]");
  if (!(sigma > 0.0)) throw ConfigError("rdp: sigma must be > 0");
  if (!(alpha > 1.0)) throw ConfigError("rdp: alpha must be > 1");
  if (q == 1.0) return gaussian_rdp(sigma, alpha);
  const double rounded = std::round(alpha);
  if (std::abs(alpha - rounded) < 1e-9) {
    return rdp_integer_order(q, sigma, static_cast<int>(rounded));
  }
  return rdp_fractional_order(q, sigma, alpha);
}

std::vector<double> default_rdp_orders() {
  std::vector<double> orders;
  for (double a = 1.25; a <= 63.75 + 1e-12; a += 0.25) orders.push_back(a);
  for (int i = 2; i <= 64; ++i) orders.push_back(static_cast<double>(i));
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-9; }),
               orders.end());
  return orders;
}

EpsilonResult account_epsilon(double sigma, double q, std::size_t steps, double delta,
                              std::span<const double> orders) {
  if (orders.empty()) throw ConfigError("account_epsilon: empty order list");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("account_epsilon: delta must be in (0,1)");
  const double log_inv_delta = std::log(1.0 / delta);
  EpsilonResult best;
  best.epsilon = std::numeric_limits<double>::infinity();
  for (double alpha : orders) {
    if (!(alpha > 1.0)) throw ConfigError("account_epsilon: orders must be > 1");
    double eps = log_inv_delta / (alpha - 1.0);
    if (steps > 0) {
      eps += static_cast<double>(steps) * rdp_of_subsampled_gaussian(q, sigma, alpha);
    }
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.best_order = alpha;
    }
  }
  return best;
}

double calibrate_noise(double target_epsilon, double delta, double q, std::size_t steps,
                       std::span<const double> orders, double tolerance) {
  if (!(target_epsilon > 0.0)) throw ConfigError("calibrate_noise: target epsilon must be > 0");
  if (!(tolerance > 0.0)) throw ConfigError("calibrate_noise: tolerance must be > 0");
  constexpr double kSigmaLo = 1e-2;
  constexpr double kSigmaHi = 1e3;
  auto eps_at = [&](double sigma) {
    return account_epsilon(sigma, q, steps, delta, orders).epsilon;
  };
  if (eps_at(kSigmaHi) > target_epsilon) {
    throw ConfigError("calibrate_noise: target epsilon unattainable for sigma <= 1e3");
  }
  if (eps_at(kSigmaLo) <= target_epsilon) return kSigmaLo;

  double lo = kSigmaLo, hi = kSigmaHi;
  double eps_hi = eps_at(hi);
  while (hi - lo > 1e-4 && std::abs(eps_hi - target_epsilon) > tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (eps_at(mid) <= target_epsilon) {
      hi = mid;
      eps_hi = eps_at(hi);
    } else {
      lo = mid;
    }
  }
  return hi;
}

AccountantLedger::AccountantLedger(double sigma, double q, double delta,
                                   std::vector<double> orders)
    : sigma_(sigma), q_(q), delta_(delta), orders_(std::move(orders)) {}

EpsilonResult AccountantLedger::epsilon_spent() const {
  return account_epsilon(sigma_, q_, steps_taken_, delta_, orders_);
}

EpsilonResult AccountantLedger::epsilon_after(std::size_t additional_steps) const {
  return account_epsilon(sigma_, q_, steps_taken_ + additional_steps, delta_, orders_);
}

nlohmann::json AccountantLedger::to_json() const {
  const EpsilonResult spent = epsilon_spent();
  nlohmann::json j;
  j["sigma"] = sigma_;
  j["q"] = q_;
  j["steps_taken"] = steps_taken_;
  j["delta"] = delta_;
  j["epsilon_spent"] = spent.epsilon;
  j["orders"] = orders_;
  j["best_order"] = spent.best_order;
  // Noise is applied to the summed clipped gradients and then divided by the
  // batch size; q is the batch fraction under Poisson-subsampling semantics
  // while the loader uses shuffled fixed-size batches.
  j["noise_normalization"] = "sum_then_divide_by_batch";
  j["subsampling_semantics"] = "poisson_assumed_shuffled_loader";
  return j;
}

}  // namespace dptext::dp
