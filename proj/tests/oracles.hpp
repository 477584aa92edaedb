// Independent oracles for the derived expected values. Everything here is
// deliberately brute force and shares no code with the library paths it
// checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracles {

// Renyi cost of the subsampled Gaussian by direct numerical integration:
//   A = integral of mu0(z) * (mu(z)/mu0(z))^alpha dz,
//   mu0 = N(0, sigma^2), mu1 = N(1, sigma^2), mu = (1-q) mu0 + q mu1,
// evaluated with Simpson's rule in log space. Step and range are sized so the
// result is good to ~1e-9 for the orders used in the tests.
inline double rdp_quadrature(double q, double sigma, double alpha) {
  const double lo = -45.0 * sigma;
  const double hi = alpha + 45.0 * sigma;
  const std::size_t n = 800000;  // even
  const double h = (hi - lo) / static_cast<double>(n);
  const double sigma2 = sigma * sigma;
  const double log_q = std::log(q);
  const double log_1mq = q < 1.0 ? std::log1p(-q) : -std::numeric_limits<double>::infinity();

  auto log_integrand = [&](double z) {
    // log mu0(z) without the normalization constant (it cancels in the ratio
    // but not in the outer density; keep it).
    const double log_norm = -0.5 * std::log(2.0 * M_PI * sigma2);
    const double log_mu0 = log_norm - z * z / (2.0 * sigma2);
    // log( mu(z)/mu0(z) ) = log( (1-q) + q * exp((2z-1)/(2 sigma^2)) )
    const double t = log_q + (2.0 * z - 1.0) / (2.0 * sigma2);
    double log_ratio;
    if (q == 1.0) {
      log_ratio = t;
    } else {
      const double m = std::max(log_1mq, t);
      log_ratio = m + std::log(std::exp(log_1mq - m) + std::exp(t - m));
    }
    return log_mu0 + alpha * log_ratio;
  };

  // Simpson weights folded into a log-sum-exp.
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const double z = lo + h * static_cast<double>(i);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    terms[i] = log_integrand(z) + std::log(w);
    max_term = std::max(max_term, terms[i]);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_term);
  const double log_a = max_term + std::log(sum) + std::log(h / 3.0);
  return std::max(0.0, log_a) / (alpha - 1.0);
}

// Exhaustive sigma grid search at fixed resolution: smallest sigma on the grid
// whose accounted epsilon meets the target. `eps_of` is the accountant under
// test (the search itself is the independent part).
template <class EpsFn>
double sigma_grid_search(EpsFn eps_of, double target_epsilon, double lo, double hi,
                         double resolution) {
  for (double sigma = lo; sigma <= hi; sigma += resolution) {
    if (eps_of(sigma) <= target_epsilon) return sigma;
  }
  return -1.0;
}

// Hand-rolled sentence BLEU from first principles: explicit n-gram lists,
// clipped counts, geometric mean over the available orders, brevity penalty.
inline double bleu_count_oracle(const std::vector<std::string>& cand,
                                const std::vector<std::string>& ref, int max_n) {
  if (cand.empty() || ref.empty()) return 0.0;
  const int orders = std::min<int>(max_n, static_cast<int>(std::min(cand.size(), ref.size())));
  double log_sum = 0.0;
  for (int n = 1; n <= orders; ++n) {
    std::vector<std::vector<std::string>> cand_grams, ref_grams;
    for (std::size_t i = 0; i + n <= cand.size(); ++i) {
      cand_grams.push_back({cand.begin() + i, cand.begin() + i + n});
    }
    for (std::size_t i = 0; i + n <= ref.size(); ++i) {
      ref_grams.push_back({ref.begin() + i, ref.begin() + i + n});
    }
    std::map<std::vector<std::string>, int> cand_counts, ref_counts;
    for (const auto& g : cand_grams) cand_counts[g]++;
    for (const auto& g : ref_grams) ref_counts[g]++;
    int matched = 0, total = 0;
    for (const auto& [gram, count] : cand_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      matched += std::min(count, it == ref_counts.end() ? 0 : it->second);
    }
    if (matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / total) / orders;
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

// Longest common subsequence by full DP table, for the ROUGE-L oracle.
inline std::size_t lcs_oracle(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> dp(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1
                                      : std::max(dp[i - 1][j], dp[i][j - 1]);
    }
  }
  return dp[a.size()][b.size()];
}

// Word-pair displacement by exhaustive enumeration over all ordered pairs of
// shared types: first-occurrence positions normalized by len-1, pair
// displacement halved so the mean is a percentage of its maximum.
inline double wpd_oracle(const std::vector<std::string>& src,
                         const std::vector<std::string>& pred) {
  auto positions = [](const std::vector<std::string>& toks) {
    std::map<std::string, double> pos;
    const double denom = toks.size() > 1 ? static_cast<double>(toks.size()) - 1.0 : 1.0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (!pos.count(toks[i])) pos[toks[i]] = static_cast<double>(i) / denom;
    }
    return pos;
  };
  const auto ps = positions(src);
  const auto pp = positions(pred);
  std::vector<std::string> shared;
  for (const auto& [tok, p] : ps) {
    if (pp.count(tok)) shared.push_back(tok);
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& a : shared) {
    for (const auto& b : shared) {
      if (a == b) continue;
      sum += std::abs((ps.at(a) - ps.at(b)) - (pp.at(a) - pp.at(b))) / 2.0;
      ++count;
    }
  }
  return count == 0 ? 0.0 : 100.0 * sum / static_cast<double>(count);
}

// Connected components by repeated BFS over an explicit adjacency matrix.
inline std::vector<std::vector<std::size_t>> components_oracle(
    const std::vector<std::vector<bool>>& adjacent) {
  const std::size_t n = adjacent.size();
  std::vector<bool> seen(n, false);
  std::vector<std::vector<std::size_t>> components;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<std::size_t> queue{s}, comp;
    seen[s] = true;
    while (!queue.empty()) {
      const std::size_t u = queue.back();
      queue.pop_back();
      comp.push_back(u);
      for (std::size_t v = 0; v < n; ++v) {
        if (!seen[v] && (adjacent[u][v] || adjacent[v][u])) {
          seen[v] = true;
          queue.push_back(v);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    components.push_back(std::move(comp));
  }
  return components;
}

}  // namespace oracles
