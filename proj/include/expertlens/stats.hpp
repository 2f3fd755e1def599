#pragma once

// Rank correlation, resampling statistics and contrast coding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "expertlens/error.hpp"
#include "expertlens/parallel.hpp"
#include "expertlens/rng.hpp"

namespace expertlens {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw AnalysisError("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Average ranks (1-based); ties get the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("correlation inputs differ in length");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw AnalysisError("correlation undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman's rho: Pearson correlation of average ranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("spearman inputs differ in length");
  if (x.size() < 3) throw ValidationError("spearman needs at least 3 observations");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ValidationError("spearman input not finite");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

/// Linear-interpolation quantile of sorted data.
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw AnalysisError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  std::size_t replicates = 0;
  std::size_t undefined_replicates = 0;  // statistic threw or was non-finite
  bool degenerate = false;               // zero width
};

struct BootstrapOptions {
  std::size_t replicates = 10000;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Percentile bootstrap over `n` paired rows. `statistic` receives the row
/// indices of one resample. Replicate r draws from the stream derived from
/// (seed, r), so results are independent of the worker count. Replicates on
/// which the statistic is undefined are dropped and counted.
inline ConfidenceInterval bootstrap_ci(std::size_t n,
                                       const std::function<double(std::span<const std::size_t>)>& statistic,
                                       const BootstrapOptions& opts) {
  if (n < 2) throw ValidationError("bootstrap needs at least 2 samples");
  if (opts.replicates < 1) throw ValidationError("bootstrap needs at least 1 replicate");
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw ValidationError("confidence level must be in (0,1)");
  std::vector<double> values(opts.replicates, std::numeric_limits<double>::quiet_NaN());
  const std::uint64_t root = derive_key(opts.seed, "bootstrap");
  parallel_for(
      opts.replicates, opts.threads,
      [&](std::size_t r) {
        CounterRng rng(derive_key(root, r));
        std::vector<std::size_t> idx(n);
        for (auto& i : idx) i = rng.below(n);
        try {
          values[r] = statistic(idx);
        } catch (const Error&) {
        }
      },
      64);
  ConfidenceInterval ci;
  ci.level = opts.level;
  std::vector<double> ok;
  ok.reserve(values.size());
  for (double v : values) {
    if (std::isfinite(v)) ok.push_back(v);
  }
  ci.replicates = ok.size();
  ci.undefined_replicates = values.size() - ok.size();
  if (ok.empty()) throw AnalysisError("statistic undefined on every bootstrap resample");
  std::sort(ok.begin(), ok.end());
  const double alpha = 1.0 - opts.level;
  ci.lower = sorted_quantile(ok, alpha / 2.0);
  ci.upper = sorted_quantile(ok, 1.0 - alpha / 2.0);
  ci.degenerate = ci.lower == ci.upper;
  return ci;
}

/// Bootstrap CI of the mean of `xs`.
inline ConfidenceInterval bootstrap_mean_ci(std::span<const double> xs, const BootstrapOptions& opts) {
  return bootstrap_ci(
      xs.size(),
      [xs](std::span<const std::size_t> idx) {
        double s = 0.0;
        for (auto i : idx) s += xs[i];
        return s / static_cast<double>(idx.size());
      },
      opts);
}

struct PermutationOptions {
  std::size_t permutations = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct PermutationResult {
  double statistic = 0.0;  // mean(a) - mean(b)
  double p_value = 1.0;
  std::size_t permutations = 0;
};

/// Two-sided label-permutation test on the difference of means, with add-one
/// smoothing: p = (1 + #{|T_perm| >= |T_obs|}) / (1 + n_perm).
/// The groups are put in a canonical order before resampling so the p-value
/// is exactly invariant under swapping them.
inline PermutationResult permutation_test(std::span<const double> group_a, std::span<const double> group_b,
                                          const PermutationOptions& opts) {
  if (group_a.empty() || group_b.empty()) throw ValidationError("permutation test needs two nonempty groups");
  if (opts.permutations < 1) throw ValidationError("permutation test needs at least one permutation");
  const double observed = mean(group_a) - mean(group_b);

  std::vector<double> a(group_a.begin(), group_a.end()), b(group_b.begin(), group_b.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (b.size() < a.size() || (b.size() == a.size() && b < a)) std::swap(a, b);
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n_a = a.size();
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);
  const double abs_obs = std::fabs(observed);
  const double tol = 1e-12 * std::max(1.0, abs_obs);

  std::vector<std::uint8_t> exceed(opts.permutations, 0);
  const std::uint64_t root = derive_key(opts.seed, "permutation");
  parallel_for(
      opts.permutations, opts.threads,
      [&](std::size_t r) {
        CounterRng rng(derive_key(root, r));
        std::vector<double> perm(pooled);
        rng.partial_shuffle(std::span(perm), n_a);
        double sa = 0.0;
        for (std::size_t i = 0; i < n_a; ++i) sa += perm[i];
        const double t = sa / static_cast<double>(n_a) - (total - sa) / static_cast<double>(pooled.size() - n_a);
        exceed[r] = std::fabs(t) >= abs_obs - tol;
      },
      64);
  const auto count = static_cast<double>(std::count(exceed.begin(), exceed.end(), std::uint8_t{1}));
  return {observed, (1.0 + count) / (1.0 + static_cast<double>(opts.permutations)), opts.permutations};
}

/// Two-sided permutation p-value for a rank correlation: y is shuffled
/// against x.
inline double correlation_permutation_p(std::span<const double> x, std::span<const double> y,
                                        const PermutationOptions& opts) {
  const double observed = std::fabs(spearman(x, y));
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  std::vector<std::uint8_t> exceed(opts.permutations, 0);
  const std::uint64_t root = derive_key(opts.seed, "correlation-permutation");
  const double tol = 1e-12;
  parallel_for(
      opts.permutations, opts.threads,
      [&](std::size_t r) {
        CounterRng rng(derive_key(root, r));
        std::vector<double> perm(ry);
        rng.shuffle(std::span(perm));
        exceed[r] = std::fabs(pearson(rx, perm)) >= observed - tol;
      },
      64);
  const auto count = static_cast<double>(std::count(exceed.begin(), exceed.end(), std::uint8_t{1}));
  return (1.0 + count) / (1.0 + static_cast<double>(opts.permutations));
}

// --- contrast coding -----------------------------------------------------------

/// Row-major L x (L-1) sliding-difference (backward-difference) coding.
/// Column j contrasts level j+1 with level j: entries are -(L-1-j)/L for rows
/// 0..j and (j+1)/L for rows j+1..L-1.
struct ContrastMatrix {
  std::vector<std::string> levels;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

inline ContrastMatrix sliding_difference_contrasts(std::span<const std::string> levels) {
  if (levels.size() < 2) throw ValidationError("contrast coding needs at least 2 levels");
  for (std::size_t i = 0; i < levels.size(); ++i)
    for (std::size_t j = i + 1; j < levels.size(); ++j)
      if (levels[i] == levels[j]) throw ValidationError("duplicate level '" + levels[i] + "'");
  ContrastMatrix m;
  m.levels.assign(levels.begin(), levels.end());
  const std::size_t L = levels.size();
  m.rows = L;
  m.cols = L - 1;
  m.values.resize(L * (L - 1));
  for (std::size_t r = 0; r < L; ++r) {
    for (std::size_t c = 0; c + 1 < L; ++c) {
      m.values[r * m.cols + c] = r <= c ? -static_cast<double>(L - 1 - c) / static_cast<double>(L)
                                        : static_cast<double>(c + 1) / static_cast<double>(L);
    }
  }
  return m;
}

/// Solves [1 | C] beta = group_means for a saturated cell-means model and
/// returns (intercept, contrast coefficients). With sliding-difference coding
/// the coefficients are the adjacent-level mean differences and the
/// intercept is the grand mean of the cell means.
inline std::vector<double> contrast_estimates(const ContrastMatrix& c, std::span<const double> group_means) {
  const std::size_t L = c.rows;
  if (group_means.size() != L) throw ValidationError("one mean per level required");
  std::vector<double> a(L * (L + 1));
  for (std::size_t r = 0; r < L; ++r) {
    a[r * (L + 1)] = 1.0;
    for (std::size_t j = 0; j < c.cols; ++j) a[r * (L + 1) + 1 + j] = c(r, j);
  }
  std::vector<double> rhs(group_means.begin(), group_means.end());
  // Gaussian elimination with partial pivoting on the L x L system.
  const std::size_t n = L;
  auto at = [&](std::size_t r, std::size_t col) -> double& { return a[r * (L + 1) + col]; };
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t r = k + 1; r < n; ++r)
      if (std::fabs(at(r, k)) > std::fabs(at(piv, k))) piv = r;
    if (std::fabs(at(piv, k)) < 1e-15) throw AnalysisError("singular contrast design");
    if (piv != k) {
      for (std::size_t col = 0; col < n; ++col) std::swap(at(k, col), at(piv, col));
      std::swap(rhs[k], rhs[piv]);
    }
    for (std::size_t r = k + 1; r < n; ++r) {
      const double f = at(r, k) / at(k, k);
      for (std::size_t col = k; col < n; ++col) at(r, col) -= f * at(k, col);
      rhs[r] -= f * rhs[k];
    }
  }
  std::vector<double> beta(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = rhs[k];
    for (std::size_t col = k + 1; col < n; ++col) s -= at(k, col) * beta[col];
    beta[k] = s / at(k, k);
  }
  return beta;
}

/// Least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("slope needs >= 2 paired points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw AnalysisError("slope undefined: constant x");
  return sxy / sxx;
}

}  // namespace expertlens
