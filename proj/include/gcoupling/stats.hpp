#pragma once

// Estimates with standard errors and the goodness-of-fit tests used by the
// experiment drivers (chi-square, Kolmogorov-Smirnov, Poisson dispersion).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace gcoupling {

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Binomial estimate from `hits` successes among `n` trials.
inline Estimate binomial_estimate(std::size_t hits, std::size_t n) {
  Estimate e;
  e.samples = n;
  if (n == 0) return e;
  e.value = static_cast<double>(hits) / static_cast<double>(n);
  e.std_error = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(n));
  return e;
}

/// Sample mean and its standard error.
inline Estimate mean_estimate(std::span<const double> xs) {
  Estimate e;
  e.samples = xs.size();
  if (xs.empty()) return e;
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  e.value = mean;
  e.std_error = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return e;
}

struct TestResult {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

/// Upper tail of the chi-square distribution.
inline double chi2_sf(double x, double dof) {
  if (dof <= 0.0) return 1.0;
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

/// Pearson goodness of fit of `observed` counts to probabilities `expected`.
/// Cells with expected count below 5 are pooled into their neighbour.
inline TestResult chi2_goodness_of_fit(std::span<const std::size_t> observed, std::span<const double> expected) {
  const double n = static_cast<double>(std::accumulate(observed.begin(), observed.end(), std::size_t{0}));
  std::vector<double> obs, exp;
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o_acc += static_cast<double>(observed[i]);
    e_acc += expected[i] * n;
    if (e_acc >= 5.0) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (exp.empty()) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
    } else {
      obs.back() += o_acc;
      exp.back() += e_acc;
    }
  }
  TestResult r;
  for (std::size_t i = 0; i < obs.size(); ++i)
    if (exp[i] > 0.0) r.statistic += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
  r.dof = static_cast<double>(obs.size()) - 1.0;
  r.p_value = chi2_sf(r.statistic, r.dof);
  return r;
}

/// Chi-square test of independence for a contingency table (row-major).
/// Empty rows and columns are dropped.
inline TestResult chi2_independence(std::span<const std::size_t> table, std::size_t rows, std::size_t cols) {
  std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = static_cast<double>(table[i * cols + j]);
      row_sum[i] += v;
      col_sum[j] += v;
      total += v;
    }
  TestResult r;
  if (total == 0.0) return r;
  std::size_t live_rows = 0, live_cols = 0;
  for (double v : row_sum) live_rows += v > 0.0;
  for (double v : col_sum) live_cols += v > 0.0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      if (row_sum[i] == 0.0 || col_sum[j] == 0.0) continue;
      const double e = row_sum[i] * col_sum[j] / total;
      const double o = static_cast<double>(table[i * cols + j]);
      r.statistic += (o - e) * (o - e) / e;
    }
  r.dof = static_cast<double>((live_rows > 0 ? live_rows - 1 : 0) * (live_cols > 0 ? live_cols - 1 : 0));
  r.p_value = chi2_sf(r.statistic, r.dof);
  return r;
}

/// Two-sample chi-square homogeneity test on category counts.
inline TestResult chi2_homogeneity(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> table(a.begin(), a.end());
  table.insert(table.end(), b.begin(), b.end());
  return chi2_independence(table, 2, a.size());
}

/// Asymptotic Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_sf(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
inline TestResult ks_test(std::vector<double> xs, const std::function<double(double)>& cdf) {
  TestResult r;
  if (xs.empty()) return r;
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  r.statistic = d;
  r.dof = n;
  r.p_value = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
  return r;
}

/// Index-of-dispersion test for Poisson counts: sum (c - mean)^2 / mean is
/// chi-square with N - 1 degrees of freedom. Two-sided p-value.
inline TestResult poisson_dispersion(std::span<const double> counts) {
  TestResult r;
  if (counts.size() < 2) return r;
  const double n = static_cast<double>(counts.size());
  const double mean = std::accumulate(counts.begin(), counts.end(), 0.0) / n;
  if (mean <= 0.0) return r;
  for (double c : counts) r.statistic += (c - mean) * (c - mean) / mean;
  r.dof = n - 1.0;
  const double upper = chi2_sf(r.statistic, r.dof);
  r.p_value = std::min(1.0, 2.0 * std::min(upper, 1.0 - upper));
  return r;
}

/// Pearson correlation; zero when either sample is constant.
inline double correlation(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return 0.0;
  const double mx = std::accumulate(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace gcoupling
