#pragma once

// Binomial tail test, Clopper-Pearson bounds and certified-radius formulas.

#include <cstdint>

namespace rsfhe {

/// P[X <= k] for X ~ Bin(n, p); 0 for k < 0 and 1 for k >= n.
double binomial_cdf(std::int64_t k, std::int64_t n, double p);

/// One-sided p-value of observing at least m successes: 1 - BinCDF(m - 1; n, tau).
double binomial_pvalue(std::int64_t m, std::int64_t n, double tau);

/// Smallest m in [0, n + 1] with binomial_pvalue(m, n, tau) <= alpha.
/// n + 1 means no count can pass the test.
std::int64_t binomial_target(std::int64_t n, double tau, double alpha);

/// Upper bound beta with BinCDF(k; m, beta) = p (beta = 1 when k >= m),
/// found by bisection on the binomial tail.
double clopper_pearson_upper(std::int64_t k, std::int64_t m, double p = 0.05);

double normal_cdf(double x);
double normal_quantile(double q);

/// sigma * Phi^{-1}(tau).
double l2_radius(double sigma, double tau);
/// 2 eta (tau - 1/2).
double l1_radius(double eta, double tau);
/// Phi^{-1}(tau), measured in the rescaled Mahalanobis norm.
double mahalanobis_radius(double tau);

/// Inverses of the radius formulas.
double tau_for_l2_radius(double sigma, double radius);
double tau_for_l1_radius(double eta, double radius);

}  // namespace rsfhe
