#include "rsfhe/stats.hpp"

#include "rsfhe/errors.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>

#include <string>

namespace rsfhe {

namespace {

void check_probability(double p, const char* name, bool closed) {
  const bool ok = closed ? (p >= 0.0 && p <= 1.0) : (p > 0.0 && p < 1.0);
  if (!ok) throw ValidationError(std::string(name) + " is outside its allowed range");
}

}  // namespace

double binomial_cdf(std::int64_t k, std::int64_t n, double p) {
  if (n < 0) throw ValidationError("binomial n must be >= 0");
  check_probability(p, "binomial p", true);
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  const boost::math::binomial_distribution<double> dist(static_cast<double>(n), p);
  return boost::math::cdf(dist, static_cast<double>(k));
}

double binomial_pvalue(std::int64_t m, std::int64_t n, double tau) {
  if (m <= 0) return 1.0;
  if (m > n) return 0.0;
  check_probability(tau, "tau", true);
  const boost::math::binomial_distribution<double> dist(static_cast<double>(n), tau);
  return boost::math::cdf(boost::math::complement(dist, static_cast<double>(m - 1)));
}

std::int64_t binomial_target(std::int64_t n, double tau, double alpha) {
  if (n < 1) throw ValidationError("binomial_target needs n >= 1");
  check_probability(tau, "tau", false);
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
  // The p-value is non-increasing in m and binomial_pvalue(n + 1) = 0.
  std::int64_t lo = 0;
  std::int64_t hi = n + 1;
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (binomial_pvalue(mid, n, tau) <= alpha)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

double clopper_pearson_upper(std::int64_t k, std::int64_t m, double p) {
  if (m < 1) throw ValidationError("Clopper-Pearson needs m >= 1 trials");
  if (k < 0 || k > m) throw ValidationError("Clopper-Pearson needs 0 <= k <= m");
  check_probability(p, "confidence p-value", false);
  if (k == m) return 1.0;
  double lo = static_cast<double>(k) / static_cast<double>(m);
  double hi = 1.0;
  // BinCDF(k; m, beta) decreases in beta.
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (binomial_cdf(k, m, mid) > p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double normal_cdf(double x) { return boost::math::cdf(boost::math::normal_distribution<double>(), x); }

double normal_quantile(double q) {
  check_probability(q, "normal quantile level", false);
  return boost::math::quantile(boost::math::normal_distribution<double>(), q);
}

double l2_radius(double sigma, double tau) {
  if (!(sigma > 0.0)) throw ValidationError("sigma must be positive");
  return sigma * normal_quantile(tau);
}

double l1_radius(double eta, double tau) {
  if (!(eta > 0.0)) throw ValidationError("eta must be positive");
  return 2.0 * eta * (tau - 0.5);
}

double mahalanobis_radius(double tau) { return normal_quantile(tau); }

double tau_for_l2_radius(double sigma, double radius) {
  if (!(sigma > 0.0)) throw ValidationError("sigma must be positive");
  return normal_cdf(radius / sigma);
}

double tau_for_l1_radius(double eta, double radius) {
  if (!(eta > 0.0)) throw ValidationError("eta must be positive");
  return radius / (2.0 * eta) + 0.5;
}

}  // namespace rsfhe
