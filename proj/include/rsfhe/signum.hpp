#pragma once

// Composite odd-polynomial approximation of the sign function.
//
// sgn(x) ~ p^{d_p}(q^{d_q}(x)) on [-1, 1]. The inner polynomial q pulls small
// inputs away from zero quickly; the outer polynomial p sharpens outputs that
// are already close to +-1.

#include "rsfhe/engine.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace rsfhe {

/// Odd polynomial of degree 2n+1, coefficients in ascending powers.
class OddPolynomial {
 public:
  OddPolynomial() = default;
  /// Throws ValidationError if an even coefficient is nonzero, the length is
  /// not 2n+2, or the polynomial leaves [-1, 1] on a dense grid.
  explicit OddPolynomial(Vector coeffs, std::string name = {});

  const Vector& coeffs() const { return coeffs_; }
  const std::string& name() const { return name_; }
  int family_index() const { return static_cast<int>(coeffs_.size() / 2) - 1; }
  /// Multiplicative depth of one homomorphic evaluation (4 for n = 4).
  int depth() const;

  template <typename Derived>
  Eigen::ArrayXd operator()(const Eigen::ArrayBase<Derived>& x) const;
  double operator()(double x) const;

 private:
  Vector coeffs_;
  std::string name_;
};

/// Depth of the balanced power-tree evaluation of an odd degree-(2n+1) polynomial.
int odd_polynomial_depth(int n);

/// Reads one coefficient per line (ascending powers, `#` starts a comment).
OddPolynomial load_polynomial(const std::filesystem::path& path);

/// The (q, p) pair used by the composite.
struct SignFamily {
  OddPolynomial q;
  OddPolynomial p;
};

/// Embedded degree-9 pair (see data/sign_q4.txt and data/sign_p4.txt).
const SignFamily& default_sign_family();
/// Uses the p polynomial for both roles; needs a larger d_q.
SignFamily p_only_sign_family();

class SignParams {
 public:
  SignParams(int d_q, int d_p, SignFamily family = default_sign_family());

  int d_q() const { return d_q_; }
  int d_p() const { return d_p_; }
  const SignFamily& family() const { return family_; }
  /// Levels consumed by one homomorphic evaluation.
  int depth() const;

  /// Cleartext evaluation with the same operation order as the engine circuit.
  Eigen::ArrayXd operator()(const Eigen::ArrayXd& x) const;
  double operator()(double x) const;

 private:
  int d_q_;
  int d_p_;
  SignFamily family_;
};

struct PrecisionSpec {
  double phi = 0.0;
  double psi = 0.0;

  void validate() const;
};

/// Homomorphic evaluation: q applied d_q times, then p applied d_p times.
Ciphertext sgn_he(const Engine& engine, const Ciphertext& ct, const SignParams& sp);

/// a * sgn_he(ct) + b with the affine map folded into the outermost polynomial,
/// so no extra level is consumed. With zero total degree only a == 1 is allowed.
Ciphertext sgn_he_fused(const Engine& engine, const Ciphertext& ct, const SignParams& sp,
                        double a, double b);

/// Evaluates one odd polynomial scaled by `a` and shifted by `b` on a ciphertext.
Ciphertext evaluate_polynomial(const Engine& engine, const Ciphertext& ct,
                               const OddPolynomial& poly, double a = 1.0, double b = 0.0);

inline constexpr double kExactSignPsi = std::numeric_limits<double>::infinity();

/// -log2 of the worst deviation from 1 over a grid on [phi, 1], denser near phi.
/// Returns +infinity when the composite is exact on the grid.
double measure_closeness(const std::function<Eigen::ArrayXd(const Eigen::ArrayXd&)>& composite,
                         double phi, std::size_t grid_size = 100000);
double measure_closeness(const SignParams& sp, double phi, std::size_t grid_size = 100000);

/// Grid used by measure_closeness.
Eigen::ArrayXd closeness_grid(double phi, std::size_t grid_size);

struct DegreePair {
  int d_q = 0;
  int d_p = 0;
};

/// Smallest d_q whose q-stage alone reaches min(psi, 1) bits on [phi, 1], then
/// the smallest d_p completing the composite to psi bits.
DegreePair min_degrees(double phi, double psi, const SignFamily& family = default_sign_family(),
                       int max_degree = 20, std::size_t grid_size = 100000);

/// Smallest phi (to relative precision 1e-6) for which (d_q, d_p) reaches psi.
double min_margin(int d_q, int d_p, double psi, const SignFamily& family = default_sign_family(),
                  std::size_t grid_size = 100000);

// -- implementation -----------------------------------------------------------

template <typename Derived>
Eigen::ArrayXd OddPolynomial::operator()(const Eigen::ArrayBase<Derived>& x_in) const {
  const Eigen::ArrayXd x = x_in;
  const int n = family_index();
  // Mirrors evaluate_polynomial: term_j = (c_{2j+1} x) * y^j with y = x^2.
  std::vector<Eigen::ArrayXd> ypow(static_cast<std::size_t>(n) + 1);
  if (n >= 1) ypow[1] = x * x;
  for (int j = 2; j <= n; ++j) {
    int hi = 1;
    while (hi * 2 <= j) hi *= 2;
    const int rest = j - hi;
    ypow[static_cast<std::size_t>(j)] =
        rest == 0 ? Eigen::ArrayXd(ypow[static_cast<std::size_t>(hi / 2)] *
                                   ypow[static_cast<std::size_t>(hi / 2)])
                  : Eigen::ArrayXd(ypow[static_cast<std::size_t>(hi)] *
                                   ypow[static_cast<std::size_t>(rest)]);
  }
  Eigen::ArrayXd acc = x * coeffs_[1];
  for (int j = 1; j <= n; ++j)
    acc = acc + (x * coeffs_[2 * j + 1]) * ypow[static_cast<std::size_t>(j)];
  return acc;
}

}  // namespace rsfhe
