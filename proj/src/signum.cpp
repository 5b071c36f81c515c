#include "rsfhe/signum.hpp"

#include "rsfhe/errors.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace rsfhe {

namespace {

constexpr double kRangeTolerance = 1e-12;

void check_range(const OddPolynomial& poly) {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(20001, -1.0, 1.0);
  const double worst = poly(grid).abs().maxCoeff();
  if (worst > 1.0 + kRangeTolerance)
    throw ValidationError("polynomial '" + poly.name() + "' leaves [-1, 1] (max |p(x)| = " +
                          std::to_string(worst) + ")");
}

}  // namespace

OddPolynomial::OddPolynomial(Vector coeffs, std::string name)
    : coeffs_(std::move(coeffs)), name_(std::move(name)) {
  if (coeffs_.size() < 2 || coeffs_.size() % 2 != 0)
    throw ValidationError("odd polynomial needs 2n+2 coefficients, got " +
                          std::to_string(coeffs_.size()));
  for (Eigen::Index i = 0; i < coeffs_.size(); i += 2)
    if (coeffs_[i] != 0.0)
      throw ValidationError("polynomial '" + name_ + "' is not odd: coefficient of x^" +
                            std::to_string(i) + " is nonzero");
  check_range(*this);
}

int odd_polynomial_depth(int n) {
  if (n <= 0) return 1;
  int ceil_log = 0;
  while ((1 << ceil_log) < n) ++ceil_log;
  return 2 + ceil_log;
}

int OddPolynomial::depth() const { return odd_polynomial_depth(family_index()); }

double OddPolynomial::operator()(double x) const {
  Eigen::ArrayXd a(1);
  a[0] = x;
  return (*this)(a)[0];
}

OddPolynomial load_polynomial(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open coefficient file " + path.string());
  std::vector<double> values;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    std::string trailing;
    if (used != token.size() || (fields >> trailing))
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": expected one decimal coefficient");
    values.push_back(v);
  }
  return OddPolynomial(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())),
                       path.filename().string());
}

const SignFamily& default_sign_family() {
  static const SignFamily family = [] {
    Vector q(10);
    q << 0, 5850.0 / 1024, 0, -34974.0 / 1024, 0, 97015.0 / 1024, 0, -113492.0 / 1024, 0,
        46623.0 / 1024;
    Vector p(10);
    p << 0, 315.0 / 128, 0, -420.0 / 128, 0, 378.0 / 128, 0, -180.0 / 128, 0, 35.0 / 128;
    return SignFamily{OddPolynomial(q, "q4"), OddPolynomial(p, "p4")};
  }();
  return family;
}

SignFamily p_only_sign_family() {
  const auto& base = default_sign_family();
  return SignFamily{base.p, base.p};
}

SignParams::SignParams(int d_q, int d_p, SignFamily family)
    : d_q_(d_q), d_p_(d_p), family_(std::move(family)) {
  if (d_q < 0 || d_p < 0) throw ValidationError("composition counts must be >= 0");
}

int SignParams::depth() const { return d_q_ * family_.q.depth() + d_p_ * family_.p.depth(); }

Eigen::ArrayXd SignParams::operator()(const Eigen::ArrayXd& x) const {
  Eigen::ArrayXd v = x;
  for (int i = 0; i < d_q_; ++i) v = family_.q(v);
  for (int i = 0; i < d_p_; ++i) v = family_.p(v);
  return v;
}

double SignParams::operator()(double x) const {
  Eigen::ArrayXd a(1);
  a[0] = x;
  return (*this)(a)[0];
}

void PrecisionSpec::validate() const {
  if (!(phi > 0.0 && phi < 1.0)) throw InvalidMargin("phi must lie in (0, 1)");
  if (!(psi > 0.0)) throw ValidationError("psi must be positive");
}

Ciphertext evaluate_polynomial(const Engine& engine, const Ciphertext& ct,
                               const OddPolynomial& poly, double a, double b) {
  const int n = poly.family_index();
  const Vector& c = poly.coeffs();
  std::vector<Ciphertext> ypow(static_cast<std::size_t>(n) + 1);
  if (n >= 1) ypow[1] = engine.mul(ct, ct);
  for (int j = 2; j <= n; ++j) {
    int hi = 1;
    while (hi * 2 <= j) hi *= 2;
    const int rest = j - hi;
    ypow[static_cast<std::size_t>(j)] =
        rest == 0 ? engine.mul(ypow[static_cast<std::size_t>(hi / 2)],
                               ypow[static_cast<std::size_t>(hi / 2)])
                  : engine.mul(ypow[static_cast<std::size_t>(hi)],
                               ypow[static_cast<std::size_t>(rest)]);
  }
  Ciphertext acc = engine.mul_plain(ct, engine.constant(a * c[1]));
  for (int j = 1; j <= n; ++j) {
    const Ciphertext scaled = engine.mul_plain(ct, engine.constant(a * c[2 * j + 1]));
    acc = engine.add(acc, engine.mul(scaled, ypow[static_cast<std::size_t>(j)]));
  }
  if (b != 0.0) acc = engine.add_plain(acc, engine.constant(b));
  return acc;
}

Ciphertext sgn_he(const Engine& engine, const Ciphertext& ct, const SignParams& sp) {
  return sgn_he_fused(engine, ct, sp, 1.0, 0.0);
}

Ciphertext sgn_he_fused(const Engine& engine, const Ciphertext& ct, const SignParams& sp,
                        double a, double b) {
  const int total = sp.d_q() + sp.d_p();
  if (total == 0) {
    if (a != 1.0)
      throw ValidationError("affine scale cannot be absorbed by a zero-degree sign composite");
    return b == 0.0 ? ct : engine.add_plain(ct, engine.constant(b));
  }
  Ciphertext v = ct;
  int applied = 0;
  const auto apply = [&](const OddPolynomial& poly) {
    ++applied;
    v = applied == total ? evaluate_polynomial(engine, v, poly, a, b)
                         : evaluate_polynomial(engine, v, poly);
  };
  for (int i = 0; i < sp.d_q(); ++i) apply(sp.family().q);
  for (int i = 0; i < sp.d_p(); ++i) apply(sp.family().p);
  return v;
}

Eigen::ArrayXd closeness_grid(double phi, std::size_t grid_size) {
  const auto half = static_cast<Eigen::Index>(grid_size / 2);
  const auto rest = static_cast<Eigen::Index>(grid_size) - half;
  Eigen::ArrayXd grid(static_cast<Eigen::Index>(grid_size));
  const double log_lo = std::log(phi);
  for (Eigen::Index i = 0; i < half; ++i)
    grid[i] = std::exp(log_lo * (1.0 - static_cast<double>(i) / static_cast<double>(half - 1)));
  grid.segment(half, rest) = Eigen::ArrayXd::LinSpaced(rest, phi, 1.0);
  grid[0] = phi;
  grid[half - 1] = 1.0;
  return grid;
}

double measure_closeness(const std::function<Eigen::ArrayXd(const Eigen::ArrayXd&)>& composite,
                         double phi, std::size_t grid_size) {
  if (!(phi > 0.0 && phi < 1.0)) throw InvalidMargin("phi must lie in (0, 1)");
  if (grid_size < 1000) throw ValidationError("closeness grid needs at least 1000 points");
  const Eigen::ArrayXd out = composite(closeness_grid(phi, grid_size));
  const double worst = (1.0 - out).abs().maxCoeff();
  if (std::isnan(worst)) return 0.0;
  if (worst == 0.0) return kExactSignPsi;
  return -std::log2(worst);
}

double measure_closeness(const SignParams& sp, double phi, std::size_t grid_size) {
  return measure_closeness([&sp](const Eigen::ArrayXd& x) { return sp(x); }, phi, grid_size);
}

DegreePair min_degrees(double phi, double psi, const SignFamily& family, int max_degree,
                       std::size_t grid_size) {
  PrecisionSpec{phi, psi}.validate();
  const double stage_psi = std::min(psi, 1.0);
  for (int dq = 0; dq <= max_degree; ++dq) {
    if (measure_closeness(SignParams(dq, 0, family), phi, grid_size) < stage_psi) continue;
    for (int dp = 0; dp <= max_degree; ++dp)
      if (measure_closeness(SignParams(dq, dp, family), phi, grid_size) >= psi)
        return DegreePair{dq, dp};
    break;
  }
  std::ostringstream msg;
  msg << "no (d_q, d_p) <= " << max_degree << " reaches psi = " << psi << " at phi = " << phi;
  throw NoFeasibleDegree(msg.str());
}

double min_margin(int d_q, int d_p, double psi, const SignFamily& family, std::size_t grid_size) {
  const SignParams sp(d_q, d_p, family);
  double hi = 1.0 - 1e-9;
  if (measure_closeness(sp, hi, grid_size) < psi) {
    std::ostringstream msg;
    msg << "(" << d_q << ", " << d_p << ") never reaches psi = " << psi;
    throw NoFeasibleDegree(msg.str());
  }
  double lo = 1e-12;
  if (measure_closeness(sp, lo, grid_size) >= psi) return lo;
  while (hi / lo > 1.0 + 1e-6) {
    const double mid = std::sqrt(lo * hi);
    if (measure_closeness(sp, mid, grid_size) >= psi)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace rsfhe
