#include "rsfhe/calibration.hpp"

#include "rsfhe/errors.hpp"
#include "rsfhe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rsfhe {

namespace {

constexpr std::uint64_t kRangeStream = 101;
constexpr std::uint64_t kRateStream = 102;

std::vector<Vector> noisy_logits(const ModelSpec& model, const Vector& x, const NoiseModel& nm,
                                 std::int64_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto noise = sample_noise(nm, static_cast<std::size_t>(n), static_cast<std::size_t>(x.size()), rng);
  std::vector<Vector> out;
  out.reserve(noise.size());
  for (const auto& eps : noise) out.push_back(plaintext_forward(x + eps, model));
  return out;
}

// Indices of the `k` largest keys, ties broken by index.
std::vector<std::size_t> top_k(const std::vector<double>& key, std::size_t k) {
  std::vector<std::size_t> order(key.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  order.resize(std::min(k, order.size()));
  return order;
}

}  // namespace

Vector pgd_extremize(const ModelSpec& model, const Vector& x, const Objective& objective,
                     const PgdOptions& options) {
  if (x.size() != model.input_dim) throw DimensionError("PGD input does not match the model");
  Vector best = x;
  double best_value = objective.value(plaintext_forward(x, model));
  if (options.radius <= 0.0) return best;
  Vector cur = x;
  for (int step = 0; step < options.steps; ++step) {
    const Vector g = plaintext_input_grad(cur, model, objective);
    const double norm = g.norm();
    if (norm == 0.0 || !std::isfinite(norm)) break;
    cur += options.step_size / norm * g;
    const Vector delta = cur - x;
    if (delta.norm() > options.radius) cur = x + delta * (options.radius / delta.norm());
    const double value = objective.value(plaintext_forward(cur, model));
    if (value > best_value) {
      best_value = value;
      best = cur;
    }
  }
  return best;
}

LogitRange select_logit_range(const ModelSpec& model, const std::vector<Vector>& dataset,
                              const NoiseModel& nm, std::int64_t n, double margin_frac,
                              std::uint64_t seed, const PgdOptions& pgd) {
  if (dataset.empty()) throw EmptyDataset("logit range selection needs a nonempty dataset");
  if (n < 1) throw ValidationError("noise draw count must be >= 1");
  if (!(margin_frac >= 0.0)) throw ValidationError("margin_frac must be >= 0");
  std::vector<Vector> clean;
  std::vector<double> highest, lowest, spread;
  for (const auto& x : dataset) {
    clean.push_back(plaintext_forward(x, model));
    highest.push_back(clean.back().maxCoeff());
    lowest.push_back(-clean.back().minCoeff());
    spread.push_back(clean.back().maxCoeff() - clean.back().minCoeff());
  }
  std::vector<std::size_t> pool;
  for (const auto& part : {top_k(highest, 50), top_k(lowest, 50), top_k(spread, 100)})
    for (std::size_t i : part)
      if (std::find(pool.begin(), pool.end(), i) == pool.end()) pool.push_back(i);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  const auto cover = [&](const Vector& z) {
    lo = std::min(lo, z.minCoeff());
    hi = std::max(hi, z.maxCoeff());
  };
  for (const auto& z : clean) cover(z);
  for (std::size_t p = 0; p < pool.size(); ++p) {
    const std::size_t i = pool[p];
    Eigen::Index top = 0;
    Eigen::Index bottom = 0;
    clean[i].maxCoeff(&top);
    clean[i].minCoeff(&bottom);
    const Vector adv[2] = {
        pgd_extremize(model, dataset[i], {ObjectiveKind::MaximizeSlot, top}, pgd),
        pgd_extremize(model, dataset[i], {ObjectiveKind::MinimizeSlot, bottom}, pgd)};
    for (std::uint64_t a = 0; a < 2; ++a) {
      cover(plaintext_forward(adv[a], model));
      for (const auto& z : noisy_logits(model, adv[a], nm, n, derive_seed(seed, kRangeStream, 2 * p + a)))
        cover(z);
    }
  }
  const double width = hi - lo;
  const double margin = width > 0.0 ? margin_frac * width
                                    : margin_frac * std::max(1.0, std::abs(hi));
  return {lo - margin, hi + margin};
}

double phi2_for(int classes, double psi1) {
  const double c = classes;
  return (1.0 - (c - 1.0) * std::exp2(-psi1)) / (2.0 * c - 2.0);
}

ArgmaxParams default_argmax_params(int classes) {
  ArgmaxParams ap = classes == 2 ? ArgmaxParams{6, 0, 0, 2} : ArgmaxParams{6, 1, 2, 2};
  ap.classes = classes;
  ap.block_stride = 2 * static_cast<std::size_t>(classes);
  return ap;
}

double gap_for_degrees(int d_q1, int d_p1, double width, const SignFamily& family) {
  if (!(width > 0.0)) throw ValidationError("logit window must have positive width");
  return width * min_margin(d_q1, d_p1, kPsi1Target, family);
}

namespace {

struct StageCheck {
  double psi1 = 0.0;
  double phi2 = 0.0;
  double psi2 = 0.0;
};

StageCheck check_stages(const ArgmaxParams& ap, double phi1, const SignFamily& family) {
  StageCheck s;
  s.psi1 = measure_closeness(SignParams(ap.d_q1, ap.d_p1, family), phi1);
  s.phi2 = phi2_for(ap.classes, s.psi1);
  if (s.phi2 > 0.0) s.psi2 = measure_closeness(SignParams(ap.d_q2, ap.d_p2, family), s.phi2);
  return s;
}

// With two classes a single comparison feeds the second stage, so only
// psi1 > log2(c - 1) = 0 is needed there.
bool passes(const StageCheck& s, int classes, std::int64_t n) {
  const bool psi1_ok = classes == 2 ? s.psi1 > 0.0 : s.psi1 >= kPsi1Target;
  return psi1_ok && s.psi1 > std::log2(classes - 1.0) && s.phi2 > 0.0 &&
         s.psi2 > std::log2(static_cast<double>(n));
}

}  // namespace

double gap_for_classes(int classes, std::int64_t n, double width, const SignFamily& family) {
  if (!(width > 0.0)) throw ValidationError("logit window must have positive width");
  const ArgmaxParams ap = default_argmax_params(classes);
  if (classes != 2) return gap_for_degrees(ap.d_q1, ap.d_p1, width, family);
  // The q-only first stage never reaches kPsi1Target; take the smallest
  // margin at which the whole default chain passes for this n.
  auto ok = [&](double phi) { return passes(check_stages(ap, phi, family), classes, n); };
  double hi = 0.25;
  if (!ok(hi)) throw NoFeasibleDegree("binary default degrees fail for n = " + std::to_string(n));
  double lo = 1e-12;
  while (hi / lo > 1.0 + 1e-6) {
    const double mid = std::sqrt(lo * hi);
    (ok(mid) ? hi : lo) = mid;
  }
  return width * hi;
}

ArgmaxChoice choose_argmax_params(int classes, std::int64_t n, const LogitConditions& conditions,
                                  bool defaults_allowed, const SignFamily& family) {
  conditions.validate();
  if (classes < 2) throw ValidationError("argmax needs at least 2 classes");
  if (n < 1) throw ValidationError("n must be >= 1");
  ArgmaxChoice out;
  out.phi1 = conditions.phi1();
  if (defaults_allowed) {
    const ArgmaxParams ap = default_argmax_params(classes);
    const StageCheck s = check_stages(ap, out.phi1, family);
    if (passes(s, classes, n)) {
      out.params = ap;
      out.psi1 = s.psi1;
      out.phi2 = s.phi2;
      out.psi2 = s.psi2;
      return out;
    }
    std::ostringstream note;
    note << "default degrees fail at phi1=" << out.phi1 << " (psi1=" << s.psi1
         << ", psi2=" << s.psi2 << "); searched replacements";
    out.note = note.str();
    out.substituted = true;
  }
  const double psi1_target = std::max(kPsi1Target, std::floor(std::log2(classes - 1.0)) + 1.0);
  const DegreePair first = min_degrees(out.phi1, psi1_target, family);
  ArgmaxParams ap = default_argmax_params(classes);
  ap.d_q1 = first.d_q;
  ap.d_p1 = first.d_p;
  out.psi1 = measure_closeness(SignParams(ap.d_q1, ap.d_p1, family), out.phi1);
  out.phi2 = phi2_for(classes, out.psi1);
  if (!(out.phi2 > 0.0 && out.phi2 < 1.0))
    throw NoFeasibleDegree("second-stage margin is not in (0, 1)");
  const DegreePair second = min_degrees(out.phi2, std::floor(std::log2(static_cast<double>(n))) + 1.0, family);
  ap.d_q2 = second.d_q;
  ap.d_p2 = second.d_p;
  out.psi2 = measure_closeness(SignParams(ap.d_q2, ap.d_p2, family), out.phi2);
  out.params = ap;
  if (!passes({out.psi1, out.phi2, out.psi2}, classes, n))
    throw NoFeasibleDegree("searched degrees do not pass the closeness checks");
  return out;
}

bool has_difference_violation(const Vector& z, double gap) {
  std::vector<double> v(z.begin(), z.end());
  std::sort(v.begin(), v.end());
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] - v[i - 1] < gap) return true;
  return false;
}

bool has_range_violation(const Vector& z, const LogitConditions& conditions) {
  return z.minCoeff() < conditions.z_min || z.maxCoeff() > conditions.z_max;
}

double difference_violation_fraction(const std::vector<Vector>& logits, double gap) {
  if (logits.empty()) return 0.0;
  const auto bad = std::count_if(logits.begin(), logits.end(),
                                 [gap](const Vector& z) { return has_difference_violation(z, gap); });
  return static_cast<double>(bad) / static_cast<double>(logits.size());
}

ViolationRates estimate_violation_rates(const ModelSpec& model, const std::vector<Vector>& testset,
                                        const NoiseModel& nm, const SmoothingConfig& cfg,
                                        const LogitConditions& conditions, double p) {
  if (testset.empty()) throw EmptyDataset("violation estimation needs a nonempty test set");
  conditions.validate();
  ViolationRates r;
  r.examples = static_cast<std::int64_t>(testset.size());
  for (std::size_t i = 0; i < testset.size(); ++i) {
    const auto logits =
        noisy_logits(model, testset[i], nm, cfg.n, derive_seed(cfg.rng_seed, kRateStream, i));
    if (std::any_of(logits.begin(), logits.end(),
                    [&](const Vector& z) { return has_range_violation(z, conditions); }))
      ++r.range_violations;
    const double frac = difference_violation_fraction(logits, conditions.gap);
    if (frac > 0.0 && frac >= conditions.zeta) ++r.diff_violations;
  }
  const auto m = static_cast<double>(r.examples);
  r.beta_hat_r = static_cast<double>(r.range_violations) / m;
  r.beta_hat_d = static_cast<double>(r.diff_violations) / m;
  r.beta_r = clopper_pearson_upper(r.range_violations, r.examples, p);
  r.beta_d = clopper_pearson_upper(r.diff_violations, r.examples, p);
  return r;
}

double total_error(double alpha, double beta_r, double beta_d) {
  for (double v : {alpha, beta_r, beta_d})
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("error terms must lie in [0, 1]");
  return std::min(1.0, alpha + beta_r + beta_d);
}

std::string_view violation_name(Violation v) {
  switch (v) {
    case Violation::None: return "none";
    case Violation::Harmless: return "harmless";
    case Violation::HarmfulRange: return "harmful_range";
    case Violation::HarmfulDiff: return "harmful_diff";
  }
  return "unknown";
}

Violation classify_violation(const Vector& z, const LogitConditions& conditions) {
  if (z.size() < 2) throw DimensionError("violation check needs at least 2 logits");
  if (z.maxCoeff() - z.minCoeff() > conditions.width()) return Violation::HarmfulRange;
  std::vector<double> v(z.begin(), z.end());
  std::sort(v.begin(), v.end(), std::greater<>());
  if (v[0] - v[1] < conditions.gap) return Violation::HarmfulDiff;
  if (has_range_violation(z, conditions) || has_difference_violation(z, conditions.gap))
    return Violation::Harmless;
  return Violation::None;
}

int depth_budget(const ModelSpec& model, const ArgmaxParams& ap, const SignFamily& family) {
  return model.inference_depth() + 1 + argmax_depth(ap, family) + 2;
}

nlohmann::json CalibrationResult::to_json() const {
  const auto& ap = choice.params;
  return {
      {"conditions",
       {{"z_min", conditions.z_min}, {"z_max", conditions.z_max}, {"D", conditions.gap},
        {"zeta", conditions.zeta}}},
      {"argmax", {{"dq1", ap.d_q1}, {"dp1", ap.d_p1}, {"dq2", ap.d_q2}, {"dp2", ap.d_p2}}},
      {"phi1", choice.phi1},
      {"psi1", choice.psi1},
      {"phi2", choice.phi2},
      {"psi2", choice.psi2},
      {"substituted", choice.substituted},
      {"note", choice.note},
      {"lambda_total", lambda_total},
      {"alpha", alpha},
      {"beta_hat_r", rates.beta_hat_r},
      {"beta_hat_d", rates.beta_hat_d},
      {"beta_r", rates.beta_r},
      {"beta_d", rates.beta_d},
      {"examples", rates.examples},
      {"range_violations", rates.range_violations},
      {"diff_violations", rates.diff_violations},
      {"xi", xi},
      {"p", p},
      {"confidence", confidence()},
  };
}

CalibrationResult calibrate(const ModelSpec& model, const std::vector<Vector>& calibration_set,
                            const std::vector<Vector>& testset, const NoiseModel& nm,
                            const SmoothingConfig& cfg, const CalibrationOptions& options) {
  cfg.validate();
  model.validate();
  const LogitRange range = select_logit_range(model, calibration_set, nm, cfg.n,
                                              options.margin_frac, cfg.rng_seed, options.pgd);
  CalibrationResult res;
  res.conditions = LogitConditions{range.z_min, range.z_max, 0.0, cfg.zeta};
  res.conditions.gap = gap_for_classes(model.class_count, cfg.n, range.z_max - range.z_min);
  res.choice = choose_argmax_params(model.class_count, cfg.n, res.conditions,
                                    options.defaults_allowed);
  res.lambda_total = depth_budget(model, res.choice.params);
  res.alpha = cfg.alpha;
  res.p = options.p;
  res.rates = estimate_violation_rates(model, testset, nm, cfg, res.conditions, options.p);
  res.xi = total_error(cfg.alpha, res.rates.beta_r, res.rates.beta_d);
  return res;
}

}  // namespace rsfhe
