#pragma once

// Condition and parameter selection: logit range, gap D, sign degrees,
// violation-rate bounds and the resulting error budget.

#include "rsfhe/argmax.hpp"
#include "rsfhe/network.hpp"
#include "rsfhe/smoothing.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace rsfhe {

struct PgdOptions {
  int steps = 100;
  double step_size = 0.01;
  double radius = 2.0;
};

/// Normalized-gradient ascent on `objective`, projected onto the l2 ball of
/// `radius` around x. Returns the best iterate seen.
Vector pgd_extremize(const ModelSpec& model, const Vector& x, const Objective& objective,
                     const PgdOptions& options = {});

struct LogitRange {
  double z_min = 0.0;
  double z_max = 0.0;
};

/// Envelope of noisy logits at adversarially extremized points drawn from
/// the 50 highest-max, 50 lowest-min and 100 widest-spread examples.
LogitRange select_logit_range(const ModelSpec& model, const std::vector<Vector>& dataset,
                              const NoiseModel& nm, std::int64_t n, double margin_frac = 0.05,
                              std::uint64_t seed = 0, const PgdOptions& pgd = {});

/// (1 - (c-1) 2^-psi1) / (2c - 2).
double phi2_for(int classes, double psi1);

inline constexpr double kPsi1Target = 6.0;

struct ArgmaxChoice {
  ArgmaxParams params;
  double phi1 = 0.0;
  double psi1 = 0.0;
  double phi2 = 0.0;
  double psi2 = 0.0;
  /// True when the default degrees failed a closeness check and were replaced.
  bool substituted = false;
  std::string note;
};

/// Default degrees for c classes: (6,1,2,2), or (6,0,0,2) when c = 2.
ArgmaxParams default_argmax_params(int classes);

/// Verifies the defaults at the computed margins (psi1 >= 6, or > 0 when c = 2,
/// psi1 > log2(c-1), psi2 > log2 n); otherwise searches the smallest degrees that pass.
/// Throws NoFeasibleDegree.
ArgmaxChoice choose_argmax_params(int classes, std::int64_t n, const LogitConditions& conditions,
                                  bool defaults_allowed = true,
                                  const SignFamily& family = default_sign_family());

/// D implied by degrees (d_q1, d_p1) reaching kPsi1Target on a logit window.
double gap_for_degrees(int d_q1, int d_p1, double width,
                       const SignFamily& family = default_sign_family());

/// D used by calibration: gap_for_degrees on the default first stage, or for
/// two classes the smallest gap at which the default chain passes for n.
double gap_for_classes(int classes, std::int64_t n, double width,
                       const SignFamily& family = default_sign_family());

struct ViolationRates {
  double beta_hat_r = 0.0;
  double beta_hat_d = 0.0;
  double beta_r = 0.0;
  double beta_d = 0.0;
  std::int64_t examples = 0;
  std::int64_t range_violations = 0;
  std::int64_t diff_violations = 0;
};

/// True if two logits are closer than D.
bool has_difference_violation(const Vector& z, double gap);
bool has_range_violation(const Vector& z, const LogitConditions& conditions);

/// Fraction of the noisy logit vectors of one example that contain a sub-D gap.
double difference_violation_fraction(const std::vector<Vector>& logits, double gap);

/// Empirical rates over `testset` with n noisy draws per example and exact
/// Clopper-Pearson upper bounds at `p`.
ViolationRates estimate_violation_rates(const ModelSpec& model, const std::vector<Vector>& testset,
                                        const NoiseModel& nm, const SmoothingConfig& cfg,
                                        const LogitConditions& conditions, double p = 0.05);

/// alpha + beta_r + beta_d, clamped to 1.
double total_error(double alpha, double beta_r, double beta_d);

enum class Violation { None, Harmless, HarmfulRange, HarmfulDiff };
std::string_view violation_name(Violation v);

/// Classification of raw logits against the range and difference conditions.
Violation classify_violation(const Vector& z, const LogitConditions& conditions);

/// lambda_inf + 1 + lambda_argmax + 2.
int depth_budget(const ModelSpec& model, const ArgmaxParams& ap,
                 const SignFamily& family = default_sign_family());

struct CalibrationResult {
  LogitConditions conditions;
  ArgmaxChoice choice;
  int lambda_total = 0;
  double alpha = 0.0;
  double xi = 0.0;
  ViolationRates rates;
  double p = 0.05;
  double confidence() const { return 1.0 - 2.0 * p; }

  nlohmann::json to_json() const;
};

struct CalibrationOptions {
  double margin_frac = 0.05;
  double p = 0.05;
  bool defaults_allowed = true;
  PgdOptions pgd;
};

/// Full selection on a raw (unnormalized) model: range from `calibration_set`,
/// D from the default first-stage degrees, degrees, and rates on `testset`.
CalibrationResult calibrate(const ModelSpec& model, const std::vector<Vector>& calibration_set,
                            const std::vector<Vector>& testset, const NoiseModel& nm,
                            const SmoothingConfig& cfg, const CalibrationOptions& options = {});

}  // namespace rsfhe
