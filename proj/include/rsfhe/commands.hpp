#pragma once

// Dataset-level drivers behind the command-line tool.

#include "rsfhe/calibration.hpp"
#include "rsfhe/config.hpp"
#include "rsfhe/smoothing.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rsfhe {

/// Normalizes a raw model with the configured conditions; a model that is
/// already normalized is returned as is. Throws ValidationError without conditions.
ModelSpec prepare_model(const ModelSpec& model, const RunConfig& cfg);

/// Smoothing config for input `index`: the seed is split off the root seed.
SmoothingConfig config_for_input(const SmoothingConfig& cfg, std::size_t index);

/// Runs body(i) for i in [0, count) on up to `threads` workers; exceptions are
/// rethrown on the calling thread.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

enum class Severity { None, Harmless, Harmful };
std::string_view severity_name(Severity s);
/// Range condition on one logit vector (raw scale).
Severity range_severity(const Vector& z, const LogitConditions& conditions);
/// Difference condition on one logit vector (raw scale).
Severity diff_severity(const Vector& z, const LogitConditions& conditions);

struct ConsistencyRecord {
  bool valid_1hot = false;
  bool pred_ok = false;
  bool counts_ok = false;
  bool result_ok = false;
  /// Same decision as the hard-preliminary reference.
  bool result_ok_hard = false;
  /// Both certified, but for different classes (hard reference).
  bool hard_class_conflict = false;
  bool certified = false;
  bool reference_certified = false;
  Severity rv = Severity::None;
  Severity dv = Severity::None;
  Severity p_rv = Severity::None;
  Severity p_dv = Severity::None;
  int consumed_depth = 0;
};

struct ConsistencyReport {
  std::vector<ConsistencyRecord> records;

  double valid_1hot() const;
  double pred_ok() const;
  double counts_ok() const;
  double result_ok() const;
  double result_ok_hard() const;
  double certified() const;
  nlohmann::json to_json() const;
};

/// Paired encrypted vs cleartext certification with shared noise per input.
/// `model` is the raw or normalized model; `ap` overrides the configured degrees.
ConsistencyReport run_consistency(const ModelSpec& model, const RunConfig& cfg,
                                  const std::vector<Vector>& inputs, std::size_t threads = 1,
                                  std::optional<ArgmaxParams> ap = std::nullopt);

struct SweepRow {
  ArgmaxParams params;
  double valid_1hot = 0.0;
  double pred_ok = 0.0;
  double counts_ok = 0.0;
  double result_ok = 0.0;
};

/// The degree settings of the reduced-precision study.
std::vector<ArgmaxParams> default_sweep_grid();

std::vector<SweepRow> run_unsound_sweep(const ModelSpec& model, const RunConfig& cfg,
                                        const std::vector<Vector>& inputs,
                                        const std::vector<ArgmaxParams>& grid,
                                        std::size_t threads = 1);
nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);

struct CostReport {
  CostComponents components;
  CostLedger::Counts total{};
  CostLedger::Weights weights{};
  int consumed_depth = 0;

  double weighted(const CostLedger::Counts& counts) const {
    return CostLedger::weighted(counts, weights);
  }
  nlohmann::json to_json() const;
};

/// Costs of one certification of `x` on a fresh engine.
CostReport run_cost_report(const ModelSpec& model, const RunConfig& cfg, const Vector& x);

struct CertifyRow {
  std::optional<CertOutcome> outcome;
  std::string error;
  bool valid_1hot = true;
};

/// Certifies every input; per-row protocol violations are reported, not thrown.
std::vector<CertifyRow> run_certify(const ModelSpec& model, const RunConfig& cfg,
                                    const std::vector<Vector>& inputs, double xi,
                                    std::size_t threads = 1);
nlohmann::json certify_row_to_json(std::size_t row, const CertifyRow& r);

}  // namespace rsfhe
