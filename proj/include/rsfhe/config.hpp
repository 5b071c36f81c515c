#pragma once

// Run configuration (JSON) and headerless CSV input files; schemas in docs/formats.md.

#include "rsfhe/argmax.hpp"
#include "rsfhe/engine.hpp"
#include "rsfhe/smoothing.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace rsfhe {

struct RunConfig {
  NoiseModel noise = GaussianNoise{0.5};
  SmoothingConfig smoothing;
  EngineParams engine;
  ArgmaxParams argmax;
  /// Present once the model has been calibrated.
  std::optional<LogitConditions> conditions;
};

/// Throws ValidationError naming the offending field.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json noise_to_json(const NoiseModel& nm);
NoiseModel noise_from_json(const nlohmann::json& j);

/// One row per vector; every row must have `width` entries when width > 0,
/// otherwise all rows must agree. Errors carry file:row.
std::vector<Vector> read_csv(const std::filesystem::path& path, std::size_t width = 0);
void write_csv(const std::vector<Vector>& rows, const std::filesystem::path& path);

}  // namespace rsfhe
