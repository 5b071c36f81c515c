#include "rsfhe/config.hpp"

#include "rsfhe/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

namespace rsfhe {

using nlohmann::json;

namespace {

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return get<T>(j, key, where);
}

}  // namespace

json noise_to_json(const NoiseModel& nm) {
  if (const auto* g = std::get_if<GaussianNoise>(&nm)) return {{"type", "gaussian"}, {"sigma", g->sigma}};
  if (const auto* u = std::get_if<UniformNoise>(&nm)) return {{"type", "uniform"}, {"eta", u->eta}};
  const auto& m = std::get<MahalanobisNoise>(nm);
  return {{"type", "mahalanobis"},
          {"theta", std::vector<double>(m.theta.begin(), m.theta.end())},
          {"kappa", m.kappa}};
}

NoiseModel noise_from_json(const json& j) {
  const auto type = get<std::string>(j, "type", "noise");
  if (type == "gaussian") return GaussianNoise{get<double>(j, "sigma", "noise")};
  if (type == "uniform") return UniformNoise{get<double>(j, "eta", "noise")};
  if (type == "mahalanobis") {
    const auto theta = get<std::vector<double>>(j, "theta", "noise");
    return MahalanobisNoise{Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size())),
                            get<double>(j, "kappa", "noise")};
  }
  throw ValidationError("noise: unknown type '" + type + "'");
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("run configuration must be a JSON object");
  RunConfig cfg;
  cfg.noise = noise_from_json(get<json>(j, "noise", "config"));
  auto& s = cfg.smoothing;
  s.n = get<std::int64_t>(j, "n", "config");
  s.n0 = get<std::int64_t>(j, "n0", "config");
  s.alpha = get<double>(j, "alpha", "config");
  s.zeta = get_or<double>(j, "zeta", 0.0, "config");
  if (j.contains("tau_base")) {
    if (j.contains("tau")) throw ValidationError("config: give either 'tau' or 'tau_base', not both");
    s.tau = get<double>(j, "tau_base", "config") + s.zeta;
  } else {
    s.tau = get<double>(j, "tau", "config");
  }
  s.batch = get_or<std::size_t>(j, "batch", 0, "config");
  s.rng_seed = get_or<std::uint64_t>(j, "seed", 0, "config");
  s.validate();

  if (j.contains("engine")) {
    const json& e = j["engine"];
    cfg.engine.slot_count = get_or<std::size_t>(e, "M", cfg.engine.slot_count, "engine");
    cfg.engine.depth_budget = get_or<int>(e, "L", cfg.engine.depth_budget, "engine");
    cfg.engine.initial_scale = get_or<double>(e, "Delta", cfg.engine.initial_scale, "engine");
    cfg.engine.seed = get_or<std::uint64_t>(e, "seed", cfg.engine.seed, "engine");
    if (e.contains("noise_std") && !e["noise_std"].is_null())
      cfg.engine.noise_std = get<double>(e, "noise_std", "engine");
  }
  cfg.engine.validate();

  if (j.contains("argmax")) {
    const json& a = j["argmax"];
    cfg.argmax.d_q1 = get<int>(a, "dq1", "argmax");
    cfg.argmax.d_p1 = get<int>(a, "dp1", "argmax");
    cfg.argmax.d_q2 = get<int>(a, "dq2", "argmax");
    cfg.argmax.d_p2 = get<int>(a, "dp2", "argmax");
    if (cfg.argmax.d_q1 < 0 || cfg.argmax.d_p1 < 0 || cfg.argmax.d_q2 < 0 || cfg.argmax.d_p2 < 0)
      throw ValidationError("argmax: degrees must be >= 0");
  }
  if (j.contains("conditions") && !j["conditions"].is_null()) {
    const json& c = j["conditions"];
    LogitConditions lc{get<double>(c, "z_min", "conditions"), get<double>(c, "z_max", "conditions"),
                       get<double>(c, "D", "conditions"), s.zeta};
    try {
      lc.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("conditions: ") + e.what());
    }
    cfg.conditions = lc;
  }
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  const auto& s = cfg.smoothing;
  json j = {{"noise", noise_to_json(cfg.noise)},
            {"n", s.n},
            {"n0", s.n0},
            {"tau", s.tau},
            {"alpha", s.alpha},
            {"zeta", s.zeta},
            {"batch", s.batch},
            {"seed", s.rng_seed},
            {"engine",
             {{"M", cfg.engine.slot_count},
              {"L", cfg.engine.depth_budget},
              {"Delta", cfg.engine.initial_scale},
              {"seed", cfg.engine.seed}}},
            {"argmax",
             {{"dq1", cfg.argmax.d_q1},
              {"dp1", cfg.argmax.d_p1},
              {"dq2", cfg.argmax.d_q2},
              {"dp2", cfg.argmax.d_p2}}},
            {"conditions", nullptr}};
  if (cfg.engine.noise_std) j["engine"]["noise_std"] = *cfg.engine.noise_std;
  if (cfg.conditions)
    j["conditions"] = {{"z_min", cfg.conditions->z_min},
                       {"z_max", cfg.conditions->z_max},
                       {"D", cfg.conditions->gap}};
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const Error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<Vector> read_csv(const std::filesystem::path& path, std::size_t width) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file " + path.string());
  std::vector<Vector> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fail = [&](const std::string& what) {
      throw ValidationError(path.string() + ":" + std::to_string(row) + ": " + what);
    };
    std::vector<double> values;
    std::stringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        fail("cannot parse '" + cell + "' as a number");
      }
      if (cell.find_first_not_of(" \t", used) != std::string::npos)
        fail("cannot parse '" + cell + "' as a number");
      if (!std::isfinite(v)) fail("non-finite value");
      values.push_back(v);
    }
    if (!line.empty() && line.back() == ',') fail("trailing comma");
    if (width == 0) width = values.size();
    if (values.size() != width)
      fail("expected " + std::to_string(width) + " values, found " + std::to_string(values.size()));
    rows.emplace_back(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  return rows;
}

void write_csv(const std::vector<Vector>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : rows) {
    for (Eigen::Index i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
}

}  // namespace rsfhe
