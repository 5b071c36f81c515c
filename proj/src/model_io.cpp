#include "rsfhe/model_io.hpp"

#include "rsfhe/errors.hpp"

#include <fstream>
#include <string>

namespace rsfhe {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has the wrong type");
  }
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

json model_to_json(const ModelSpec& model) {
  json layers = json::array();
  for (const auto& layer : model.layers) {
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
      std::vector<double> w;
      w.reserve(static_cast<std::size_t>(lin->weight.size()));
      for (Eigen::Index r = 0; r < lin->weight.rows(); ++r)
        for (Eigen::Index c = 0; c < lin->weight.cols(); ++c) w.push_back(lin->weight(r, c));
      layers.push_back({{"type", "linear"},
                        {"rows", lin->weight.rows()},
                        {"cols", lin->weight.cols()},
                        {"w", w},
                        {"b", std::vector<double>(lin->bias.begin(), lin->bias.end())}});
    } else {
      const auto& act = std::get<SquareActivation>(layer);
      layers.push_back({{"type", "square"}, {"c1", act.c1}, {"c2", act.c2}});
    }
  }
  json out = {{"input_dim", model.input_dim},
              {"class_count", model.class_count},
              {"layers", layers},
              {"normalization", nullptr},
              {"prelim_scale", nullptr}};
  if (model.normalization)
    out["normalization"] = {{"z_min", model.normalization->z_min},
                            {"z_max", model.normalization->z_max}};
  if (model.prelim_scale) out["prelim_scale"] = *model.prelim_scale;
  return out;
}

ModelSpec model_from_json(const json& j) {
  ModelSpec model;
  model.input_dim = field<int>(j, "input_dim", "model");
  model.class_count = field<int>(j, "class_count", "model");
  const auto layers = field<json>(j, "layers", "model");
  if (!layers.is_array()) throw ValidationError("model: 'layers' must be an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& l = layers[i];
    const std::string where = "layers[" + std::to_string(i) + "]";
    const auto type = field<std::string>(l, "type", where);
    if (type == "linear") {
      const auto rows = field<long>(l, "rows", where);
      const auto cols = field<long>(l, "cols", where);
      const auto w = field<std::vector<double>>(l, "w", where);
      const auto b = field<std::vector<double>>(l, "b", where);
      if (rows < 1 || cols < 1) throw ValidationError(where + ": rows and cols must be >= 1");
      if (w.size() != static_cast<std::size_t>(rows * cols))
        throw DimensionError(where + ": w has " + std::to_string(w.size()) + " entries, expected " +
                             std::to_string(rows * cols));
      LinearLayer lin;
      lin.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                  Eigen::RowMajor>>(w.data(), rows, cols);
      lin.bias = to_vector(b);
      model.layers.emplace_back(std::move(lin));
    } else if (type == "square") {
      model.layers.emplace_back(
          SquareActivation{field<double>(l, "c1", where), field<double>(l, "c2", where)});
    } else {
      throw ValidationError(where + ": unknown layer type '" + type + "'");
    }
  }
  if (j.contains("normalization") && !j["normalization"].is_null()) {
    const json& n = j["normalization"];
    model.normalization =
        Normalization{field<double>(n, "z_min", "normalization"), field<double>(n, "z_max", "normalization")};
  }
  if (j.contains("prelim_scale") && !j["prelim_scale"].is_null())
    model.prelim_scale = field<double>(j, "prelim_scale", "model");
  model.validate();
  return model;
}

ModelSpec load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const Error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void save_model(const ModelSpec& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write model file " + path.string());
  out << model_to_json(model).dump(2) << '\n';
}

}  // namespace rsfhe
