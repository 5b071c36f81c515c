// rsfhe: certify, calibrate and audit models on the simulated engine.

#include "rsfhe/calibration.hpp"
#include "rsfhe/commands.hpp"
#include "rsfhe/config.hpp"
#include "rsfhe/errors.hpp"
#include "rsfhe/model_io.hpp"
#include "rsfhe/synthetic.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kValidationExit = 2;
constexpr int kRuntimeExit = 3;

struct Common {
  std::string config;
  std::string model;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty()) return;
    file_.open(path);
    if (!file_) throw rsfhe::ValidationError("cannot write " + path);
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

rsfhe::RunConfig load_config(const Common& c) {
  rsfhe::RunConfig cfg = rsfhe::load_run_config(c.config);
  if (c.seed) cfg.smoothing.rng_seed = *c.seed;
  return cfg;
}

std::vector<rsfhe::Vector> load_data(const std::string& path, const rsfhe::ModelSpec& model) {
  return rsfhe::read_csv(path, static_cast<std::size_t>(model.input_dim));
}

void add_common(CLI::App* cmd, Common& c, bool needs_config, bool needs_model, bool needs_data) {
  auto* cfg = cmd->add_option("--config", c.config, "run configuration (JSON)")->check(CLI::ExistingFile);
  auto* model = cmd->add_option("--model", c.model, "model file (JSON)")->check(CLI::ExistingFile);
  auto* data = cmd->add_option("--data", c.data, "inputs, one CSV row each")->check(CLI::ExistingFile);
  if (needs_config) cfg->required();
  if (needs_model) model->required();
  if (needs_data) data->required();
  cmd->add_option("--out", c.out, "output path (default: stdout)");
  cmd->add_option("--seed", c.seed, "overrides the configured seed");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::Range(1, 1024));
}

std::vector<rsfhe::Vector> first_n(std::vector<rsfhe::Vector> v, std::size_t n) {
  if (n > 0 && v.size() > n) v.resize(n);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomized-smoothing certification on a simulated leveled SIMD scheme"};
  app.require_subcommand(1);
  Common common;

  auto* certify = app.add_subcommand("certify", "certify every input row");
  add_common(certify, common, true, true, true);
  std::optional<double> xi;
  certify->add_option("--xi", xi, "error bound attached to guarantees (default: alpha)");

  auto* calibrate = app.add_subcommand("calibrate", "choose conditions and degrees for a model");
  add_common(calibrate, common, true, true, true);
  std::string test_path;
  calibrate->add_option("--test", test_path, "separate test set for violation rates")
      ->check(CLI::ExistingFile);
  double margin_frac = 0.05;
  calibrate->add_option("--margin", margin_frac, "range margin as a fraction of the width");

  auto* consistency = app.add_subcommand("consistency", "encrypted vs cleartext agreement");
  add_common(consistency, common, true, true, true);
  std::size_t trials = 0;
  consistency->add_option("--trials", trials, "use only the first N rows");

  auto* sweep = app.add_subcommand("unsound-sweep", "consistency under reduced sign degrees");
  add_common(sweep, common, true, true, true);
  sweep->add_option("--trials", trials, "use only the first N rows");

  auto* cost = app.add_subcommand("cost-report", "per-component operation counts of one run");
  add_common(cost, common, true, true, false);

  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic model and dataset");
  add_common(gen, common, false, false, false);
  rsfhe::SyntheticSpec spec;
  bool confident = false;
  gen->add_option("--dim", spec.input_dim, "input dimension");
  gen->add_option("--classes", spec.classes, "number of classes");
  gen->add_option("--activations", spec.activations, "square activations (linear layers = +1)");
  gen->add_option("--samples", spec.samples, "dataset rows");
  gen->add_option("--separation", spec.separation, "centroid distance from the origin");
  gen->add_option("--norm-ratio", spec.norm_ratio, "norm multiplier of the far classes (>= 1)");
  gen->add_option("--far-classes", spec.far_classes, "number of classes placed far out");
  gen->add_option("--spread", spec.data_spread, "sample standard deviation");
  gen->add_option("--gamma", spec.gamma, "last-layer scale");
  gen->add_flag("--confident", confident, "tight, well separated blobs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kValidationExit;
  }

  try {
    Output out(common.out);
    std::ostream& os = out.stream();
    if (*certify) {
      const auto cfg = load_config(common);
      const auto model = rsfhe::load_model(common.model);
      const auto rows = rsfhe::run_certify(model, cfg, load_data(common.data, model),
                                           xi.value_or(cfg.smoothing.alpha), common.threads);
      bool violation = false;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        os << rsfhe::certify_row_to_json(i + 1, rows[i]).dump() << '\n';
        violation = violation || !rows[i].valid_1hot;
      }
      if (violation) {
        std::cerr << "rsfhe: at least one result was not one-hot (see rows with \"error\")\n";
        return kRuntimeExit;
      }
    } else if (*calibrate) {
      const auto cfg = load_config(common);
      const auto model = rsfhe::load_model(common.model);
      const auto data = load_data(common.data, model);
      const auto test = test_path.empty() ? data : load_data(test_path, model);
      rsfhe::CalibrationOptions opts;
      opts.margin_frac = margin_frac;
      const auto res = rsfhe::calibrate(model, data, test, cfg.noise, cfg.smoothing, opts);
      rsfhe::RunConfig updated = cfg;
      updated.conditions = res.conditions;
      updated.argmax = res.choice.params;
      nlohmann::json j = res.to_json();
      j["config"] = rsfhe::run_config_to_json(updated);
      os << j.dump(2) << '\n';
    } else if (*consistency) {
      const auto cfg = load_config(common);
      const auto model = rsfhe::load_model(common.model);
      const auto data = first_n(load_data(common.data, model), trials);
      os << rsfhe::run_consistency(model, cfg, data, common.threads).to_json().dump(2) << '\n';
    } else if (*sweep) {
      const auto cfg = load_config(common);
      const auto model = rsfhe::load_model(common.model);
      const auto data = first_n(load_data(common.data, model), trials);
      const auto rows =
          rsfhe::run_unsound_sweep(model, cfg, data, rsfhe::default_sweep_grid(), common.threads);
      os << rsfhe::sweep_to_json(rows).dump(2) << '\n';
    } else if (*cost) {
      const auto cfg = load_config(common);
      const auto model = rsfhe::load_model(common.model);
      rsfhe::Vector x = rsfhe::Vector::Zero(model.input_dim);
      if (!common.data.empty()) {
        const auto data = load_data(common.data, model);
        if (!data.empty()) x = data.front();
      }
      os << rsfhe::run_cost_report(model, cfg, x).to_json().dump(2) << '\n';
    } else if (*gen) {
      if (common.out.empty()) throw rsfhe::ValidationError("gen-synthetic needs --out <prefix>");
      if (confident) {
        const auto base = rsfhe::SyntheticSpec::confident(spec.input_dim, spec.classes, 0);
        spec.separation = base.separation;
        spec.data_spread = base.data_spread;
        spec.gamma = base.gamma;
      }
      spec.seed = common.seed.value_or(spec.seed);
      const auto data = rsfhe::generate_synthetic(spec);
      rsfhe::save_model(data.model, common.out + ".model.json");
      rsfhe::write_csv(data.inputs, common.out + ".csv");
      std::ofstream labels(common.out + ".labels.csv");
      for (int l : data.labels) labels << l + 1 << '\n';
    }
  } catch (const rsfhe::DepthExhausted& e) {
    std::cerr << "rsfhe: depth budget exhausted: " << e.what() << '\n';
    return kRuntimeExit;
  } catch (const rsfhe::ProtocolViolation& e) {
    std::cerr << "rsfhe: protocol violation: " << e.what() << '\n';
    return kRuntimeExit;
  } catch (const rsfhe::Error& e) {
    std::cerr << "rsfhe: " << e.what() << '\n';
    return kValidationExit;
  } catch (const std::exception& e) {
    std::cerr << "rsfhe: unexpected failure: " << e.what() << '\n';
    return kRuntimeExit;
  }
  return 0;
}
