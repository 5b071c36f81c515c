#include "rsfhe/commands.hpp"

#include "rsfhe/errors.hpp"
#include "rsfhe/stats.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>

namespace rsfhe {

namespace {

constexpr std::uint64_t kInputStream = 1000;

// Conditions on the normalized scale: window [0, 1], gap D / W.
LogitConditions normalized_conditions(const LogitConditions& raw) {
  return LogitConditions{0.0, 1.0, raw.gap / raw.width(), raw.zeta};
}

const LogitConditions& require_conditions(const RunConfig& cfg) {
  if (!cfg.conditions)
    throw ValidationError("config has no 'conditions'; run calibrate first");
  return *cfg.conditions;
}

template <typename Pred>
double percent(const std::vector<ConsistencyRecord>& records, Pred pred) {
  if (records.empty()) return 0.0;
  const auto hits = std::count_if(records.begin(), records.end(), pred);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

Severity worst(Severity a, Severity b) { return std::max(a, b); }

}  // namespace

ModelSpec prepare_model(const ModelSpec& model, const RunConfig& cfg) {
  if (model.prelim_scale) throw ValidationError("model file must not carry a prelim_scale");
  if (model.normalization) return model;
  const auto& c = require_conditions(cfg);
  return apply_normalization(model, c.z_min, c.z_max);
}

SmoothingConfig config_for_input(const SmoothingConfig& cfg, std::size_t index) {
  SmoothingConfig out = cfg;
  out.rng_seed = derive_seed(cfg.rng_seed, kInputStream, index);
  return out;
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::string_view severity_name(Severity s) {
  switch (s) {
    case Severity::None: return "none";
    case Severity::Harmless: return "harmless";
    case Severity::Harmful: return "harmful";
  }
  return "unknown";
}

Severity range_severity(const Vector& z, const LogitConditions& conditions) {
  if (z.maxCoeff() - z.minCoeff() > conditions.width()) return Severity::Harmful;
  return has_range_violation(z, conditions) ? Severity::Harmless : Severity::None;
}

Severity diff_severity(const Vector& z, const LogitConditions& conditions) {
  Vector sorted = z;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  if (sorted.size() > 1 && sorted[0] - sorted[1] < conditions.gap) return Severity::Harmful;
  return has_difference_violation(z, conditions.gap) ? Severity::Harmless : Severity::None;
}

double ConsistencyReport::valid_1hot() const {
  return percent(records, [](const auto& r) { return r.valid_1hot; });
}
double ConsistencyReport::pred_ok() const {
  return percent(records, [](const auto& r) { return r.pred_ok; });
}
double ConsistencyReport::counts_ok() const {
  return percent(records, [](const auto& r) { return r.counts_ok; });
}
double ConsistencyReport::result_ok() const {
  return percent(records, [](const auto& r) { return r.result_ok; });
}
double ConsistencyReport::result_ok_hard() const {
  return percent(records, [](const auto& r) { return r.result_ok_hard; });
}
double ConsistencyReport::certified() const {
  return percent(records, [](const auto& r) { return r.certified; });
}

nlohmann::json ConsistencyReport::to_json() const {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : records)
    recs.push_back({{"valid_1hot", r.valid_1hot},
                    {"pred_ok", r.pred_ok},
                    {"counts_ok", r.counts_ok},
                    {"result_ok", r.result_ok},
                    {"result_ok_hard", r.result_ok_hard},
                    {"hard_class_conflict", r.hard_class_conflict},
                    {"certified", r.certified},
                    {"reference_certified", r.reference_certified},
                    {"rv", severity_name(r.rv)},
                    {"dv", severity_name(r.dv)},
                    {"p_rv", severity_name(r.p_rv)},
                    {"p_dv", severity_name(r.p_dv)},
                    {"consumed_depth", r.consumed_depth}});
  const auto rate = [&](auto pick, Severity at_least) {
    return percent(records, [&](const auto& r) { return pick(r) >= at_least; });
  };
  return {{"inputs", records.size()},
          {"valid_1hot", valid_1hot()},
          {"pred_ok", pred_ok()},
          {"counts_ok", counts_ok()},
          {"result_ok", result_ok()},
          {"result_ok_hard", result_ok_hard()},
          {"certified", certified()},
          {"rv", rate([](const auto& r) { return r.rv; }, Severity::Harmless)},
          {"rv_harmful", rate([](const auto& r) { return r.rv; }, Severity::Harmful)},
          {"dv", rate([](const auto& r) { return r.dv; }, Severity::Harmless)},
          {"dv_harmful", rate([](const auto& r) { return r.dv; }, Severity::Harmful)},
          {"p_rv", rate([](const auto& r) { return r.p_rv; }, Severity::Harmless)},
          {"p_rv_harmful", rate([](const auto& r) { return r.p_rv; }, Severity::Harmful)},
          {"p_dv", rate([](const auto& r) { return r.p_dv; }, Severity::Harmless)},
          {"p_dv_harmful", rate([](const auto& r) { return r.p_dv; }, Severity::Harmful)},
          {"records", recs}};
}

namespace {

bool same_decision(bool cert_a, int cls_a, bool cert_b, int cls_b) {
  return cert_a == cert_b && (!cert_a || cls_a == cls_b);
}

ConsistencyRecord consistency_for(const ModelSpec& normalized, const RunConfig& cfg,
                                  const ArgmaxParams& ap, const Vector& x, std::size_t index) {
  const SmoothingConfig scfg = config_for_input(cfg.smoothing, index);
  EngineParams ep = cfg.engine;
  ep.seed = derive_seed(cfg.engine.seed, kInputStream, index);
  const Engine engine(ep);
  const auto c = static_cast<std::size_t>(normalized.class_count);
  const NoiseDraws draws = draw_noise(cfg.noise, scfg, x.size());

  const CertifyResult res = certify(engine, engine.encrypt(engine.embed(x)), normalized, scfg, ap, draws);
  const ReferenceResult soft = reference_certify(x, normalized, cfg.noise, scfg, PrelimMode::Soft, draws);
  const ReferenceResult hard = reference_certify(x, normalized, cfg.noise, scfg, PrelimMode::Hard, draws);

  ConsistencyRecord rec;
  rec.consumed_depth = res.meta.consumed_depth();
  const Vector k1 = round_slots(engine.decrypt(res.k_onehot).slots().head(static_cast<Eigen::Index>(c)));
  rec.pred_ok = k1 == Vector::Unit(static_cast<Eigen::Index>(c), soft.k);
  const Vector counts = round_slots(engine.decrypt(res.counts).slots().head(static_cast<Eigen::Index>(c)));
  rec.counts_ok = counts == soft.counts.cast<double>();

  const RetInspection ret = inspect_ret(engine.decrypt(res.ret).slots(), c);
  rec.valid_1hot = ret.valid_1hot;
  rec.certified = ret.valid_1hot && ret.z > 0.0;
  const int cls = rec.certified ? static_cast<int>(ret.index) + 1 : 0;
  rec.reference_certified = soft.outcome.certified;
  rec.result_ok = ret.valid_1hot && same_decision(rec.certified, cls, soft.outcome.certified, soft.outcome.cls);
  rec.result_ok_hard =
      ret.valid_1hot && same_decision(rec.certified, cls, hard.outcome.certified, hard.outcome.cls);
  rec.hard_class_conflict = rec.certified && hard.outcome.certified && cls != hard.outcome.cls;

  const LogitConditions cond = normalized_conditions(require_conditions(cfg));
  for (const auto& eps : draws.main) {
    const Vector z = plaintext_forward(x + eps, normalized);
    rec.rv = worst(rec.rv, range_severity(z, cond));
    rec.dv = worst(rec.dv, diff_severity(z, cond));
  }
  Vector avg = Vector::Zero(static_cast<Eigen::Index>(c));
  for (const auto& eps : draws.prelim) avg += plaintext_forward(x + eps, normalized);
  avg /= static_cast<double>(draws.prelim.size());
  rec.p_rv = range_severity(avg, cond);
  rec.p_dv = diff_severity(avg, cond);
  return rec;
}

}  // namespace

ConsistencyReport run_consistency(const ModelSpec& model, const RunConfig& cfg,
                                  const std::vector<Vector>& inputs, std::size_t threads,
                                  std::optional<ArgmaxParams> ap) {
  const ModelSpec normalized = prepare_model(model, cfg);
  const ArgmaxParams params = ap.value_or(cfg.argmax);
  ConsistencyReport report;
  report.records.resize(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    report.records[i] = consistency_for(normalized, cfg, params, inputs[i], i);
  });
  return report;
}

std::vector<ArgmaxParams> default_sweep_grid() {
  const int rows[][4] = {{6, 1, 2, 2}, {6, 1, 2, 1}, {6, 1, 2, 0}, {6, 1, 1, 2}, {6, 1, 0, 2},
                         {6, 0, 2, 2}, {5, 1, 2, 2}, {5, 1, 2, 1}, {4, 1, 2, 2}, {4, 1, 2, 1},
                         {3, 1, 2, 2}, {3, 1, 2, 1}, {2, 1, 2, 2}, {2, 1, 2, 1}, {1, 1, 2, 2},
                         {1, 1, 2, 1}};
  std::vector<ArgmaxParams> grid;
  for (const auto& r : rows) grid.push_back(ArgmaxParams{r[0], r[1], r[2], r[3]});
  return grid;
}

std::vector<SweepRow> run_unsound_sweep(const ModelSpec& model, const RunConfig& cfg,
                                        const std::vector<Vector>& inputs,
                                        const std::vector<ArgmaxParams>& grid, std::size_t threads) {
  if (grid.empty()) throw ValidationError("sweep grid is empty");
  std::vector<SweepRow> rows;
  for (const auto& ap : grid) {
    const ConsistencyReport rep = run_consistency(model, cfg, inputs, threads, ap);
    rows.push_back({ap, rep.valid_1hot(), rep.pred_ok(), rep.counts_ok(), rep.result_ok()});
  }
  return rows;
}

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"dq1", r.params.d_q1},
                   {"dp1", r.params.d_p1},
                   {"dq2", r.params.d_q2},
                   {"dp2", r.params.d_p2},
                   {"valid_1hot", r.valid_1hot},
                   {"pred_ok", r.pred_ok},
                   {"counts_ok", r.counts_ok},
                   {"result_ok", r.result_ok}});
  return out;
}

nlohmann::json CostReport::to_json() const {
  const std::pair<const char*, const CostLedger::Counts*> parts[] = {
      {"duplication_noise", &components.duplication_noise},
      {"inference_reduction", &components.inference_reduction},
      {"argmax", &components.argmax},
      {"aggregation_test", &components.aggregation_test}};
  double cheapest = std::numeric_limits<double>::infinity();
  for (const auto& [name, counts] : parts) cheapest = std::min(cheapest, weighted(*counts));
  nlohmann::json comps = nlohmann::json::object();
  for (const auto& [name, counts] : parts) {
    nlohmann::json ops = nlohmann::json::object();
    for (std::size_t k = 0; k < kOpKindCount; ++k)
      ops[std::string(op_name(static_cast<OpKind>(k)))] = (*counts)[k];
    comps[name] = {{"ops", ops},
                   {"weighted", weighted(*counts)},
                   {"relative", cheapest > 0.0 ? weighted(*counts) / cheapest : 0.0}};
  }
  nlohmann::json totals = nlohmann::json::object();
  for (std::size_t k = 0; k < kOpKindCount; ++k)
    totals[std::string(op_name(static_cast<OpKind>(k)))] = total[k];
  return {{"components", comps},
          {"total_ops", totals},
          {"total_weighted", weighted(total)},
          {"consumed_depth", consumed_depth}};
}

CostReport run_cost_report(const ModelSpec& model, const RunConfig& cfg, const Vector& x) {
  const ModelSpec normalized = prepare_model(model, cfg);
  const Engine engine(cfg.engine);
  const NoiseDraws draws = draw_noise(cfg.noise, cfg.smoothing, x.size());
  const Ciphertext x_ct = engine.encrypt(engine.embed(x));
  const auto before = engine.ledger().snapshot();
  const CertifyResult res = certify(engine, x_ct, normalized, cfg.smoothing, cfg.argmax, draws);
  CostReport rep;
  rep.components = res.meta.costs;
  rep.total = engine.ledger().snapshot() - before;
  rep.weights = engine.ledger().weights();
  rep.consumed_depth = res.meta.consumed_depth();
  return rep;
}

std::vector<CertifyRow> run_certify(const ModelSpec& model, const RunConfig& cfg,
                                    const std::vector<Vector>& inputs, double xi,
                                    std::size_t threads) {
  const ModelSpec normalized = prepare_model(model, cfg);
  const Guarantee guarantee = guarantee_for(cfg.noise, cfg.smoothing.tau, cfg.smoothing.zeta);
  std::vector<CertifyRow> rows(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    const SmoothingConfig scfg = config_for_input(cfg.smoothing, i);
    EngineParams ep = cfg.engine;
    ep.seed = derive_seed(cfg.engine.seed, kInputStream, i);
    const Engine engine(ep);
    const NoiseDraws draws = draw_noise(cfg.noise, scfg, inputs[i].size());
    const CertifyResult res =
        certify(engine, engine.encrypt(engine.embed(inputs[i])), normalized, scfg, cfg.argmax, draws);
    try {
      rows[i].outcome = interpret(engine.decrypt(res.ret).slots(),
                                  static_cast<std::size_t>(normalized.class_count), guarantee, xi);
    } catch (const ProtocolViolation& e) {
      rows[i].valid_1hot = false;
      rows[i].error = e.what();
    }
  });
  return rows;
}

nlohmann::json certify_row_to_json(std::size_t row, const CertifyRow& r) {
  nlohmann::json j = {{"row", row}};
  if (!r.outcome) {
    j["valid_1hot"] = false;
    j["error"] = r.error;
    return j;
  }
  const CertOutcome& o = *r.outcome;
  j["valid_1hot"] = true;
  j["certified"] = o.certified;
  j["xi"] = o.xi;
  if (!o.certified) {
    j["outcome"] = "abstain";
    return j;
  }
  j["outcome"] = "certified";
  j["class"] = o.cls;
  const char* kind = o.guarantee.kind == GuaranteeKind::L2Radius   ? "l2"
                     : o.guarantee.kind == GuaranteeKind::L1Radius ? "l1"
                                                                   : "fairness";
  j["guarantee"] = {{"kind", kind}, {"radius", o.guarantee.radius}};
  if (o.guarantee.kind == GuaranteeKind::Fairness)
    j["guarantee"]["theta"] = std::vector<double>(o.guarantee.theta.begin(), o.guarantee.theta.end());
  return j;
}

}  // namespace rsfhe
