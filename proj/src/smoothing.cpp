#include "rsfhe/smoothing.hpp"

#include "rsfhe/errors.hpp"
#include "rsfhe/stats.hpp"

#include <cmath>
#include <string>

namespace rsfhe {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

constexpr std::uint64_t kPrelimStream = 1;
constexpr std::uint64_t kMainStream = 2;

}  // namespace

void validate_noise(const NoiseModel& nm, std::size_t d) {
  if (const auto* g = std::get_if<GaussianNoise>(&nm)) {
    if (!(g->sigma > 0.0)) throw ValidationError("gaussian sigma must be positive");
  } else if (const auto* u = std::get_if<UniformNoise>(&nm)) {
    if (!(u->eta > 0.0)) throw ValidationError("uniform eta must be positive");
  } else {
    const auto& m = std::get<MahalanobisNoise>(nm);
    if (!(m.kappa > 0.0)) throw ValidationError("mahalanobis kappa must be positive");
    if (static_cast<std::size_t>(m.theta.size()) != d)
      throw ValidationError("theta has " + std::to_string(m.theta.size()) + " entries, expected " +
                            std::to_string(d));
    if (!(m.theta.array() > 0.0).all()) throw ValidationError("theta entries must be positive");
  }
}

Vector mahalanobis_variances(const MahalanobisNoise& nm) {
  const Vector sq = nm.theta.array().square().matrix();
  return sq * (nm.kappa * static_cast<double>(sq.size()) / sq.sum());
}

std::vector<Vector> sample_noise(const NoiseModel& nm, std::size_t count, std::size_t d,
                                 std::mt19937_64& rng) {
  validate_noise(nm, d);
  std::vector<Vector> out;
  out.reserve(count);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector scale;
  if (const auto* g = std::get_if<GaussianNoise>(&nm))
    scale = Vector::Constant(idx(d), g->sigma);
  else if (const auto* m = std::get_if<MahalanobisNoise>(&nm))
    scale = mahalanobis_variances(*m).array().sqrt().matrix();
  for (std::size_t i = 0; i < count; ++i) {
    Vector v(idx(d));
    if (const auto* u = std::get_if<UniformNoise>(&nm)) {
      std::uniform_real_distribution<double> unif(-u->eta, u->eta);
      for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = unif(rng);
    } else {
      for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = scale[j] * gauss(rng);
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b) {
  const auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(root) ^ a) ^ b);
}

void SmoothingConfig::validate() const {
  if (n < 1 || n0 < 1) throw ValidationError("n and n0 must be >= 1");
  if (!(tau > 0.5 && tau < 1.0)) throw ValidationError("tau must lie in (0.5, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (!(zeta >= 0.0 && tau - zeta > 0.5)) throw ValidationError("zeta must satisfy 0 <= zeta < tau - 0.5");
}

NoiseDraws draw_noise(const NoiseModel& nm, const SmoothingConfig& cfg, std::size_t d) {
  cfg.validate();
  NoiseDraws draws;
  const auto pass = [&](std::uint64_t stream, std::int64_t count, std::vector<Vector>& out) {
    out.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
      std::mt19937_64 rng(derive_seed(cfg.rng_seed, stream, static_cast<std::uint64_t>(i)));
      out.push_back(sample_noise(nm, 1, d, rng).front());
    }
  };
  pass(kPrelimStream, cfg.n0, draws.prelim);
  pass(kMainStream, cfg.n, draws.main);
  return draws;
}

Ciphertext replicate_blocks(const Engine& engine, const Ciphertext& ct, std::size_t count,
                            std::size_t stride) {
  if (count == 0 || count * stride > ct.size())
    throw LayoutError("replication window exceeds the slot vector");
  Ciphertext window = ct;
  Ciphertext out;
  bool empty = true;
  std::size_t covered = 0;
  for (std::size_t width = 1; width <= count; width *= 2) {
    if (count & width) {
      const Ciphertext part =
          covered == 0 ? window : engine.rot_right(window, static_cast<long>(covered * stride));
      out = empty ? part : engine.add(out, part);
      empty = false;
      covered += width;
    }
    if (width * 2 <= count)
      window = engine.add(window, engine.rot_right(window, static_cast<long>(width * stride)));
  }
  return out;
}

std::vector<Ciphertext> make_noisy_batches(const Engine& engine, const Ciphertext& x_ct,
                                           const std::vector<Vector>& noise,
                                           const BatchLayout& layout) {
  if (noise.empty()) throw LayoutError("no noise vectors");
  const Ciphertext dup = duplicate_input(engine, x_ct, layout.input_dim);
  const std::size_t per_ct = std::min(layout.batch, noise.size());
  const Ciphertext spread = replicate_blocks(engine, dup, per_ct, layout.block);
  // Blocks past the last sample keep the noiseless copy; the logit reductions
  // never read them.
  std::vector<Ciphertext> out;
  for (std::size_t start = 0; start < noise.size(); start += layout.batch) {
    const std::size_t stop = std::min(noise.size(), start + layout.batch);
    const std::vector<Vector> chunk(noise.begin() + static_cast<long>(start),
                                    noise.begin() + static_cast<long>(stop));
    out.push_back(engine.add_plain(spread, Plaintext(pack_batch_slots(chunk, layout))));
  }
  return out;
}

Ciphertext aggregate_counts(const Engine& engine, const Ciphertext& onehot_ct, std::size_t classes,
                            std::size_t count) {
  return rotate_and_sum(engine, onehot_ct, count, 2 * classes);
}

TestCiphertexts statistical_test(const Engine& engine, const Ciphertext& argmax_out,
                                 std::size_t classes, std::size_t n, std::int64_t target) {
  const std::size_t stride = 2 * classes;
  if ((n + 1) * stride > engine.slot_count())
    throw LayoutError("statistical test layout exceeds the slot vector");
  TestCiphertexts out;
  Vector mask = Vector::Zero(idx(engine.slot_count()));
  mask.segment(idx(n * stride), idx(classes)).setOnes();
  out.k_onehot = engine.rot_left(engine.mul_plain(argmax_out, Plaintext(std::move(mask))),
                                 static_cast<long>(n * stride));
  out.counts = aggregate_counts(engine, argmax_out, classes, n);
  Vector shift = Vector::Zero(idx(engine.slot_count()));
  shift.head(idx(classes)).setConstant(static_cast<double>(target - 1));
  out.ret = engine.mul(out.k_onehot, engine.sub_plain(out.counts, Plaintext(std::move(shift))));
  return out;
}

CertifyResult certify(const Engine& engine, const Ciphertext& x_ct, const ModelSpec& model,
                      const SmoothingConfig& cfg, const ArgmaxParams& ap_in, const NoiseDraws& draws,
                      const SignFamily& family) {
  cfg.validate();
  if (!model.normalization) throw ValidationError("certify needs a normalized model");
  if (draws.prelim.size() != static_cast<std::size_t>(cfg.n0) ||
      draws.main.size() != static_cast<std::size_t>(cfg.n))
    throw ValidationError("noise draws do not match n and n0");

  CertifyResult res;
  auto& meta = res.meta;
  meta.layout = BatchLayout::for_model(model, engine.slot_count());
  if (cfg.batch > 0) meta.layout.batch = std::min(meta.layout.batch, cfg.batch);
  const BatchLayout& layout = meta.layout;
  const auto n = static_cast<std::size_t>(cfg.n);
  const auto n0 = static_cast<std::size_t>(cfg.n0);
  const std::size_t stride = layout.logit_stride;
  if ((n + 1) * stride > engine.slot_count())
    throw LayoutError(std::to_string(n + 1) + " logit blocks of stride " + std::to_string(stride) +
                      " exceed " + std::to_string(engine.slot_count()) + " slots");
  meta.argmax = ap_in;
  meta.argmax.classes = model.class_count;
  meta.argmax.block_stride = stride;
  meta.argmax.blocks = n + 1;
  meta.target = binomial_target(cfg.n, cfg.tau, cfg.alpha);
  meta.start_level = x_ct.level();
  const ModelSpec prelim_model = with_prelim_scale(model, 1.0 / static_cast<double>(cfg.n0));

  CostLedger& ledger = engine.ledger();
  const auto s0 = ledger.snapshot();
  const auto prelim_batches = make_noisy_batches(engine, x_ct, draws.prelim, layout);
  const auto main_batches = make_noisy_batches(engine, x_ct, draws.main, layout);
  const auto s1 = ledger.snapshot();

  std::vector<Ciphertext> prelim_logits;
  for (const auto& ct : prelim_batches)
    prelim_logits.push_back(infer_batch(engine, ct, prelim_model, layout));
  std::vector<Ciphertext> main_logits;
  for (const auto& ct : main_batches) main_logits.push_back(infer_batch(engine, ct, model, layout));
  const Ciphertext averaged = sum_logits(engine, prelim_logits, layout, n0);
  const Ciphertext packed = reduce_logits(engine, main_logits, layout, n);
  const Ciphertext combined =
      engine.add(packed, engine.rot_right(averaged, static_cast<long>(n * stride)));
  const auto s2 = ledger.snapshot();

  res.argmax_out = argmax_he(engine, combined, meta.argmax, family);
  const auto s3 = ledger.snapshot();

  auto test = statistical_test(engine, res.argmax_out, static_cast<std::size_t>(model.class_count),
                               n, meta.target);
  res.k_onehot = std::move(test.k_onehot);
  res.counts = std::move(test.counts);
  res.ret = std::move(test.ret);
  const auto s4 = ledger.snapshot();

  meta.final_level = res.ret.level();
  meta.costs = CostComponents{s1 - s0, s2 - s1, s3 - s2, s4 - s3};
  return res;
}

Guarantee guarantee_for(const NoiseModel& nm, double tau, double zeta) {
  const double t = tau - zeta;
  Guarantee g;
  if (const auto* gauss = std::get_if<GaussianNoise>(&nm)) {
    g.kind = GuaranteeKind::L2Radius;
    g.radius = l2_radius(gauss->sigma, t);
  } else if (const auto* u = std::get_if<UniformNoise>(&nm)) {
    g.kind = GuaranteeKind::L1Radius;
    g.radius = l1_radius(u->eta, t);
  } else {
    g.kind = GuaranteeKind::Fairness;
    g.radius = mahalanobis_radius(t);
    g.theta = std::get<MahalanobisNoise>(nm).theta;
  }
  return g;
}

RetInspection inspect_ret(const Vector& ret_slots, std::size_t classes) {
  if (static_cast<std::size_t>(ret_slots.size()) < classes)
    throw DimensionError("result has fewer slots than classes");
  RetInspection out;
  out.rounded = round_slots(ret_slots.head(idx(classes)));
  int nonzero = 0;
  for (Eigen::Index i = 0; i < out.rounded.size(); ++i) {
    if (out.rounded[i] == 0.0) continue;
    ++nonzero;
    out.index = i;
    out.z = out.rounded[i];
  }
  out.valid_1hot = nonzero <= 1;
  return out;
}

CertOutcome interpret(const Vector& ret_slots, std::size_t classes, const Guarantee& guarantee,
                      double xi) {
  const RetInspection r = inspect_ret(ret_slots, classes);
  if (!r.valid_1hot) throw ProtocolViolation("result has more than one nonzero slot");
  CertOutcome out;
  out.xi = xi;
  if (r.z > 0.0) {
    out.certified = true;
    out.cls = static_cast<int>(r.index) + 1;
    out.guarantee = guarantee;
  }
  return out;
}

ReferenceResult reference_certify(const Vector& x, const ModelSpec& model, const NoiseModel& nm,
                                  const SmoothingConfig& cfg, PrelimMode mode,
                                  const NoiseDraws& draws, double xi) {
  cfg.validate();
  const Eigen::Index c = model.class_count;
  ReferenceResult res;
  if (mode == PrelimMode::Soft) {
    Vector sum = Vector::Zero(c);
    for (const auto& eps : draws.prelim) sum += plaintext_forward(x + eps, model);
    res.k = argmax_index(sum / static_cast<double>(draws.prelim.size()));
  } else {
    Vector votes = Vector::Zero(c);
    for (const auto& eps : draws.prelim) votes[argmax_index(plaintext_forward(x + eps, model))] += 1.0;
    res.k = argmax_index(votes);
  }
  res.counts = Eigen::VectorXi::Zero(c);
  for (const auto& eps : draws.main) ++res.counts[argmax_index(plaintext_forward(x + eps, model))];
  res.target = binomial_target(cfg.n, cfg.tau, cfg.alpha);
  res.outcome.xi = xi;
  if (res.counts[res.k] - res.target + 1 > 0) {
    res.outcome.certified = true;
    res.outcome.cls = static_cast<int>(res.k) + 1;
    res.outcome.guarantee = guarantee_for(nm, cfg.tau, cfg.zeta);
  }
  return res;
}

}  // namespace rsfhe
