#include "rsfhe/argmax.hpp"

#include "rsfhe/errors.hpp"

#include <cmath>
#include <string>

namespace rsfhe {

void ArgmaxParams::validate(std::size_t slot_count) const {
  if (d_q1 < 0 || d_p1 < 0 || d_q2 < 0 || d_p2 < 0)
    throw ValidationError("argmax degrees must be >= 0");
  if (classes < 2) throw ValidationError("argmax needs at least 2 classes");
  if (block_stride < 2 * static_cast<std::size_t>(classes))
    throw LayoutError("block stride " + std::to_string(block_stride) + " is below 2c = " +
                      std::to_string(2 * classes));
  if (blocks * block_stride > slot_count)
    throw LayoutError(std::to_string(blocks) + " blocks of stride " +
                      std::to_string(block_stride) + " exceed " + std::to_string(slot_count) +
                      " slots");
}

void LogitConditions::validate() const {
  if (!(z_min < z_max)) throw ValidationError("range condition needs z_min < z_max");
  if (!(gap > 0.0 && gap < z_max - z_min))
    throw ValidationError("difference condition needs 0 < D < z_max - z_min");
  if (!(zeta >= 0.0 && zeta < 1.0)) throw ValidationError("zeta must lie in [0, 1)");
}

Ciphertext ExactSignStage::apply(const Engine& engine, const Ciphertext& ct, double a,
                                 double b) const {
  if (ct.level() < depth_) throw DepthExhausted("exact sign stage exceeds depth budget");
  (void)engine;
  const Vector out =
      ct.slots().unaryExpr([a, b](double x) { return a * ((x > 0) - (x < 0)) + b; });
  return Ciphertext(out, ct.level() - depth_, ct.scale());
}

int argmax_depth(const ArgmaxParams& ap, const SignFamily& family) {
  return SignParams(ap.d_q1, ap.d_p1, family).depth() +
         SignParams(ap.d_q2, ap.d_p2, family).depth() + 1;
}

namespace {

// Per-block plaintext: `in_block` on the first c slots of every block,
// `outside` everywhere else.
Plaintext block_mask(const Engine& engine, const ArgmaxParams& ap, double in_block,
                     double outside = 0.0) {
  Vector m = Vector::Constant(static_cast<Eigen::Index>(engine.slot_count()), outside);
  for (std::size_t b = 0; b < ap.blocks; ++b)
    m.segment(static_cast<Eigen::Index>(b * ap.block_stride), ap.classes).setConstant(in_block);
  return Plaintext(std::move(m));
}

// Sum over offsets 1..c-1 of a*sgn(z_i - z_{(i+offset) mod c}) + b.
Ciphertext accumulate_signs(const Engine& engine, const Ciphertext& ct, const ArgmaxParams& ap,
                            const SignStage& stage, double a, double b) {
  const Ciphertext z = engine.add(ct, engine.rot_right(ct, ap.classes));
  Ciphertext z_rot = z;
  Ciphertext scores;
  for (int offset = 1; offset < ap.classes; ++offset) {
    z_rot = engine.rot_left(z_rot, 1);
    const Ciphertext diff = engine.sub(z, z_rot);
    const Ciphertext signs = stage.is_identity() ? diff : stage.apply(engine, diff, a, b);
    scores = offset == 1 ? signs : engine.add(scores, signs);
  }
  return scores;
}

}  // namespace

Ciphertext scores_of(const Engine& engine, const Ciphertext& ct, const ArgmaxParams& ap,
                     const SignStage& first) {
  ap.validate(engine.slot_count());
  return accumulate_signs(engine, ct, ap, first, 1.0, 0.0);
}

Ciphertext scores_of(const Engine& engine, const Ciphertext& ct, const ArgmaxParams& ap,
                     const SignFamily& family) {
  return scores_of(engine, ct, ap, PolynomialSignStage(SignParams(ap.d_q1, ap.d_p1, family)));
}

Ciphertext argmax_he(const Engine& engine, const Ciphertext& ct, const ArgmaxParams& ap,
                     const SignFamily& family) {
  return argmax_he(engine, ct, ap, PolynomialSignStage(SignParams(ap.d_q1, ap.d_p1, family)),
                   PolynomialSignStage(SignParams(ap.d_q2, ap.d_p2, family)));
}

Ciphertext argmax_he(const Engine& engine, const Ciphertext& ct, const ArgmaxParams& ap,
                     const SignStage& first, const SignStage& second) {
  ap.validate(engine.slot_count());
  const double c = ap.classes;
  // scores * 1/(2c-2) - (c-2)/(2c-2), spread evenly over the c-1 sign terms.
  const double a1 = 1.0 / (2.0 * c - 2.0);
  const double b1 = -(c - 2.0) / ((2.0 * c - 2.0) * (c - 1.0));

  Ciphertext scores = accumulate_signs(engine, ct, ap, first, a1, b1);
  double pending_a = 1.0;
  double pending_b = 0.0;
  if (first.is_identity()) {
    pending_a = a1;
    pending_b = (c - 1.0) * b1;
  }

  if (second.is_identity()) {
    scores = engine.mul_plain(scores, block_mask(engine, ap, 0.5 * pending_a));
    return engine.add_plain(scores, block_mask(engine, ap, 0.5 * pending_b + 0.5, 0.5));
  }
  scores = engine.mul_plain(scores, block_mask(engine, ap, pending_a));
  if (pending_b != 0.0) scores = engine.add_plain(scores, block_mask(engine, ap, pending_b));
  return second.apply(engine, scores, 0.5, 0.5);
}

Eigen::Index argmax_index(const Vector& logits) {
  if (logits.size() == 0) throw DimensionError("argmax of an empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

Vector exact_argmax(const Vector& logits) {
  if (logits.size() < 2) throw ValidationError("argmax needs at least 2 classes");
  Vector out = Vector::Zero(logits.size());
  out[argmax_index(logits)] = 1.0;
  return out;
}

Vector pack_blocks(const std::vector<Vector>& logits, std::size_t stride, std::size_t slot_count) {
  if (logits.size() * stride > slot_count)
    throw LayoutError(std::to_string(logits.size()) + " blocks of stride " +
                      std::to_string(stride) + " exceed " + std::to_string(slot_count) + " slots");
  Vector out = Vector::Zero(static_cast<Eigen::Index>(slot_count));
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (static_cast<std::size_t>(logits[i].size()) > stride)
      throw LayoutError("block content wider than its stride");
    out.segment(static_cast<Eigen::Index>(i * stride), logits[i].size()) = logits[i];
  }
  return out;
}

std::vector<Vector> unpack_blocks(const Vector& slots, std::size_t width, std::size_t stride,
                                  std::size_t blocks) {
  if (blocks * stride > static_cast<std::size_t>(slots.size()) || width > stride)
    throw LayoutError("unpack layout exceeds the slot vector");
  std::vector<Vector> out;
  out.reserve(blocks);
  for (std::size_t i = 0; i < blocks; ++i)
    out.emplace_back(slots.segment(static_cast<Eigen::Index>(i * stride),
                                   static_cast<Eigen::Index>(width)));
  return out;
}

Vector round_slots(const Vector& v) {
  return v.unaryExpr([](double x) { return std::round(x); });
}

}  // namespace rsfhe
