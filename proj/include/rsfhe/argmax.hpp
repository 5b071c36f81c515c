#pragma once

// Homomorphic argmax over packed logit blocks.
//
// Every block of `block_stride` slots holds c normalized logits in its first c
// slots and zeros elsewhere. The result holds, per block, values that round to
// the one-hot encoding of the block's argmax in the first c slots.

#include "rsfhe/engine.hpp"
#include "rsfhe/signum.hpp"

#include <vector>

namespace rsfhe {

struct ArgmaxParams {
  int d_q1 = 6;
  int d_p1 = 1;
  int d_q2 = 2;
  int d_p2 = 2;
  int classes = 10;
  std::size_t block_stride = 20;
  std::size_t blocks = 1;

  static ArgmaxParams packed(int d_q1, int d_p1, int d_q2, int d_p2, int classes,
                             std::size_t blocks) {
    return {d_q1, d_p1, d_q2, d_p2, classes, 2 * static_cast<std::size_t>(classes), blocks};
  }

  int degree_sum() const { return d_q1 + d_p1 + d_q2 + d_p2; }
  /// Throws ValidationError / LayoutError.
  void validate(std::size_t slot_count) const;
};

/// Range [z_min, z_max] and minimum pairwise gap D on raw logits; zeta is the
/// tolerated fraction of difference-violating samples.
struct LogitConditions {
  double z_min = 0.0;
  double z_max = 1.0;
  double gap = 0.0;
  double zeta = 0.0;

  void validate() const;
  double width() const { return z_max - z_min; }
  /// Input margin of the first sign stage on normalized logits.
  double phi1() const { return gap / width(); }
};

/// One sign-approximation stage inside argmax; `apply` computes a*sgn(x)+b.
class SignStage {
 public:
  virtual ~SignStage() = default;
  virtual Ciphertext apply(const Engine& engine, const Ciphertext& ct, double a, double b) const = 0;
  virtual int depth() const = 0;
  /// Identity stages are skipped and their affine folded into the mask.
  virtual bool is_identity() const { return false; }
};

class PolynomialSignStage final : public SignStage {
 public:
  explicit PolynomialSignStage(SignParams sp) : sp_(std::move(sp)) {}
  Ciphertext apply(const Engine& engine, const Ciphertext& ct, double a, double b) const override {
    return sgn_he_fused(engine, ct, sp_, a, b);
  }
  int depth() const override { return sp_.depth(); }
  bool is_identity() const override { return sp_.d_q() + sp_.d_p() == 0; }

 private:
  SignParams sp_;
};

/// Exact slot-wise sign that consumes a declared number of levels. Test oracle.
class ExactSignStage final : public SignStage {
 public:
  explicit ExactSignStage(int depth) : depth_(depth) {}
  Ciphertext apply(const Engine& engine, const Ciphertext& ct, double a, double b) const override;
  int depth() const override { return depth_; }

 private:
  int depth_;
};

/// Levels consumed by argmax_he: depth(stage 1) + depth(stage 2) + 1.
int argmax_depth(const ArgmaxParams& ap, const SignFamily& family = default_sign_family());

Ciphertext argmax_he(const Engine& engine, const Ciphertext& ct, const ArgmaxParams& ap,
                     const SignFamily& family = default_sign_family());
Ciphertext argmax_he(const Engine& engine, const Ciphertext& ct, const ArgmaxParams& ap,
                     const SignStage& first, const SignStage& second);

/// Accumulated sign sums before the score affine map; with exact signs each
/// block's first c slots hold 2*rank - c - 1 (rank 1 = smallest).
Ciphertext scores_of(const Engine& engine, const Ciphertext& ct, const ArgmaxParams& ap,
                     const SignStage& first);
Ciphertext scores_of(const Engine& engine, const Ciphertext& ct, const ArgmaxParams& ap,
                     const SignFamily& family = default_sign_family());

/// One-hot of the largest entry; ties go to the lowest index. Requires size >= 2.
Vector exact_argmax(const Vector& logits);
/// Index of the largest entry; ties go to the lowest index.
Eigen::Index argmax_index(const Vector& logits);

/// Places logits[i] at slot i*stride; remaining slots zero.
Vector pack_blocks(const std::vector<Vector>& logits, std::size_t stride, std::size_t slot_count);
/// First `width` slots of each of `blocks` blocks.
std::vector<Vector> unpack_blocks(const Vector& slots, std::size_t width, std::size_t stride,
                                  std::size_t blocks);
/// Rounds each entry to the nearest integer.
Vector round_slots(const Vector& v);

}  // namespace rsfhe
