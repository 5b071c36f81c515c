#pragma once

// Fully-connected networks with square activations, evaluated either on the
// engine over SIMD-batched duplicated inputs or in cleartext.

#include "rsfhe/engine.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

namespace rsfhe {

struct LinearLayer {
  Matrix weight;  // n_out x n_in
  Vector bias;    // n_out
};

/// c2 * x^2 + c1 * x, slot-wise.
struct SquareActivation {
  double c1 = 0.0;
  double c2 = 1.0;
};

using LayerSpec = std::variant<LinearLayer, SquareActivation>;

struct Normalization {
  double z_min = 0.0;
  double z_max = 1.0;
};

struct ModelSpec {
  int input_dim = 0;
  int class_count = 0;
  std::vector<LayerSpec> layers;
  std::optional<Normalization> normalization;
  std::optional<double> prelim_scale;

  /// Throws ValidationError / DimensionError on a malformed layer chain.
  void validate() const;
  int linear_count() const;
  int activation_count() const;
  /// 2 (n_lin + n_act) - 1.
  int inference_depth() const;
};

/// Batch layout: B blocks of 2d slots, logits repacked at stride 2c.
struct BatchLayout {
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  std::size_t block = 0;
  std::size_t batch = 0;
  std::size_t logit_stride = 0;
  std::size_t slot_count = 0;

  /// Throws LayoutError unless 2d divides M and B * 2c <= M.
  static BatchLayout make(std::size_t input_dim, std::size_t classes, std::size_t slot_count);
  /// Also checks that every layer of the model fits into a block.
  static BatchLayout for_model(const ModelSpec& model, std::size_t slot_count);
};

/// s + RotR(s, d): two copies of the first d slots.
Ciphertext duplicate_input(const Engine& engine, const Ciphertext& ct, std::size_t d);

/// Cleartext layout of duplicated inputs, one per block; unused blocks zero.
Vector pack_batch_slots(const std::vector<Vector>& inputs, const BatchLayout& layout);
Ciphertext pack_batch(const Engine& engine, const std::vector<Vector>& inputs,
                      const BatchLayout& layout);
std::vector<Vector> unpack_batch(const Vector& slots, const BatchLayout& layout, std::size_t count);

/// Number of copies of an n_in vector the diagonal product for an
/// n_in -> n_out layer reads from.
std::size_t replicas_needed(std::size_t n_in, std::size_t n_out);

/// W s + b per block on replicated inputs (period W.cols()); consumes 1 level.
/// Unless `final_layer`, the result is masked and replicated `replicas` times
/// for the next layer, consuming one more level.
Ciphertext mvp_hybrid(const Engine& engine, const Ciphertext& ct, const Matrix& weight,
                      const Vector& bias, const BatchLayout& layout, bool final_layer = true,
                      std::size_t replicas = 2);

/// x * (c2 * x + c1); consumes 2 levels and keeps zero slots at zero.
Ciphertext square_activation(const Engine& engine, const Ciphertext& ct, double c1, double c2);

/// Batched inference; each block's first c slots hold the logits afterwards.
Ciphertext infer_batch(const Engine& engine, const Ciphertext& ct, const ModelSpec& model,
                       const BatchLayout& layout);

/// Packs the first c slots of the first `count` samples (blocks across the
/// given ciphertexts, in order) contiguously at stride 2c. Consumes 1 level.
Ciphertext reduce_logits(const Engine& engine, const std::vector<Ciphertext>& logit_cts,
                         const BatchLayout& layout, std::size_t count);

/// Sums the first c slots of the first `count` blocks of each ciphertext into
/// block 0 and masks everything else. Consumes 1 level.
Ciphertext sum_logits(const Engine& engine, const std::vector<Ciphertext>& logit_cts,
                      const BatchLayout& layout, std::size_t count);

/// Slot j of block 0 becomes the sum over the first `count` blocks of slot j
/// (blocks at `stride`). Rotations and additions only.
Ciphertext rotate_and_sum(const Engine& engine, const Ciphertext& ct, std::size_t count,
                          std::size_t stride);

Vector plaintext_forward(const Vector& x, const ModelSpec& model);

enum class ObjectiveKind { MaximizeSlot, MinimizeSlot, RangeWidth };

struct Objective {
  ObjectiveKind kind = ObjectiveKind::MaximizeSlot;
  Eigen::Index slot = 0;

  /// Value to be maximized.
  double value(const Vector& logits) const;
};

/// Gradient w.r.t. x of Objective::value(plaintext_forward(x)).
Vector plaintext_input_grad(const Vector& x, const ModelSpec& model, const Objective& objective);

/// Folds (z - z_min) / (z_max - z_min), and optionally a further scale, into
/// the last linear layer. Throws AlreadyNormalized on a normalized model.
ModelSpec apply_normalization(const ModelSpec& model, double z_min, double z_max,
                              std::optional<double> prelim_scale = std::nullopt);

/// Multiplies the last layer by `scale` (soft preliminary counting uses 1/n0).
ModelSpec with_prelim_scale(const ModelSpec& model, double scale);

}  // namespace rsfhe
