#pragma once

// Plaintext-faithful simulator of a leveled SIMD homomorphic scheme.
//
// Slots are exact doubles; the only cryptographic state that is modelled is
// the remaining multiplicative level of every ciphertext. All operations are
// counted in a CostLedger so that circuits can be costed after the fact.

#include <Eigen/Core>

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <string_view>

namespace rsfhe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class OpKind : std::size_t {
  Add,
  AddPlain,
  Sub,
  SubPlain,
  Mul,
  MulPlain,
  RotLeft,
  RotRight,
};

inline constexpr std::size_t kOpKindCount = 8;

std::string_view op_name(OpKind op);

struct EngineParams {
  std::size_t slot_count = 4096;
  int depth_budget = 64;
  double initial_scale = 1125899906842624.0;  // 2^50
  // Standard deviation of the additive Gaussian perturbation applied to the
  // output of every operation; unset means exact arithmetic.
  std::optional<double> noise_std;
  std::uint64_t seed = 0;

  /// Throws ValidationError unless M is a power of two >= 2 and L >= 1.
  void validate() const;
};

class Plaintext {
 public:
  Plaintext() = default;
  explicit Plaintext(Vector slots) : slots_(std::move(slots)) {}

  const Vector& slots() const { return slots_; }
  std::size_t size() const { return static_cast<std::size_t>(slots_.size()); }

 private:
  Vector slots_;
};

/// Immutable after construction; safe to share across threads.
class Ciphertext {
 public:
  Ciphertext() = default;
  Ciphertext(Vector slots, int level, double scale)
      : slots_(std::move(slots)), level_(level), scale_(scale) {}

  const Vector& slots() const { return slots_; }
  int level() const { return level_; }
  double scale() const { return scale_; }
  std::size_t size() const { return static_cast<std::size_t>(slots_.size()); }

 private:
  Vector slots_;
  int level_ = 0;
  double scale_ = 1.0;
};

/// Per-operation counters with relative weights. Increments are atomic so a
/// single ledger can be shared by concurrent circuit evaluations.
class CostLedger {
 public:
  using Counts = std::array<std::uint64_t, kOpKindCount>;
  using Weights = std::array<double, kOpKindCount>;

  CostLedger() : CostLedger(default_weights()) {}
  explicit CostLedger(const Weights& weights);

  /// add_plain = 1.0 and mul = 4.73 anchor the scale; see docs/cost_model.md.
  static Weights default_weights();

  void record(OpKind op, std::uint64_t times = 1) {
    counters_[static_cast<std::size_t>(op)].fetch_add(times, std::memory_order_relaxed);
  }
  std::uint64_t count(OpKind op) const {
    return counters_[static_cast<std::size_t>(op)].load(std::memory_order_relaxed);
  }
  Counts snapshot() const;
  const Weights& weights() const { return weights_; }
  double weighted_total() const { return weighted(snapshot(), weights_); }

  static double weighted(const Counts& counts, const Weights& weights);

 private:
  std::array<std::atomic<std::uint64_t>, kOpKindCount> counters_{};
  Weights weights_;
};

CostLedger::Counts operator-(const CostLedger::Counts& a, const CostLedger::Counts& b);
CostLedger::Counts operator+(const CostLedger::Counts& a, const CostLedger::Counts& b);

class Engine {
 public:
  explicit Engine(EngineParams params);
  Engine(EngineParams params, const CostLedger::Weights& weights);

  const EngineParams& params() const { return params_; }
  std::size_t slot_count() const { return params_.slot_count; }
  int depth_budget() const { return params_.depth_budget; }
  CostLedger& ledger() const { return ledger_; }

  /// Fresh ciphertext at level L.
  Ciphertext encrypt(const Plaintext& p) const;
  Ciphertext encrypt(const Vector& slots) const { return encrypt(Plaintext(slots)); }
  Plaintext decrypt(const Ciphertext& ct) const;

  // Binary operations take the minimum level of their operands.
  Ciphertext add(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext sub(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext add_plain(const Ciphertext& a, const Plaintext& p) const;
  Ciphertext sub_plain(const Ciphertext& a, const Plaintext& p) const;

  /// Consume one level; throws DepthExhausted when an operand is at level 0.
  Ciphertext mul(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext mul_plain(const Ciphertext& a, const Plaintext& p) const;

  /// out[i] = in[(i + k) mod M].
  Ciphertext rot_left(const Ciphertext& ct, long k) const;
  /// out[i] = in[(i - k) mod M].
  Ciphertext rot_right(const Ciphertext& ct, long k) const;

  // Plaintext helpers (free of cost).
  Plaintext constant(double value) const;
  Plaintext zeros() const { return constant(0.0); }
  /// `values` in the first slots, zero elsewhere.
  Plaintext embed(const Vector& values) const;

 private:
  void check_slots(std::size_t n) const;
  Ciphertext finish(Vector slots, int level) const;

  EngineParams params_;
  mutable CostLedger ledger_;
  mutable std::mutex noise_mutex_;
  mutable std::mt19937_64 noise_rng_;
};

}  // namespace rsfhe
