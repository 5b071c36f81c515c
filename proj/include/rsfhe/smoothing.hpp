#pragma once

// Randomized-smoothing certification on the engine, its client-side
// interpretation, and a cleartext reference certifier.

#include "rsfhe/argmax.hpp"
#include "rsfhe/engine.hpp"
#include "rsfhe/network.hpp"

#include <cstdint>
#include <random>
#include <variant>
#include <vector>

namespace rsfhe {

struct GaussianNoise {
  double sigma = 0.5;
};
struct UniformNoise {
  double eta = 1.0;
};
/// Covariance diag(theta^2), rescaled so its trace is kappa * d.
struct MahalanobisNoise {
  Vector theta;
  double kappa = 0.5;
};
using NoiseModel = std::variant<GaussianNoise, UniformNoise, MahalanobisNoise>;

/// Throws ValidationError on non-positive parameters or a theta of the wrong size.
void validate_noise(const NoiseModel& nm, std::size_t d);
/// Per-coordinate variances of the rescaled Mahalanobis covariance.
Vector mahalanobis_variances(const MahalanobisNoise& nm);

std::vector<Vector> sample_noise(const NoiseModel& nm, std::size_t count, std::size_t d,
                                 std::mt19937_64& rng);

/// splitmix64 mix of a root seed with two stream indices.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0);

struct SmoothingConfig {
  std::int64_t n = 128;
  std::int64_t n0 = 32;
  /// Effective threshold; already includes zeta.
  double tau = 0.76;
  double alpha = 0.001;
  double zeta = 0.0;
  /// Upper bound on blocks per ciphertext; 0 uses every block of the layout.
  std::size_t batch = 0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Noise for both passes; one generator per (pass, sample) so that the draws do
/// not depend on batching or thread count.
struct NoiseDraws {
  std::vector<Vector> prelim;
  std::vector<Vector> main;
};
NoiseDraws draw_noise(const NoiseModel& nm, const SmoothingConfig& cfg, std::size_t d);

/// Copies block 0 into blocks 0..count-1 (blocks at `stride`); other blocks must be zero.
Ciphertext replicate_blocks(const Engine& engine, const Ciphertext& ct, std::size_t count,
                            std::size_t stride);

/// ceil(|noise| / B) ciphertexts, block i of batch t holding x + noise[t*B + i]
/// duplicated. Consumes no level.
std::vector<Ciphertext> make_noisy_batches(const Engine& engine, const Ciphertext& x_ct,
                                           const std::vector<Vector>& noise,
                                           const BatchLayout& layout);

/// Sum of `count` packed one-hot blocks of stride 2c into the first c slots.
Ciphertext aggregate_counts(const Engine& engine, const Ciphertext& onehot_ct, std::size_t classes,
                            std::size_t count);

struct TestCiphertexts {
  Ciphertext k_onehot;
  Ciphertext counts;
  Ciphertext ret;
};

/// Given `n` one-hot blocks plus the preliminary one-hot in block n (stride
/// 2c), computes counts, the preliminary class mask and
/// ret = k_onehot * (counts - (target - 1)). Consumes 2 levels.
TestCiphertexts statistical_test(const Engine& engine, const Ciphertext& argmax_out,
                                 std::size_t classes, std::size_t n, std::int64_t target);

struct CostComponents {
  CostLedger::Counts duplication_noise{};
  CostLedger::Counts inference_reduction{};
  CostLedger::Counts argmax{};
  CostLedger::Counts aggregation_test{};
};

struct CertifyMetadata {
  std::int64_t target = 0;
  int start_level = 0;
  int final_level = 0;
  int consumed_depth() const { return start_level - final_level; }
  BatchLayout layout;
  ArgmaxParams argmax;
  CostComponents costs;
};

struct CertifyResult {
  Ciphertext ret;
  /// Intermediate ciphertexts kept for consistency checks.
  Ciphertext argmax_out;
  Ciphertext k_onehot;
  Ciphertext counts;
  CertifyMetadata meta;
};

/// Runs the whole certification circuit on an encrypted input (first d slots).
/// `model` must be normalized; `ap` supplies the four sign degrees, the layout
/// fields are filled in here. Throws DepthExhausted / LayoutError.
CertifyResult certify(const Engine& engine, const Ciphertext& x_ct, const ModelSpec& model,
                      const SmoothingConfig& cfg, const ArgmaxParams& ap, const NoiseDraws& draws,
                      const SignFamily& family = default_sign_family());

enum class GuaranteeKind { L2Radius, L1Radius, Fairness };

struct Guarantee {
  GuaranteeKind kind = GuaranteeKind::L2Radius;
  double radius = 0.0;
  /// Similarity constraint for fairness guarantees.
  Vector theta;
};

struct CertOutcome {
  bool certified = false;
  /// 1-based class index; 0 on abstention.
  int cls = 0;
  Guarantee guarantee;
  double xi = 0.0;
};

/// Radius derived from the noise model at threshold tau - zeta.
Guarantee guarantee_for(const NoiseModel& nm, double tau, double zeta);

struct RetInspection {
  Vector rounded;
  bool valid_1hot = true;
  double z = 0.0;
  /// 0-based index of the nonzero slot, -1 if none.
  Eigen::Index index = -1;
};
RetInspection inspect_ret(const Vector& ret_slots, std::size_t classes);

/// Throws ProtocolViolation if more than one rounded slot is nonzero.
CertOutcome interpret(const Vector& ret_slots, std::size_t classes, const Guarantee& guarantee,
                      double xi);

enum class PrelimMode { Soft, Hard };

struct ReferenceResult {
  CertOutcome outcome;
  Eigen::Index k = 0;
  Eigen::VectorXi counts;
  std::int64_t target = 0;
};

/// Cleartext certification with exact argmax; `model` normalized as for certify.
ReferenceResult reference_certify(const Vector& x, const ModelSpec& model, const NoiseModel& nm,
                                  const SmoothingConfig& cfg, PrelimMode mode,
                                  const NoiseDraws& draws, double xi = 0.0);

}  // namespace rsfhe
