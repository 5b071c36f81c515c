#include "rsfhe/engine.hpp"

#include "rsfhe/errors.hpp"

#include <algorithm>
#include <bit>
#include <string>

namespace rsfhe {

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::Add: return "add";
    case OpKind::AddPlain: return "add_plain";
    case OpKind::Sub: return "sub";
    case OpKind::SubPlain: return "sub_plain";
    case OpKind::Mul: return "mul";
    case OpKind::MulPlain: return "mul_plain";
    case OpKind::RotLeft: return "rot_left";
    case OpKind::RotRight: return "rot_right";
  }
  return "unknown";
}

void EngineParams::validate() const {
  if (slot_count < 2 || !std::has_single_bit(slot_count))
    throw ValidationError("slot count must be a power of two >= 2, got " +
                          std::to_string(slot_count));
  if (depth_budget < 1)
    throw ValidationError("depth budget must be >= 1, got " + std::to_string(depth_budget));
  if (!(initial_scale > 0.0)) throw ValidationError("initial scale must be positive");
  if (noise_std && !(*noise_std >= 0.0))
    throw ValidationError("noise standard deviation must be >= 0");
}

CostLedger::CostLedger(const Weights& weights) : weights_(weights) {
  for (double w : weights_)
    if (!(w > 0.0)) throw ValidationError("cost weights must be positive");
}

CostLedger::Weights CostLedger::default_weights() {
  Weights w{};
  w[static_cast<std::size_t>(OpKind::Add)] = 1.1;
  w[static_cast<std::size_t>(OpKind::AddPlain)] = 1.0;
  w[static_cast<std::size_t>(OpKind::Sub)] = 1.1;
  w[static_cast<std::size_t>(OpKind::SubPlain)] = 1.0;
  w[static_cast<std::size_t>(OpKind::Mul)] = 4.73;
  w[static_cast<std::size_t>(OpKind::MulPlain)] = 1.9;
  w[static_cast<std::size_t>(OpKind::RotLeft)] = 4.1;
  w[static_cast<std::size_t>(OpKind::RotRight)] = 4.1;
  return w;
}

CostLedger::Counts CostLedger::snapshot() const {
  Counts out{};
  for (std::size_t i = 0; i < kOpKindCount; ++i)
    out[i] = counters_[i].load(std::memory_order_relaxed);
  return out;
}

double CostLedger::weighted(const Counts& counts, const Weights& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < kOpKindCount; ++i)
    total += static_cast<double>(counts[i]) * weights[i];
  return total;
}

CostLedger::Counts operator-(const CostLedger::Counts& a, const CostLedger::Counts& b) {
  CostLedger::Counts out{};
  for (std::size_t i = 0; i < kOpKindCount; ++i) out[i] = a[i] - b[i];
  return out;
}

CostLedger::Counts operator+(const CostLedger::Counts& a, const CostLedger::Counts& b) {
  CostLedger::Counts out{};
  for (std::size_t i = 0; i < kOpKindCount; ++i) out[i] = a[i] + b[i];
  return out;
}

Engine::Engine(EngineParams params) : Engine(params, CostLedger::default_weights()) {}

Engine::Engine(EngineParams params, const CostLedger::Weights& weights)
    : params_(std::move(params)), ledger_(weights), noise_rng_(params_.seed) {
  params_.validate();
}

void Engine::check_slots(std::size_t n) const {
  if (n != params_.slot_count)
    throw DimensionError("operand has " + std::to_string(n) + " slots, engine expects " +
                         std::to_string(params_.slot_count));
}

Ciphertext Engine::finish(Vector slots, int level) const {
  if (params_.noise_std && *params_.noise_std > 0.0) {
    std::normal_distribution<double> gauss(0.0, *params_.noise_std);
    std::lock_guard lock(noise_mutex_);
    for (Eigen::Index i = 0; i < slots.size(); ++i) slots[i] += gauss(noise_rng_);
  }
  return Ciphertext(std::move(slots), level, params_.initial_scale);
}

Ciphertext Engine::encrypt(const Plaintext& p) const {
  check_slots(p.size());
  return finish(p.slots(), params_.depth_budget);
}

Plaintext Engine::decrypt(const Ciphertext& ct) const { return Plaintext(ct.slots()); }

Ciphertext Engine::add(const Ciphertext& a, const Ciphertext& b) const {
  check_slots(a.size());
  check_slots(b.size());
  ledger_.record(OpKind::Add);
  return finish(a.slots() + b.slots(), std::min(a.level(), b.level()));
}

Ciphertext Engine::sub(const Ciphertext& a, const Ciphertext& b) const {
  check_slots(a.size());
  check_slots(b.size());
  ledger_.record(OpKind::Sub);
  return finish(a.slots() - b.slots(), std::min(a.level(), b.level()));
}

Ciphertext Engine::add_plain(const Ciphertext& a, const Plaintext& p) const {
  check_slots(a.size());
  check_slots(p.size());
  ledger_.record(OpKind::AddPlain);
  return finish(a.slots() + p.slots(), a.level());
}

Ciphertext Engine::sub_plain(const Ciphertext& a, const Plaintext& p) const {
  check_slots(a.size());
  check_slots(p.size());
  ledger_.record(OpKind::SubPlain);
  return finish(a.slots() - p.slots(), a.level());
}

Ciphertext Engine::mul(const Ciphertext& a, const Ciphertext& b) const {
  check_slots(a.size());
  check_slots(b.size());
  const int level = std::min(a.level(), b.level());
  if (level < 1) throw DepthExhausted("mul on a level-0 ciphertext: circuit exceeds depth budget");
  ledger_.record(OpKind::Mul);
  return finish(a.slots().cwiseProduct(b.slots()), level - 1);
}

Ciphertext Engine::mul_plain(const Ciphertext& a, const Plaintext& p) const {
  check_slots(a.size());
  check_slots(p.size());
  if (a.level() < 1)
    throw DepthExhausted("mul_plain on a level-0 ciphertext: circuit exceeds depth budget");
  ledger_.record(OpKind::MulPlain);
  return finish(a.slots().cwiseProduct(p.slots()), a.level() - 1);
}

namespace {

Vector rotate_left(const Vector& in, long k) {
  const long m = static_cast<long>(in.size());
  const long s = ((k % m) + m) % m;
  if (s == 0) return in;
  Vector out(m);
  out.head(m - s) = in.tail(m - s);
  out.tail(s) = in.head(s);
  return out;
}

}  // namespace

Ciphertext Engine::rot_left(const Ciphertext& ct, long k) const {
  check_slots(ct.size());
  ledger_.record(OpKind::RotLeft);
  return finish(rotate_left(ct.slots(), k), ct.level());
}

Ciphertext Engine::rot_right(const Ciphertext& ct, long k) const {
  check_slots(ct.size());
  ledger_.record(OpKind::RotRight);
  return finish(rotate_left(ct.slots(), -k), ct.level());
}

Plaintext Engine::constant(double value) const {
  return Plaintext(Vector::Constant(static_cast<Eigen::Index>(params_.slot_count), value));
}

Plaintext Engine::embed(const Vector& values) const {
  if (static_cast<std::size_t>(values.size()) > params_.slot_count)
    throw LayoutError("cannot embed " + std::to_string(values.size()) + " values into " +
                      std::to_string(params_.slot_count) + " slots");
  Vector slots = Vector::Zero(static_cast<Eigen::Index>(params_.slot_count));
  slots.head(values.size()) = values;
  return Plaintext(std::move(slots));
}

}  // namespace rsfhe
