#include "rsfhe/network.hpp"

#include "rsfhe/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rsfhe {

namespace {

const LinearLayer* as_linear(const LayerSpec& layer) { return std::get_if<LinearLayer>(&layer); }

std::string dims(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

}  // namespace

void ModelSpec::validate() const {
  if (input_dim < 1) throw ValidationError("model input_dim must be >= 1");
  if (class_count < 2) throw ValidationError("model class_count must be >= 2");
  if (layers.empty()) throw ValidationError("model has no layers");
  if (!as_linear(layers.front()) || !as_linear(layers.back()))
    throw ValidationError("first and last layers must be linear");
  Eigen::Index width = input_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (const auto* lin = as_linear(layers[l])) {
      if (lin->weight.cols() != width)
        throw DimensionError("layer " + std::to_string(l) + ": weight is " +
                             dims(lin->weight.rows(), lin->weight.cols()) + " but input width is " +
                             std::to_string(width));
      if (lin->bias.size() != lin->weight.rows())
        throw DimensionError("layer " + std::to_string(l) + ": bias length " +
                             std::to_string(lin->bias.size()) + " != " +
                             std::to_string(lin->weight.rows()));
      if (lin->weight.rows() < 1) throw DimensionError("layer " + std::to_string(l) + " is empty");
      if (!lin->weight.allFinite() || !lin->bias.allFinite())
        throw ValidationError("layer " + std::to_string(l) + " has non-finite parameters");
      width = lin->weight.rows();
    } else {
      const auto& act = std::get<SquareActivation>(layers[l]);
      if (!std::isfinite(act.c1) || !std::isfinite(act.c2))
        throw ValidationError("layer " + std::to_string(l) + " has non-finite coefficients");
    }
  }
  if (width != class_count)
    throw DimensionError("last layer outputs " + std::to_string(width) + " values, class_count is " +
                         std::to_string(class_count));
  if (normalization && !(normalization->z_min < normalization->z_max))
    throw ValidationError("normalization record needs z_min < z_max");
  if (prelim_scale && !(*prelim_scale > 0.0)) throw ValidationError("prelim_scale must be positive");
}

int ModelSpec::linear_count() const {
  return static_cast<int>(std::count_if(layers.begin(), layers.end(),
                                        [](const LayerSpec& l) { return as_linear(l) != nullptr; }));
}

int ModelSpec::activation_count() const {
  return static_cast<int>(layers.size()) - linear_count();
}

int ModelSpec::inference_depth() const { return 2 * (linear_count() + activation_count()) - 1; }

BatchLayout BatchLayout::make(std::size_t input_dim, std::size_t classes, std::size_t slot_count) {
  if (input_dim < 1 || classes < 1) throw LayoutError("layout needs d >= 1 and c >= 1");
  const std::size_t block = 2 * input_dim;
  if (block > slot_count || slot_count % block != 0)
    throw LayoutError("block size 2d = " + std::to_string(block) + " does not divide M = " +
                      std::to_string(slot_count));
  BatchLayout out{input_dim, classes, block, slot_count / block, 2 * classes, slot_count};
  if (out.batch * out.logit_stride > slot_count)
    throw LayoutError("B * 2c = " + std::to_string(out.batch * out.logit_stride) + " exceeds M = " +
                      std::to_string(slot_count));
  return out;
}

std::size_t replicas_needed(std::size_t n_in, std::size_t n_out) {
  return std::max<std::size_t>(2, (n_in + n_out - 1 + n_in - 1) / n_in);
}

BatchLayout BatchLayout::for_model(const ModelSpec& model, std::size_t slot_count) {
  model.validate();
  const BatchLayout layout = make(static_cast<std::size_t>(model.input_dim),
                                  static_cast<std::size_t>(model.class_count), slot_count);
  std::size_t copies = 2;
  bool first = true;
  for (const auto& layer : model.layers) {
    const auto* lin = as_linear(layer);
    if (!lin) continue;
    const auto n_in = static_cast<std::size_t>(lin->weight.cols());
    const auto n_out = static_cast<std::size_t>(lin->weight.rows());
    const std::size_t need = replicas_needed(n_in, n_out);
    if (!first) copies = need;
    if (need > copies || copies * n_in > layout.block)
      throw LayoutError("layer " + dims(lin->weight.rows(), lin->weight.cols()) +
                        " does not fit a block of " + std::to_string(layout.block) + " slots");
    if (n_out > layout.block) throw LayoutError("layer output wider than a block");
    first = false;
  }
  return layout;
}

Ciphertext duplicate_input(const Engine& engine, const Ciphertext& ct, std::size_t d) {
  return engine.add(ct, engine.rot_right(ct, static_cast<long>(d)));
}

Vector pack_batch_slots(const std::vector<Vector>& inputs, const BatchLayout& layout) {
  if (inputs.size() > layout.batch)
    throw LayoutError(std::to_string(inputs.size()) + " inputs exceed the batch size " +
                      std::to_string(layout.batch));
  Vector slots = Vector::Zero(idx(layout.slot_count));
  const auto d = idx(layout.input_dim);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != d)
      throw DimensionError("input " + std::to_string(i) + " has " +
                           std::to_string(inputs[i].size()) + " entries, expected " +
                           std::to_string(d));
    slots.segment(idx(i * layout.block), d) = inputs[i];
    slots.segment(idx(i * layout.block) + d, d) = inputs[i];
  }
  return slots;
}

Ciphertext pack_batch(const Engine& engine, const std::vector<Vector>& inputs,
                      const BatchLayout& layout) {
  return engine.encrypt(pack_batch_slots(inputs, layout));
}

std::vector<Vector> unpack_batch(const Vector& slots, const BatchLayout& layout, std::size_t count) {
  if (count > layout.batch) throw LayoutError("unpack count exceeds the batch size");
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    out.emplace_back(slots.segment(idx(i * layout.block), idx(layout.input_dim)));
  return out;
}

namespace {

// `pattern` repeated at the start of every block, zero elsewhere.
Plaintext per_block(const Vector& pattern, const BatchLayout& layout) {
  Vector slots = Vector::Zero(idx(layout.slot_count));
  for (std::size_t b = 0; b < layout.batch; ++b)
    slots.segment(idx(b * layout.block), pattern.size()) = pattern;
  return Plaintext(std::move(slots));
}

}  // namespace

Ciphertext mvp_hybrid(const Engine& engine, const Ciphertext& ct, const Matrix& weight,
                      const Vector& bias, const BatchLayout& layout, bool final_layer,
                      std::size_t replicas) {
  const Eigen::Index n_in = weight.cols();
  const Eigen::Index n_out = weight.rows();
  if (bias.size() != n_out) throw DimensionError("bias length does not match weight rows");
  if (static_cast<std::size_t>(n_in) * replicas_needed(static_cast<std::size_t>(n_in),
                                                       static_cast<std::size_t>(n_out)) >
      layout.block)
    throw LayoutError("weight " + dims(n_out, n_in) + " does not fit a block of " +
                      std::to_string(layout.block));

  const bool hybrid = n_out <= n_in && n_in % n_out == 0;
  const Eigen::Index diagonals = hybrid ? n_out : n_in;
  const Eigen::Index span = hybrid ? n_in : n_out;
  Ciphertext acc;
  for (Eigen::Index i = 0; i < diagonals; ++i) {
    Vector diag(span);
    for (Eigen::Index j = 0; j < span; ++j)
      diag[j] = hybrid ? weight((j % n_out), (j + i) % n_in) : weight(j, (j + i) % n_in);
    const Ciphertext rotated = i == 0 ? ct : engine.rot_left(ct, static_cast<long>(i));
    const Ciphertext term = engine.mul_plain(rotated, per_block(diag, layout));
    acc = i == 0 ? term : engine.add(acc, term);
  }
  if (hybrid) {
    const Ciphertext partial = acc;
    for (Eigen::Index t = 1; t < n_in / n_out; ++t)
      acc = engine.add(acc, engine.rot_left(partial, static_cast<long>(t * n_out)));
  }
  acc = engine.add_plain(acc, per_block(bias, layout));
  if (final_layer) return acc;

  if (replicas * static_cast<std::size_t>(n_out) > layout.block)
    throw LayoutError(std::to_string(replicas) + " copies of width " + std::to_string(n_out) +
                      " exceed a block of " + std::to_string(layout.block));
  const Ciphertext masked = engine.mul_plain(acc, per_block(Vector::Ones(n_out), layout));
  Ciphertext out = masked;
  for (std::size_t r = 1; r < replicas; ++r)
    out = engine.add(out, engine.rot_right(masked, static_cast<long>(r) * n_out));
  return out;
}

Ciphertext square_activation(const Engine& engine, const Ciphertext& ct, double c1, double c2) {
  const Ciphertext inner = engine.add_plain(engine.mul_plain(ct, engine.constant(c2)),
                                            engine.constant(c1));
  return engine.mul(ct, inner);
}

Ciphertext infer_batch(const Engine& engine, const Ciphertext& ct, const ModelSpec& model,
                       const BatchLayout& layout) {
  model.validate();
  if (static_cast<std::size_t>(model.input_dim) != layout.input_dim)
    throw LayoutError("layout input dimension does not match the model");
  std::vector<std::size_t> linear_at;
  for (std::size_t l = 0; l < model.layers.size(); ++l)
    if (as_linear(model.layers[l])) linear_at.push_back(l);

  Ciphertext cur = ct;
  for (std::size_t k = 0; k < linear_at.size(); ++k) {
    const auto& lin = std::get<LinearLayer>(model.layers[linear_at[k]]);
    const bool last = k + 1 == linear_at.size();
    std::size_t replicas = 2;
    if (!last) {
      const auto& next = std::get<LinearLayer>(model.layers[linear_at[k + 1]]);
      replicas = replicas_needed(static_cast<std::size_t>(next.weight.cols()),
                                 static_cast<std::size_t>(next.weight.rows()));
    }
    cur = mvp_hybrid(engine, cur, lin.weight, lin.bias, layout, last, replicas);
    const std::size_t stop = last ? model.layers.size() : linear_at[k + 1];
    for (std::size_t l = linear_at[k] + 1; l < stop; ++l) {
      const auto& act = std::get<SquareActivation>(model.layers[l]);
      cur = square_activation(engine, cur, act.c1, act.c2);
    }
  }
  return cur;
}

namespace {

void check_logit_layout(const std::vector<Ciphertext>& logit_cts, const BatchLayout& layout,
                        std::size_t count) {
  if (count > logit_cts.size() * layout.batch)
    throw LayoutError(std::to_string(count) + " samples exceed " +
                      std::to_string(logit_cts.size()) + " ciphertexts of " +
                      std::to_string(layout.batch) + " blocks");
  if (count == 0) throw LayoutError("no logit blocks to reduce");
}

}  // namespace

Ciphertext reduce_logits(const Engine& engine, const std::vector<Ciphertext>& logit_cts,
                         const BatchLayout& layout, std::size_t count) {
  check_logit_layout(logit_cts, layout, count);
  if (count * layout.logit_stride > layout.slot_count)
    throw LayoutError(std::to_string(count) + " logit blocks of stride " +
                      std::to_string(layout.logit_stride) + " exceed " +
                      std::to_string(layout.slot_count) + " slots");
  Ciphertext out;
  bool empty = true;
  for (std::size_t t = 0; t < logit_cts.size(); ++t) {
    for (std::size_t i = 0; i < layout.batch; ++i) {
      const std::size_t g = t * layout.batch + i;
      if (g >= count) break;
      Vector mask = Vector::Zero(idx(layout.slot_count));
      mask.segment(idx(i * layout.block), idx(layout.classes)).setOnes();
      Ciphertext part = engine.mul_plain(logit_cts[t], Plaintext(std::move(mask)));
      const long shift = static_cast<long>(i * layout.block) - static_cast<long>(g * layout.logit_stride);
      if (shift > 0) part = engine.rot_left(part, shift);
      if (shift < 0) part = engine.rot_right(part, -shift);
      out = empty ? part : engine.add(out, part);
      empty = false;
    }
  }
  return out;
}

Ciphertext rotate_and_sum(const Engine& engine, const Ciphertext& ct, std::size_t count,
                          std::size_t stride) {
  if (count == 0) throw LayoutError("rotate_and_sum over zero blocks");
  if (count * stride > ct.size())
    throw LayoutError("rotate_and_sum window exceeds the slot vector");
  // window = sum of 2^p consecutive blocks; the set bits of `count` select
  // which windows are added, each shifted past the blocks already covered.
  Ciphertext window = ct;
  Ciphertext out;
  bool empty = true;
  std::size_t covered = 0;
  for (std::size_t width = 1; width <= count; width *= 2) {
    if (count & width) {
      const Ciphertext part =
          covered == 0 ? window : engine.rot_left(window, static_cast<long>(covered * stride));
      out = empty ? part : engine.add(out, part);
      empty = false;
      covered += width;
    }
    if (width * 2 <= count)
      window = engine.add(window, engine.rot_left(window, static_cast<long>(width * stride)));
  }
  return out;
}

Ciphertext sum_logits(const Engine& engine, const std::vector<Ciphertext>& logit_cts,
                      const BatchLayout& layout, std::size_t count) {
  check_logit_layout(logit_cts, layout, count);
  Ciphertext total;
  for (std::size_t t = 0; t * layout.batch < count; ++t) {
    const std::size_t used = std::min(layout.batch, count - t * layout.batch);
    const Ciphertext part = rotate_and_sum(engine, logit_cts[t], used, layout.block);
    total = t == 0 ? part : engine.add(total, part);
  }
  Vector mask = Vector::Zero(idx(layout.slot_count));
  mask.head(idx(layout.classes)).setOnes();
  return engine.mul_plain(total, Plaintext(std::move(mask)));
}

namespace {

// Activations entering every layer plus the final output.
std::vector<Vector> forward_trace(const Vector& x, const ModelSpec& model) {
  if (x.size() != model.input_dim)
    throw DimensionError("input has " + std::to_string(x.size()) + " entries, model expects " +
                         std::to_string(model.input_dim));
  std::vector<Vector> trace{x};
  trace.reserve(model.layers.size() + 1);
  for (const auto& layer : model.layers) {
    const Vector& h = trace.back();
    if (const auto* lin = as_linear(layer)) {
      if (lin->weight.cols() != h.size()) throw DimensionError("layer width mismatch");
      trace.push_back(lin->weight * h + lin->bias);
    } else {
      const auto& act = std::get<SquareActivation>(layer);
      trace.push_back((act.c2 * h.array().square() + act.c1 * h.array()).matrix());
    }
  }
  return trace;
}

}  // namespace

Vector plaintext_forward(const Vector& x, const ModelSpec& model) {
  return forward_trace(x, model).back();
}

double Objective::value(const Vector& logits) const {
  switch (kind) {
    case ObjectiveKind::MaximizeSlot: return logits[slot];
    case ObjectiveKind::MinimizeSlot: return -logits[slot];
    case ObjectiveKind::RangeWidth: return logits.maxCoeff() - logits.minCoeff();
  }
  return 0.0;
}

Vector plaintext_input_grad(const Vector& x, const ModelSpec& model, const Objective& objective) {
  const std::vector<Vector> trace = forward_trace(x, model);
  const Vector& z = trace.back();
  Vector grad = Vector::Zero(z.size());
  switch (objective.kind) {
    case ObjectiveKind::MaximizeSlot:
    case ObjectiveKind::MinimizeSlot:
      if (objective.slot < 0 || objective.slot >= z.size())
        throw DimensionError("objective slot out of range");
      grad[objective.slot] = objective.kind == ObjectiveKind::MaximizeSlot ? 1.0 : -1.0;
      break;
    case ObjectiveKind::RangeWidth: {
      Eigen::Index hi = 0;
      Eigen::Index lo = 0;
      z.maxCoeff(&hi);
      z.minCoeff(&lo);
      grad[hi] += 1.0;
      grad[lo] -= 1.0;
      break;
    }
  }
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    if (const auto* lin = as_linear(model.layers[l])) {
      grad = lin->weight.transpose() * grad;
    } else {
      const auto& act = std::get<SquareActivation>(model.layers[l]);
      grad = ((2.0 * act.c2 * trace[l].array() + act.c1) * grad.array()).matrix();
    }
  }
  return grad;
}

ModelSpec apply_normalization(const ModelSpec& model, double z_min, double z_max,
                              std::optional<double> prelim_scale) {
  if (model.normalization) throw AlreadyNormalized("model already carries a normalization record");
  if (!(z_min < z_max)) throw ValidationError("normalization needs z_min < z_max");
  model.validate();
  ModelSpec out = model;
  auto& last = std::get<LinearLayer>(out.layers.back());
  const double inv = 1.0 / (z_max - z_min);
  last.weight *= inv;
  last.bias = ((last.bias.array() - z_min) * inv).matrix();
  out.normalization = Normalization{z_min, z_max};
  if (prelim_scale) out = with_prelim_scale(out, *prelim_scale);
  return out;
}

ModelSpec with_prelim_scale(const ModelSpec& model, double scale) {
  if (!(scale > 0.0)) throw ValidationError("prelim_scale must be positive");
  if (model.prelim_scale) throw ValidationError("model already carries a prelim_scale");
  ModelSpec out = model;
  auto* last = std::get_if<LinearLayer>(&out.layers.back());
  if (!last) throw ValidationError("last layer must be linear");
  last->weight *= scale;
  last->bias *= scale;
  out.prelim_scale = scale;
  return out;
}

}  // namespace rsfhe
