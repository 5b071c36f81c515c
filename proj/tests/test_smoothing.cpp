#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rsfhe/calibration.hpp"
#include "rsfhe/errors.hpp"
#include "rsfhe/smoothing.hpp"
#include "rsfhe/stats.hpp"
#include "rsfhe/synthetic.hpp"

#include <random>
#include <set>

using namespace rsfhe;

namespace {

Engine make_engine(std::size_t m, int depth) {
  EngineParams p;
  p.slot_count = m;
  p.depth_budget = depth;
  return Engine(p);
}

// Packs one-hot rows (1-based labels) at stride 2c with `prelim` in block n.
Vector onehot_blocks(const std::vector<int>& labels, int prelim, int c, std::size_t m) {
  std::vector<Vector> blocks;
  for (int l : labels) blocks.push_back(Vector::Unit(c, l - 1));
  blocks.push_back(Vector::Unit(c, prelim - 1));
  return pack_blocks(blocks, 2 * static_cast<std::size_t>(c), m);
}

ModelSpec constant_model(int d, int c, int winner) {
  ModelSpec m;
  m.input_dim = d;
  m.class_count = c;
  Vector b = Vector::Zero(c);
  b[winner] = 5.0;
  m.layers.emplace_back(LinearLayer{Matrix::Zero(c, d), b});
  return apply_normalization(m, -1.0, 6.0);
}

}  // namespace

TEST_CASE("noise validation") {
  CHECK_THROWS_AS(validate_noise(GaussianNoise{0.0}, 4), ValidationError);
  CHECK_THROWS_AS(validate_noise(UniformNoise{-1.0}, 4), ValidationError);
  CHECK_THROWS_AS(validate_noise(MahalanobisNoise{Vector::Ones(3), 0.5}, 4), ValidationError);
  CHECK_THROWS_AS(validate_noise(MahalanobisNoise{Vector::Ones(4), 0.0}, 4), ValidationError);
  CHECK_NOTHROW(validate_noise(MahalanobisNoise{Vector::Ones(4), 0.5}, 4));
}

TEST_CASE("uniform noise stays in its box") {
  std::mt19937_64 rng(1);
  for (const auto& v : sample_noise(UniformNoise{1.0}, 2000, 6, rng)) CHECK(v.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("gaussian noise moments") {
  std::mt19937_64 rng(2);
  const auto draws = sample_noise(GaussianNoise{0.5}, 40000, 3, rng);
  Vector mean = Vector::Zero(3), sq = Vector::Zero(3);
  for (const auto& v : draws) {
    mean += v;
    sq += v.cwiseProduct(v);
  }
  mean /= draws.size();
  sq /= draws.size();
  CHECK(mean.cwiseAbs().maxCoeff() < 0.01);
  for (int i = 0; i < 3; ++i) CHECK(sq[i] == doctest::Approx(0.25).epsilon(0.03));
}

TEST_CASE("mahalanobis covariance within five percent") {
  Vector theta(5);
  theta << 0.1, 0.5, 1.0, 2.0, 0.3;
  const MahalanobisNoise nm{theta, 0.5};
  const Vector var = mahalanobis_variances(nm);
  // Trace is kappa * d and the shape follows theta^2.
  CHECK(var.sum() == doctest::Approx(0.5 * 5));
  const Vector shape = theta.cwiseProduct(theta) * (0.5 * 5 / theta.squaredNorm());
  CHECK((var - shape).cwiseAbs().maxCoeff() < 1e-12);
  std::mt19937_64 rng(3);
  const auto draws = sample_noise(nm, 100000, 5, rng);
  Matrix cov = Matrix::Zero(5, 5);
  for (const auto& v : draws) cov += v * v.transpose();
  cov /= draws.size();
  for (int i = 0; i < 5; ++i) {
    CHECK(std::abs(cov(i, i) - var[i]) < 0.05 * var[i]);
    for (int j = 0; j < i; ++j) CHECK(std::abs(cov(i, j)) < 0.05 * std::sqrt(var[i] * var[j]));
  }
}

TEST_CASE("seed derivation and draw determinism") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 4; ++a)
    for (std::uint64_t b = 0; b < 50; ++b) seen.insert(derive_seed(7, a, b));
  CHECK(seen.size() == 200);
  SmoothingConfig cfg;
  cfg.n = 20;
  cfg.n0 = 5;
  cfg.rng_seed = 42;
  const auto a = draw_noise(GaussianNoise{0.5}, cfg, 4);
  cfg.batch = 3;
  const auto b = draw_noise(GaussianNoise{0.5}, cfg, 4);
  REQUIRE(a.main.size() == 20);
  REQUIRE(a.prelim.size() == 5);
  for (std::size_t i = 0; i < 20; ++i) CHECK(a.main[i] == b.main[i]);
  for (std::size_t i = 0; i < 5; ++i) CHECK(a.prelim[i] == b.prelim[i]);
  cfg.rng_seed = 43;
  CHECK(draw_noise(GaussianNoise{0.5}, cfg, 4).main[0] != a.main[0]);
}

TEST_CASE("smoothing config validation") {
  SmoothingConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.tau = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.tau = 0.76;
  cfg.zeta = 0.3;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.zeta = 0.0;
  cfg.n0 = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("noisy batches decrypt to x plus noise, duplicated") {
  const auto layout = BatchLayout::make(4, 2, 64);  // 8 blocks of 8
  Engine e = make_engine(64, 2);
  Vector x(4);
  x << 0.1, 0.2, 0.3, 0.4;
  std::mt19937_64 rng(4);
  const auto noise = sample_noise(GaussianNoise{0.5}, 11, 4, rng);
  const auto cts = make_noisy_batches(e, e.encrypt(e.embed(x)), noise, layout);
  REQUIRE(cts.size() == 2);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    const Vector& s = cts[i / 8].slots();
    const auto off = static_cast<Eigen::Index>((i % 8) * 8);
    const Vector want = x + noise[i];
    CHECK((s.segment(off, 4) - want).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.segment(off + 4, 4) - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Unused blocks of the last batch keep the noiseless copy; nothing reads them.
  CHECK(cts[1].slots().segment(24, 4) == x);
  CHECK(cts[0].level() == 2);

  const std::vector<Vector> zero(3, Vector::Zero(4));
  const auto plain = make_noisy_batches(e, e.encrypt(e.embed(x)), zero, layout);
  const Vector dup = duplicate_input(e, e.encrypt(e.embed(x)), 4).slots();
  for (int b = 0; b < 3; ++b) CHECK(plain[0].slots().segment(b * 8, 8) == dup.head(8));
}

TEST_CASE("count aggregation") {
  Engine e = make_engine(256, 2);
  const Vector blocks = onehot_blocks({2, 2, 1}, 1, 4, 256);
  const Vector counts = aggregate_counts(e, e.encrypt(blocks), 4, 3).slots();
  CHECK(counts.head(4) == Vector((Vector(4) << 1, 2, 0, 0).finished()));
  std::mt19937_64 rng(5);
  std::vector<int> labels;
  Vector want = Vector::Zero(5);
  for (int i = 0; i < 12; ++i) {
    labels.push_back(1 + static_cast<int>(rng() % 5));
    want[labels.back() - 1] += 1;
  }
  const Vector got = aggregate_counts(e, e.encrypt(onehot_blocks(labels, 1, 5, 256)), 5, 12).slots();
  CHECK(got.head(5) == want);
  const Vector single = aggregate_counts(e, e.encrypt(onehot_blocks({3}, 1, 5, 256)), 5, 1).slots();
  CHECK(single.head(5) == Vector::Unit(5, 2));
}

TEST_CASE("statistical test in the worked regime") {
  // 10 votes: nine for class 3, one for class 1; preliminary guess 3; target 6.
  Engine e = make_engine(128, 2);
  std::vector<int> labels(9, 3);
  labels.push_back(1);
  const auto t = statistical_test(e, e.encrypt(onehot_blocks(labels, 3, 4, 128)), 4, 10, 6);
  CHECK(t.ret.level() == 0);
  const Vector r = round_slots(t.ret.slots());
  CHECK(r.head(4) == Vector::Unit(4, 2) * 4.0);
  const auto out = interpret(t.ret.slots(), 4, Guarantee{}, 0.0);
  CHECK(out.certified);
  CHECK(out.cls == 3);

  // Exactly target - 1 votes: Z = 0, abstain.
  std::vector<int> weak(5, 3);
  for (int i = 0; i < 5; ++i) weak.push_back(2);
  const auto t2 = statistical_test(e, e.encrypt(onehot_blocks(weak, 3, 4, 128)), 4, 10, 6);
  CHECK(round_slots(t2.ret.slots()).head(4).isZero());
  CHECK_FALSE(interpret(t2.ret.slots(), 4, Guarantee{}, 0.0).certified);
}

TEST_CASE("client interpretation") {
  Vector ret = Vector::Zero(6);
  ret.head(3) << 0.01, -0.2, 4.1;
  const auto g = guarantee_for(UniformNoise{2.0}, 0.75, 0.0);
  CHECK(g.radius == doctest::Approx(1.0));
  const auto out = interpret(ret, 3, g, 0.01);
  CHECK(out.certified);
  CHECK(out.cls == 3);
  CHECK(out.xi == 0.01);
  CHECK_FALSE(interpret(Vector::Zero(6), 3, g, 0.0).certified);
  ret[0] = 2.0;
  CHECK_THROWS_AS(interpret(ret, 3, g, 0.0), ProtocolViolation);
  CHECK_FALSE(inspect_ret(ret, 3).valid_1hot);
  // Negative Z abstains.
  Vector neg = Vector::Zero(6);
  neg[1] = -3.0;
  CHECK_FALSE(interpret(neg, 3, g, 0.0).certified);
  CHECK(guarantee_for(GaussianNoise{0.5}, 0.76, 0.0).radius == doctest::Approx(l2_radius(0.5, 0.76)));
  CHECK(guarantee_for(GaussianNoise{0.5}, 0.86, 0.1).radius == doctest::Approx(l2_radius(0.5, 0.76)));
}

TEST_CASE("constant model certifies its class with full counts") {
  const ModelSpec model = constant_model(4, 3, 0);
  SmoothingConfig cfg;
  cfg.n = 32;
  cfg.n0 = 8;
  cfg.rng_seed = 3;
  ArgmaxParams ap;
  const int budget = depth_budget(model, ap);
  Engine e = make_engine(256, budget);
  const auto draws = draw_noise(GaussianNoise{0.5}, cfg, 4);
  const auto res = certify(e, e.encrypt(e.embed(Vector::Ones(4))), model, cfg, ap, draws);
  CHECK(res.meta.consumed_depth() == budget);
  CHECK(round_slots(res.counts.slots()).head(3) == Vector::Unit(3, 0) * 32.0);
  const auto out = interpret(res.ret.slots(), 3, Guarantee{}, 0.0);
  CHECK(out.certified);
  CHECK(out.cls == 1);
  const auto ref = reference_certify(Vector::Ones(4), model, GaussianNoise{0.5}, cfg, PrelimMode::Soft, draws);
  CHECK(ref.outcome.certified);
  CHECK(ref.counts[0] == 32);
  CHECK(ref.target == res.meta.target);
}

TEST_CASE("certify internals match the soft reference") {
  SyntheticSpec spec = SyntheticSpec::confident(8, 4, 11);
  spec.samples = 12;
  const auto data = generate_synthetic(spec);
  SmoothingConfig cfg;
  cfg.n = 40;
  cfg.n0 = 10;
  const NoiseModel nm = GaussianNoise{0.25};
  const auto range = select_logit_range(data.model, data.inputs, nm, 64, 0.05, 1);
  const ModelSpec model = apply_normalization(data.model, range.z_min, range.z_max);
  const ArgmaxParams ap;
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    cfg.rng_seed = derive_seed(9, 1000, i);
    const auto draws = draw_noise(nm, cfg, 8);
    Engine e = make_engine(512, depth_budget(model, ap));
    const auto res = certify(e, e.encrypt(e.embed(data.inputs[i])), model, cfg, ap, draws);
    const auto ref = reference_certify(data.inputs[i], model, nm, cfg, PrelimMode::Soft, draws);
    const Vector counts = round_slots(res.counts.slots()).head(4);
    CHECK(counts == ref.counts.cast<double>());
    CHECK(round_slots(res.k_onehot.slots()).head(4) == Vector::Unit(4, ref.k));
    const auto out = interpret(res.ret.slots(), 4, Guarantee{}, 0.0);
    CHECK(out.certified == ref.outcome.certified);
    CHECK(out.cls == ref.outcome.cls);
    if (out.certified) CHECK(counts[out.cls - 1] >= res.meta.target);
  }
}

TEST_CASE("certify is bit-identical across runs and batch limits") {
  const ModelSpec model = constant_model(4, 3, 2);
  SmoothingConfig cfg;
  cfg.n = 24;
  cfg.n0 = 6;
  cfg.rng_seed = 77;
  const ArgmaxParams ap;
  const auto draws = draw_noise(UniformNoise{1.0}, cfg, 4);
  auto run = [&](std::size_t batch) {
    SmoothingConfig c = cfg;
    c.batch = batch;
    Engine e = make_engine(256, depth_budget(model, ap));
    return certify(e, e.encrypt(e.embed(Vector::Ones(4))), model, c, ap, draws).ret.slots();
  };
  const Vector a = run(0);
  CHECK(run(0) == a);
  CHECK((run(5) - a).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("certify rejects inconsistent inputs") {
  SmoothingConfig cfg;
  cfg.n = 8;
  cfg.n0 = 2;
  const ArgmaxParams ap;
  ModelSpec raw;
  raw.input_dim = 4;
  raw.class_count = 3;
  raw.layers.emplace_back(LinearLayer{Matrix::Zero(3, 4), Vector::Zero(3)});
  Engine e = make_engine(256, 60);
  const auto draws = draw_noise(GaussianNoise{0.5}, cfg, 4);
  CHECK_THROWS_AS(certify(e, e.encrypt(e.embed(Vector::Ones(4))), raw, cfg, ap, draws), ValidationError);
  SmoothingConfig big = cfg;
  big.n = 64;
  const auto big_draws = draw_noise(GaussianNoise{0.5}, big, 4);
  CHECK_THROWS_AS(certify(e, e.encrypt(e.embed(Vector::Ones(4))), constant_model(4, 3, 0), big, ap, big_draws),
                  LayoutError);
  Engine shallow = make_engine(256, depth_budget(constant_model(4, 3, 0), ap) - 1);
  CHECK_THROWS_AS(certify(shallow, shallow.encrypt(shallow.embed(Vector::Ones(4))), constant_model(4, 3, 0), cfg,
                          ap, draws),
                  DepthExhausted);
}
