#include "rsfhe/synthetic.hpp"

#include "rsfhe/errors.hpp"

#include <Eigen/QR>

#include <cmath>
#include <random>

namespace rsfhe {

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = gauss(rng);
  return m;
}

Matrix random_orthogonal(Eigen::Index n, std::mt19937_64& rng) {
  const Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(n, n, rng));
  return qr.householderQ() * Matrix::Identity(n, n);
}

}  // namespace

SyntheticSpec SyntheticSpec::confident(int input_dim, int classes, std::uint64_t seed) {
  SyntheticSpec s;
  s.input_dim = input_dim;
  s.classes = classes;
  s.separation = 8.0;
  s.data_spread = 0.2;
  s.gamma = 0.5;
  s.seed = seed;
  return s;
}

void SyntheticSpec::validate() const {
  if (input_dim < 1 || classes < 2) throw ValidationError("synthetic spec needs d >= 1 and c >= 2");
  if (classes > input_dim) throw ValidationError("synthetic spec needs c <= d");
  if (activations < 0) throw ValidationError("activation count must be >= 0");
  if (!(separation > 0.0 && data_spread >= 0.0 && gamma > 0.0 && norm_ratio >= 1.0 &&
        far_classes >= 0 && far_classes <= classes))
    throw ValidationError("synthetic scales must be positive");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Eigen::Index d = spec.input_dim;
  const Eigen::Index c = spec.classes;

  SyntheticData out;
  Matrix dirs = gaussian_matrix(c, d, rng);
  dirs.rowwise().normalize();
  out.centroids = spec.separation * dirs;
  out.centroids.bottomRows(spec.far_classes) *= spec.norm_ratio;

  // Each hidden stage is an orthogonal change of basis followed by a nearly
  // linear square activation; the head undoes the last rotation and scores
  // classes by 2 mu_k . x - |mu_k|^2.
  auto& model = out.model;
  model.input_dim = static_cast<int>(d);
  model.class_count = static_cast<int>(c);
  Matrix basis = Matrix::Identity(d, d);
  for (int a = 0; a < spec.activations; ++a) {
    const Matrix q = random_orthogonal(d, rng);
    model.layers.emplace_back(LinearLayer{q * basis.transpose(), Vector::Zero(d)});
    model.layers.emplace_back(SquareActivation{1.0, spec.c2});
    basis = q;
  }
  const Vector sq_norms = out.centroids.rowwise().squaredNorm();
  model.layers.emplace_back(
      LinearLayer{spec.gamma * 2.0 * out.centroids * basis.transpose(), -spec.gamma * sq_norms});
  model.validate();

  std::normal_distribution<double> gauss(0.0, spec.data_spread);
  std::uniform_int_distribution<int> pick(0, spec.classes - 1);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const int label = pick(rng);
    Vector x = out.centroids.row(label).transpose();
    for (Eigen::Index j = 0; j < d; ++j) x[j] += gauss(rng);
    out.inputs.push_back(std::move(x));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace rsfhe
