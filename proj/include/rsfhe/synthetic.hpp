#pragma once

// Gaussian-blob datasets and matching nearest-centroid style models with
// square activations.

#include "rsfhe/network.hpp"

#include <cstdint>
#include <vector>

namespace rsfhe {

struct SyntheticSpec {
  int input_dim = 16;
  int classes = 10;
  /// Number of square activations; the model has activations + 1 linear layers.
  int activations = 1;
  /// Distance of the class centroids from the origin.
  double separation = 4.0;
  /// The last `far_classes` centroids sit at separation * norm_ratio.
  double norm_ratio = 1.0;
  int far_classes = 0;
  /// Standard deviation of the samples around their centroid.
  double data_spread = 1.0;
  /// Scale of the final layer.
  double gamma = 1.0;
  /// Quadratic coefficient of every activation (c1 = 1).
  double c2 = 0.01;
  std::size_t samples = 500;
  std::uint64_t seed = 1;

  /// Tight blobs, well separated, large logit margins.
  static SyntheticSpec confident(int input_dim, int classes, std::uint64_t seed);
  void validate() const;
};

struct SyntheticData {
  ModelSpec model;
  std::vector<Vector> inputs;
  std::vector<int> labels;
  Matrix centroids;  // classes x input_dim
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace rsfhe
