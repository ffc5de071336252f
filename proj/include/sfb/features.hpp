#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace sfb {

/// Fixed feature map over embedding vectors. The fourier kind evaluates a
/// seeded bank of cosine waves plus a constant bias, so every parameterized
/// head stays linear in its weights and all gradients are analytic. The
/// anchor kind one-hot encodes the nearest of a fixed anchor list; it exists
/// as a debugging stand-in with the same interface.
struct FeatureMap {
  enum class Kind { fourier, anchor };

  Kind kind = Kind::fourier;
  int in_dim = 0;
  std::uint64_t seed = 0;

  // fourier payload
  Eigen::MatrixXd wave;   // n_waves x in_dim frequency rows
  Eigen::VectorXd phase;  // n_waves
  double amplitude = 0.0;
  double lengthscale = 1.0;

  // anchor payload
  Eigen::MatrixXd anchors;  // n_anchors x in_dim

  int dim() const;

  Eigen::VectorXd operator()(const Eigen::VectorXd& z) const;
};

/// n_waves seeded cosine features with frequencies drawn N(0, 1/lengthscale^2)
/// per coordinate, phases U[0, 2pi), amplitude sqrt(2/n_waves), plus a
/// trailing bias feature fixed at 1.
FeatureMap make_fourier_features(int in_dim, int n_waves, double lengthscale,
                                 std::uint64_t seed);

/// One-hot at the nearest anchor in Euclidean distance, ties to lowest index.
FeatureMap make_anchor_features(const Eigen::MatrixXd& anchors);

}  // namespace sfb
