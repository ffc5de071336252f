#include "sfb/features.hpp"

#include <cmath>
#include <stdexcept>

#include "sfb/rng.hpp"

namespace sfb {

int FeatureMap::dim() const {
  return kind == Kind::fourier ? static_cast<int>(wave.rows()) + 1
                               : static_cast<int>(anchors.rows());
}

Eigen::VectorXd FeatureMap::operator()(const Eigen::VectorXd& z) const {
  if (z.size() != in_dim) throw std::invalid_argument("FeatureMap: embedding size mismatch");
  if (kind == Kind::fourier) {
    Eigen::VectorXd out(dim());
    const Eigen::VectorXd arg = wave * z + phase;
    for (int j = 0; j < wave.rows(); ++j) out[j] = amplitude * std::cos(arg[j]);
    out[wave.rows()] = 1.0;
    return out;
  }
  int best = 0;
  double best_sq = (anchors.row(0).transpose() - z).squaredNorm();
  for (int i = 1; i < anchors.rows(); ++i) {
    const double sq = (anchors.row(i).transpose() - z).squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best = i;
    }
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  out[best] = 1.0;
  return out;
}

FeatureMap make_fourier_features(int in_dim, int n_waves, double lengthscale,
                                 std::uint64_t seed) {
  if (in_dim < 1 || n_waves < 1)
    throw std::invalid_argument("make_fourier_features: dimensions must be positive");
  if (!(lengthscale > 0.0))
    throw std::invalid_argument("make_fourier_features: lengthscale must be positive");
  FeatureMap f;
  f.kind = FeatureMap::Kind::fourier;
  f.in_dim = in_dim;
  f.seed = seed;
  f.lengthscale = lengthscale;
  f.amplitude = std::sqrt(2.0 / n_waves);
  Rng rng(seed);
  f.wave.resize(n_waves, in_dim);
  for (int j = 0; j < n_waves; ++j)
    for (int c = 0; c < in_dim; ++c) f.wave(j, c) = rng.normal() / lengthscale;
  f.phase.resize(n_waves);
  for (int j = 0; j < n_waves; ++j) f.phase[j] = rng.uniform(0.0, 2.0 * M_PI);
  return f;
}

FeatureMap make_anchor_features(const Eigen::MatrixXd& anchors) {
  if (anchors.rows() < 1) throw std::invalid_argument("make_anchor_features: empty anchor list");
  FeatureMap f;
  f.kind = FeatureMap::Kind::anchor;
  f.in_dim = static_cast<int>(anchors.cols());
  f.anchors = anchors;
  return f;
}

}  // namespace sfb
