#include "sfb/knn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace sfb {

double digamma(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("digamma: requires x > 0");
  double value = 0.0;
  while (x < 10.0) {
    value -= 1.0 / x;
    x += 1.0;
  }
  // asymptotic series through the x^-10 Bernoulli term; truncation error at
  // the x >= 10 shift point is below 1e-13
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  value += std::log(x) - 0.5 * inv -
           inv2 * (1.0 / 12.0 -
                   inv2 * (1.0 / 120.0 -
                           inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
  return value;
}

double unit_ball_log_volume(int dim) {
  if (dim < 1) throw std::invalid_argument("unit_ball_log_volume: dim must be >= 1");
  return 0.5 * dim * std::log(M_PI) - std::lgamma(0.5 * dim + 1.0);
}

namespace {

// Distance from row i of `from` to its k-th nearest row of `to`, optionally
// skipping index i itself (ties resolved by row index).
double kth_neighbor_distance(const Eigen::MatrixXd& from, int i, const Eigen::MatrixXd& to,
                             bool skip_self, int k) {
  std::vector<std::pair<double, int>> dist;
  dist.reserve(to.rows());
  for (int j = 0; j < to.rows(); ++j) {
    if (skip_self && j == i) continue;
    dist.emplace_back((to.row(j) - from.row(i)).norm(), j);
  }
  std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
  return dist[k - 1].first;
}

}  // namespace

double knn_entropy(const Eigen::MatrixXd& points, int k) {
  const int n = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());
  if (k < 1) throw std::invalid_argument("knn_entropy: k must be >= 1");
  if (d < 1) throw std::invalid_argument("knn_entropy: points must have columns");
  if (n < k + 1) throw std::invalid_argument("knn_entropy: need at least k+1 samples");
  double log_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double eps = kth_neighbor_distance(points, i, points, true, k);
    if (!(eps > 0.0)) throw std::runtime_error("knn_entropy: coincident sample points");
    log_sum += std::log(eps);
  }
  return digamma(n) - digamma(k) + unit_ball_log_volume(d) +
         static_cast<double>(d) / n * log_sum;
}

double knn_kl_divergence(const Eigen::MatrixXd& p_samples, const Eigen::MatrixXd& q_samples,
                         int k) {
  const int n = static_cast<int>(p_samples.rows());
  const int m = static_cast<int>(q_samples.rows());
  const int d = static_cast<int>(p_samples.cols());
  if (k < 1) throw std::invalid_argument("knn_kl_divergence: k must be >= 1");
  if (d < 1 || q_samples.cols() != d)
    throw std::invalid_argument("knn_kl_divergence: dimension mismatch");
  if (n < k + 1 || m < k)
    throw std::invalid_argument("knn_kl_divergence: need k+1 p-samples and k q-samples");
  double log_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double rho = kth_neighbor_distance(p_samples, i, p_samples, true, k);
    const double nu = kth_neighbor_distance(p_samples, i, q_samples, false, k);
    if (!(rho > 0.0) || !(nu > 0.0))
      throw std::runtime_error("knn_kl_divergence: coincident sample points");
    log_sum += std::log(nu / rho);
  }
  return static_cast<double>(d) / n * log_sum + std::log(static_cast<double>(m) / (n - 1));
}

}  // namespace sfb
