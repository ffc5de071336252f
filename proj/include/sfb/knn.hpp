#pragma once

#include <Eigen/Dense>

namespace sfb {

/// Digamma via the downward recurrence and the asymptotic tail.
double digamma(double x);

/// log volume of the unit Euclidean ball in `dim` dimensions.
double unit_ball_log_volume(int dim);

/// Kozachenko-Leonenko differential entropy estimate from sample rows:
/// psi(n) - psi(k) + log c_d + (d/n) sum_i log eps_i, with eps_i the distance
/// to the k-th nearest other sample. Neighbor ties break by row index.
/// Throws on fewer than k+1 rows or coincident points.
double knn_entropy(const Eigen::MatrixXd& points, int k = 3);

/// Wang-style KL estimate D(p || q) from sample rows of each distribution:
/// (d/n) sum_i log(nu_i / rho_i) + log(m / (n-1)), rho from p excluding self,
/// nu from q. Throws on insufficient rows, dimension mismatch, or coincident
/// points.
double knn_kl_divergence(const Eigen::MatrixXd& p_samples, const Eigen::MatrixXd& q_samples,
                         int k = 3);

}  // namespace sfb
