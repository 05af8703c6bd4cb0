#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "sbhm/image.hpp"

namespace sbhm {

struct GaussHermite {
  std::vector<double> nodes;    // t_k, ascending
  std::vector<double> weights;  // normalized: sum = 1
};

/// Gauss-Hermite rule (weight e^{-t^2}) of the given order via
/// Golub-Welsch; weights are returned normalized to sum to one so that
/// sums approximate expectations under N(0, 1/2)-scaled integrals directly.
inline GaussHermite gauss_hermite(int order) {
  if (order < 1) throw InputError("gauss_hermite: order must be >= 1");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermite gh;
  gh.nodes.resize(order);
  gh.weights.resize(order);
  double wsum = 0.0;
  for (int k = 0; k < order; ++k) {
    gh.nodes[k] = es.eigenvalues()[k];
    const double v0 = es.eigenvectors()(0, k);
    gh.weights[k] = v0 * v0;
    wsum += gh.weights[k];
  }
  for (auto& w : gh.weights) w /= wsum;
  return gh;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace sbhm
