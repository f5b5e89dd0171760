#include "semicomp/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace semicomp {

// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
NormalQuadrature gauss_hermite(std::size_t node_count) {
  if (node_count == 0) throw std::invalid_argument("gauss_hermite: node_count must be positive");
  const auto n = static_cast<Eigen::Index>(node_count);
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  NormalQuadrature q;
  q.nodes.resize(node_count);
  q.weights.resize(node_count);
  double total = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    q.nodes[static_cast<std::size_t>(k)] = solver.eigenvalues()[k];
    const double v = solver.eigenvectors()(0, k);
    q.weights[static_cast<std::size_t>(k)] = v * v;
    total += v * v;
  }
  for (double& w : q.weights) w /= total;
  // Symmetrise to remove eigen-solver noise around the origin.
  for (std::size_t k = 0; k < node_count / 2; ++k) {
    const std::size_t m = node_count - 1 - k;
    const double b = 0.5 * (q.nodes[m] - q.nodes[k]);
    const double w = 0.5 * (q.weights[k] + q.weights[m]);
    q.nodes[k] = -b;
    q.nodes[m] = b;
    q.weights[k] = q.weights[m] = w;
  }
  if (node_count % 2 == 1) q.nodes[node_count / 2] = 0.0;
  return q;
}

NormalQuadrature degenerate_quadrature() { return NormalQuadrature{{0.0}, {1.0}}; }

}  // namespace semicomp
