#pragma once

#include <cstddef>
#include <vector>

namespace semicomp {

// Gauss-Hermite rule for expectations under N(0, 1): sum_j w_j f(b_j)
// approximates E f(b). Weights sum to one.
struct NormalQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

NormalQuadrature gauss_hermite(std::size_t node_count);

// Single node at b = 0 with weight one; used when no frailty is modelled.
NormalQuadrature degenerate_quadrature();

}  // namespace semicomp
