#pragma once

#include "apxn/types.hpp"

#include <cmath>
#include <utility>

namespace apxn {

/// Gauss-Hermite rule for the standard normal weight (probabilists' form),
/// via Golub-Welsch.  Weights sum to one.
template <class Scalar>
std::pair<VectorX<Scalar>, VectorX<Scalar>> gauss_hermite(int n) {
  MatrixX<Scalar> jacobi = MatrixX<Scalar>::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = std::sqrt(Scalar(k));
    jacobi(k - 1, k) = jacobi(k, k - 1);
  }
  const Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(jacobi);
  VectorX<Scalar> weights = eig.eigenvectors().row(0).transpose().array().square();
  return {eig.eigenvalues(), weights / weights.sum()};
}

/// Tensor-product rule in `dim` dimensions: nodes are columns.
template <class Scalar>
std::pair<MatrixX<Scalar>, VectorX<Scalar>> gauss_hermite_product(int n, Index dim) {
  const auto [x, wt] = gauss_hermite<Scalar>(n);
  Index total = 1;
  for (Index d = 0; d < dim; ++d) total *= n;
  MatrixX<Scalar> nodes(dim, total);
  VectorX<Scalar> weights(total);
  for (Index k = 0; k < total; ++k) {
    Index rem = k;
    Scalar wk = Scalar(1);
    for (Index d = 0; d < dim; ++d) {
      const Index i = rem % n;
      rem /= n;
      nodes(d, k) = x(i);
      wk *= wt(i);
    }
    weights(k) = wk;
  }
  return {nodes, weights};
}

}  // namespace apxn
