#pragma once

#include "apxn/types.hpp"

#include <optional>

namespace apxn {

enum class Provenance { exact, sampled };

/// Everything a search direction can be built from, evaluated at one
/// parameter point: U, its gradient, the approximate Hessian H2 (and its
/// diagonal D2), and the Fisher matrix G.  Optional fields are filled only
/// when the producer was asked for them.
template <class Scalar>
struct SearchDirectionBundle {
  Scalar value = Scalar(0);
  VectorX<Scalar> grad;
  std::optional<MatrixX<Scalar>> h2;
  std::optional<VectorX<Scalar>> d2;
  std::optional<MatrixX<Scalar>> fisher;
  Provenance provenance = Provenance::exact;
};

}  // namespace apxn
