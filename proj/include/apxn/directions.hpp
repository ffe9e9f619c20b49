#pragma once

#include "apxn/bundle.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace apxn {

enum class Method { steepest, natural, em, apxn_full, apxn_diag };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::steepest: return "steepest";
    case Method::natural: return "natural";
    case Method::em: return "em";
    case Method::apxn_full: return "apxn-full";
    case Method::apxn_diag: return "apxn-diag";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (Method m : {Method::steepest, Method::natural, Method::em, Method::apxn_full, Method::apxn_diag})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

template <class Scalar>
struct Direction {
  VectorX<Scalar> d;
  Scalar ridge = Scalar(0);  // lambda added to the metric, 0 if none
};

namespace detail {

/// Solves A d = g for symmetric A that should be positive definite.  When the
/// smallest eigenvalue of A is below 1e-10 * |A|, a ridge lambda I is added,
/// starting at 1e-8 * |A| and doubling until the shifted matrix passes.
template <class Scalar>
Direction<Scalar> solve_metric(const MatrixX<Scalar>& a, const VectorX<Scalar>& g) {
  using Matrix = MatrixX<Scalar>;
  const Index n = g.size();
  if (a.rows() != n || a.cols() != n) throw Error(Errc::DimensionMismatch, "metric size does not match gradient");
  Direction<Scalar> out;
  if (g.isZero(0)) {
    out.d = VectorX<Scalar>::Zero(n);
    return out;
  }
  const Matrix sym = Scalar(0.5) * (a + a.transpose());
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  const Scalar norm = eig.eigenvalues().cwiseAbs().maxCoeff();
  const Scalar scale = norm > Scalar(0) ? norm : Scalar(1);
  const Scalar eps = Scalar(1e-10) * norm;
  const Scalar min_eig = eig.eigenvalues().minCoeff();

  Scalar lambda = Scalar(0);
  if (!(min_eig >= eps) || norm == Scalar(0)) {
    lambda = Scalar(1e-8) * scale;
    int doublings = 0;
    while (!(min_eig + lambda >= eps) || lambda <= Scalar(0)) {
      if (++doublings > 60) throw Error(Errc::NonAscent, "ridge did not restore positive definiteness");
      lambda *= Scalar(2);
    }
  }
  const Eigen::LLT<Matrix> llt(sym + lambda * Matrix::Identity(n, n));
  if (llt.info() != Eigen::Success) throw Error(Errc::NonAscent, "metric factorization failed");
  out.d = llt.solve(g);
  out.ridge = lambda;
  return out;
}

}  // namespace detail

/// Search direction M(w) grad U for the gradient-type methods:
///   steepest  M = I
///   natural   M = G^{-1}
///   apxn-full M = -H2^{-1}
///   apxn-diag M = -D2^{-1}
/// EM is not a direction rule; use the M-step instead.
template <class Scalar>
Direction<Scalar> direction(Method method, const SearchDirectionBundle<Scalar>& b) {
  using Matrix = MatrixX<Scalar>;
  Direction<Scalar> out;
  switch (method) {
    case Method::steepest:
      out.d = b.grad;
      break;
    case Method::natural:
      if (!b.fisher) throw Error(Errc::MissingBundleField, "natural gradient needs the Fisher matrix");
      out = detail::solve_metric<Scalar>(*b.fisher, b.grad);
      break;
    case Method::apxn_full:
      if (!b.h2) throw Error(Errc::MissingBundleField, "full approximate Newton needs H2");
      out = detail::solve_metric<Scalar>(-*b.h2, b.grad);
      break;
    case Method::apxn_diag: {
      VectorX<Scalar> d2;
      if (b.d2) d2 = *b.d2;
      else if (b.h2) d2 = b.h2->diagonal();
      else throw Error(Errc::MissingBundleField, "diagonal approximate Newton needs D2");
      const Matrix diag = Matrix((-d2).asDiagonal());
      out = detail::solve_metric<Scalar>(diag, b.grad);
      break;
    }
    case Method::em:
      throw Error(Errc::MissingBundleField, "EM has no metric form; use the M-step");
  }
  if (!out.d.allFinite()) throw Error(Errc::NonAscent, "direction is not finite");
  if (out.d.dot(b.grad) < Scalar(0)) throw Error(Errc::NonAscent, "direction is not an ascent direction");
  return out;
}

// ---------------------------------------------------------------------------
// Step-size schedules
// ---------------------------------------------------------------------------

struct ConstantStep {
  double alpha = 1.0;
};

/// alpha / sqrt(k)
struct RobbinsMonroStep {
  double alpha = 1.0;
};

/// (1 - k/N) alpha + k/N: decays from alpha towards the EM step of one.
struct EmInterpStep {
  double alpha = 1.0;
  int total = 1;
};

struct LineSearchStep {
  std::vector<double> candidates{0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0};
  int games_per_candidate = 1000;
};

using StepSchedule = std::variant<ConstantStep, RobbinsMonroStep, EmInterpStep, LineSearchStep>;

/// Step size for iteration k (1-based).  Line search has no closed form and
/// returns nullopt.
inline std::optional<double> step_size(const StepSchedule& schedule, int k) {
  if (k < 1) throw Error(Errc::ConfigError, "iterations are numbered from 1");
  if (const auto* c = std::get_if<ConstantStep>(&schedule)) return c->alpha;
  if (const auto* r = std::get_if<RobbinsMonroStep>(&schedule)) return r->alpha / std::sqrt(double(k));
  if (const auto* e = std::get_if<EmInterpStep>(&schedule)) {
    if (k > e->total) throw Error(Errc::ConfigError, "EmInterp step requested past its horizon");
    const double f = double(k) / double(e->total);
    return (1.0 - f) * e->alpha + f;
  }
  return std::nullopt;
}

}  // namespace apxn
