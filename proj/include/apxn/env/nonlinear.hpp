#pragma once

#include "apxn/policies.hpp"
#include "apxn/sampling.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>

namespace apxn::nonlinear {

using State = Eigen::Vector2d;
using Action = VectorX<double>;

struct Params {
  double sigma_kappa = 0.02;   // transition noise
  double sigma_start = 0.001;  // noise on the start state (0, 1)
  double sigma_eps = 0.1;      // exploration noise on the gains
  double sigma_r = 0.1;        // width of the reward bump at the origin
  int horizon = 80;
};

inline double sigmoid(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

/// Position s1 and velocity s2 driven by a scalar control u:
///   s1' = s1 + sigmoid(u) - 0.5 + k1
///   s2' = s2 - 0.1 s1' + k2,   k1, k2 ~ N(0, sigma_kappa^2)
/// Reward exp(-|s'|^2 / (2 sigma_r^2)) on the state reached.
class Env {
 public:
  using State = nonlinear::State;
  using Action = nonlinear::Action;

  explicit Env(Params p = {}) : p_(p) {}

  const Params& params() const { return p_; }
  int horizon() const { return p_.horizon; }

  State reset(Rng& rng) const {
    std::normal_distribution<double> n(0.0, 1.0);
    State s(0.0, 1.0);
    if (p_.sigma_start > 0) {
      s(0) += p_.sigma_start * n(rng);
      s(1) += p_.sigma_start * n(rng);
    }
    return s;
  }

  /// Noise-free part of the transition.
  State mean_next(const State& s, double u) const {
    State n;
    n(0) = s(0) + (sigmoid(u) - 0.5);
    n(1) = s(1) - 0.1 * n(0);
    return n;
  }

  double reward(const State& s) const { return std::exp(-0.5 * s.squaredNorm() / (p_.sigma_r * p_.sigma_r)); }

  Transition<State> step(const State& s, const Action& a, Rng& rng) const {
    if (a.size() != 1) throw Error(Errc::DimensionMismatch, "control is one-dimensional");
    State n;
    if (p_.sigma_kappa > 0) {
      std::normal_distribution<double> k(0.0, p_.sigma_kappa);
      n(0) = s(0) + (sigmoid(a(0)) - 0.5) + k(rng);
      n(1) = s(1) - 0.1 * n(0) + k(rng);
    } else {
      n = mean_next(s, a(0));
    }
    return {n, reward(n), false};
  }

 private:
  Params p_;
};

using Policy = GaussianLinearPolicy<double, State>;

/// u = (w + eps)' s with eps ~ N(0, sigma_eps^2 I): a Gaussian with mean w's
/// and variance sigma_eps^2 |s|^2, linear in w, no offset.
inline Policy make_policy(const Params& p) {
  const double var = p.sigma_eps * p.sigma_eps;
  return Policy(
      1, 2, [](const State& s) { return VectorX<double>(s); },
      [var](const State& s) {
        MatrixX<double> c(1, 1);
        c(0, 0) = std::max(var * s.squaredNorm(), 1e-12);
        return c;
      },
      false);
}

}  // namespace apxn::nonlinear
