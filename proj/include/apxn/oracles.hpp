#pragma once

#include "apxn/mdp.hpp"
#include "apxn/policies.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace apxn {

/// Truncated objective sum_{t <= horizon_cut} gamma^{t-1} E[R(z_t)] by
/// exhaustive depth-first enumeration of every state-action path.  The
/// truncation error is at most gamma^horizon_cut * max R / (1 - gamma).
/// Throws ExplosionGuard once more than `max_paths` complete paths have been
/// visited.
template <class Scalar, DiscretePolicy P>
  requires std::same_as<typename P::State, Index>
Scalar enumerate_return(const TabularMdp<Scalar>& mdp, const P& policy, const VectorX<Scalar>& w, int horizon_cut,
                        std::uint64_t max_paths = 10'000'000) {
  if (horizon_cut < 1) throw Error(Errc::DimensionMismatch, "horizon_cut must be >= 1");
  std::vector<VectorX<Scalar>> probs;
  for (Index s = 0; s < mdp.n_states; ++s) probs.push_back(policy.probabilities(s, w));

  std::uint64_t paths = 0;
  Scalar total = Scalar(0);
  auto visit = [&](auto&& self, int t, Index s, Scalar prob, Scalar disc) -> void {
    const auto& p = probs[static_cast<std::size_t>(s)];
    for (Index a = 0; a < p.size(); ++a) {
      const Scalar pa = prob * p(a);
      if (pa == Scalar(0)) continue;
      const Index id = policy.action_id(s, a);
      total += disc * mdp.reward(s, id) * pa;
      if (t == horizon_cut) {
        if (++paths > max_paths) throw Error(Errc::ExplosionGuard, "path enumeration exceeded the configured limit");
        continue;
      }
      for (Index n = 0; n < mdp.n_states; ++n) {
        const Scalar pt = mdp.trans(mdp.row(s, id), n);
        if (pt > Scalar(0)) self(self, t + 1, n, pa * pt, disc * mdp.gamma);
      }
    }
  };
  for (Index s = 0; s < mdp.n_states; ++s)
    if (mdp.p1(s) > Scalar(0)) visit(visit, 1, s, mdp.p1(s), Scalar(1));
  return total;
}

template <class Scalar>
struct TrajectorySums {
  Scalar value = Scalar(0);
  VectorX<Scalar> grad;
  MatrixX<Scalar> h1;
  MatrixX<Scalar> h2;
};

/// Truncated trajectory-form sums
///   U   = sum_t gamma^{t-1} E[R(z_t)]
///   dU  = sum_t gamma^{t-1} E[R(z_t) grad log p(z_{1:t})]
///   H1  = sum_t gamma^{t-1} E[R(z_t) grad log p(z_{1:t}) grad' log p(z_{1:t})]
///   H2  = sum_t gamma^{t-1} E[R(z_t) hess log p(z_{1:t})]
/// for t = 1..horizon_cut.  The expectation over all paths is carried forward
/// in time through per-state moments of the accumulated path score, which is
/// exact marginalization over paths; no value function is involved.
template <class Scalar, DiscretePolicy P>
  requires std::same_as<typename P::State, Index>
TrajectorySums<Scalar> trajectory_sums(const TabularMdp<Scalar>& mdp, const P& policy, const VectorX<Scalar>& w,
                                       int horizon_cut) {
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;
  const Index ns = mdp.n_states;
  const Index nw = policy.n_params();

  struct Atom {
    Index s, row;
    Scalar prob, reward;
    Vector score;
    Matrix hess;
  };
  std::vector<Atom> atoms;
  for (Index s = 0; s < ns; ++s) {
    const Vector p = policy.probabilities(s, w);
    for (Index a = 0; a < p.size(); ++a) {
      const Index id = policy.action_id(s, a);
      atoms.push_back({s, mdp.row(s, id), p(a), mdp.reward(s, id), policy.grad_log(a, s, w), policy.hess_log(a, s, w)});
    }
  }

  // Per-state moments: mass, E[1 G], E[1 G G'], E[1 C] with G the accumulated
  // score and C the accumulated log-policy Hessian of the prefix.
  std::vector<Scalar> mass(static_cast<std::size_t>(ns));
  std::vector<Vector> first(static_cast<std::size_t>(ns), Vector::Zero(nw));
  std::vector<Matrix> second(static_cast<std::size_t>(ns), Matrix::Zero(nw, nw));
  std::vector<Matrix> curv(static_cast<std::size_t>(ns), Matrix::Zero(nw, nw));
  for (Index s = 0; s < ns; ++s) mass[static_cast<std::size_t>(s)] = mdp.p1(s);

  TrajectorySums<Scalar> out;
  out.grad = Vector::Zero(nw);
  out.h1 = Matrix::Zero(nw, nw);
  out.h2 = Matrix::Zero(nw, nw);
  Scalar disc = Scalar(1);
  for (int t = 1; t <= horizon_cut; ++t) {
    std::vector<Scalar> mass_n(static_cast<std::size_t>(ns), Scalar(0));
    std::vector<Vector> first_n(static_cast<std::size_t>(ns), Vector::Zero(nw));
    std::vector<Matrix> second_n(static_cast<std::size_t>(ns), Matrix::Zero(nw, nw));
    std::vector<Matrix> curv_n(static_cast<std::size_t>(ns), Matrix::Zero(nw, nw));
    for (const auto& z : atoms) {
      const auto k = static_cast<std::size_t>(z.s);
      if (mass[k] == Scalar(0) || z.prob == Scalar(0)) continue;
      const Scalar mz = z.prob * mass[k];
      const Vector fz = z.prob * (first[k] + mass[k] * z.score);
      const Matrix sz = z.prob * (second[k] + first[k] * z.score.transpose() + z.score * first[k].transpose() +
                                  mass[k] * z.score * z.score.transpose());
      const Matrix cz = z.prob * (curv[k] + mass[k] * z.hess);
      const Scalar c = disc * z.reward;
      out.value += c * mz;
      out.grad += c * fz;
      out.h1 += c * sz;
      out.h2 += c * cz;
      if (t == horizon_cut) continue;
      for (Index n = 0; n < ns; ++n) {
        const Scalar pt = mdp.trans(z.row, n);
        if (pt == Scalar(0)) continue;
        const auto kn = static_cast<std::size_t>(n);
        mass_n[kn] += pt * mz;
        first_n[kn] += pt * fz;
        second_n[kn] += pt * sz;
        curv_n[kn] += pt * cz;
      }
    }
    mass.swap(mass_n);
    first.swap(first_n);
    second.swap(second_n);
    curv.swap(curv_n);
    disc *= mdp.gamma;
  }
  out.h1 = Scalar(0.5) * (out.h1 + out.h1.transpose());
  out.h2 = Scalar(0.5) * (out.h2 + out.h2.transpose());
  return out;
}

/// Smallest cut with gamma^cut * r_max / (1 - gamma) * (1 + cut)^2 below `tol`.
/// The polynomial factor covers the growth of the accumulated score terms.
template <class Scalar>
int truncation_cut(Scalar gamma, Scalar r_max, Scalar tol, int limit = 100000) {
  if (gamma == Scalar(0)) return 1;
  for (int cut = 1; cut < limit; ++cut) {
    const Scalar c = Scalar(cut);
    if (std::pow(gamma, c) * r_max / (Scalar(1) - gamma) * (Scalar(1) + c) * (Scalar(1) + c) < tol) return cut;
  }
  return limit;
}

}  // namespace apxn
