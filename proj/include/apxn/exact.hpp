#pragma once

#include "apxn/bundle.hpp"
#include "apxn/mdp.hpp"
#include "apxn/policies.hpp"
#include "apxn/quadrature.hpp"

#include <vector>

namespace apxn {

/// The state-action pairs ("atoms") over which the exact engine sums.  For a
/// discrete policy an atom is a legal (s, a) with weight pi(a | s; w); for a
/// Gaussian policy on a continuous-action MDP it is a quadrature node of the
/// action density, with weight equal to the node's quadrature weight.
template <class Scalar, class Action>
struct AtomTable {
  Index n_states = 0;
  std::vector<Index> state;
  std::vector<Action> action;
  VectorX<Scalar> weight;
  VectorX<Scalar> reward;
  MatrixX<Scalar> next;  // atoms x states

  Index size() const { return static_cast<Index>(state.size()); }
};

template <class Scalar, DiscretePolicy P>
  requires std::same_as<typename P::State, Index>
AtomTable<Scalar, typename P::Action> atomize(const TabularMdp<Scalar>& mdp, const P& policy,
                                              const VectorX<Scalar>& w) {
  AtomTable<Scalar, typename P::Action> t;
  t.n_states = mdp.n_states;
  std::vector<Scalar> weight, reward;
  std::vector<Index> rows;
  for (Index s = 0; s < mdp.n_states; ++s) {
    const VectorX<Scalar> p = policy.probabilities(s, w);
    for (Index a = 0; a < p.size(); ++a) {
      const Index id = policy.action_id(s, a);
      if (id < 0 || id >= mdp.n_actions) throw Error(Errc::ActionNotLegal, "policy action id out of range");
      t.state.push_back(s);
      t.action.push_back(a);
      weight.push_back(p(a));
      reward.push_back(mdp.reward(s, id));
      rows.push_back(mdp.row(s, id));
    }
  }
  const Index n = t.size();
  t.weight = Eigen::Map<const VectorX<Scalar>>(weight.data(), n);
  t.reward = Eigen::Map<const VectorX<Scalar>>(reward.data(), n);
  t.next.resize(n, mdp.n_states);
  for (Index i = 0; i < n; ++i) t.next.row(i) = mdp.trans.row(rows[static_cast<std::size_t>(i)]);
  return t;
}

template <class Scalar, LinearGaussianPolicy P>
  requires std::same_as<typename P::State, Index>
AtomTable<Scalar, typename P::Action> atomize(const ContinuousActionMdp<Scalar>& mdp, const P& policy,
                                              const VectorX<Scalar>& w) {
  const auto [nodes, node_weight] = gauss_hermite_product<Scalar>(mdp.quadrature_nodes, mdp.action_dim);
  const Index k = node_weight.size();
  AtomTable<Scalar, typename P::Action> t;
  t.n_states = mdp.n_states;
  t.weight.resize(mdp.n_states * k);
  t.reward.resize(mdp.n_states * k);
  t.next.resize(mdp.n_states * k, mdp.n_states);
  for (Index s = 0; s < mdp.n_states; ++s) {
    const VectorX<Scalar> mu = policy.mean(s, w);
    const Eigen::LLT<MatrixX<Scalar>> llt(policy.noise_covariance(s));
    const MatrixX<Scalar> chol = llt.matrixL();
    for (Index j = 0; j < k; ++j) {
      const Index i = s * k + j;
      VectorX<Scalar> a = mu + chol * nodes.col(j);
      t.weight(i) = node_weight(j);
      t.reward(i) = mdp.reward(s, a);
      t.next.row(i) = mdp.next_distribution(s, a).transpose();
      t.state.push_back(s);
      t.action.push_back(std::move(a));
    }
  }
  return t;
}

template <class Scalar, class Action>
struct OccupancyAndValue {
  AtomTable<Scalar, Action> atoms;
  VectorX<Scalar> p_gamma;  // discounted occupancy per atom
  VectorX<Scalar> q;        // state-action value per atom
  Scalar u = Scalar(0);
};

/// Solves the Bellman system (I - gamma P) q = R for the state-action values
/// and the transposed flow system (I - gamma P)' p = p1 o pi for the
/// discounted occupancy, where P(z, z') = p(s' | z) pi(z' | s').
template <class Model, PolicyModel P>
auto occupancy_and_value(const Model& mdp, const P& policy, const VectorX<typename P::Scalar>& w) {
  using Scalar = typename P::Scalar;
  using Matrix = MatrixX<Scalar>;
  OccupancyAndValue<Scalar, typename P::Action> out;
  out.atoms = atomize(mdp, policy, w);
  const auto& t = out.atoms;
  const Index n = t.size();

  Matrix spread = Matrix::Zero(mdp.n_states, n);
  VectorX<Scalar> start(n);
  for (Index i = 0; i < n; ++i) {
    const Index s = t.state[static_cast<std::size_t>(i)];
    spread(s, i) = t.weight(i);
    start(i) = mdp.p1(s) * t.weight(i);
  }
  const Matrix system = Matrix::Identity(n, n) - mdp.gamma * (t.next * spread);
  const Eigen::PartialPivLU<Matrix> lu(system);
  if (!(lu.rcond() > Scalar(1e-14))) throw Error(Errc::SingularSystem, "Bellman system is singular");
  out.q = lu.solve(t.reward);
  out.p_gamma = lu.transpose().solve(start);
  out.u = out.p_gamma.dot(t.reward);
  return out;
}

namespace detail {

template <class Scalar, class Action, class F>
MatrixX<Scalar> weighted_hessian_sum(const AtomTable<Scalar, Action>& t, const VectorX<Scalar>& weight, F&& hess) {
  MatrixX<Scalar> h;
  for (Index i = 0; i < t.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    MatrixX<Scalar> hi = hess(t.action[k], t.state[k]);
    if (h.size() == 0) h = MatrixX<Scalar>::Zero(hi.rows(), hi.cols());
    if (weight(i) != Scalar(0)) h.noalias() += weight(i) * hi;
  }
  return Scalar(0.5) * (h + h.transpose());
}

}  // namespace detail

/// grad U = E_{p_gamma Q}[grad log pi]
template <class Model, PolicyModel P>
VectorX<typename P::Scalar> gradient(const Model& mdp, const P& policy, const VectorX<typename P::Scalar>& w) {
  using Scalar = typename P::Scalar;
  const auto oav = occupancy_and_value(mdp, policy, w);
  VectorX<Scalar> g = VectorX<Scalar>::Zero(policy.n_params());
  for (Index i = 0; i < oav.atoms.size(); ++i) {
    const Scalar c = oav.p_gamma(i) * oav.q(i);
    if (c == Scalar(0)) continue;
    const auto k = static_cast<std::size_t>(i);
    g.noalias() += c * policy.grad_log(oav.atoms.action[k], oav.atoms.state[k], w);
  }
  return g;
}

template <class Scalar>
struct ApproxHessian {
  MatrixX<Scalar> h2;
  VectorX<Scalar> d2;
};

/// H2 = E_{p_gamma Q}[hess log pi], D2 = diag(H2).
template <class Model, PolicyModel P>
ApproxHessian<typename P::Scalar> approx_hessian(const Model& mdp, const P& policy,
                                                 const VectorX<typename P::Scalar>& w) {
  const auto oav = occupancy_and_value(mdp, policy, w);
  const VectorX<typename P::Scalar> rho = oav.p_gamma.cwiseProduct(oav.q);
  ApproxHessian<typename P::Scalar> out;
  out.h2 = detail::weighted_hessian_sum(oav.atoms, rho, [&](const auto& a, Index s) { return policy.hess_log(a, s, w); });
  out.d2 = out.h2.diagonal();
  return out;
}

/// G = -E_{p_gamma}[hess log pi]
template <class Model, PolicyModel P>
MatrixX<typename P::Scalar> fisher(const Model& mdp, const P& policy, const VectorX<typename P::Scalar>& w) {
  const auto oav = occupancy_and_value(mdp, policy, w);
  return -detail::weighted_hessian_sum(oav.atoms, oav.p_gamma,
                                       [&](const auto& a, Index s) { return policy.hess_log(a, s, w); });
}

template <class Scalar>
struct FullHessian {
  MatrixX<Scalar> h;
  MatrixX<Scalar> h1;
};

/// Full Hessian by central differences of the analytic gradient (step
/// 1e-5 * max(1, |w|_inf), symmetrized), and H1 = H - H2.  Verification only.
template <class Model, PolicyModel P>
FullHessian<typename P::Scalar> full_hessian(const Model& mdp, const P& policy, const VectorX<typename P::Scalar>& w) {
  using Scalar = typename P::Scalar;
  const Index n = w.size();
  const Scalar h = Scalar(1e-5) * std::max(Scalar(1), w.cwiseAbs().maxCoeff());
  MatrixX<Scalar> hess(n, n);
  for (Index i = 0; i < n; ++i) {
    VectorX<Scalar> wp = w, wm = w;
    wp(i) += h;
    wm(i) -= h;
    hess.col(i) = (gradient(mdp, policy, wp) - gradient(mdp, policy, wm)) / (Scalar(2) * h);
  }
  FullHessian<Scalar> out;
  out.h = Scalar(0.5) * (hess + hess.transpose());
  out.h1 = out.h - approx_hessian(mdp, policy, w).h2;
  return out;
}

/// EM energy E_{p_gamma(.; w_k) Q(.; w_k)}[log pi(a | s; w)].
template <class Model, PolicyModel P>
typename P::Scalar em_energy(const Model& mdp, const P& policy, const VectorX<typename P::Scalar>& w,
                             const VectorX<typename P::Scalar>& w_k) {
  using Scalar = typename P::Scalar;
  const auto oav = occupancy_and_value(mdp, policy, w_k);
  Scalar e = Scalar(0);
  for (Index i = 0; i < oav.atoms.size(); ++i) {
    const Scalar c = oav.p_gamma(i) * oav.q(i);
    if (c == Scalar(0)) continue;
    const auto k = static_cast<std::size_t>(i);
    e += c * policy.log_prob(oav.atoms.action[k], oav.atoms.state[k], w);
  }
  return e;
}

/// Closed-form M-step argmax_w em_energy(w, w_k).  Only log-quadratic
/// policies admit one; anything else throws NotClosedForm.
template <class Model, PolicyModel P>
VectorX<typename P::Scalar> em_update(const Model& mdp, const P& policy, const VectorX<typename P::Scalar>& w_k) {
  if constexpr (P::is_log_quadratic && LinearGaussianPolicy<P>) {
    const auto oav = occupancy_and_value(mdp, policy, w_k);
    std::vector<WeightedSample<P>> samples;
    samples.reserve(static_cast<std::size_t>(oav.atoms.size()));
    for (Index i = 0; i < oav.atoms.size(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      samples.push_back({oav.atoms.state[k], oav.atoms.action[k], oav.p_gamma(i) * oav.q(i)});
    }
    return fit_weighted(policy, std::span<const WeightedSample<P>>(samples));
  } else {
    (void)mdp;
    (void)policy;
    (void)w_k;
    throw Error(Errc::NotClosedForm, "EM M-step has no closed form for this policy");
  }
}

/// U, grad U, H2, D2 and G in one pass.
template <class Model, PolicyModel P>
SearchDirectionBundle<typename P::Scalar> exact_bundle(const Model& mdp, const P& policy,
                                                       const VectorX<typename P::Scalar>& w) {
  using Scalar = typename P::Scalar;
  const auto oav = occupancy_and_value(mdp, policy, w);
  const VectorX<Scalar> rho = oav.p_gamma.cwiseProduct(oav.q);
  const Index n = policy.n_params();
  SearchDirectionBundle<Scalar> b;
  b.value = oav.u;
  b.grad = VectorX<Scalar>::Zero(n);
  MatrixX<Scalar> h2 = MatrixX<Scalar>::Zero(n, n);
  MatrixX<Scalar> g = MatrixX<Scalar>::Zero(n, n);
  for (Index i = 0; i < oav.atoms.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto& a = oav.atoms.action[k];
    const Index s = oav.atoms.state[k];
    if (rho(i) != Scalar(0)) b.grad.noalias() += rho(i) * policy.grad_log(a, s, w);
    const MatrixX<Scalar> hl = policy.hess_log(a, s, w);
    h2.noalias() += rho(i) * hl;
    g.noalias() -= oav.p_gamma(i) * hl;
  }
  b.h2 = Scalar(0.5) * (h2 + h2.transpose());
  b.d2 = b.h2->diagonal();
  b.fisher = Scalar(0.5) * (g + g.transpose());
  b.provenance = Provenance::exact;
  return b;
}

}  // namespace apxn
