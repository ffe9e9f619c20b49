#pragma once

#include "apxn/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace apxn {

/// Finite MDP with discounted reward.  `trans` has one row per (s, a) pair,
/// row index `s * n_actions + a`, holding the next-state distribution.
template <class Scalar>
struct TabularMdp {
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  Index n_states = 0;
  Index n_actions = 0;
  Vector p1;
  Matrix trans;
  Matrix reward;
  Scalar gamma = Scalar(0);

  Index row(Index s, Index a) const { return s * n_actions + a; }
  Scalar max_reward() const { return reward.size() ? reward.maxCoeff() : Scalar(0); }
};

/// Finite states, continuous actions in R^d.  Transitions are a softmax over
/// next states with logits `bias(s, s') + slope[s].row(s') * a`; the reward is
/// a nonnegative Gaussian bump around `reward_target.row(s)`.  Expectations
/// over actions are evaluated with Gauss-Hermite quadrature.
template <class Scalar>
struct ContinuousActionMdp {
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  Index n_states = 0;
  Index action_dim = 1;
  Vector p1;
  Scalar gamma = Scalar(0);
  Matrix bias;
  std::vector<Matrix> slope;
  Vector reward_scale;
  Matrix reward_target;
  Scalar reward_width = Scalar(1);
  int quadrature_nodes = 16;

  template <class A>
  Vector next_distribution(Index s, const Eigen::MatrixBase<A>& action) const {
    Vector logits = bias.row(s).transpose() + slope[s] * action;
    logits.array() -= logits.maxCoeff();
    Vector p = logits.array().exp();
    return p / p.sum();
  }

  template <class A>
  Scalar reward(Index s, const Eigen::MatrixBase<A>& action) const {
    const Scalar d2 = (action.transpose() - reward_target.row(s)).squaredNorm();
    return reward_scale(s) * std::exp(Scalar(-0.5) * d2 / (reward_width * reward_width));
  }
};

struct Violation {
  Errc code;
  Index state = -1;
  Index action = -1;
  std::string message;
};

template <class Scalar>
std::vector<Violation> validate(const TabularMdp<Scalar>& mdp) {
  std::vector<Violation> out;
  auto add = [&](Errc code, Index s, Index a, const std::string& what) {
    std::ostringstream os;
    os << what;
    if (s >= 0) os << " (s=" << s;
    if (a >= 0) os << ",a=" << a;
    if (s >= 0) os << ")";
    out.push_back({code, s, a, os.str()});
  };
  const Scalar tol = Scalar(1e-12);

  if (mdp.n_states <= 0 || mdp.n_actions <= 0 || mdp.p1.size() != mdp.n_states ||
      mdp.trans.rows() != mdp.n_states * mdp.n_actions || mdp.trans.cols() != mdp.n_states ||
      mdp.reward.rows() != mdp.n_states || mdp.reward.cols() != mdp.n_actions) {
    add(Errc::DimensionMismatch, -1, -1, "array shapes do not match n_states/n_actions");
    return out;
  }
  if (!(mdp.gamma >= Scalar(0) && mdp.gamma < Scalar(1)))
    add(Errc::BadDiscount, -1, -1, "gamma must lie in [0, 1)");
  if ((mdp.p1.array() < Scalar(0)).any() || std::abs(mdp.p1.sum() - Scalar(1)) > tol)
    add(Errc::BadInitialDistribution, -1, -1, "p1 must be a probability vector");
  for (Index s = 0; s < mdp.n_states; ++s) {
    for (Index a = 0; a < mdp.n_actions; ++a) {
      const auto r = mdp.trans.row(mdp.row(s, a));
      if ((r.array() < Scalar(0)).any() || std::abs(r.sum() - Scalar(1)) > tol)
        add(Errc::RowNotStochastic, s, a, "transition row is not a distribution");
      if (!(mdp.reward(s, a) >= Scalar(0)))
        add(Errc::NegativeReward, s, a, "reward must be nonnegative");
    }
  }
  return out;
}

/// Throws the first violation found by `validate`.
template <class Scalar>
void check(const TabularMdp<Scalar>& mdp) {
  const auto v = validate(mdp);
  if (!v.empty()) throw Error(v.front().code, v.front().message);
}

/// Seeded random MDP.  `support` bounds the number of reachable next states
/// per (s, a) (0 = dense).
template <class Scalar = double>
TabularMdp<Scalar> random_tabular_mdp(Index n_states, Index n_actions, Scalar gamma,
                                      std::uint64_t seed, Index support = 0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  TabularMdp<Scalar> m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.p1.resize(n_states);
  for (Index s = 0; s < n_states; ++s) m.p1(s) = Scalar(0.1 + unif(rng));
  m.p1 /= m.p1.sum();
  m.trans = MatrixX<Scalar>::Zero(n_states * n_actions, n_states);
  for (Index r = 0; r < m.trans.rows(); ++r) {
    for (Index s = 0; s < n_states; ++s) m.trans(r, s) = Scalar(unif(rng));
    if (support > 0 && support < n_states) {
      std::vector<Index> idx(static_cast<std::size_t>(n_states));
      for (Index s = 0; s < n_states; ++s) idx[static_cast<std::size_t>(s)] = s;
      std::shuffle(idx.begin(), idx.end(), rng);
      for (Index k = support; k < n_states; ++k) m.trans(r, idx[static_cast<std::size_t>(k)]) = Scalar(0);
    }
    m.trans.row(r) /= m.trans.row(r).sum();
  }
  m.reward.resize(n_states, n_actions);
  for (Index s = 0; s < n_states; ++s)
    for (Index a = 0; a < n_actions; ++a) m.reward(s, a) = Scalar(unif(rng));
  return m;
}

template <class Scalar = double>
ContinuousActionMdp<Scalar> random_continuous_mdp(Index n_states, Index action_dim, Scalar gamma,
                                                  std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  ContinuousActionMdp<Scalar> m;
  m.n_states = n_states;
  m.action_dim = action_dim;
  m.gamma = gamma;
  m.p1.resize(n_states);
  for (Index s = 0; s < n_states; ++s) m.p1(s) = Scalar(1.2 + unif(rng));
  m.p1 /= m.p1.sum();
  m.bias.resize(n_states, n_states);
  for (Index i = 0; i < m.bias.size(); ++i) m.bias.data()[i] = Scalar(unif(rng));
  m.slope.assign(static_cast<std::size_t>(n_states), MatrixX<Scalar>(n_states, action_dim));
  for (auto& sl : m.slope)
    for (Index i = 0; i < sl.size(); ++i) sl.data()[i] = Scalar(0.8 * unif(rng));
  m.reward_scale.resize(n_states);
  m.reward_target.resize(n_states, action_dim);
  for (Index s = 0; s < n_states; ++s) {
    m.reward_scale(s) = Scalar(1.0 + unif(rng) * 0.5);
    for (Index j = 0; j < action_dim; ++j) m.reward_target(s, j) = Scalar(unif(rng));
  }
  m.reward_width = Scalar(1.5);
  return m;
}

}  // namespace apxn
