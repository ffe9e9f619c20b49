#pragma once

#include "apxn/mdp.hpp"
#include "apxn/policies.hpp"
#include "apxn/sampling.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

namespace apxn {

/// A TabularMdp driven by sampling.  Policy actions are mapped to MDP action
/// ids through `action_id` (identity unless a Gibbs policy restricts the legal
/// set).  `recurrent_state` enables the recurrent-state estimator and
/// `horizon` the forward-sampling one.
template <class Scalar>
class TabularEnv {
 public:
  using State = Index;
  using Action = Index;
  using ActionIdFn = std::function<Index(Index, Index)>;

  explicit TabularEnv(TabularMdp<Scalar> mdp, std::optional<Index> recurrent_state = std::nullopt, int horizon = 1,
                      ActionIdFn action_id = {})
      : mdp_(std::move(mdp)), recurrent_(recurrent_state), horizon_(horizon), action_id_(std::move(action_id)) {
    check(mdp_);
    if (recurrent_ && (*recurrent_ < 0 || *recurrent_ >= mdp_.n_states))
      throw Error(Errc::NoRecurrentState, "recurrent state index out of range");
    cdf_.resize(static_cast<std::size_t>(mdp_.trans.rows()));
    for (Index r = 0; r < mdp_.trans.rows(); ++r) cdf_[static_cast<std::size_t>(r)] = cumulative(mdp_.trans.row(r));
    p1_cdf_ = cumulative(mdp_.p1.transpose());
  }

  const TabularMdp<Scalar>& mdp() const { return mdp_; }
  bool has_recurrent_state() const { return recurrent_.has_value(); }
  bool is_recurrent(Index s) const { return recurrent_ && s == *recurrent_; }
  int horizon() const { return horizon_; }

  Index reset(Rng& rng) const { return draw(p1_cdf_, rng); }

  Transition<Index> step(Index s, Index a, Rng& rng) const {
    const Index id = action_id_ ? action_id_(s, a) : a;
    if (id < 0 || id >= mdp_.n_actions) throw Error(Errc::ActionNotLegal, "action id out of range");
    const Index row = mdp_.row(s, id);
    return {draw(cdf_[static_cast<std::size_t>(row)], rng), double(mdp_.reward(s, id)), false};
  }

 private:
  template <class Row>
  static std::vector<double> cumulative(const Row& p) {
    std::vector<double> c(static_cast<std::size_t>(p.size()));
    double acc = 0.0;
    for (Index i = 0; i < p.size(); ++i) c[static_cast<std::size_t>(i)] = acc += double(p(i));
    return c;
  }

  static Index draw(const std::vector<double>& cdf, Rng& rng) {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it != cdf.end()) return static_cast<Index>(it - cdf.begin());
    // Rounding at the top end: fall back to the last entry with mass.
    auto i = static_cast<Index>(cdf.size()) - 1;
    while (i > 0 && cdf[static_cast<std::size_t>(i)] == cdf[static_cast<std::size_t>(i - 1)]) --i;
    return i;
  }

  TabularMdp<Scalar> mdp_;
  std::optional<Index> recurrent_;
  int horizon_;
  ActionIdFn action_id_;
  std::vector<std::vector<double>> cdf_;
  std::vector<double> p1_cdf_;
};

/// Gibbs policy over all actions of a tabular MDP with a fixed feature table:
/// table[s] is the (n_actions x n_params) feature matrix of state s.
template <class Scalar>
GibbsPolicy<Scalar> tabular_gibbs(std::vector<MatrixX<Scalar>> table) {
  auto shared = std::make_shared<const std::vector<MatrixX<Scalar>>>(std::move(table));
  const Index n = shared->empty() ? 0 : shared->front().cols();
  return GibbsPolicy<Scalar>(n, [shared](const Index& s) -> const MatrixX<Scalar>& {
    if (s < 0 || s >= static_cast<Index>(shared->size())) throw Error(Errc::DimensionMismatch, "state out of range");
    return (*shared)[static_cast<std::size_t>(s)];
  });
}

/// Standard-normal features, seeded.
template <class Scalar>
GibbsPolicy<Scalar> random_gibbs(Index n_states, Index n_actions, Index n_params, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<MatrixX<Scalar>> table;
  for (Index s = 0; s < n_states; ++s) {
    MatrixX<Scalar> f(n_actions, n_params);
    for (Index a = 0; a < n_actions; ++a)
      for (Index j = 0; j < n_params; ++j) f(a, j) = Scalar(normal(rng));
    table.push_back(std::move(f));
  }
  return tabular_gibbs<Scalar>(std::move(table));
}

// ---------------------------------------------------------------------------
// Two-state MDP
// ---------------------------------------------------------------------------

template <class Scalar>
struct TwoStateProblem {
  TabularMdp<Scalar> mdp;
  GibbsPolicy<Scalar> policy;
};

/// States {0, 1}, actions {stay, switch}.  Each action has its intended effect
/// with probability 0.9.  Reward 1 in state 1, 0 in state 0, gamma 0.95, p1
/// uniform.  One parameter per state: phi(a, s) = e_s [a == stay].
template <class Scalar = double>
TwoStateProblem<Scalar> two_state_factory() {
  TabularMdp<Scalar> m;
  m.n_states = 2;
  m.n_actions = 2;
  m.gamma = Scalar(0.95);
  m.p1 = VectorX<Scalar>::Constant(2, Scalar(0.5));
  m.trans = MatrixX<Scalar>::Zero(4, 2);
  for (Index s = 0; s < 2; ++s) {
    m.trans(m.row(s, 0), s) = Scalar(0.9);
    m.trans(m.row(s, 0), 1 - s) = Scalar(0.1);
    m.trans(m.row(s, 1), 1 - s) = Scalar(0.9);
    m.trans(m.row(s, 1), s) = Scalar(0.1);
  }
  m.reward = MatrixX<Scalar>::Zero(2, 2);
  m.reward.row(1).setOnes();
  check(m);

  std::vector<MatrixX<Scalar>> table;
  for (Index s = 0; s < 2; ++s) {
    MatrixX<Scalar> f = MatrixX<Scalar>::Zero(2, 2);
    f(0, s) = Scalar(1);
    table.push_back(f);
  }
  return {std::move(m), tabular_gibbs<Scalar>(std::move(table))};
}

}  // namespace apxn
