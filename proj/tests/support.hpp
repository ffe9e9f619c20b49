#pragma once

// Independent oracles and fixtures shared by the unit tests.

#include "apxn/env/tabular.hpp"
#include "apxn/mdp.hpp"
#include "apxn/policies.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace apxn::testing {

using Vec = VectorX<double>;
using Mat = MatrixX<double>;

inline Vec random_vector(Index n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = scale * normal(rng);
  return v;
}

inline Mat random_matrix(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal(rng);
  return m;
}

inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& w, double h) {
  Vec g(w.size());
  for (Index i = 0; i < w.size(); ++i) {
    Vec wp = w, wm = w;
    wp(i) += h;
    wm(i) -= h;
    g(i) = (f(wp) - f(wm)) / (2 * h);
  }
  return g;
}

inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& w, double h) {
  Mat j;
  for (Index i = 0; i < w.size(); ++i) {
    Vec wp = w, wm = w;
    wp(i) += h;
    wm(i) -= h;
    const Vec col = (f(wp) - f(wm)) / (2 * h);
    if (j.size() == 0) j.resize(col.size(), w.size());
    j.col(i) = col;
  }
  return j;
}

inline double rel_err(const Mat& a, const Mat& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

inline double cosine(const Mat& a, const Mat& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0;
  return (a.array() * b.array()).sum() / (na * nb);
}

struct BruteSums {
  double value = 0;
  Vec grad;
  Mat h1, h2;
};

/// Trajectory sums by explicit depth-first enumeration of every path, with
/// the path score and Hessian recomputed from scratch for each prefix.
template <class P>
BruteSums brute_trajectory_sums(const TabularMdp<double>& mdp, const P& policy, const Vec& w, int cut) {
  const Index nw = policy.n_params();
  BruteSums out{0.0, Vec::Zero(nw), Mat::Zero(nw, nw), Mat::Zero(nw, nw)};
  struct Step {
    Index s, a;
  };
  std::vector<Step> path;
  auto visit = [&](auto&& self, Index s, double prob, double disc) -> void {
    const Vec p = policy.probabilities(s, w);
    for (Index a = 0; a < p.size(); ++a) {
      if (p(a) == 0) continue;
      path.push_back({s, a});
      const double pz = prob * p(a);
      Vec score = Vec::Zero(nw);
      Mat curv = Mat::Zero(nw, nw);
      for (const auto& st : path) {
        score += policy.grad_log(st.a, st.s, w);
        curv += policy.hess_log(st.a, st.s, w);
      }
      const double r = mdp.reward(s, policy.action_id(s, a));
      out.value += disc * r * pz;
      out.grad += disc * r * pz * score;
      out.h1 += disc * r * pz * score * score.transpose();
      out.h2 += disc * r * pz * curv;
      if (static_cast<int>(path.size()) < cut) {
        const Index row = mdp.row(s, policy.action_id(s, a));
        for (Index n = 0; n < mdp.n_states; ++n)
          if (mdp.trans(row, n) > 0) self(self, n, pz * mdp.trans(row, n), disc * mdp.gamma);
      }
      path.pop_back();
    }
  };
  for (Index s = 0; s < mdp.n_states; ++s)
    if (mdp.p1(s) > 0) visit(visit, s, mdp.p1(s), 1.0);
  return out;
}

/// Gaussian-linear policy on integer states with seeded random state
/// features.
inline GaussianLinearPolicy<double> random_gaussian_policy(Index n_states, Index action_dim, Index feature_dim,
                                                           std::uint64_t seed, bool with_offset = true) {
  auto feats = std::make_shared<Mat>(random_matrix(feature_dim, n_states, seed));
  auto covs = std::make_shared<std::vector<Mat>>();
  for (Index s = 0; s < n_states; ++s) {
    const Mat a = random_matrix(action_dim, action_dim, seed + 100 + static_cast<std::uint64_t>(s), 0.3);
    covs->push_back(a * a.transpose() + 0.5 * Mat::Identity(action_dim, action_dim));
  }
  return GaussianLinearPolicy<double>(
      action_dim, feature_dim, [feats](const Index& s) -> Vec { return feats->col(s); },
      [covs](const Index& s) -> Mat { return (*covs)[static_cast<std::size_t>(s)]; }, with_offset);
}

}  // namespace apxn::testing
