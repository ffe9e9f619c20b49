#pragma once

#include "apxn/directions.hpp"
#include "apxn/exact.hpp"
#include "apxn/sampling.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

namespace apxn {

template <class Scalar>
struct OptimizerState {
  VectorX<Scalar> w;
  int iteration = 0;
  Method method = Method::steepest;
  std::vector<Scalar> ridges;
  std::vector<std::uint64_t> seeds;
};

struct LineSearchResult {
  double alpha = 0.0;
  double score = 0.0;
  std::vector<double> scores;  // one per candidate, in candidate order
};

/// Scores w + alpha * d / |d| for every candidate alpha with the same seed and
/// returns the best one.  Equal scores go to the smaller alpha.  A zero
/// direction leaves every candidate at the same point.
template <class Scalar, class ScoreFn>
LineSearchResult line_search(ScoreFn&& score, const VectorX<Scalar>& w, const VectorX<Scalar>& direction,
                             std::span<const double> candidates, std::uint64_t seed) {
  if (candidates.empty()) throw Error(Errc::ConfigError, "line search needs at least one step size");
  const Scalar norm = direction.norm();
  const VectorX<Scalar> unit = norm > Scalar(0) ? VectorX<Scalar>(direction / norm) : VectorX<Scalar>(direction);
  LineSearchResult out;
  bool first = true;
  for (const double alpha : candidates) {
    if (!(alpha > 0)) throw Error(Errc::ConfigError, "step sizes must be positive");
    const double s = score(VectorX<Scalar>(w + Scalar(alpha) * unit), seed);
    out.scores.push_back(s);
    if (first || s > out.score || (s == out.score && alpha < out.alpha)) {
      out.alpha = alpha;
      out.score = s;
      first = false;
    }
  }
  return out;
}

/// Line search scored by the mean reward per regeneration cycle (per game).
template <RecurrentEnv E, PolicyModel P>
  requires EnvPolicyPair<E, P>
LineSearchResult line_search(const E& env, const P& policy, const VectorX<typename P::Scalar>& w,
                             const VectorX<typename P::Scalar>& direction, std::span<const double> candidates,
                             int games_per_candidate, std::uint64_t seed, int threads = 1,
                             std::uint64_t max_cycle_steps = 1'000'000) {
  return line_search<typename P::Scalar>(
      [&](const VectorX<typename P::Scalar>& v, std::uint64_t s) {
        return mean_cycle_return(env, policy, v, games_per_candidate, s, threads, max_cycle_steps);
      },
      w, direction, candidates, seed);
}

/// Exact EM step: the closed-form M-step of the exact engine.
template <class Model, PolicyModel P>
VectorX<typename P::Scalar> em_step(const Model& mdp, const P& policy, const VectorX<typename P::Scalar>& w) {
  return em_update(mdp, policy, w);
}

/// Sampled EM step: weighted least squares on (state, action, p_gamma Q
/// estimate) triples from forward sampling.
template <PolicyModel P>
VectorX<typename P::Scalar> em_step(const P& policy, std::span<const WeightedSample<P>> samples) {
  if constexpr (P::is_log_quadratic && LinearGaussianPolicy<P>) {
    return fit_weighted(policy, samples);
  } else {
    (void)policy;
    (void)samples;
    throw Error(Errc::NotClosedForm, "EM M-step has no closed form for this policy");
  }
}

/// One update w + alpha M(w) grad U of a gradient-type method.
template <class Scalar>
struct StepResult {
  VectorX<Scalar> w;
  VectorX<Scalar> direction;
  Scalar ridge = Scalar(0);
};

template <class Scalar>
StepResult<Scalar> ascent_step(Method method, const SearchDirectionBundle<Scalar>& bundle, const VectorX<Scalar>& w,
                               Scalar alpha) {
  const auto dir = direction(method, bundle);
  StepResult<Scalar> out{VectorX<Scalar>(w + alpha * dir.d), dir.d, dir.ridge};
  if (!out.w.allFinite()) throw Error(Errc::NonAscent, "update produced non-finite parameters");
  return out;
}

}  // namespace apxn
