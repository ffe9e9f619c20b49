#pragma once

#include "apxn/bundle.hpp"
#include "apxn/parallel.hpp"
#include "apxn/policies.hpp"

#include <concepts>
#include <cstdint>
#include <optional>
#include <vector>

namespace apxn {

// ---------------------------------------------------------------------------
// Environment contract
// ---------------------------------------------------------------------------

template <class State>
struct Transition {
  State next;
  double reward = 0.0;
  bool terminal = false;
};

/// Environments are immutable descriptions; the state is passed explicitly so
/// a single instance can serve concurrent trajectories.  Given the seed of
/// the generator handed to reset/step, everything is deterministic.
template <class E>
concept SampledEnv = requires(const E& env, const typename E::State& s, const typename E::Action& a, Rng& rng) {
  { env.reset(rng) } -> std::convertible_to<typename E::State>;
  { env.step(s, a, rng) } -> std::convertible_to<Transition<typename E::State>>;
};

/// Environments with a state revisited with probability one under any policy.
template <class E>
concept RecurrentEnv = SampledEnv<E> && requires(const E& env, const typename E::State& s) {
  { env.is_recurrent(s) } -> std::convertible_to<bool>;
};

template <class E>
concept EpisodicEnv = SampledEnv<E> && requires(const E& env) {
  { env.horizon() } -> std::convertible_to<int>;
};

template <class E, class P>
concept EnvPolicyPair = SampledEnv<E> && PolicyModel<P> && std::same_as<typename E::State, typename P::State> &&
                        std::same_as<typename E::Action, typename P::Action>;

// ---------------------------------------------------------------------------
// Accumulators
// ---------------------------------------------------------------------------

/// Eligibility traces (phi1, phi2) and running estimates (delta1, delta2) of
/// the recurrent-state estimator.  Matrices accumulate the upper triangle only
/// and are mirrored on read, so the estimates are exactly symmetric.
template <class Scalar>
struct EstimatorAccumulators {
  VectorX<Scalar> phi1, delta1;
  MatrixX<Scalar> phi2, delta2;
  std::uint64_t steps = 0;

  explicit EstimatorAccumulators(Index n = 0)
      : phi1(VectorX<Scalar>::Zero(n)),
        delta1(VectorX<Scalar>::Zero(n)),
        phi2(MatrixX<Scalar>::Zero(n, n)),
        delta2(MatrixX<Scalar>::Zero(n, n)) {}

  void accumulate_trace(const VectorX<Scalar>& score, const MatrixX<Scalar>* hess) {
    phi1 += score;
    if (hess) phi2.template triangularView<Eigen::Upper>() += *hess;
  }

  void reset_traces() {
    phi1.setZero();
    phi2.setZero();
  }

  void update_estimates(Scalar reward, bool with_hessian) {
    ++steps;
    if (reward == Scalar(0)) return;
    delta1 += reward * phi1;
    if (with_hessian) delta2.template triangularView<Eigen::Upper>() += reward * phi2;
  }

  MatrixX<Scalar> delta2_symmetric() const {
    MatrixX<Scalar> out = delta2.template triangularView<Eigen::Upper>();
    out.template triangularView<Eigen::StrictlyLower>() = out.transpose();
    return out;
  }
};

template <class Scalar>
MatrixX<Scalar> mirror_upper(const MatrixX<Scalar>& m) {
  MatrixX<Scalar> out = m.template triangularView<Eigen::Upper>();
  out.template triangularView<Eigen::StrictlyLower>() = out.transpose();
  return out;
}

/// Monte Carlo estimate of the search-direction ingredients.  Recurrent-state
/// estimates are unnormalized ("up to a positive scaling"); forward-sampling
/// estimates are per-trajectory means.
template <class Scalar>
struct EstimateReport {
  VectorX<Scalar> grad_est;
  MatrixX<Scalar> h2_est;
  VectorX<Scalar> d2_est;
  std::optional<MatrixX<Scalar>> fisher_est;
  std::uint64_t n_samples = 0;
  std::uint64_t n_regenerations = 0;
  std::uint64_t n_episodes = 0;
  std::uint64_t n_truncated = 0;
  std::uint64_t seed = 0;
  double total_reward = 0.0;

  /// Mean reward per episode (per regeneration cycle or trajectory).
  double mean_return() const { return n_episodes ? total_reward / double(n_episodes) : 0.0; }

  SearchDirectionBundle<Scalar> bundle() const {
    SearchDirectionBundle<Scalar> b;
    b.value = Scalar(mean_return());
    b.grad = grad_est;
    if (h2_est.size()) {
      b.h2 = h2_est;
      b.d2 = d2_est;
    }
    b.fisher = fisher_est;
    b.provenance = Provenance::sampled;
    return b;
  }
};

struct EstimatorOptions {
  bool hessian = true;
  bool fisher = false;
  int threads = 1;
};

namespace detail {

template <class Scalar>
void check_finite(const EstimateReport<Scalar>& r) {
  bool ok = r.grad_est.allFinite() && r.h2_est.allFinite();
  if (r.fisher_est) ok = ok && r.fisher_est->allFinite();
  if (!ok) throw Error(Errc::NonFiniteAccumulator, "estimator accumulated a non-finite value");
}

template <class E>
void require_recurrent(const E& env) {
  if constexpr (requires { env.has_recurrent_state(); }) {
    if (!env.has_recurrent_state()) throw Error(Errc::NoRecurrentState, "environment has no recurrent state");
  }
}

/// One run of the recurrent-state loop.  With `stop_at_regeneration` the run
/// ends as soon as the chain returns to the recurrent state; otherwise after
/// `max_steps` steps.
template <class E, class P>
EstimateReport<typename P::Scalar> recurrent_run(const E& env, const P& policy, const VectorX<typename P::Scalar>& w,
                                                 std::uint64_t max_steps, std::uint64_t seed,
                                                 const EstimatorOptions& opt, bool stop_at_regeneration) {
  using Scalar = typename P::Scalar;
  const Index n = policy.n_params();
  EstimatorAccumulators<Scalar> acc(n);
  MatrixX<Scalar> fisher;
  if (opt.fisher) fisher = MatrixX<Scalar>::Zero(n, n);
  EstimateReport<Scalar> rep;
  rep.seed = seed;

  Rng rng(seed);
  auto s = env.reset(rng);
  for (std::uint64_t t = 0; t < max_steps; ++t) {
    const auto a = policy.sample(s, w, rng);
    const bool at_recurrent = env.is_recurrent(s);
    MatrixX<Scalar> hess;
    if ((opt.hessian && !at_recurrent) || opt.fisher) hess = policy.hess_log(a, s, w);
    if (!at_recurrent) {
      acc.accumulate_trace(policy.grad_log(a, s, w), opt.hessian ? &hess : nullptr);
    } else {
      acc.reset_traces();
      ++rep.n_regenerations;
    }
    auto tr = env.step(s, a, rng);
    acc.update_estimates(Scalar(tr.reward), opt.hessian);
    if (opt.fisher) fisher.template triangularView<Eigen::Upper>() -= hess;
    rep.total_reward += tr.reward;
    s = std::move(tr.next);
    if (stop_at_regeneration && env.is_recurrent(s)) {
      rep.n_episodes = 1;
      break;
    }
  }
  if (stop_at_regeneration && rep.n_episodes == 0) {
    rep.n_episodes = 1;
    rep.n_truncated = 1;
  }
  rep.n_samples = acc.steps;
  rep.grad_est = acc.delta1;
  rep.h2_est = opt.hessian ? acc.delta2 : MatrixX<Scalar>();
  if (opt.fisher) rep.fisher_est = fisher;
  return rep;
}

template <class Scalar>
void merge_into(EstimateReport<Scalar>& into, const EstimateReport<Scalar>& part) {
  if (into.grad_est.size() == 0) {
    into.grad_est = part.grad_est;
    into.h2_est = part.h2_est;
    into.fisher_est = part.fisher_est;
  } else {
    into.grad_est += part.grad_est;
    if (into.h2_est.size()) into.h2_est += part.h2_est;
    if (into.fisher_est) *into.fisher_est += *part.fisher_est;
  }
  into.n_samples += part.n_samples;
  into.n_regenerations += part.n_regenerations;
  into.n_episodes += part.n_episodes;
  into.n_truncated += part.n_truncated;
  into.total_reward += part.total_reward;
}

template <class Scalar>
void finalize(EstimateReport<Scalar>& rep) {
  if (rep.h2_est.size()) {
    rep.h2_est = mirror_upper(rep.h2_est);
    rep.d2_est = rep.h2_est.diagonal();
  }
  if (rep.fisher_est) *rep.fisher_est = mirror_upper(*rep.fisher_est);
  check_finite(rep);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Recurrent-state estimator (average reward)
// ---------------------------------------------------------------------------

/// Recurrent-state estimator of the gradient and approximate Hessian for the
/// average-reward objective.  Per step: sample a_t; away from the recurrent
/// state add grad/hess log pi(a_t | s_t) to the traces, at it zero the traces;
/// then add R_t * traces to the estimates and step the environment.  Returns
/// the raw sums (delta1, delta2, diag(delta2)).  With `fisher` set, the
/// negative sum of log-policy Hessians over all visited steps is returned too.
template <RecurrentEnv E, PolicyModel P>
  requires EnvPolicyPair<E, P>
EstimateReport<typename P::Scalar> recurrent_estimate(const E& env, const P& policy,
                                                      const VectorX<typename P::Scalar>& w, std::uint64_t n_steps,
                                                      std::uint64_t seed, const EstimatorOptions& opt = {}) {
  detail::require_recurrent(env);
  if (n_steps < 1) throw Error(Errc::ConfigError, "n_steps must be >= 1");
  auto rep = detail::recurrent_run(env, policy, w, n_steps, seed, opt, false);
  rep.n_episodes = rep.n_regenerations;
  detail::finalize(rep);
  return rep;
}

/// The same estimator run for a fixed number of regeneration cycles (games)
/// instead of a fixed number of steps.  Every cycle starts at the recurrent
/// state, where the traces are reset, so cycles are independent: cycle i uses
/// the stream split_seed(seed, i) and the sums are merged in cycle order, which
/// keeps the result independent of the thread count.  A cycle longer than
/// `max_cycle_steps` is cut off and counted in n_truncated.
template <RecurrentEnv E, PolicyModel P>
  requires EnvPolicyPair<E, P>
EstimateReport<typename P::Scalar> recurrent_estimate_cycles(const E& env, const P& policy,
                                                             const VectorX<typename P::Scalar>& w, int n_cycles,
                                                             std::uint64_t seed, const EstimatorOptions& opt = {},
                                                             std::uint64_t max_cycle_steps = 1'000'000) {
  using Scalar = typename P::Scalar;
  detail::require_recurrent(env);
  if (n_cycles < 1) throw Error(Errc::ConfigError, "n_cycles must be >= 1");
  auto parts = parallel_map<EstimateReport<Scalar>>(static_cast<std::size_t>(n_cycles), opt.threads, [&](std::size_t i) {
    return detail::recurrent_run(env, policy, w, max_cycle_steps, split_seed(seed, i), opt, true);
  });
  EstimateReport<Scalar> rep;
  rep.seed = seed;
  for (const auto& p : parts) detail::merge_into(rep, p);
  detail::finalize(rep);
  return rep;
}

/// Mean reward per regeneration cycle (per game for Tetris) over `n_cycles`
/// cycles, cycle i seeded with split_seed(seed, i).  Only samples actions, so
/// it is much cheaper than the estimators; used to score line-search
/// candidates.
template <RecurrentEnv E, PolicyModel P>
  requires EnvPolicyPair<E, P>
double mean_cycle_return(const E& env, const P& policy, const VectorX<typename P::Scalar>& w, int n_cycles,
                         std::uint64_t seed, int threads = 1, std::uint64_t max_cycle_steps = 1'000'000) {
  if (n_cycles < 1) throw Error(Errc::ConfigError, "n_cycles must be >= 1");
  const auto totals = parallel_map<double>(static_cast<std::size_t>(n_cycles), threads, [&](std::size_t i) {
    Rng rng(split_seed(seed, i));
    auto s = env.reset(rng);
    double total = 0.0;
    for (std::uint64_t t = 0; t < max_cycle_steps; ++t) {
      const auto a = policy.sample(s, w, rng);
      auto tr = env.step(s, a, rng);
      total += tr.reward;
      s = std::move(tr.next);
      if (env.is_recurrent(s)) break;
    }
    return total;
  });
  double sum = 0.0;
  for (double v : totals) sum += v;
  return sum / double(n_cycles);
}

// ---------------------------------------------------------------------------
// Forward sampling (finite horizon / discounted)
// ---------------------------------------------------------------------------

/// Forward-sampling estimator.  For each trajectory and time t the weight is
/// gamma^{t-1} times the discounted reward-to-go from t; the estimates are the
/// weighted sums of grad/hess log pi averaged over trajectories.  The Fisher
/// estimate weights -hess log pi by gamma^{t-1}.  When `samples` is given it
/// receives every (s_t, a_t, weight / n_traj), the input of a sampled M-step.
template <EpisodicEnv E, PolicyModel P>
  requires EnvPolicyPair<E, P>
EstimateReport<typename P::Scalar> forward_estimate(const E& env, const P& policy,
                                                    const VectorX<typename P::Scalar>& w, int n_traj, double gamma,
                                                    std::uint64_t seed, const EstimatorOptions& opt = {},
                                                    std::vector<WeightedSample<P>>* samples = nullptr) {
  using Scalar = typename P::Scalar;
  if (n_traj < 1) throw Error(Errc::ConfigError, "n_traj must be >= 1");
  const Index n = policy.n_params();
  const int horizon = env.horizon();

  struct Part {
    EstimateReport<Scalar> rep;
    std::vector<WeightedSample<P>> samples;
  };
  auto parts = parallel_map<Part>(static_cast<std::size_t>(n_traj), opt.threads, [&](std::size_t i) {
    Part part;
    auto& rep = part.rep;
    rep.grad_est = VectorX<Scalar>::Zero(n);
    if (opt.hessian) rep.h2_est = MatrixX<Scalar>::Zero(n, n);
    if (opt.fisher) rep.fisher_est = MatrixX<Scalar>::Zero(n, n);

    Rng rng(split_seed(seed, i));
    std::vector<typename E::State> states;
    std::vector<typename E::Action> actions;
    std::vector<double> rewards;
    auto s = env.reset(rng);
    for (int t = 0; t < horizon; ++t) {
      auto a = policy.sample(s, w, rng);
      auto tr = env.step(s, a, rng);
      states.push_back(std::move(s));
      actions.push_back(std::move(a));
      rewards.push_back(tr.reward);
      s = std::move(tr.next);
      if (tr.terminal) break;
    }
    const std::size_t len = rewards.size();
    std::vector<double> to_go(len + 1, 0.0);
    for (std::size_t t = len; t-- > 0;) to_go[t] = rewards[t] + gamma * to_go[t + 1];

    double disc = 1.0;
    for (std::size_t t = 0; t < len; ++t) {
      const Scalar weight = Scalar(disc * to_go[t]);
      if (weight != Scalar(0)) rep.grad_est.noalias() += weight * policy.grad_log(actions[t], states[t], w);
      if (opt.hessian || opt.fisher) {
        const MatrixX<Scalar> hess = policy.hess_log(actions[t], states[t], w);
        if (opt.hessian && weight != Scalar(0)) rep.h2_est.template triangularView<Eigen::Upper>() += weight * hess;
        if (opt.fisher) rep.fisher_est->template triangularView<Eigen::Upper>() -= Scalar(disc) * hess;
      }
      if (samples) part.samples.push_back({states[t], actions[t], weight / Scalar(n_traj)});
      disc *= gamma;
    }
    rep.n_samples = len;
    rep.n_episodes = 1;
    rep.total_reward = to_go[0];
    return part;
  });

  EstimateReport<Scalar> rep;
  rep.seed = seed;
  for (auto& p : parts) {
    detail::merge_into(rep, p.rep);
    if (samples) samples->insert(samples->end(), p.samples.begin(), p.samples.end());
  }
  const Scalar inv = Scalar(1) / Scalar(n_traj);
  rep.grad_est *= inv;
  if (rep.h2_est.size()) rep.h2_est *= inv;
  if (rep.fisher_est) *rep.fisher_est *= inv;
  detail::finalize(rep);
  return rep;
}

}  // namespace apxn
