#include "apxn/experiment.hpp"
#include "apxn/env/nonlinear.hpp"
#include "apxn/env/tabular.hpp"
#include "apxn/env/tetris.hpp"
#include "apxn/exact.hpp"
#include "apxn/mdp_io.hpp"
#include "apxn/optimizer.hpp"
#include "apxn/parallel.hpp"
#include "apxn/sampling.hpp"

#include <chrono>
#include <functional>

namespace apxn {

std::uint64_t seed_matrix_entry(std::uint64_t master, int r, int k) {
  return split_seed(split_seed(master, static_cast<std::uint64_t>(r)), static_cast<std::uint64_t>(k));
}

namespace {

using Vec = VectorX<double>;
using Mat = MatrixX<double>;

struct Estimate {
  SearchDirectionBundle<double> bundle;
  double score = 0.0;
  std::optional<Vec> em_target;  // M-step solution, EM only
};

// Everything the optimizer loop needs from an environment/policy pair.
struct Problem {
  std::function<Estimate(const Vec& w, std::uint64_t seed)> estimate;
  std::function<double(const Vec& w, std::uint64_t seed)> candidate_score;  // line search only
};

Mat transform_matrix(const ExperimentConfig& c) {
  const Index n = c.n_params();
  if (c.transform.empty()) return Mat::Identity(n, n);
  Mat t(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) t(i, j) = c.transform[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return t;
}

EstimatorOptions estimator_options(const ExperimentConfig& c, int threads) {
  EstimatorOptions opt;
  opt.hessian = c.method == Method::apxn_full || c.method == Method::apxn_diag;
  opt.fisher = c.method == Method::natural;
  opt.threads = threads;
  return opt;
}

// Calls fn with the configured policy, wrapped in the reparametrization when a
// transform is given.
template <class P, class Fn>
void with_policy(const ExperimentConfig& c, P policy, Fn&& fn) {
  if (c.transform.empty()) fn(policy);
  else fn(reparametrize(std::move(policy), transform_matrix(c)));
}

template <class P>
Problem tabular_problem(const ExperimentConfig& c, const TabularMdp<double>& mdp, const P& policy, int threads) {
  Problem pr;
  if (c.estimator == EstimatorKind::exact) {
    pr.estimate = [mdp, policy](const Vec& w, std::uint64_t) {
      Estimate e;
      e.bundle = exact_bundle(mdp, policy, w);
      e.score = e.bundle.value;
      return e;
    };
    return pr;
  }
  const double gamma = c.gamma.value_or(mdp.gamma);
  const auto opt = estimator_options(c, threads);
  const int n_traj = c.trajectories;
  pr.estimate = [env = TabularEnv<double>(mdp, std::nullopt, c.horizon), policy, gamma, opt, n_traj](
                    const Vec& w, std::uint64_t seed) {
    const auto rep = forward_estimate(env, policy, w, n_traj, gamma, seed, opt);
    return Estimate{rep.bundle(), rep.mean_return(), std::nullopt};
  };
  return pr;
}

template <class P>
Problem tetris_problem(const ExperimentConfig& c, const tetris::Env& env, const P& policy, int threads) {
  Problem pr;
  const auto opt = estimator_options(c, threads);
  const int games = c.games_per_estimate;
  const auto max_steps = c.max_game_steps;
  pr.estimate = [env, policy, opt, games, max_steps](const Vec& w, std::uint64_t seed) {
    const auto rep = recurrent_estimate_cycles(env, policy, w, games, seed, opt, max_steps);
    return Estimate{rep.bundle(), rep.mean_return(), std::nullopt};
  };
  if (const auto* ls = std::get_if<LineSearchStep>(&c.schedule)) {
    const int per = ls->games_per_candidate;
    pr.candidate_score = [env, policy, per, threads, max_steps](const Vec& w, std::uint64_t seed) {
      return mean_cycle_return(env, policy, w, per, seed, threads, max_steps);
    };
  }
  return pr;
}

template <class P>
Problem nonlinear_problem(const ExperimentConfig& c, const nonlinear::Env& env, const P& policy, int threads) {
  Problem pr;
  const auto opt = estimator_options(c, threads);
  const bool em = c.method == Method::em;
  const int n_traj = c.trajectories;
  const double gamma = c.gamma.value_or(1.0);
  pr.estimate = [env, policy, opt, em, n_traj, gamma](const Vec& w, std::uint64_t seed) {
    std::vector<WeightedSample<P>> samples;
    const auto rep = forward_estimate(env, policy, w, n_traj, gamma, seed, opt, em ? &samples : nullptr);
    Estimate e{rep.bundle(), rep.mean_return(), std::nullopt};
    if (em) e.em_target = em_step(policy, std::span<const WeightedSample<P>>(samples));
    return e;
  };
  return pr;
}

Vec initial_params(const ExperimentConfig& c, int r) {
  const Index n = c.n_params();
  Vec w = Vec::Zero(n);
  switch (c.init) {
    case InitKind::zeros: break;
    case InitKind::uniform: {
      Rng rng(seed_matrix_entry(c.seed, r, 0));
      for (Index i = 0; i < n; ++i) {
        std::uniform_real_distribution<double> u(c.init_low[static_cast<std::size_t>(i)],
                                                 c.init_high[static_cast<std::size_t>(i)]);
        w(i) = u(rng);
      }
      break;
    }
    case InitKind::values:
      for (Index i = 0; i < n; ++i) w(i) = c.init_values[static_cast<std::size_t>(i)];
      break;
  }
  // Initial values are given in the original parametrization.
  if (!c.transform.empty()) w = transform_matrix(c).partialPivLu().solve(w).eval();
  return w;
}

std::vector<RunRecord> run_repetition(const ExperimentConfig& c, const Problem& pr, int r, Vec w) {
  std::vector<RunRecord> out;
  out.reserve(static_cast<std::size_t>(c.iterations));
  const auto* ls = std::get_if<LineSearchStep>(&c.schedule);
  for (int k = 1; k <= c.iterations; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.repetition = r;
    rec.iteration = k;
    rec.seed = seed_matrix_entry(c.seed, r, k);
    const auto est = pr.estimate(w, split_seed(rec.seed, 0));
    rec.score = est.score;

    Vec step;
    if (c.method == Method::em) {
      step = *est.em_target - w;
      rec.alpha = *step_size(c.schedule, k);
      rec.dir_norm = step.norm();
      step *= rec.alpha;
    } else {
      const auto dir = direction(c.method, est.bundle);
      rec.ridge = dir.ridge;
      rec.dir_norm = dir.d.norm();
      if (ls) {
        const auto res = line_search<double>(pr.candidate_score, w, dir.d, ls->candidates, split_seed(rec.seed, 1));
        rec.alpha = res.alpha;
        step = rec.dir_norm > 0 ? Vec(rec.alpha * Vec(dir.d / rec.dir_norm)) : Vec(dir.d);
      } else {
        rec.alpha = *step_size(c.schedule, k);
        step = rec.alpha * dir.d;
      }
    }
    const Vec next = w + step;
    if (next.allFinite()) {
      w = next;
    } else {
      rec.alpha = 0.0;  // rejected: parameters stay where they were
    }
    rec.params = w;
    if (c.record_timing)
      rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(rec));
  }
  return out;
}

template <class MakeProblem>
RunResult run_all(const ExperimentConfig& c, MakeProblem&& make_problem) {
  RunResult res;
  res.config = c;
  const int threads = resolve_threads(c.threads);
  const int outer = std::max(1, std::min(threads, c.repetitions));
  const int inner = std::max(1, threads / outer);
  const Problem pr = make_problem(inner);
  for (int r = 0; r < c.repetitions; ++r) res.initial.push_back(initial_params(c, r));
  const auto parts = parallel_map<std::vector<RunRecord>>(static_cast<std::size_t>(c.repetitions), outer,
                                                          [&](std::size_t r) {
                                                            return run_repetition(c, pr, static_cast<int>(r),
                                                                                  res.initial[r]);
                                                          });
  for (const auto& p : parts) res.records.insert(res.records.end(), p.begin(), p.end());
  return res;
}

}  // namespace

RunResult run(const ExperimentConfig& c) {
  c.validate();
  RunResult res;
  switch (c.environment) {
    case EnvKind::tabular:
    case EnvKind::two_state: {
      const auto go = [&](const TabularMdp<double>& mdp, const GibbsPolicy<double>& policy) {
        with_policy(c, policy, [&](const auto& pol) {
          res = run_all(c, [&](int inner) { return tabular_problem(c, mdp, pol, inner); });
        });
      };
      if (c.environment == EnvKind::two_state) {
        const auto p = two_state_factory<double>();
        go(p.mdp, p.policy);
      } else {
        const auto mdp = load_mdp_json(c.mdp_file);
        go(mdp, random_gibbs<double>(mdp.n_states, mdp.n_actions, c.policy_params, c.policy_seed));
      }
      break;
    }
    case EnvKind::tetris: {
      const tetris::Env env(c.board_width, c.board_height);
      with_policy(c, tetris::make_policy(env), [&](const auto& pol) {
        res = run_all(c, [&](int inner) { return tetris_problem(c, env, pol, inner); });
      });
      break;
    }
    case EnvKind::nonlinear: {
      nonlinear::Params p;
      p.sigma_kappa = c.sigma_kappa;
      p.sigma_start = c.sigma_start;
      p.sigma_eps = c.sigma_eps;
      p.sigma_r = c.sigma_r;
      if (c.horizon > 0) p.horizon = c.horizon;
      const nonlinear::Env env(p);
      with_policy(c, nonlinear::make_policy(p), [&](const auto& pol) {
        res = run_all(c, [&](int inner) { return nonlinear_problem(c, env, pol, inner); });
      });
      break;
    }
  }
  return res;
}

}  // namespace apxn
