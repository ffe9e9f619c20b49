#include "apxn/env/tabular.hpp"
#include "apxn/exact.hpp"
#include "apxn/sampling.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace apxn;
using namespace apxn::testing;

namespace {

TabularEnv<double> zero_reward_env(int horizon) {
  auto m = random_tabular_mdp<double>(4, 2, 0.9, 5);
  m.reward.setZero();
  return TabularEnv<double>(m, Index(0), horizon);
}

bool same(const EstimateReport<double>& a, const EstimateReport<double>& b) {
  bool eq = a.grad_est == b.grad_est && a.h2_est == b.h2_est && a.d2_est == b.d2_est && a.n_samples == b.n_samples &&
            a.n_regenerations == b.n_regenerations && a.total_reward == b.total_reward;
  if (a.fisher_est.has_value() != b.fisher_est.has_value()) return false;
  if (a.fisher_est) eq = eq && *a.fisher_est == *b.fisher_est;
  return eq;
}

}  // namespace

TEST_SUITE("sampling-estimators") {
  TEST_CASE("zero reward gives all-zero estimates") {
    const auto env = zero_reward_env(20);
    const auto pol = random_gibbs<double>(4, 2, 3, 6);
    const Vec w = random_vector(3, 7);
    const auto r = recurrent_estimate(env, pol, w, 5000, 1);
    CHECK(r.grad_est.isZero(0));
    CHECK(r.h2_est.isZero(0));
    CHECK(r.n_samples == 5000);
    CHECK(r.n_regenerations > 0);
    const auto f = forward_estimate(env, pol, w, 100, 0.9, 2);
    CHECK(f.grad_est.isZero(0));
    CHECK(f.h2_est.isZero(0));
  }

  TEST_CASE("a chain that sits in the recurrent state never accumulates") {
    TabularMdp<double> m;
    m.n_states = 1;
    m.n_actions = 3;
    m.gamma = 0.5;
    m.p1 = Vec::Ones(1);
    m.trans = Mat::Ones(3, 1);
    m.reward = Mat::Constant(1, 3, 2.0);
    const TabularEnv<double> env(m, Index(0));
    const auto pol = random_gibbs<double>(1, 3, 2, 8);
    const auto r = recurrent_estimate(env, pol, random_vector(2, 9), 1000, 3);
    CHECK(r.grad_est.isZero(0));
    CHECK(r.h2_est.isZero(0));
    CHECK(r.n_regenerations == 1000);
  }

  TEST_CASE("recurrent estimator needs a recurrent state") {
    const TabularEnv<double> env(random_tabular_mdp<double>(3, 2, 0.9, 1));
    const auto pol = random_gibbs<double>(3, 2, 2, 2);
    try {
      (void)recurrent_estimate(env, pol, Vec(Vec::Zero(2)), 10, 1);
      FAIL("expected NoRecurrentState");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NoRecurrentState);
    }
  }

  TEST_CASE("non-finite features are reported") {
    const TabularEnv<double> env(random_tabular_mdp<double>(2, 2, 0.9, 1), Index(0));
    Mat bad = Mat::Ones(2, 1);
    bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
    const auto pol = tabular_gibbs<double>({Mat::Ones(2, 1), bad});
    try {
      (void)recurrent_estimate(env, pol, Vec(Vec::Ones(1)), 200, 1);
      FAIL("expected NonFiniteAccumulator");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NonFiniteAccumulator);
    }
  }

  TEST_CASE("estimates are exactly symmetric and bit-identical across thread counts") {
    const TabularEnv<double> env(random_tabular_mdp<double>(4, 3, 0.9, 11), Index(2), 30);
    const auto pol = random_gibbs<double>(4, 3, 4, 12);
    const Vec w = random_vector(4, 13);
    EstimatorOptions one{true, true, 1}, four{true, true, 4};

    const auto a = forward_estimate(env, pol, w, 300, 0.9, 77, one);
    const auto b = forward_estimate(env, pol, w, 300, 0.9, 77, four);
    CHECK(same(a, b));
    CHECK(a.h2_est == a.h2_est.transpose());
    CHECK(*a.fisher_est == a.fisher_est->transpose());
    CHECK(a.d2_est == a.h2_est.diagonal());

    const auto c = recurrent_estimate_cycles(env, pol, w, 200, 78, one);
    const auto d = recurrent_estimate_cycles(env, pol, w, 200, 78, four);
    CHECK(same(c, d));
    CHECK(c.h2_est == c.h2_est.transpose());
    CHECK(c.n_episodes == 200);

    const auto e = recurrent_estimate(env, pol, w, 5000, 79, one);
    CHECK(same(e, recurrent_estimate(env, pol, w, 5000, 79, one)));
    CHECK(e.h2_est == e.h2_est.transpose());
  }

  TEST_CASE("one-step forward estimate matches the analytic expectation") {
    const auto m = random_tabular_mdp<double>(3, 3, 0.9, 21);
    const TabularEnv<double> env(m, std::nullopt, 1);
    const auto pol = random_gibbs<double>(3, 3, 2, 22);
    const Vec w = random_vector(2, 23);

    Vec mean = Vec::Zero(2), second = Vec::Zero(2);
    for (Index s = 0; s < 3; ++s) {
      const Vec p = pol.probabilities(s, w);
      for (Index a = 0; a < 3; ++a) {
        const Vec x = m.reward(s, a) * pol.grad_log(a, s, w);
        mean += m.p1(s) * p(a) * x;
        second += m.p1(s) * p(a) * x.cwiseProduct(x);
      }
    }
    const int n = 10000;
    const Vec se = ((second - mean.cwiseProduct(mean)) / n).cwiseSqrt();
    const auto r = forward_estimate(env, pol, w, n, 0.9, 24);
    for (Index i = 0; i < 2; ++i) CHECK(std::abs(r.grad_est(i) - mean(i)) <= 3 * se(i));
  }

  TEST_CASE("forward estimate is consistent with the exact gradient") {
    const auto m = random_tabular_mdp<double>(3, 2, 0.95, 31);
    int horizon = 1;
    while (std::pow(0.95, horizon) >= 1e-4) ++horizon;
    const TabularEnv<double> env(m, std::nullopt, horizon);
    const auto pol = random_gibbs<double>(3, 2, 2, 32);
    const Vec w = random_vector(2, 33);
    const Vec exact = gradient(m, pol, w);

    const int batches = 20, per_batch = 5000;
    std::vector<Vec> est;
    Vec mean = Vec::Zero(2);
    EstimatorOptions opt{false, false, 0};
    for (int b = 0; b < batches; ++b) {
      est.push_back(forward_estimate(env, pol, w, per_batch, 0.95, 1000 + static_cast<std::uint64_t>(b), opt).grad_est);
      mean += est.back() / batches;
    }
    Vec var = Vec::Zero(2);
    for (const auto& e : est) var += (e - mean).cwiseProduct(e - mean) / (batches - 1);
    const Vec se = (var / batches).cwiseSqrt();
    for (Index i = 0; i < 2; ++i) CHECK(std::abs(mean(i) - exact(i)) <= 3 * se(i));
  }

  TEST_CASE("cycle-mean return counts reward per regeneration") {
    const TabularEnv<double> env(random_tabular_mdp<double>(3, 2, 0.9, 41), Index(0));
    const auto pol = random_gibbs<double>(3, 2, 2, 42);
    const Vec w = random_vector(2, 43);
    const double a = mean_cycle_return(env, pol, w, 500, 9, 1);
    CHECK(a == mean_cycle_return(env, pol, w, 500, 9, 3));
    CHECK(a > 0);
  }

  TEST_CASE("forward estimate hands out weighted samples for the M-step") {
    const TabularEnv<double> env(random_tabular_mdp<double>(3, 2, 0.9, 51), std::nullopt, 10);
    const auto pol = random_gibbs<double>(3, 2, 2, 52);
    std::vector<WeightedSample<GibbsPolicy<double>>> samples;
    const auto r = forward_estimate(env, pol, Vec(Vec::Zero(2)), 50, 0.9, 53, {}, &samples);
    CHECK(samples.size() == r.n_samples);
    Vec g = Vec::Zero(2);
    for (const auto& s : samples) g += s.weight * pol.grad_log(s.action, s.state, Vec::Zero(2));
    CHECK((g - r.grad_est).cwiseAbs().maxCoeff() < 1e-12);
  }
}
