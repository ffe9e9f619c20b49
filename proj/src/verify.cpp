#include "apxn/directions.hpp"
#include "apxn/env/tabular.hpp"
#include "apxn/exact.hpp"
#include "apxn/experiment.hpp"
#include "apxn/oracles.hpp"
#include "apxn/sampling.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace apxn {

namespace {

using Vec = VectorX<double>;
using Mat = MatrixX<double>;

Vec random_vec(Index n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

Mat random_mat(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
  return Eigen::Map<const Mat>(random_vec(r * c, seed, scale).data(), r, c);
}

template <class F>
Vec fd_grad(F&& f, const Vec& w, double h = 1e-5) {
  Vec g(w.size());
  for (Index i = 0; i < w.size(); ++i) {
    Vec a = w, b = w;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

template <class F>
Mat fd_jac(F&& f, const Vec& w, double h = 1e-5) {
  Mat j(w.size(), w.size());
  for (Index i = 0; i < w.size(); ++i) {
    Vec a = w, b = w;
    a(i) += h;
    b(i) -= h;
    j.col(i) = (f(a) - f(b)) / (2 * h);
  }
  return 0.5 * (j + j.transpose());
}

double rel_inf(const Mat& a, const Mat& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

struct Case {
  TabularMdp<double> mdp;
  GibbsPolicy<double> policy;
  Vec w;
};

Case make_case(std::uint64_t seed, std::uint64_t i, Index ns, Index na, Index nw, double gamma) {
  const auto s = split_seed(seed, i);
  return {random_tabular_mdp<double>(ns, na, gamma, split_seed(s, 0)),
          random_gibbs<double>(ns, na, nw, split_seed(s, 1)), random_vec(nw, split_seed(s, 2))};
}

GaussianLinearPolicy<double> gaussian_policy(Index ns, Index ad, Index fd, std::uint64_t seed) {
  auto feats = std::make_shared<Mat>(random_mat(fd, ns, seed));
  auto covs = std::make_shared<std::vector<Mat>>();
  for (Index s = 0; s < ns; ++s) {
    const Mat a = random_mat(ad, ad, split_seed(seed, static_cast<std::uint64_t>(s) + 1), 0.3);
    covs->push_back(a * a.transpose() + 0.5 * Mat::Identity(ad, ad));
  }
  return GaussianLinearPolicy<double>(
      ad, fd, [feats](const Index& s) -> Vec { return feats->col(s); },
      [covs](const Index& s) -> Mat { return (*covs)[static_cast<std::size_t>(s)]; }, true);
}

VerifyCheck at_most(std::string name, double value, double tol) {
  return {std::move(name), value, tol, value <= tol};
}

}  // namespace

std::vector<VerifyCheck> verify(const VerifyOptions& opt) {
  std::vector<VerifyCheck> out;
  const std::uint64_t seed = opt.seed;

  {  // score functions against finite differences of log pi
    double worst_g = 0.0, worst_h = 0.0;
    const auto pol = random_gibbs<double>(3, 4, 3, split_seed(seed, 10));
    const auto gp = gaussian_policy(3, 2, 2, split_seed(seed, 11));
    for (std::uint64_t i = 0; i < 5; ++i) {
      const Vec w = random_vec(3, split_seed(seed, 20 + i));
      const Index s = static_cast<Index>(i % 3), a = static_cast<Index>(i % 4);
      const auto lp = [&](const Vec& v) { return pol.log_prob(a, s, v); };
      worst_g = std::max(worst_g, rel_inf(pol.grad_log(a, s, w), fd_grad(lp, w)));
      worst_h = std::max(worst_h, rel_inf(pol.hess_log(a, s, w), fd_jac([&](const Vec& v) { return pol.grad_log(a, s, v); }, w)));
      const Vec wg = random_vec(gp.n_params(), split_seed(seed, 30 + i));
      const Vec act = random_vec(2, split_seed(seed, 40 + i));
      const auto glp = [&](const Vec& v) { return gp.log_prob(act, s, v); };
      worst_g = std::max(worst_g, rel_inf(gp.grad_log(act, s, wg), fd_grad(glp, wg)));
      worst_h = std::max(worst_h,
                         rel_inf(gp.hess_log(act, s, wg), fd_jac([&](const Vec& v) { return gp.grad_log(act, s, v); }, wg)));
    }
    out.push_back(at_most("policy score vs finite differences", worst_g, 1e-7));
    out.push_back(at_most("policy Hessian vs finite differences", worst_h, 1e-6));
  }

  double worst_grad = 0.0, worst_h2 = 0.0, worst_hess = 0.0, worst_value = 0.0, max_h2_eig = -1e300,
         min_g_eig = 1e300;
  for (std::uint64_t i = 0; i < 6; ++i) {
    const auto c = make_case(seed, 100 + i, 3 + static_cast<Index>(i % 2), 2 + static_cast<Index>(i % 2), 3, 0.8);
    const auto u = [&](const Vec& v) { return occupancy_and_value(c.mdp, c.policy, v).u; };
    Vec g = gradient(c.mdp, c.policy, c.w);
    g(0) += opt.gradient_perturbation;
    worst_grad = std::max(worst_grad, rel_inf(g, fd_grad(u, c.w)));

    const int cut = truncation_cut(c.mdp.gamma, c.mdp.max_reward(), 1e-10);
    const auto ts = trajectory_sums(c.mdp, c.policy, c.w, cut);
    const auto ah = approx_hessian(c.mdp, c.policy, c.w);
    worst_value = std::max(worst_value, std::abs(ts.value - u(c.w)));
    worst_h2 = std::max(worst_h2, (ah.h2 - ts.h2).cwiseAbs().maxCoeff());
    const Mat fd_h = fd_jac([&](const Vec& v) { return gradient(c.mdp, c.policy, v); }, c.w);
    worst_hess = std::max(worst_hess, rel_inf(ts.h1 + ah.h2, fd_h));
    max_h2_eig = std::max(max_h2_eig, Eigen::SelfAdjointEigenSolver<Mat>(ah.h2).eigenvalues().maxCoeff());
    min_g_eig =
        std::min(min_g_eig, Eigen::SelfAdjointEigenSolver<Mat>(fisher(c.mdp, c.policy, c.w)).eigenvalues().minCoeff());
  }
  out.push_back(at_most("value vs truncated trajectory sum", worst_value, 1e-8));
  out.push_back(at_most("gradient vs finite differences", worst_grad, 1e-6));
  out.push_back(at_most("H2 vs truncated trajectory sum", worst_h2, 1e-7));
  out.push_back(at_most("H1 + H2 vs finite-difference Hessian", worst_hess, 1e-5));
  out.push_back(at_most("max eigenvalue of H2", max_h2_eig, 1e-10));
  out.push_back(at_most("-(min eigenvalue of G)", -min_g_eig, 1e-10));

  {  // EM step against the approximate Newton step for a quadratic log-policy
    const auto mdp = random_continuous_mdp<double>(3, 2, 0.9, split_seed(seed, 200));
    const auto pol = gaussian_policy(3, 2, 2, split_seed(seed, 201));
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 5; ++i) {
      const Vec wk = random_vec(pol.n_params(), split_seed(seed, 210 + i), 0.3);
      const auto b = exact_bundle(mdp, pol, wk);
      const Vec newton = -b.h2->ldlt().solve(b.grad);
      worst = std::max(worst, (em_update(mdp, pol, wk) - wk - newton).cwiseAbs().maxCoeff());
    }
    out.push_back(at_most("EM step vs approximate Newton step", worst, 1e-8));
  }

  {  // reparametrization: full and diagonal approximate Newton directions
    double worst_full = 0.0, worst_diag = 0.0;
    for (std::uint64_t i = 0; i < 4; ++i) {
      const auto c = make_case(seed, 300 + i, 4, 3, 3, 0.9);
      const Mat t = random_mat(3, 3, split_seed(seed, 310 + i)) + 2 * Mat::Identity(3, 3);
      const Vec v = t.partialPivLu().solve(c.w);
      const Vec d = direction(Method::apxn_full, exact_bundle(c.mdp, c.policy, c.w)).d;
      const Vec dt = direction(Method::apxn_full, exact_bundle(c.mdp, reparametrize(c.policy, t), v)).d;
      worst_full = std::max(worst_full, (t * dt - d).norm() / d.norm());
      const Vec diag = Vec::LinSpaced(3, 0.5, 3.0);
      const Mat td = diag.asDiagonal();
      const Vec dd = direction(Method::apxn_diag, exact_bundle(c.mdp, c.policy, c.w)).d;
      const Vec ddt =
          direction(Method::apxn_diag, exact_bundle(c.mdp, reparametrize(c.policy, td), Vec(c.w.cwiseQuotient(diag)))).d;
      worst_diag = std::max(worst_diag, (td * ddt - dd).norm() / dd.norm());
    }
    out.push_back(at_most("apxn-full direction under reparametrization", worst_full, 1e-8));
    out.push_back(at_most("apxn-diag direction under diagonal rescaling", worst_diag, 1e-8));
  }

  {  // sampled estimators
    const auto c = make_case(seed, 400, 3, 2, 2, 0.9);
    const TabularEnv<double> env(c.mdp, Index(0), 120);
    const Vec exact = gradient(c.mdp, c.policy, c.w);
    const auto fwd = forward_estimate(env, c.policy, c.w, 20000, 0.9, split_seed(seed, 401), {false, false, 1});
    out.push_back(at_most("forward estimate vs exact gradient (1 - cosine)",
                          1.0 - fwd.grad_est.dot(exact) / (fwd.grad_est.norm() * exact.norm()), 1e-2));
    const auto one = recurrent_estimate_cycles(env, c.policy, c.w, 300, split_seed(seed, 402), {true, true, 1});
    const auto four = recurrent_estimate_cycles(env, c.policy, c.w, 300, split_seed(seed, 402), {true, true, 4});
    const double diff = (one.grad_est - four.grad_est).cwiseAbs().maxCoeff() +
                        (one.h2_est - four.h2_est).cwiseAbs().maxCoeff() +
                        (*one.fisher_est - *four.fisher_est).cwiseAbs().maxCoeff();
    out.push_back(at_most("recurrent estimate, 1 vs 4 threads", diff, 0.0));
  }
  return out;
}

std::string to_table(const std::vector<VerifyCheck>& checks) {
  std::ostringstream os;
  char buf[200];
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "%-4s %-48s %12.3e <= %.1e\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value,
                  c.tolerance);
    os << buf;
  }
  return os.str();
}

}  // namespace apxn
