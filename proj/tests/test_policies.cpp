#include "apxn/policies.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace apxn;
using namespace apxn::testing;

namespace {

GibbsPolicy<double> fixed_gibbs(Mat f) { return tabular_gibbs<double>({std::move(f)}); }

double max_eig(const Mat& m) { return Eigen::SelfAdjointEigenSolver<Mat>(m).eigenvalues().maxCoeff(); }

}  // namespace

TEST_SUITE("policies") {
  TEST_CASE("Gibbs with one legal action is degenerate") {
    const auto pol = fixed_gibbs(random_matrix(1, 3, 1));
    const Vec w = random_vector(3, 2);
    CHECK(pol.log_prob(0, 0, w) == doctest::Approx(0.0));
    CHECK(pol.grad_log(0, 0, w).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(pol.hess_log(0, 0, w).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("Gibbs at zero weights is uniform") {
    Mat f(2, 1);
    f << 1, 0;
    const auto pol = fixed_gibbs(f);
    CHECK(pol.log_prob(0, 0, Vec::Zero(1)) == doctest::Approx(-std::log(2.0)));
    CHECK(pol.log_prob(1, 0, Vec::Zero(1)) == doctest::Approx(-std::log(2.0)));
  }

  TEST_CASE("Gibbs log-probabilities normalize, also for huge logits") {
    const auto pol = fixed_gibbs(random_matrix(5, 3, 3));
    for (double scale : {0.1, 1.0, 100.0, 1e4}) {
      const Vec w = random_vector(3, 4, scale);
      double total = 0;
      for (Index a = 0; a < 5; ++a) total += std::exp(pol.log_prob(a, 0, w));
      CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    }
  }

  TEST_CASE("Gibbs derivatives match finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto pol = fixed_gibbs(random_matrix(4, 3, 10 + seed));
      const Vec w = random_vector(3, 20 + seed);
      for (Index a = 0; a < 4; ++a) {
        const Vec g = pol.grad_log(a, 0, w);
        const Vec fd = fd_gradient([&](const Vec& v) { return pol.log_prob(a, 0, v); }, w, 1e-6);
        CHECK((g - fd).cwiseAbs().maxCoeff() / std::max(1.0, g.cwiseAbs().maxCoeff()) < 1e-5);
        const Mat h = pol.hess_log(a, 0, w);
        const Mat fdh = fd_jacobian([&](const Vec& v) { return pol.grad_log(a, 0, v); }, w, 1e-5);
        CHECK(rel_err(h, fdh) < 1e-4);
        CHECK(h.isApprox(h.transpose(), 0.0));
        CHECK(max_eig(h) <= 1e-10);
      }
    }
  }

  TEST_CASE("Gibbs rejects illegal actions and wrong parameter sizes") {
    const auto pol = fixed_gibbs(random_matrix(3, 2, 5));
    CHECK_THROWS_AS(pol.log_prob(3, 0, Vec::Zero(2)), Error);
    CHECK_THROWS_AS(pol.grad_log(0, 0, Vec::Zero(3)), Error);
  }

  TEST_CASE("Gibbs sample histogram matches the probabilities") {
    const auto pol = fixed_gibbs(random_matrix(4, 2, 6));
    const Vec w = random_vector(2, 7);
    const Vec p = pol.probabilities(0, w);
    Rng rng(123);
    const int n = 100000;
    Vec counts = Vec::Zero(4);
    for (int i = 0; i < n; ++i) counts(pol.sample(0, w, rng)) += 1;
    for (Index a = 0; a < 4; ++a) {
      const double sd = std::sqrt(n * p(a) * (1 - p(a)));
      CHECK(std::abs(counts(a) - n * p(a)) <= 3 * sd + 1);
    }
  }

  TEST_CASE("Gaussian-linear derivatives, constant Hessian") {
    const auto pol = random_gaussian_policy(3, 2, 3, 41);
    const Index n = pol.n_params();
    CHECK(n == 2 * 3 + 2);
    const Vec w1 = random_vector(n, 42), w2 = random_vector(n, 43);
    for (Index s = 0; s < 3; ++s) {
      const Vec a = random_vector(2, 50 + static_cast<std::uint64_t>(s));
      const Vec g = pol.grad_log(a, s, w1);
      const Vec fd = fd_gradient([&](const Vec& v) { return pol.log_prob(a, s, v); }, w1, 1e-6);
      CHECK((g - fd).cwiseAbs().maxCoeff() / std::max(1.0, g.cwiseAbs().maxCoeff()) < 1e-5);
      const Mat h = pol.hess_log(a, s, w1);
      CHECK(rel_err(h, fd_jacobian([&](const Vec& v) { return pol.grad_log(a, s, v); }, w1, 1e-5)) < 1e-4);
      CHECK(h == pol.hess_log(a, s, w2));
      CHECK(max_eig(h) <= 1e-10);
    }
  }

  TEST_CASE("Gaussian-linear mean layout") {
    // K is 2x3 column-major, then m.
    auto feats = [](const Index&) -> Vec { return Vec::LinSpaced(3, 1, 3); };
    auto cov = [](const Index&) -> Mat { return Mat::Identity(2, 2); };
    GaussianLinearPolicy<double> pol(2, 3, feats, cov);
    Vec w(8);
    w << 1, 2, 3, 4, 5, 6, 10, 20;
    Mat k(2, 3);
    k << 1, 3, 5, 2, 4, 6;
    const Vec expected = k * Vec::LinSpaced(3, 1, 3) + Vec((Vec(2) << 10, 20).finished());
    CHECK(pol.mean(0, w).isApprox(expected));
  }

  TEST_CASE("Gaussian-linear sample moments") {
    const auto pol = random_gaussian_policy(2, 2, 2, 61);
    const Vec w = random_vector(pol.n_params(), 62);
    Rng rng(5);
    const int n = 100000;
    Vec mean = Vec::Zero(2);
    Mat second = Mat::Zero(2, 2);
    for (int i = 0; i < n; ++i) {
      const Vec a = pol.sample(1, w, rng);
      mean += a;
      second += a * a.transpose();
    }
    mean /= n;
    const Mat cov = second / n - mean * mean.transpose();
    const Mat sigma = pol.noise_covariance(1);
    const Vec mu = pol.mean(1, w);
    for (Index i = 0; i < 2; ++i) CHECK(std::abs(mean(i) - mu(i)) <= 3 * std::sqrt(sigma(i, i) / n));
    for (Index i = 0; i < 2; ++i)
      for (Index j = 0; j < 2; ++j) {
        const double sd = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / n);
        CHECK(std::abs(cov(i, j) - sigma(i, j)) <= 4 * sd);
      }
  }

  TEST_CASE("reparametrize: identity is bitwise identical") {
    const auto pol = fixed_gibbs(random_matrix(3, 3, 70));
    const auto rp = reparametrize(pol, Mat::Identity(3, 3));
    const Vec w = random_vector(3, 71);
    CHECK(rp.log_prob(1, 0, w) == pol.log_prob(1, 0, w));
    CHECK(rp.grad_log(1, 0, w) == pol.grad_log(1, 0, w));
    CHECK(rp.hess_log(1, 0, w) == pol.hess_log(1, 0, w));
  }

  TEST_CASE("reparametrize: 2I scales through the chain rule") {
    const auto pol = fixed_gibbs(random_matrix(3, 3, 72));
    const auto rp = reparametrize(pol, Mat(2 * Mat::Identity(3, 3)));
    const Vec w = random_vector(3, 73);
    CHECK(rp.grad_log(2, 0, w).isApprox(2 * pol.grad_log(2, 0, Vec(2 * w)), 1e-14));
  }

  TEST_CASE("reparametrize: random transform maps gradients and Hessians") {
    const auto pol = fixed_gibbs(random_matrix(4, 3, 74));
    const Mat t = random_matrix(3, 3, 75) + 2 * Mat::Identity(3, 3);
    const auto rp = reparametrize(pol, t);
    const Vec w = random_vector(3, 76);
    for (Index a = 0; a < 4; ++a) {
      CHECK(rp.log_prob(a, 0, w) == doctest::Approx(pol.log_prob(a, 0, Vec(t * w))).epsilon(1e-14));
      CHECK((rp.grad_log(a, 0, w) - t.transpose() * pol.grad_log(a, 0, Vec(t * w))).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((rp.hess_log(a, 0, w) - t.transpose() * pol.hess_log(a, 0, Vec(t * w)) * t).cwiseAbs().maxCoeff() <
            1e-10);
    }
  }

  TEST_CASE("reparametrize rejects singular and mis-sized transforms") {
    const auto pol = fixed_gibbs(random_matrix(3, 2, 77));
    Mat t(2, 2);
    t << 1, 2, 2, 4;
    try {
      (void)reparametrize(pol, t);
      FAIL("expected SingularTransform");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::SingularTransform);
    }
    CHECK_THROWS_AS((void)reparametrize(pol, Mat::Identity(3, 3)), Error);
  }

  TEST_CASE("weighted fit equals an independent least-squares solve") {
    const auto pol = random_gaussian_policy(4, 2, 2, 80);
    std::vector<WeightedSample<GaussianLinearPolicy<double>>> samples;
    Rng rng(81);
    std::uniform_real_distribution<double> unif(0.1, 2.0);
    for (int i = 0; i < 30; ++i)
      samples.push_back({Index(i % 4), random_vector(2, 100 + static_cast<std::uint64_t>(i)), unif(rng)});
    const Vec w = fit_weighted(pol, std::span<const WeightedSample<GaussianLinearPolicy<double>>>(samples));

    // Stack whitened rows sqrt(c) L^{-1} design and solve by QR.
    Mat a(60, pol.n_params());
    Vec b(60);
    for (int i = 0; i < 30; ++i) {
      const auto& smp = samples[static_cast<std::size_t>(i)];
      const Eigen::LLT<Mat> llt(pol.noise_covariance(smp.state));
      const Mat l = llt.matrixL();
      a.middleRows(2 * i, 2) = std::sqrt(smp.weight) * l.triangularView<Eigen::Lower>().solve(pol.design(smp.state));
      b.segment(2 * i, 2) = std::sqrt(smp.weight) * l.triangularView<Eigen::Lower>().solve(smp.action);
    }
    const Vec ref = a.colPivHouseholderQr().solve(b);
    CHECK((w - ref).cwiseAbs().maxCoeff() < 1e-10);
  }
}
