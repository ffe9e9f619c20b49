#pragma once

#include "apxn/types.hpp"

#include <cmath>
#include <concepts>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>

namespace apxn {

// ---------------------------------------------------------------------------
// Policy contract
// ---------------------------------------------------------------------------

/// A differentiable parametric policy pi(a | s; w).  Implementations expose the
/// log-density together with its gradient and Hessian in w, a sampler, and two
/// structural flags consumed by EM and by the definiteness guarantees of the
/// approximate Newton directions.
template <class P>
concept PolicyModel = requires(const P& p, const typename P::Action& a, const typename P::State& s,
                               const typename P::Vector& w, Rng& rng) {
  typename P::Scalar;
  { p.n_params() } -> std::convertible_to<Index>;
  { p.log_prob(a, s, w) } -> std::convertible_to<typename P::Scalar>;
  { p.grad_log(a, s, w) } -> std::convertible_to<typename P::Vector>;
  { p.hess_log(a, s, w) } -> std::convertible_to<typename P::Matrix>;
  { p.sample(s, w, rng) } -> std::convertible_to<typename P::Action>;
  { P::is_log_concave } -> std::convertible_to<bool>;
  { P::is_log_quadratic } -> std::convertible_to<bool>;
};

/// Policies over a finite action list per state.
template <class P>
concept DiscretePolicy = PolicyModel<P> && requires(const P& p, const typename P::State& s,
                                                    const typename P::Vector& w, typename P::Action a) {
  { p.probabilities(s, w) } -> std::convertible_to<typename P::Vector>;
  { p.action_id(s, a) } -> std::convertible_to<Index>;
};

/// Gaussian policies whose mean is linear in w: mean(s, w) = design(s) * w.
template <class P>
concept LinearGaussianPolicy = PolicyModel<P> && requires(const P& p, const typename P::State& s,
                                                          const typename P::Vector& w) {
  { p.design(s) } -> std::convertible_to<typename P::Matrix>;
  { p.mean(s, w) } -> std::convertible_to<typename P::Vector>;
  { p.noise_covariance(s) } -> std::convertible_to<typename P::Matrix>;
};

namespace detail {

inline void require(bool ok, Errc code, const char* what) {
  if (!ok) throw Error(code, what);
}

template <class Scalar>
Scalar uniform01(Rng& rng) {
  return Scalar(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gibbs (softmax over action features)
// ---------------------------------------------------------------------------

/// pi(a | s; w) proportional to exp(w' phi(a, s)).  The feature map returns one
/// row per legal action of `s`; actions are row indices into that matrix.
/// `action_id` maps a row to an environment action id (identity by default).
template <class Scalar_, class State_ = Index>
class GibbsPolicy {
 public:
  using Scalar = Scalar_;
  using State = State_;
  using Action = Index;
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;
  using FeatureFn = std::function<const Matrix&(const State&)>;
  using ActionIdFn = std::function<Index(const State&, Action)>;

  static constexpr bool is_log_concave = true;
  static constexpr bool is_log_quadratic = false;

  GibbsPolicy(Index n_params, FeatureFn features, ActionIdFn action_id = {})
      : n_params_(n_params), features_(std::move(features)), action_id_(std::move(action_id)) {}

  Index n_params() const { return n_params_; }

  const Matrix& features(const State& s) const {
    const Matrix& f = features_(s);
    detail::require(f.cols() == n_params_, Errc::DimensionMismatch, "feature width != n_params");
    detail::require(f.rows() > 0, Errc::ActionNotLegal, "state has no legal action");
    return f;
  }

  Index n_actions(const State& s) const { return features(s).rows(); }

  Index action_id(const State& s, Action a) const { return action_id_ ? action_id_(s, a) : a; }

  Vector logits(const State& s, const Vector& w) const {
    check_params(w);
    return features(s) * w;
  }

  Vector probabilities(const State& s, const Vector& w) const {
    Vector z = logits(s, w);
    z.array() -= z.maxCoeff();
    Vector p = z.array().exp();
    return p / p.sum();
  }

  Scalar log_prob(Action a, const State& s, const Vector& w) const {
    const Vector z = logits(s, w);
    check_action(a, z.size());
    const Scalar m = z.maxCoeff();
    return z(a) - (m + std::log((z.array() - m).exp().sum()));
  }

  /// phi(a, s) - E_pi[phi]
  Vector grad_log(Action a, const State& s, const Vector& w) const {
    const Matrix& f = features(s);
    check_action(a, f.rows());
    const Vector p = probabilities(s, w);
    return f.row(a).transpose() - f.transpose() * p;
  }

  /// -Cov_pi[phi]; the same for every action of a state.
  Matrix hess_log(Action a, const State& s, const Vector& w) const {
    const Matrix& f = features(s);
    check_action(a, f.rows());
    const Vector p = probabilities(s, w);
    const Matrix centered = f.rowwise() - (f.transpose() * p).transpose();
    Matrix h = -(centered.transpose() * (p.asDiagonal() * centered));
    return Scalar(0.5) * (h + h.transpose());
  }

  Action sample(const State& s, const Vector& w, Rng& rng) const {
    const Vector p = probabilities(s, w);
    Scalar u = detail::uniform01<Scalar>(rng);
    for (Index i = 0; i < p.size(); ++i) {
      u -= p(i);
      if (u < Scalar(0)) return i;
    }
    return p.size() - 1;
  }

 private:
  void check_params(const Vector& w) const {
    detail::require(w.size() == n_params_, Errc::DimensionMismatch, "parameter vector has wrong size");
  }
  static void check_action(Action a, Index n) {
    detail::require(a >= 0 && a < n, Errc::ActionNotLegal, "action index out of range");
  }

  Index n_params_;
  FeatureFn features_;
  ActionIdFn action_id_;
};

// ---------------------------------------------------------------------------
// Gaussian with linear mean
// ---------------------------------------------------------------------------

/// pi(a | s; w) = N(a | K phi(s) + m, Sigma(s)) with w = (vec(K), m); K is
/// stored column-major.  Only the mean is parameterized; Sigma(s) is fixed.
template <class Scalar_, class State_ = Index>
class GaussianLinearPolicy {
 public:
  using Scalar = Scalar_;
  using State = State_;
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;
  using Action = Vector;
  using FeatureFn = std::function<Vector(const State&)>;
  using CovarianceFn = std::function<Matrix(const State&)>;

  static constexpr bool is_log_concave = true;
  static constexpr bool is_log_quadratic = true;

  GaussianLinearPolicy(Index action_dim, Index feature_dim, FeatureFn features, CovarianceFn covariance,
                       bool with_offset = true)
      : action_dim_(action_dim),
        feature_dim_(feature_dim),
        with_offset_(with_offset),
        features_(std::move(features)),
        covariance_(std::move(covariance)) {}

  Index n_params() const { return action_dim_ * feature_dim_ + (with_offset_ ? action_dim_ : 0); }
  Index action_dim() const { return action_dim_; }

  Matrix design(const State& s) const {
    const Vector phi = features_(s);
    detail::require(phi.size() == feature_dim_, Errc::DimensionMismatch, "state feature size");
    Matrix psi = Matrix::Zero(action_dim_, n_params());
    for (Index j = 0; j < feature_dim_; ++j)
      for (Index i = 0; i < action_dim_; ++i) psi(i, i + j * action_dim_) = phi(j);
    if (with_offset_)
      for (Index i = 0; i < action_dim_; ++i) psi(i, action_dim_ * feature_dim_ + i) = Scalar(1);
    return psi;
  }

  Vector mean(const State& s, const Vector& w) const {
    detail::require(w.size() == n_params(), Errc::DimensionMismatch, "parameter vector has wrong size");
    return design(s) * w;
  }

  Matrix noise_covariance(const State& s) const { return covariance_(s); }

  Scalar log_prob(const Action& a, const State& s, const Vector& w) const {
    check_action(a);
    const Eigen::LLT<Matrix> llt(covariance_(s));
    const Vector z = llt.matrixL().solve(a - mean(s, w));
    const Scalar log_det = Scalar(2) * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return Scalar(-0.5) * (z.squaredNorm() + log_det +
                           Scalar(action_dim_) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>));
  }

  Vector grad_log(const Action& a, const State& s, const Vector& w) const {
    check_action(a);
    const Matrix psi = design(s);
    const Eigen::LLT<Matrix> llt(covariance_(s));
    return psi.transpose() * llt.solve(a - psi * w);
  }

  Matrix hess_log(const Action& a, const State& s, const Vector& w) const {
    check_action(a);
    detail::require(w.size() == n_params(), Errc::DimensionMismatch, "parameter vector has wrong size");
    const Matrix psi = design(s);
    const Eigen::LLT<Matrix> llt(covariance_(s));
    Matrix h = -(psi.transpose() * llt.solve(psi));
    return Scalar(0.5) * (h + h.transpose());
  }

  Action sample(const State& s, const Vector& w, Rng& rng) const {
    const Eigen::LLT<Matrix> llt(covariance_(s));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector z(action_dim_);
    for (Index i = 0; i < action_dim_; ++i) z(i) = Scalar(normal(rng));
    return mean(s, w) + llt.matrixL() * z;
  }

 private:
  void check_action(const Action& a) const {
    detail::require(a.size() == action_dim_, Errc::DimensionMismatch, "action has wrong dimension");
  }

  Index action_dim_;
  Index feature_dim_;
  bool with_offset_;
  FeatureFn features_;
  CovarianceFn covariance_;
};

// ---------------------------------------------------------------------------
// Linear reparametrization
// ---------------------------------------------------------------------------

/// pi~(a | s; w) = pi(a | s; T w).  Gradients map through T', Hessians through
/// T' (.) T.
template <PolicyModel Policy>
class Reparametrized {
 public:
  using Scalar = typename Policy::Scalar;
  using State = typename Policy::State;
  using Action = typename Policy::Action;
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  static constexpr bool is_log_concave = Policy::is_log_concave;
  static constexpr bool is_log_quadratic = Policy::is_log_quadratic;

  Reparametrized(Policy inner, Matrix transform) : inner_(std::move(inner)), transform_(std::move(transform)) {}

  const Policy& inner() const { return inner_; }
  const Matrix& transform() const { return transform_; }
  Index n_params() const { return transform_.cols(); }

  /// Original-space parameters for reparametrized parameters w.
  Vector map(const Vector& w) const {
    detail::require(w.size() == n_params(), Errc::DimensionMismatch, "parameter vector has wrong size");
    return transform_ * w;
  }

  Scalar log_prob(const Action& a, const State& s, const Vector& w) const { return inner_.log_prob(a, s, map(w)); }

  Vector grad_log(const Action& a, const State& s, const Vector& w) const {
    return transform_.transpose() * inner_.grad_log(a, s, map(w));
  }

  Matrix hess_log(const Action& a, const State& s, const Vector& w) const {
    return transform_.transpose() * inner_.hess_log(a, s, map(w)) * transform_;
  }

  Action sample(const State& s, const Vector& w, Rng& rng) const { return inner_.sample(s, map(w), rng); }

  Vector probabilities(const State& s, const Vector& w) const
    requires DiscretePolicy<Policy>
  {
    return inner_.probabilities(s, map(w));
  }

  Index action_id(const State& s, Action a) const
    requires DiscretePolicy<Policy>
  {
    return inner_.action_id(s, a);
  }

  Matrix design(const State& s) const
    requires LinearGaussianPolicy<Policy>
  {
    return inner_.design(s) * transform_;
  }

  Vector mean(const State& s, const Vector& w) const
    requires LinearGaussianPolicy<Policy>
  {
    return inner_.mean(s, map(w));
  }

  Matrix noise_covariance(const State& s) const
    requires LinearGaussianPolicy<Policy>
  {
    return inner_.noise_covariance(s);
  }

 private:
  Policy inner_;
  Matrix transform_;
};

/// Rejects non-square transforms and those with estimated condition number
/// above 1e12.
template <PolicyModel Policy>
Reparametrized<Policy> reparametrize(Policy policy, const MatrixX<typename Policy::Scalar>& transform) {
  using Scalar = typename Policy::Scalar;
  if (transform.rows() != transform.cols() || transform.rows() != policy.n_params())
    throw Error(Errc::DimensionMismatch, "transform must be n_params x n_params");
  const Eigen::JacobiSVD<MatrixX<Scalar>> svd(transform);
  const auto& sv = svd.singularValues();
  const Scalar smin = sv(sv.size() - 1);
  if (!(smin > Scalar(0)) || sv(0) / smin > Scalar(1e12))
    throw Error(Errc::SingularTransform, "transform is singular or ill-conditioned");
  return Reparametrized<Policy>(std::move(policy), transform);
}

// ---------------------------------------------------------------------------
// Weighted maximum likelihood (the EM M-step for log-quadratic policies)
// ---------------------------------------------------------------------------

template <class Policy>
struct WeightedSample {
  typename Policy::State state;
  typename Policy::Action action;
  typename Policy::Scalar weight;
};

/// argmax_w sum_i weight_i log pi(a_i | s_i; w) for a Gaussian policy with
/// linear mean: the weighted least-squares normal equations.  A singular
/// normal matrix gets a ridge of 1e-10 * trace.
template <LinearGaussianPolicy Policy>
VectorX<typename Policy::Scalar> fit_weighted(const Policy& policy,
                                              std::span<const WeightedSample<Policy>> samples) {
  using Scalar = typename Policy::Scalar;
  using Matrix = MatrixX<Scalar>;
  const Index n = policy.n_params();
  Matrix normal = Matrix::Zero(n, n);
  VectorX<Scalar> rhs = VectorX<Scalar>::Zero(n);
  for (const auto& smp : samples) {
    if (smp.weight == Scalar(0)) continue;
    const Matrix psi = policy.design(smp.state);
    const Eigen::LLT<Matrix> llt(policy.noise_covariance(smp.state));
    const Matrix prec_psi = llt.solve(psi);
    normal.noalias() += smp.weight * psi.transpose() * prec_psi;
    rhs.noalias() += smp.weight * prec_psi.transpose() * smp.action;
  }
  normal = Scalar(0.5) * (normal + normal.transpose());
  Eigen::LDLT<Matrix> ldlt(normal);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > Scalar(1e-13))) {
    const Scalar tr = normal.trace();
    const Scalar ridge = Scalar(1e-10) * (tr > Scalar(0) ? tr : Scalar(1));
    ldlt.compute(normal + ridge * Matrix::Identity(n, n));
  }
  return ldlt.solve(rhs);
}

}  // namespace apxn
