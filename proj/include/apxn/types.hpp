#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace apxn {

using Index = Eigen::Index;

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Rng = std::mt19937_64;

enum class Errc {
  NegativeReward,
  RowNotStochastic,
  BadDiscount,
  BadInitialDistribution,
  DimensionMismatch,
  ExplosionGuard,
  ActionNotLegal,
  SingularTransform,
  SingularSystem,
  NotClosedForm,
  NoRecurrentState,
  NonFiniteAccumulator,
  MissingBundleField,
  NonAscent,
  IllegalPlacement,
  SeedMatrixMismatch,
  ConfigError,
  IoError,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::NegativeReward: return "NegativeReward";
    case Errc::RowNotStochastic: return "RowNotStochastic";
    case Errc::BadDiscount: return "BadDiscount";
    case Errc::BadInitialDistribution: return "BadInitialDistribution";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ExplosionGuard: return "ExplosionGuard";
    case Errc::ActionNotLegal: return "ActionNotLegal";
    case Errc::SingularTransform: return "SingularTransform";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::NotClosedForm: return "NotClosedForm";
    case Errc::NoRecurrentState: return "NoRecurrentState";
    case Errc::NonFiniteAccumulator: return "NonFiniteAccumulator";
    case Errc::MissingBundleField: return "MissingBundleField";
    case Errc::NonAscent: return "NonAscent";
    case Errc::IllegalPlacement: return "IllegalPlacement";
    case Errc::SeedMatrixMismatch: return "SeedMatrixMismatch";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this exception; `code()`
/// identifies the failure class, `what()` carries the offending index or field.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// splitmix64 finalizer; used to derive independent stream seeds from a master seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

}  // namespace apxn
