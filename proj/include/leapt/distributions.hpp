// Diagonal Gaussian, categorical and Bernoulli distributions.
//
// Value-level types are templated on the scalar; graph-level counterparts
// (GaussianVar) live on the autodiff tape and are used by the training losses.
#pragma once

#include "leapt/tape.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace leapt {

inline constexpr double kMinVariance = 1e-6;
inline constexpr double kMaxVariance = 1e6;
inline const double kMinLogVar = std::log(kMinVariance);
inline const double kMaxLogVar = std::log(kMaxVariance);

class InfiniteDivergence : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DiagGaussian {
  VectorX<Scalar> mean;
  VectorX<Scalar> log_var;

  DiagGaussian() = default;
  /// Clamps log_var so that exp(log_var) lies in [1e-6, 1e6].
  DiagGaussian(VectorX<Scalar> m, VectorX<Scalar> lv) : mean(std::move(m)), log_var(std::move(lv)) {
    if (mean.size() != log_var.size()) throw ConfigError("DiagGaussian: mean/log_var size mismatch");
    log_var = log_var.cwiseMax(Scalar(kMinLogVar)).cwiseMin(Scalar(kMaxLogVar));
  }

  static DiagGaussian standard(Eigen::Index dim) {
    return DiagGaussian(VectorX<Scalar>::Zero(dim), VectorX<Scalar>::Zero(dim));
  }

  Eigen::Index dim() const { return mean.size(); }
  VectorX<Scalar> variance() const { return log_var.array().exp().matrix(); }
  VectorX<Scalar> stddev() const { return (Scalar(0.5) * log_var.array()).exp().matrix(); }
};

/// mean + exp(0.5 * log_var) * noise, for a batch of noise columns.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> rsample(const DiagGaussian<Scalar>& d,
                                                              const Eigen::MatrixBase<Derived>& noise) {
  if (noise.rows() != d.dim()) throw ConfigError("rsample: noise dimension mismatch");
  return (noise.array().colwise() * d.stddev().array()).matrix().colwise() + d.mean;
}

template <typename Scalar, typename Derived>
Scalar log_prob(const DiagGaussian<Scalar>& d, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != d.dim()) throw ConfigError("log_prob: dimension mismatch");
  const Scalar log2pi = std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> diff = (x.derived().template cast<Scalar>() - d.mean).array();
  return Scalar(-0.5) * (Scalar(d.dim()) * log2pi + d.log_var.sum() + (diff.square() / d.variance().array()).sum());
}

/// Closed-form KL(q || p).
template <typename Scalar>
Scalar kl(const DiagGaussian<Scalar>& q, const DiagGaussian<Scalar>& p) {
  if (q.dim() != p.dim()) throw ConfigError("kl: dimension mismatch");
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> vq = q.variance().array();
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> vp = p.variance().array();
  const Eigen::Array<Scalar, Eigen::Dynamic, 1> d2 = (q.mean - p.mean).array().square();
  return Scalar(0.5) * (p.log_var.array() - q.log_var.array() + (vq + d2) / vp - Scalar(1)).sum();
}

struct CategoricalDist {
  Vector probs;

  CategoricalDist() = default;
  /// Validates entries >= 0 and sum = 1 within 1e-9.
  explicit CategoricalDist(Vector p);
  static CategoricalDist uniform(Index k) { return CategoricalDist(Vector::Constant(k, 1.0 / static_cast<double>(k))); }
  Index size() const { return probs.size(); }
  double entropy() const;
};

struct BernoulliDist {
  double p_left = 0.5;

  BernoulliDist() = default;
  explicit BernoulliDist(double p);
  CategoricalDist as_categorical() const;  // [p_left, 1 - p_left]
};

/// sum_i q_i ln(q_i / p_i) with 0 ln 0 := 0. Throws InfiniteDivergence when
/// q puts mass where p has none.
double kl(const CategoricalDist& q, const CategoricalDist& p);

// ---- graph-level ----------------------------------------------------------

struct GaussianVar {
  Var mean;
  Var log_var;
};

/// Splits a (2d x B) head output into mean and clamped log-variance.
GaussianVar gaussian_from_head(const Var& head, Index dim);
GaussianVar standard_gaussian(Tape& tape, Index dim, Index cols);
GaussianVar fixed_variance(const Var& mean, double log_var);

Var rsample(const GaussianVar& d, const Matrix& noise);
/// Per-column log density (1 x B).
Var log_prob(const GaussianVar& d, const Var& x);
/// Per-column KL(q || p) (1 x B).
Var kl(const GaussianVar& q, const GaussianVar& p);

}  // namespace leapt
