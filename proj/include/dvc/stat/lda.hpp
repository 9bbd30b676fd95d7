#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "dvc/common.hpp"
#include "dvc/error.hpp"

namespace dvc {

struct LdaSolver {
  enum class Kind { svd, eigen_shrinkage };
  Kind kind = Kind::svd;
  std::optional<double> shrinkage;  // eigen_shrinkage only; nullopt = Ledoit-Wolf

  static LdaSolver svd() { return {}; }
  static LdaSolver eigen(std::optional<double> gamma = std::nullopt) {
    return {Kind::eigen_shrinkage, gamma};
  }

  bool operator==(const LdaSolver&) const = default;
};

/// Binary discriminant axis. Unit-norm weights oriented so that class1
/// projects above class0; `threshold` is the midpoint of the projected means.
struct LdaAxis {
  Vector weights;
  double threshold = 0.0;
  std::pair<int, int> class_order{0, 1};
  double shrinkage_used = 0.0;
};

/// Ledoit-Wolf shrinkage intensity toward the trace-scaled identity for
/// already-centered rows.
inline double ledoit_wolf_shrinkage(const Matrix& centered) {
  const double n = static_cast<double>(centered.rows());
  const double p = static_cast<double>(centered.cols());
  const Matrix x2 = centered.array().square().matrix();
  const Vector emp_trace = x2.colwise().sum().transpose() / n;
  const double mu = emp_trace.sum() / p;
  const double beta_sum = (x2.transpose() * x2).sum();
  const double delta_sum = (centered.transpose() * centered).array().square().sum() / (n * n);
  double beta = (beta_sum / n - delta_sum) / (p * n);
  double delta = (delta_sum - 2.0 * mu * emp_trace.sum() + p * mu * mu) / p;
  beta = std::min(beta, delta);
  return beta <= 0.0 ? 0.0 : beta / delta;
}

namespace detail {

struct BinarySplit {
  int class0 = 0, class1 = 1;
  Vector mean0, mean1;
  Matrix within;  // rows centered on their own class mean
};

inline BinarySplit split_binary(const Matrix& x, std::span<const int> y) {
  if (static_cast<Index>(y.size()) != x.rows())
    throw Error(ErrorKind::shape_mismatch, "lda: " + std::to_string(y.size()) + " labels for " +
                                               std::to_string(x.rows()) + " rows");
  std::vector<int> distinct(y.begin(), y.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() != 2)
    throw Error(ErrorKind::invalid_argument,
                "lda: need exactly two classes, got " + std::to_string(distinct.size()));
  BinarySplit s;
  s.class0 = distinct[0];
  s.class1 = distinct[1];
  const Index k = x.cols();
  s.mean0 = Vector::Zero(k);
  s.mean1 = Vector::Zero(k);
  Index n0 = 0, n1 = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    if (y[static_cast<std::size_t>(i)] == s.class0) {
      s.mean0 += x.row(i).transpose();
      ++n0;
    } else {
      s.mean1 += x.row(i).transpose();
      ++n1;
    }
  }
  if (n0 < 2 || n1 < 2) throw Error(ErrorKind::too_few_samples, "lda: each class needs at least 2 samples");
  s.mean0 /= static_cast<double>(n0);
  s.mean1 /= static_cast<double>(n1);
  s.within.resize(x.rows(), k);
  for (Index i = 0; i < x.rows(); ++i)
    s.within.row(i) = x.row(i) - (y[static_cast<std::size_t>(i)] == s.class0 ? s.mean0 : s.mean1).transpose();
  return s;
}

inline constexpr double kSingularTolerance = 1e-8;

}  // namespace detail

/// Fisher discriminant w ~ S_w^-1 (mu1 - mu0) with S_w the pooled
/// within-class covariance. Class0 is the smaller label value.
inline LdaAxis lda_fit(const Matrix& x, std::span<const int> y, const LdaSolver& solver = LdaSolver::svd()) {
  auto s = detail::split_binary(x, y);
  const Vector diff = s.mean1 - s.mean0;
  Vector w;
  double gamma = 0.0;
  if (solver.kind == LdaSolver::Kind::svd) {
    Eigen::BDCSVD<Matrix> svd(s.within, Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    if (sv.size() < x.cols() || !(sv[0] > 0.0) || sv[sv.size() - 1] <= detail::kSingularTolerance * sv[0])
      throw Error(ErrorKind::singular,
                  "lda: within-class scatter is singular; use the eigen_shrinkage solver");
    const Matrix& v = svd.matrixV();
    Vector coef = v.transpose() * diff;
    coef.array() /= sv.array().square();
    w = v * coef;
  } else {
    const double n = static_cast<double>(x.rows());
    Matrix cov = s.within.transpose() * s.within / n;
    if (solver.shrinkage) {
      gamma = *solver.shrinkage;
      if (!(gamma >= 0.0 && gamma <= 1.0))
        throw Error(ErrorKind::invalid_argument, "lda: shrinkage must lie in [0, 1]");
    } else {
      gamma = ledoit_wolf_shrinkage(s.within);
    }
    const double mu = cov.trace() / static_cast<double>(cov.rows());
    cov *= (1.0 - gamma);
    cov.diagonal().array() += gamma * mu;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Vector& ev = eig.eigenvalues();  // ascending
    if (!(ev[ev.size() - 1] > 0.0) ||
        ev[0] <= detail::kSingularTolerance * detail::kSingularTolerance * ev[ev.size() - 1])
      throw Error(ErrorKind::singular, "lda: shrunk covariance is singular; increase shrinkage");
    const Matrix& q = eig.eigenvectors();
    Vector coef = q.transpose() * diff;
    coef.array() /= ev.array();
    w = q * coef;
  }
  const double norm = w.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw Error(ErrorKind::degenerate, "lda: class means coincide, no discriminant direction");
  w /= norm;

  LdaAxis axis;
  axis.weights = std::move(w);
  axis.threshold = 0.5 * (axis.weights.dot(s.mean0) + axis.weights.dot(s.mean1));
  axis.class_order = {s.class0, s.class1};
  axis.shrinkage_used = gamma;
  return axis;
}

inline Vector lda_project(const LdaAxis& axis, const Matrix& x) {
  if (x.cols() != axis.weights.size())
    throw Error(ErrorKind::shape_mismatch, "lda_project: input has " + std::to_string(x.cols()) +
                                               " columns, axis has " + std::to_string(axis.weights.size()));
  return x * axis.weights;
}

/// Class label implied by the side of the threshold.
inline int lda_classify(const LdaAxis& axis, double dv) {
  return dv > axis.threshold ? axis.class_order.second : axis.class_order.first;
}

}  // namespace dvc
