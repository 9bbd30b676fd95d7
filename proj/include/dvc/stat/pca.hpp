#pragma once

#include <string>

#include <Eigen/SVD>

#include "dvc/common.hpp"
#include "dvc/error.hpp"

namespace dvc {

struct PcaModel {
  Vector mean;                // length d
  Matrix components;          // k x d, orthonormal rows
  Vector explained_variance;  // length k, descending

  Index n_components() const { return components.rows(); }
  Index n_features() const { return components.cols(); }
};

namespace detail {

// Relative singular-value cutoff used to decide numerical rank.
inline constexpr double kRankTolerance = 1e-10;

inline Matrix center_columns(const Matrix& x, Vector& mean) {
  mean = x.colwise().mean().transpose();
  return x.rowwise() - mean.transpose();
}

}  // namespace detail

/// Largest k that pca_fit accepts for this data, further limited by the
/// numerical rank of the centered matrix.
inline Index pca_rank_limit(const Matrix& x) {
  if (x.rows() < 2) return 0;
  Vector mean;
  Matrix centered = detail::center_columns(x, mean);
  Eigen::BDCSVD<Matrix> svd(centered);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s[0] <= 0.0) return 0;
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s[i] > detail::kRankTolerance * s[0]) ++rank;
  return std::min({rank, x.rows() - 1, x.cols()});
}

namespace detail {

inline PcaModel pca_from_svd(const Eigen::BDCSVD<Matrix>& svd, Vector mean, Index n, Index k) {
  PcaModel model;
  model.mean = std::move(mean);
  model.components = svd.matrixV().leftCols(k).transpose();
  for (Index i = 0; i < k; ++i) {
    Index arg = 0;
    model.components.row(i).cwiseAbs().maxCoeff(&arg);
    if (model.components(i, arg) < 0.0) model.components.row(i) *= -1.0;
  }
  model.explained_variance = svd.singularValues().head(k).array().square() / static_cast<double>(n - 1);
  return model;
}

}  // namespace detail

/// PCA via thin SVD of the centered data. Components carry a deterministic
/// sign: the largest-magnitude entry of each is positive.
inline PcaModel pca_fit(const Matrix& x, Index k) {
  const Index n = x.rows(), d = x.cols();
  if (k < 1 || k > std::min(n - 1, d))
    throw Error(ErrorKind::invalid_argument, "pca: k=" + std::to_string(k) + " outside [1, min(n-1, d)] = [1, " +
                                                 std::to_string(std::min(n - 1, d)) + "]");
  Vector mean;
  Matrix centered = detail::center_columns(x, mean);
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || !(s[0] > 0.0))
    throw Error(ErrorKind::degenerate, "pca: zero-variance data (all rows identical)");
  return detail::pca_from_svd(svd, std::move(mean), n, k);
}

/// Like pca_fit, but a k beyond the usable rank is reduced to that rank
/// instead of rejected. `clamped` reports whether that happened.
inline PcaModel pca_fit_clamped(const Matrix& x, Index k, bool* clamped = nullptr) {
  const Index n = x.rows();
  if (k < 1) throw Error(ErrorKind::invalid_argument, "pca: k must be positive");
  if (n < 2) throw Error(ErrorKind::too_few_samples, "pca: need at least 2 rows");
  Vector mean;
  Matrix centered = detail::center_columns(x, mean);
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || !(s[0] > 0.0))
    throw Error(ErrorKind::degenerate, "pca: zero-variance data (all rows identical)");
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s[i] > detail::kRankTolerance * s[0]) ++rank;
  const Index limit = std::min({rank, n - 1, x.cols()});
  if (clamped) *clamped = k > limit;
  return detail::pca_from_svd(svd, std::move(mean), n, std::min(k, limit));
}

inline Matrix pca_project(const PcaModel& model, const Matrix& x) {
  if (x.cols() != model.n_features())
    throw Error(ErrorKind::shape_mismatch, "pca_project: input has " + std::to_string(x.cols()) +
                                               " columns, model expects " +
                                               std::to_string(model.n_features()));
  return (x.rowwise() - model.mean.transpose()) * model.components.transpose();
}

}  // namespace dvc
