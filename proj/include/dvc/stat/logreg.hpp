#pragma once

// Multinomial logistic regression (softmax link, L2 on weights) trained by
// full-batch gradient descent with Barzilai-Borwein step proposals and an
// Armijo backtracking line search, plus stratified k-fold prediction.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dvc/common.hpp"
#include "dvc/error.hpp"

namespace dvc {

struct LogRegOptions {
  double l2 = 1e-4;
  double grad_tol = 1e-6;  // infinity norm
  int max_iter = 1000;
  bool throw_on_nonconvergence = false;
  bool record_loss = false;
};

/// Weights act on raw features: scores = x * weights^T + biases.
struct LogRegModel {
  Matrix weights;  // C x k
  Vector biases;   // C
  std::vector<int> classes;

  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  std::vector<double> loss_trace;  // accepted iterates, when requested

  int n_classes() const { return static_cast<int>(classes.size()); }

  Matrix decision_function(const Matrix& x) const {
    return (x * weights.transpose()).rowwise() + biases.transpose();
  }

  Matrix predict_proba(const Matrix& x) const {
    Matrix z = decision_function(x);
    for (Index i = 0; i < z.rows(); ++i) {
      const double m = z.row(i).maxCoeff();
      z.row(i) = (z.row(i).array() - m).exp();
      z.row(i) /= z.row(i).sum();
    }
    return z;
  }
};

namespace detail {

struct SoftmaxProblem {
  const Matrix& x;        // standardized features, n x k
  const Matrix& onehot;   // n x C
  double l2;

  // Returns the loss; fills gradient when requested.
  double evaluate(const Matrix& w, const Vector& b, Matrix* gw, Vector* gb) const {
    const double n = static_cast<double>(x.rows());
    Matrix z = (x * w.transpose()).rowwise() + b.transpose();
    double loss = 0.0;
    for (Index i = 0; i < z.rows(); ++i) {
      const double m = z.row(i).maxCoeff();
      z.row(i) = (z.row(i).array() - m).exp();
      const double s = z.row(i).sum();
      z.row(i) /= s;
      Index yi = 0;
      onehot.row(i).maxCoeff(&yi);
      loss -= std::log(std::max(z(i, yi), 1e-300));
    }
    loss = loss / n + 0.5 * l2 * w.squaredNorm();
    if (gw) {
      Matrix resid = z - onehot;
      *gw = resid.transpose() * x / n + l2 * w;
      *gb = resid.colwise().sum().transpose() / n;
    }
    return loss;
  }
};

}  // namespace detail

inline LogRegModel logreg_fit(const Matrix& x, std::span<const int> y, const LogRegOptions& opt = {}) {
  const Index n = x.rows(), k = x.cols();
  if (static_cast<Index>(y.size()) != n)
    throw Error(ErrorKind::shape_mismatch, "logreg: label count differs from row count");
  LogRegModel model;
  model.classes.assign(y.begin(), y.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  const Index c = static_cast<Index>(model.classes.size());
  if (c < 2) throw Error(ErrorKind::invalid_argument, "logreg: need at least two classes");

  Matrix onehot = Matrix::Zero(n, c);
  for (Index i = 0; i < n; ++i) {
    auto it = std::lower_bound(model.classes.begin(), model.classes.end(), y[static_cast<std::size_t>(i)]);
    onehot(i, it - model.classes.begin()) = 1.0;
  }

  // Optimize on standardized features, then map back to raw scale.
  Vector mean = x.colwise().mean().transpose();
  Vector scale(k);
  for (Index j = 0; j < k; ++j) {
    const double sd = std::sqrt((x.col(j).array() - mean[j]).square().sum() / static_cast<double>(n));
    scale[j] = sd > 0.0 ? sd : 1.0;
  }
  Matrix xs = (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();

  detail::SoftmaxProblem prob{xs, onehot, opt.l2};
  Matrix w = Matrix::Zero(c, k);
  Vector b = Vector::Zero(c);
  Matrix gw;
  Vector gb;
  double loss = prob.evaluate(w, b, &gw, &gb);
  if (opt.record_loss) model.loss_trace.push_back(loss);
  double step = 1.0;
  Matrix prev_w, prev_gw;
  Vector prev_b, prev_gb;

  auto grad_inf = [&] { return std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff()); };
  int iter = 0;
  double gnorm = grad_inf();
  while (gnorm >= opt.grad_tol && iter < opt.max_iter) {
    if (iter > 0) {
      // Barzilai-Borwein proposal from the last accepted move.
      const double sy = (w - prev_w).cwiseProduct(gw - prev_gw).sum() + (b - prev_b).dot(gb - prev_gb);
      const double yy = (gw - prev_gw).squaredNorm() + (gb - prev_gb).squaredNorm();
      step = (sy > 0.0 && yy > 0.0) ? sy / yy : step * 2.0;
    }
    const double g2 = gw.squaredNorm() + gb.squaredNorm();
    double trial_loss = 0.0;
    Matrix tw;
    Vector tb;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      tw = w - step * gw;
      tb = b - step * gb;
      trial_loss = prob.evaluate(tw, tb, nullptr, nullptr);
      if (std::isfinite(trial_loss) && trial_loss <= loss - 1e-4 * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further decrease representable
    prev_w = std::move(w);
    prev_b = std::move(b);
    prev_gw = gw;
    prev_gb = gb;
    w = std::move(tw);
    b = std::move(tb);
    loss = prob.evaluate(w, b, &gw, &gb);
    if (opt.record_loss) model.loss_trace.push_back(loss);
    gnorm = grad_inf();
    ++iter;
  }

  model.iterations = iter;
  model.grad_norm = gnorm;
  model.converged = gnorm < opt.grad_tol;
  if (!model.converged && opt.throw_on_nonconvergence)
    throw Error(ErrorKind::not_converged, "logreg: gradient inf-norm " + std::to_string(gnorm) + " after " +
                                              std::to_string(iter) + " iterations");

  model.weights = w.array().rowwise() / scale.transpose().array();
  model.biases = b - model.weights * mean;
  return model;
}

/// Fold index per sample: within each class (ascending label order) the
/// seeded-shuffled members are dealt round-robin, continuing the deal
/// across classes so fold sizes stay balanced.
inline std::vector<int> stratified_folds(std::span<const int> y, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorKind::invalid_argument, "folds must be at least 2");
  std::vector<int> classes(y.begin(), y.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::vector<int> fold_of(y.size(), -1);
  Rng rng(seed);
  std::size_t dealt = 0;
  for (int cls : classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) members.push_back(i);
    if (static_cast<int>(members.size()) < folds)
      throw Error(ErrorKind::too_few_samples, "class " + std::to_string(cls) + " has " +
                                                  std::to_string(members.size()) + " samples, fewer than " +
                                                  std::to_string(folds) + " folds");
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t idx : members) fold_of[idx] = static_cast<int>(dealt++ % static_cast<std::size_t>(folds));
  }
  return fold_of;
}

struct CvFoldInfo {
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
};

/// Out-of-fold predictions: each sample is scored by the model trained on
/// the other folds.
struct CvPrediction {
  std::vector<int> classes;    // column order of `probabilities`
  std::vector<int> predicted;  // class label per sample
  Matrix probabilities;        // n x C
  std::vector<int> fold_of;
  std::vector<CvFoldInfo> folds;

  bool all_converged() const {
    return std::all_of(folds.begin(), folds.end(), [](const CvFoldInfo& f) { return f.converged; });
  }
};

inline CvPrediction logreg_fit_cv(const Matrix& x, std::span<const int> y, int folds, std::uint64_t seed,
                                  const LogRegOptions& opt = {}) {
  if (static_cast<Index>(y.size()) != x.rows())
    throw Error(ErrorKind::shape_mismatch, "logreg_fit_cv: label count differs from row count");
  CvPrediction out;
  out.fold_of = stratified_folds(y, folds, seed);
  out.classes.assign(y.begin(), y.end());
  std::sort(out.classes.begin(), out.classes.end());
  out.classes.erase(std::unique(out.classes.begin(), out.classes.end()), out.classes.end());
  const Index c = static_cast<Index>(out.classes.size());
  out.probabilities = Matrix::Zero(x.rows(), c);
  out.predicted.assign(y.size(), out.classes.front());

  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train, test;
    for (std::size_t i = 0; i < y.size(); ++i)
      (out.fold_of[i] == f ? test : train).push_back(static_cast<Index>(i));
    std::vector<int> ytrain;
    ytrain.reserve(train.size());
    for (Index i : train) ytrain.push_back(y[static_cast<std::size_t>(i)]);
    LogRegModel model = logreg_fit(select_rows(x, train), ytrain, opt);
    out.folds.push_back({model.converged, model.iterations, model.grad_norm});
    Matrix p = model.predict_proba(select_rows(x, test));
    for (std::size_t t = 0; t < test.size(); ++t) {
      const Index row = test[t];
      for (Index j = 0; j < c; ++j) out.probabilities(row, j) = p(static_cast<Index>(t), j);
      Index best = 0;
      for (Index j = 1; j < c; ++j)
        if (p(static_cast<Index>(t), j) > p(static_cast<Index>(t), best)) best = j;  // first max wins
      out.predicted[static_cast<std::size_t>(row)] = out.classes[static_cast<std::size_t>(best)];
    }
  }
  return out;
}

}  // namespace dvc
