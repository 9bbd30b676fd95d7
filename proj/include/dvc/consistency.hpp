#pragma once

// Error consistency (Cohen's kappa on correctness), its accuracy-gap upper
// bound, behavioral decoders, and category-level RSA.

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dvc/common.hpp"
#include "dvc/error.hpp"
#include "dvc/repstore.hpp"
#include "dvc/stat/correlation.hpp"
#include "dvc/stat/logreg.hpp"

namespace dvc {

struct DecisionRecord {
  std::vector<std::string> choices;
  std::vector<std::string> truth;
  std::vector<bool> correct;
  double accuracy = 0.0;

  std::size_t size() const { return choices.size(); }
};

inline DecisionRecord make_decision_record(std::vector<std::string> choices, std::vector<std::string> truth) {
  if (choices.size() != truth.size())
    throw Error(ErrorKind::shape_mismatch, "decision record: choices and truth differ in length");
  if (choices.empty()) throw Error(ErrorKind::too_few_samples, "decision record: no trials");
  DecisionRecord r;
  r.correct.resize(choices.size());
  std::size_t hits = 0;
  for (std::size_t t = 0; t < choices.size(); ++t) {
    r.correct[t] = choices[t] == truth[t];
    hits += r.correct[t] ? 1 : 0;
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(choices.size());
  r.choices = std::move(choices);
  r.truth = std::move(truth);
  return r;
}

/// Record built directly from correctness indicators (choice "1"/"0"
/// against truth "1").
inline DecisionRecord decision_record_from_correctness(const std::vector<bool>& correct) {
  std::vector<std::string> choices, truth(correct.size(), "1");
  choices.reserve(correct.size());
  for (bool c : correct) choices.emplace_back(c ? "1" : "0");
  return make_decision_record(std::move(choices), std::move(truth));
}

inline double kappa_bound(double d) {
  if (!(d >= 0.0 && d <= 1.0)) throw Error(ErrorKind::invalid_argument, "kappa_bound: d outside [0, 1]");
  return (1.0 - d) * (1.0 - d) / (1.0 + d * d);
}

struct KappaResult {
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double c_obs = 0.0;
  double c_exp = 0.0;
  double p_a = 0.0, p_b = 0.0;
  double d = 0.0;
  double bound = 1.0;
  bool degenerate = false;
  std::string reason;
};

/// Cohen's kappa on the correctness indicators of two observers.
inline KappaResult kappa(const DecisionRecord& a, const DecisionRecord& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::shape_mismatch, "kappa: records differ in length");
  if (a.truth != b.truth) throw Error(ErrorKind::shape_mismatch, "kappa: records disagree on ground truth");
  KappaResult k;
  std::size_t agree = 0;
  for (std::size_t t = 0; t < a.size(); ++t) agree += a.correct[t] == b.correct[t] ? 1 : 0;
  const double n = static_cast<double>(a.size());
  k.c_obs = static_cast<double>(agree) / n;
  k.p_a = a.accuracy;
  k.p_b = b.accuracy;
  k.c_exp = k.p_a * k.p_b + (1.0 - k.p_a) * (1.0 - k.p_b);
  k.d = std::abs(k.p_a - k.p_b);
  k.bound = kappa_bound(k.d);
  if (k.c_exp >= 1.0) {
    k.degenerate = true;
    k.reason = "expected agreement is 1 (both observers always right or always wrong); kappa undefined";
    return k;
  }
  k.kappa = (k.c_obs - k.c_exp) / (1.0 - k.c_exp);
  return k;
}

/// Out-of-fold argmax decisions of a cross-validated multinomial logistic
/// regression on the observer's features.
inline DecisionRecord decide_logreg(const RepresentationSet& set, int folds, std::uint64_t seed,
                                    const LogRegOptions& opt = {}) {
  CvPrediction cv = logreg_fit_cv(set.matrix, set.codes, folds, seed, opt);
  std::vector<std::string> choices;
  choices.reserve(cv.predicted.size());
  for (int c : cv.predicted) choices.push_back(set.class_names[static_cast<std::size_t>(c)]);
  return make_decision_record(std::move(choices), set.labels);
}

struct ClassGroupMap {
  std::vector<std::string> fine_classes;   // column order of probability matrices
  std::map<std::string, std::string> groups;  // fine -> coarse

  /// Coarse classes in sorted order; that order breaks ties.
  std::vector<std::string> coarse_classes() const {
    std::vector<std::string> out;
    for (const auto& [fine, coarse] : groups) out.push_back(coarse);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  void validate() const {
    for (const auto& f : fine_classes)
      if (!groups.count(f)) throw Error(ErrorKind::invalid_argument, "class groups: fine class '" + f + "' unmapped");
    for (const auto& [fine, coarse] : groups)
      if (std::find(fine_classes.begin(), fine_classes.end(), fine) == fine_classes.end())
        throw Error(ErrorKind::invalid_argument, "class groups: '" + fine + "' is not a listed fine class");
  }
};

struct GroupMeanScores {
  std::vector<std::string> coarse_classes;
  Matrix scores;  // n x K, mean member probability
  std::vector<std::string> choices;
};

/// Scores each coarse class by the mean probability of its fine members and
/// picks the argmax; ties go to the first coarse class.
inline GroupMeanScores decide_groupmean(const Matrix& probs, const ClassGroupMap& map) {
  map.validate();
  if (probs.cols() != static_cast<Index>(map.fine_classes.size()))
    throw Error(ErrorKind::shape_mismatch, "decide_groupmean: " + std::to_string(probs.cols()) +
                                               " probability columns for " +
                                               std::to_string(map.fine_classes.size()) + " fine classes");
  for (Index i = 0; i < probs.rows(); ++i)
    if (std::abs(probs.row(i).sum() - 1.0) > 1e-6)
      throw Error(ErrorKind::invalid_argument, "decide_groupmean: row " + std::to_string(i) + " does not sum to 1");
  GroupMeanScores out;
  out.coarse_classes = map.coarse_classes();
  const Index k = static_cast<Index>(out.coarse_classes.size());
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(k));
  for (std::size_t f = 0; f < map.fine_classes.size(); ++f) {
    const auto& coarse = map.groups.at(map.fine_classes[f]);
    auto it = std::lower_bound(out.coarse_classes.begin(), out.coarse_classes.end(), coarse);
    members[static_cast<std::size_t>(it - out.coarse_classes.begin())].push_back(static_cast<Index>(f));
  }
  out.scores = Matrix::Zero(probs.rows(), k);
  for (Index c = 0; c < k; ++c) {
    const auto& m = members[static_cast<std::size_t>(c)];
    for (Index f : m) out.scores.col(c) += probs.col(f);
    out.scores.col(c) /= static_cast<double>(m.size());
  }
  out.choices.reserve(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < k; ++c)
      if (out.scores(i, c) > out.scores(i, best)) best = c;
    out.choices.push_back(out.coarse_classes[static_cast<std::size_t>(best)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Category-level RSA

/// Per-class mean rows; classes with a single sample are allowed.
inline Matrix class_means(const Matrix& x, const std::vector<int>& codes, int n_classes) {
  if (static_cast<Index>(codes.size()) != x.rows())
    throw Error(ErrorKind::shape_mismatch, "class_means: label count differs from row count");
  Matrix means = Matrix::Zero(n_classes, x.cols());
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    means.row(codes[i]) += x.row(static_cast<Index>(i));
    ++counts[static_cast<std::size_t>(codes[i])];
  }
  for (int c = 0; c < n_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0)
      throw Error(ErrorKind::too_few_samples, "class_means: class " + std::to_string(c) + " has no samples");
    means.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  return means;
}

/// Correlation-distance RDM (1 - Pearson) between class-mean vectors.
inline Matrix category_rdm(const Matrix& means) {
  const Index c = means.rows();
  Matrix rdm = Matrix::Zero(c, c);
  std::vector<Vector> rows;
  for (Index i = 0; i < c; ++i) rows.push_back(means.row(i).transpose());
  for (Index i = 0; i < c; ++i)
    for (Index j = i + 1; j < c; ++j) {
      const double r = pearson(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
      rdm(i, j) = rdm(j, i) = 1.0 - r;
    }
  return rdm;
}

inline std::vector<double> upper_triangle(const Matrix& m) {
  std::vector<double> out;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = i + 1; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

inline double rsa_category(const Matrix& a, const Matrix& b, const std::vector<int>& codes, int n_classes) {
  const auto ua = upper_triangle(category_rdm(class_means(a, codes, n_classes)));
  const auto ub = upper_triangle(category_rdm(class_means(b, codes, n_classes)));
  return spearman(ua, ub);
}

/// Spearman correlation of the strictly upper-triangular RDM entries.
inline double rsa_category(const RepresentationSet& a, const RepresentationSet& b) {
  if (a.class_names != b.class_names)
    throw Error(ErrorKind::shape_mismatch, "rsa_category: observers have different classes");
  const auto ua = upper_triangle(category_rdm(class_means(a.matrix, a.codes, a.n_classes())));
  const auto ub = upper_triangle(category_rdm(class_means(b.matrix, b.codes, b.n_classes())));
  return spearman(ua, ub);
}

}  // namespace dvc
