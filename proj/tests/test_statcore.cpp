#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "dvc/stat/correlation.hpp"
#include "dvc/stat/hypothesis.hpp"
#include "dvc/stat/lda.hpp"
#include "dvc/stat/logreg.hpp"
#include "dvc/stat/pca.hpp"

using namespace dvc;

namespace {

double angle_degrees(const Vector& a, const Vector& b) {
  const double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
  return std::acos(std::min(1.0, c)) * 180.0 / std::numbers::pi;
}

Matrix random_rotation(Index d, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(standard_normal(d, d, rng));
  return qr.householderQ();
}

}  // namespace

// ---------------------------------------------------------------------------
// Correlation

TEST(Correlation, PearsonExactSmallCase) {
  const std::vector<double> x = {1, 2, 3, 4}, y = {2, 1, 4, 3};
  EXPECT_EQ(pearson(x, y), 0.6);
}

TEST(Correlation, SpearmanExactSmallCase) {
  const std::vector<double> x = {1, 2, 3}, y = {3, 1, 2};
  EXPECT_EQ(spearman(x, y), -0.5);
}

TEST(Correlation, SpearmanAveragesTies) {
  const std::vector<double> x = {1, 2, 2, 3, 4}, y = {5, 3, 3, 1, 2};
  EXPECT_NEAR(spearman(x, y), -0.8947368421052632, 1e-12);
  const auto r = average_ranks(std::vector<double>{10, 20, 20, 5});
  EXPECT_EQ(r, (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Correlation, AffineInvariance) {
  Rng rng(5);
  const Vector x = standard_normal(200, rng), y = x + 0.7 * standard_normal(200, rng);
  const Vector x2 = (3.0 * x).array() + 11.0;
  const Vector y2 = (-0.5 * y).array() - 2.0;
  EXPECT_NEAR(pearson(x2, y2), -pearson(x, y), 1e-12);
  EXPECT_NEAR(spearman(x2, y2), -spearman(x, y), 1e-12);
}

TEST(Correlation, SymmetricAndBounded) {
  Rng rng(6);
  const Vector x = standard_normal(50, rng), y = standard_normal(50, rng);
  EXPECT_EQ(pearson(x, y), pearson(y, x));
  EXPECT_DOUBLE_EQ(pearson(x, x), 1.0);
  EXPECT_LE(std::abs(pearson(x, y)), 1.0);
}

TEST(Correlation, RejectsBadInput) {
  const std::vector<double> c = {1, 1, 1, 1}, v = {1, 2, 3, 4}, s = {1, 2};
  try {
    pearson(c, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
  try {
    pearson(v, std::vector<double>{1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape_mismatch);
  }
  try {
    pearson(s, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::too_few_samples);
  }
}

// ---------------------------------------------------------------------------
// PCA

TEST(Pca, FullRankReconstruction) {
  Rng rng(1);
  const Matrix x = standard_normal(60, 12, rng) * standard_normal(12, 12, rng);
  const PcaModel m = pca_fit(x, 12);
  const Matrix z = pca_project(m, x);
  const Matrix back = (z * m.components).rowwise() + m.mean.transpose();
  EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, ComponentsOrthonormalAndVarianceDescending) {
  Rng rng(2);
  const Matrix x = standard_normal(100, 8, rng);
  const PcaModel m = pca_fit(x, 5);
  EXPECT_LT((m.components * m.components.transpose() - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
  for (Index i = 1; i < 5; ++i) EXPECT_GE(m.explained_variance[i - 1], m.explained_variance[i]);
  const Matrix z = pca_project(m, x);
  for (Index i = 0; i < 5; ++i) {
    const double var = z.col(i).squaredNorm() / 99.0;
    EXPECT_NEAR(var, m.explained_variance[i], 1e-10);
  }
}

TEST(Pca, RecoversDominantAxis) {
  Rng rng(3);
  Vector axis = random_unit_vector(6, rng);
  Matrix x = 5.0 * standard_normal(2000, 1, rng) * axis.transpose() + 0.3 * standard_normal(2000, 6, rng);
  const PcaModel m = pca_fit(x, 1);
  EXPECT_LT(angle_degrees(m.components.row(0).transpose(), axis), 1.0);
}

TEST(Pca, SignConventionDeterministic) {
  Rng rng(4);
  const Matrix x = standard_normal(40, 5, rng);
  const PcaModel m = pca_fit(x, 3);
  for (Index i = 0; i < 3; ++i) {
    Index arg = 0;
    m.components.row(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(m.components(i, arg), 0.0);
  }
  const PcaModel again = pca_fit(-x, 3);
  EXPECT_LT((again.components - m.components).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pca, RankHandling) {
  Rng rng(5);
  const Matrix low = standard_normal(30, 2, rng) * standard_normal(2, 10, rng);
  EXPECT_EQ(pca_rank_limit(low), 2);
  bool clamped = false;
  const PcaModel m = pca_fit_clamped(low, 25, &clamped);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(m.n_components(), 2);
  EXPECT_THROW(pca_fit(low, 30), Error);
  EXPECT_THROW(pca_fit(Matrix::Ones(5, 3), 1), Error);
  EXPECT_THROW(pca_project(m, Matrix::Zero(3, 4)), Error);
}

// ---------------------------------------------------------------------------
// LDA

TEST(Lda, RecoversPopulationAxisOnAnisotropicClasses) {
  Rng rng(11);
  const Index d = 5, per = 5000;
  Vector scales(d);
  scales << 3.0, 1.5, 1.0, 0.5, 0.25;
  const Matrix rot = random_rotation(d, rng);
  const Matrix root = rot * scales.asDiagonal();  // covariance root
  const Matrix cov = root * root.transpose();
  Vector mu0 = Vector::Zero(d), mu1(d);
  mu1 << 1.0, -0.5, 0.8, 0.2, -0.3;
  Matrix x(2 * per, d);
  std::vector<int> y(2 * per);
  for (Index i = 0; i < 2 * per; ++i) {
    const bool one = i >= per;
    x.row(i) = ((one ? mu1 : mu0) + root * standard_normal(d, rng)).transpose();
    y[static_cast<std::size_t>(i)] = one ? 1 : 0;
  }
  const Vector truth = cov.ldlt().solve(mu1 - mu0);
  const LdaAxis svd_axis = lda_fit(x, y, LdaSolver::svd());
  EXPECT_LT(angle_degrees(svd_axis.weights, truth), 2.0);
  EXPECT_GT(svd_axis.weights.dot(truth), 0.0);
  const LdaAxis shrunk = lda_fit(x, y, LdaSolver::eigen());
  EXPECT_LT(angle_degrees(shrunk.weights, truth), 5.0);
  EXPECT_GE(shrunk.shrinkage_used, 0.0);
  EXPECT_LE(shrunk.shrinkage_used, 1.0);
}

TEST(Lda, OrientationAndThreshold) {
  Rng rng(12);
  Matrix x(200, 3);
  std::vector<int> y(200);
  for (Index i = 0; i < 200; ++i) {
    const int c = i < 100 ? 4 : 9;
    y[static_cast<std::size_t>(i)] = c;
    x.row(i) = standard_normal(3, rng).transpose();
    x(i, 0) += c == 9 ? 3.0 : 0.0;
  }
  const LdaAxis axis = lda_fit(x, y);
  EXPECT_EQ(axis.class_order, std::make_pair(4, 9));
  EXPECT_NEAR(axis.weights.norm(), 1.0, 1e-12);
  const Vector dv = lda_project(axis, x);
  EXPECT_GT(dv.tail(100).mean(), dv.head(100).mean());
  EXPECT_NEAR(axis.threshold, 0.5 * (dv.head(100).mean() + dv.tail(100).mean()), 1e-10);
  int hits = 0;
  for (Index i = 0; i < 200; ++i) hits += lda_classify(axis, dv[i]) == y[static_cast<std::size_t>(i)];
  EXPECT_GT(hits, 180);
}

TEST(Lda, ShrinkageFullIsScaledMeanDifference) {
  Rng rng(13);
  Matrix x = standard_normal(60, 4, rng);
  std::vector<int> y(60);
  for (int i = 30; i < 60; ++i) y[static_cast<std::size_t>(i)] = 1;
  const LdaAxis axis = lda_fit(x, y, LdaSolver::eigen(1.0));
  const Vector diff = (x.bottomRows(30).colwise().mean() - x.topRows(30).colwise().mean()).transpose();
  EXPECT_LT(angle_degrees(axis.weights, diff), 1e-6);
}

TEST(Lda, LedoitWolfMatchesReferenceFormula) {
  // Independent evaluation of the Ledoit-Wolf intensity:
  // mu = tr(S)/p, delta = ||S - mu I||_F^2 / p,
  // beta = sum_k ||x_k x_k^T - S||_F^2 / (n^2 p), shrinkage = min(beta, delta) / delta.
  Rng rng(14);
  const Index n = 40, p = 6;
  Matrix x = standard_normal(n, p, rng) * standard_normal(p, p, rng);
  x = x.rowwise() - x.colwise().mean();
  const Matrix s = x.transpose() * x / static_cast<double>(n);
  const double mu = s.trace() / p;
  const double delta = (s - mu * Matrix::Identity(p, p)).squaredNorm() / p;
  double beta = 0.0;
  for (Index k = 0; k < n; ++k) {
    const Vector xk = x.row(k).transpose();
    beta += (xk * xk.transpose() - s).squaredNorm();
  }
  beta /= static_cast<double>(n * n) * p;
  EXPECT_NEAR(ledoit_wolf_shrinkage(x), std::min(beta, delta) / delta, 1e-12);
}

TEST(Lda, Errors) {
  Matrix x = Matrix::Zero(10, 3);
  std::vector<int> one_class(10, 0);
  EXPECT_THROW(lda_fit(x, one_class), Error);
  std::vector<int> lonely(10, 0);
  lonely[0] = 1;
  Rng rng(15);
  EXPECT_THROW(lda_fit(standard_normal(10, 3, rng), lonely), Error);
  // Collinear features leave the within-class scatter singular.
  Matrix col = standard_normal(20, 2, rng);
  Matrix dup(20, 3);
  dup << col, col.col(0);
  std::vector<int> y(20, 0);
  for (int i = 10; i < 20; ++i) y[static_cast<std::size_t>(i)] = 1;
  try {
    lda_fit(dup, y, LdaSolver::svd());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singular);
  }
  EXPECT_NO_THROW(lda_fit(dup, y, LdaSolver::eigen(0.1)));
  EXPECT_THROW(lda_fit(dup, y, LdaSolver::eigen(1.5)), Error);
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

struct Blobs {
  Matrix x;
  std::vector<int> y;
};

Blobs gaussian_blobs(int classes, Index per, double spread, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix centers = 2.0 * standard_normal(classes, 4, rng);
  Blobs b;
  b.x.resize(classes * per, 4);
  for (int c = 0; c < classes; ++c)
    for (Index i = 0; i < per; ++i) {
      b.x.row(c * per + i) = centers.row(c) + spread * standard_normal(4, rng).transpose();
      b.y.push_back(c);
    }
  return b;
}

}  // namespace

TEST(LogReg, BiasStationarityMatchesClassFrequencies) {
  // The bias gradient is unpenalized, so at the optimum the mean predicted
  // probability of each class equals its frequency.
  const Blobs b = gaussian_blobs(3, 80, 2.0, 21);
  LogRegOptions opt;
  opt.grad_tol = 1e-9;
  opt.max_iter = 20000;
  const LogRegModel m = logreg_fit(b.x, b.y, opt);
  EXPECT_TRUE(m.converged);
  const Vector mean_p = m.predict_proba(b.x).colwise().mean().transpose();
  for (Index c = 0; c < 3; ++c) EXPECT_NEAR(mean_p[c], 1.0 / 3.0, 1e-7);
}

TEST(LogReg, LossDecreasesMonotonically) {
  const Blobs b = gaussian_blobs(4, 50, 1.5, 22);
  LogRegOptions opt;
  opt.record_loss = true;
  const LogRegModel m = logreg_fit(b.x, b.y, opt);
  ASSERT_GT(m.loss_trace.size(), 2u);
  for (std::size_t i = 1; i < m.loss_trace.size(); ++i) EXPECT_LE(m.loss_trace[i], m.loss_trace[i - 1]);
}

TEST(LogReg, SeparatesWellSeparatedClasses) {
  const Blobs b = gaussian_blobs(3, 60, 0.3, 23);
  const LogRegModel m = logreg_fit(b.x, b.y);
  const Matrix p = m.predict_proba(b.x);
  int hits = 0;
  for (Index i = 0; i < p.rows(); ++i) {
    Index arg = 0;
    p.row(i).maxCoeff(&arg);
    hits += static_cast<int>(arg) == b.y[static_cast<std::size_t>(i)];
  }
  EXPECT_EQ(hits, 180);
  for (Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
}

TEST(LogReg, NonConvergenceIsReportedOrThrown) {
  const Blobs b = gaussian_blobs(2, 30, 1.0, 24);
  LogRegOptions opt;
  opt.max_iter = 2;
  opt.grad_tol = 1e-14;
  const LogRegModel m = logreg_fit(b.x, b.y, opt);
  EXPECT_FALSE(m.converged);
  EXPECT_EQ(m.iterations, 2);
  opt.throw_on_nonconvergence = true;
  try {
    logreg_fit(b.x, b.y, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_converged);
  }
}

TEST(LogReg, StratifiedFoldsBalanced) {
  std::vector<int> y;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 10 + 5 * c; ++i) y.push_back(c);
  const auto folds = stratified_folds(y, 5, 9);
  for (int c = 0; c < 3; ++c) {
    std::vector<int> count(5, 0);
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) ++count[static_cast<std::size_t>(folds[i])];
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    EXPECT_LE(*hi - *lo, 1);
  }
  EXPECT_EQ(folds, stratified_folds(y, 5, 9));
  EXPECT_NE(folds, stratified_folds(y, 5, 10));
  std::vector<int> tiny = {0, 0, 1, 1, 1};
  EXPECT_THROW(stratified_folds(tiny, 3, 1), Error);
}

TEST(LogReg, CrossValidationIsOutOfFold) {
  const Blobs b = gaussian_blobs(3, 40, 1.0, 25);
  const CvPrediction cv = logreg_fit_cv(b.x, b.y, 5, 3);
  ASSERT_EQ(cv.folds.size(), 5u);
  // Re-deriving one fold by hand gives the same probabilities.
  std::vector<Index> train, test;
  for (std::size_t i = 0; i < b.y.size(); ++i) (cv.fold_of[i] == 2 ? test : train).push_back(static_cast<Index>(i));
  std::vector<int> ytrain;
  for (Index i : train) ytrain.push_back(b.y[static_cast<std::size_t>(i)]);
  const Matrix p = logreg_fit(select_rows(b.x, train), ytrain).predict_proba(select_rows(b.x, test));
  for (std::size_t t = 0; t < test.size(); ++t)
    for (Index c = 0; c < 3; ++c) EXPECT_EQ(cv.probabilities(test[t], c), p(static_cast<Index>(t), c));
}

// ---------------------------------------------------------------------------
// Hypothesis tests

TEST(Hypothesis, PearsonTestMatchesReference) {
  const std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, y = {2, 1, 4, 3, 7, 5, 6, 9, 10, 8};
  const CorrelationTest t = pearson_test(x, y);
  EXPECT_NEAR(t.r, 0.9030303030303027, 1e-12);
  EXPECT_NEAR(t.p_value, 0.00034361219776328256, 1e-12);
  EXPECT_EQ(t.n, 10u);
}

TEST(Hypothesis, RankSumMatchesReferenceWithTies) {
  const std::vector<double> a = {1, 2, 2, 3, 5, 8, 8, 9}, b = {2, 4, 4, 6, 7, 10, 11, 12, 13};
  const auto t = rank_sum_test(a, b);
  ASSERT_TRUE(t);
  EXPECT_DOUBLE_EQ(t->u, 20.0);
  EXPECT_NEAR(t->p_value, 0.13439272886000747, 1e-12);
  EXPECT_FALSE(rank_sum_test(a, std::vector<double>{}));
}
