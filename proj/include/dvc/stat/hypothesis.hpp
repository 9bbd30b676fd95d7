#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "dvc/stat/correlation.hpp"

namespace dvc {

struct CorrelationTest {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, t distribution with n-2 dof
  std::size_t n = 0;
};

inline CorrelationTest pearson_test(std::span<const double> x, std::span<const double> y) {
  CorrelationTest t;
  t.r = pearson(x, y);
  t.n = x.size();
  const double dof = static_cast<double>(t.n) - 2.0;
  if (std::abs(t.r) >= 1.0) {
    t.p_value = 0.0;
    return t;
  }
  const double stat = t.r * std::sqrt(dof / (1.0 - t.r * t.r));
  boost::math::students_t dist(dof);
  t.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(stat)));
  return t;
}

struct RankSumTest {
  double u = 0.0;  // Mann-Whitney U of the first sample
  double z = 0.0;
  double p_value = 1.0;  // two-sided, normal approximation
};

/// Wilcoxon rank-sum / Mann-Whitney U with tie and continuity correction.
/// Returns nullopt when either sample is empty.
inline std::optional<RankSumTest> rank_sum_test(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return std::nullopt;
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = average_ranks(pooled);
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double n = n1 + n2;
  double r1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r1 += ranks[i];
  RankSumTest t;
  t.u = r1 - n1 * (n1 + 1.0) / 2.0;
  const double mean_u = n1 * n2 / 2.0;

  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double tcount = static_cast<double>(j - i);
    tie_term += tcount * tcount * tcount - tcount;
    i = j;
  }
  const double var_u = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var_u > 0.0)) return t;
  const double diff = t.u - mean_u;
  const double corrected = std::max(0.0, std::abs(diff) - 0.5);
  t.z = std::copysign(corrected / std::sqrt(var_u), diff);
  t.p_value = std::min(1.0, std::erfc(std::abs(t.z) / std::sqrt(2.0)));
  return t;
}

}  // namespace dvc
