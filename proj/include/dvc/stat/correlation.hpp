#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dvc/common.hpp"
#include "dvc/error.hpp"

namespace dvc {

enum class CorrelationKind { pearson, spearman };

inline const char* to_string(CorrelationKind k) {
  return k == CorrelationKind::pearson ? "pearson" : "spearman";
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(ErrorKind::shape_mismatch, "pearson: lengths " + std::to_string(x.size()) + " and " +
                                               std::to_string(y.size()));
  if (x.size() < 3) throw Error(ErrorKind::too_few_samples, "pearson: need at least 3 values");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0))
    throw Error(ErrorKind::degenerate, "pearson: constant input, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(ErrorKind::shape_mismatch, "spearman: lengths " + std::to_string(x.size()) + " and " +
                                               std::to_string(y.size()));
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  return pearson(rx, ry);
}

inline double correlation(CorrelationKind kind, std::span<const double> x, std::span<const double> y) {
  return kind == CorrelationKind::pearson ? pearson(x, y) : spearman(x, y);
}

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline double pearson(const Vector& x, const Vector& y) { return pearson(as_span(x), as_span(y)); }
inline double spearman(const Vector& x, const Vector& y) { return spearman(as_span(x), as_span(y)); }
inline double correlation(CorrelationKind kind, const Vector& x, const Vector& y) {
  return correlation(kind, as_span(x), as_span(y));
}

}  // namespace dvc
