#pragma once

// Decision variable correlation between two observers.
//
// For every unordered class pair, each observer's features are split into
// two random halves; every half is reduced with PCA and decoded into a
// scalar decision variable per sample. Within each class of the pair the
// four cross-observer and two within-observer split correlations give
//
//   r_cross   = (|r(A1,B1)| |r(A1,B2)| |r(A2,B1)| |r(A2,B2)|)^(1/4)
//   r_self    = (|r(A1,A2)| |r(B1,B2)|)^(1/2)
//   corrected = r_cross / r_self
//
// Split correlations are averaged over independent feature splits before
// the ratio is taken.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dvc/common.hpp"
#include "dvc/error.hpp"
#include "dvc/repstore.hpp"
#include "dvc/stat/correlation.hpp"
#include "dvc/stat/hypothesis.hpp"
#include "dvc/stat/lda.hpp"
#include "dvc/stat/logreg.hpp"
#include "dvc/stat/pca.hpp"

namespace dvc {

enum class DvDecoder { lda, logreg };

inline const char* to_string(DvDecoder d) { return d == DvDecoder::lda ? "lda" : "logreg"; }

struct DvcConfig {
  int n_pcs = 25;
  CorrelationKind correlation = CorrelationKind::pearson;
  LdaSolver lda_solver = LdaSolver::svd();
  DvDecoder dv_decoder = DvDecoder::lda;
  int split_repeats = 10;
  std::uint64_t seed = 0;
  bool abs_before_geomean = true;

  void validate() const {
    if (n_pcs < 1) throw Error(ErrorKind::invalid_argument, "n_pcs must be >= 1");
    if (split_repeats < 1) throw Error(ErrorKind::invalid_argument, "split_repeats must be >= 1");
  }
};

struct SplitDvSet {
  Vector dv_a1, dv_a2, dv_b1, dv_b2;
};

struct DvcComponents {
  // r(A1,B1), r(A1,B2), r(A2,B1), r(A2,B2)
  std::array<double, 4> cross{};
  double self_a = 0.0;  // r(A1,A2)
  double self_b = 0.0;  // r(B1,B2)
  double r_cross = 0.0;
  double r_self = 0.0;
  double corrected = 0.0;
  bool capped_flag = false;
};

/// Combines six split correlations. Non-positive within-observer
/// reliability makes the normalization undefined and is reported as a
/// degenerate-input error.
inline DvcComponents combine_correlations(const std::array<double, 4>& cross, double self_a, double self_b,
                                          bool abs_before_geomean) {
  if (!(self_a > 0.0) || !(self_b > 0.0))
    throw Error(ErrorKind::degenerate, "non-positive split-half reliability (self_a=" + format_double(self_a) +
                                           ", self_b=" + format_double(self_b) + ")");
  DvcComponents c;
  c.cross = cross;
  c.self_a = self_a;
  c.self_b = self_b;
  double prod = 1.0;
  for (double r : cross) prod *= abs_before_geomean ? std::abs(r) : r;
  if (prod < 0.0)
    throw Error(ErrorKind::degenerate, "cross correlations of mixed sign; enable abs_before_geomean");
  c.r_cross = std::pow(prod, 0.25);
  c.r_self = std::sqrt(self_a * self_b);
  c.corrected = c.r_cross / c.r_self;
  c.capped_flag = c.corrected > 1.0;
  return c;
}

inline DvcComponents corrected_dvc(const SplitDvSet& s, const DvcConfig& config) {
  const auto k = config.correlation;
  std::array<double, 4> cross = {correlation(k, s.dv_a1, s.dv_b1), correlation(k, s.dv_a1, s.dv_b2),
                                 correlation(k, s.dv_a2, s.dv_b1), correlation(k, s.dv_a2, s.dv_b2)};
  return combine_correlations(cross, correlation(k, s.dv_a1, s.dv_a2), correlation(k, s.dv_b1, s.dv_b2),
                              config.abs_before_geomean);
}

// ---------------------------------------------------------------------------
// Feature splitting and decoding

struct FeatureSplit {
  std::vector<Index> first;   // ceil(d/2) feature indices
  std::vector<Index> second;  // remainder
};

inline FeatureSplit split_feature_indices(Index n_features, std::uint64_t seed) {
  if (n_features < 2)
    throw Error(ErrorKind::invalid_argument, "feature split needs at least 2 features, got " +
                                                 std::to_string(n_features));
  std::vector<Index> perm(static_cast<std::size_t>(n_features));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto half = static_cast<std::size_t>((n_features + 1) / 2);
  FeatureSplit s;
  s.first.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(half));
  s.second.assign(perm.begin() + static_cast<std::ptrdiff_t>(half), perm.end());
  return s;
}

inline RepresentationSet feature_subset(const RepresentationSet& set, const std::vector<Index>& features,
                                        const std::string& suffix) {
  RepresentationSet out;
  out.observer_id = set.observer_id + suffix;
  out.matrix = select_cols(set.matrix, features);
  out.labels = set.labels;
  out.class_names = set.class_names;
  out.codes = set.codes;
  return out;
}

inline std::pair<RepresentationSet, RepresentationSet> split_features(const RepresentationSet& set,
                                                                      std::uint64_t seed) {
  auto s = split_feature_indices(set.n_features(), seed);
  return {feature_subset(set, s.first, "/1"), feature_subset(set, s.second, "/2")};
}

struct DecodedDvs {
  Vector dvs;                  // one per sample of the class pair, in sample order
  std::vector<Index> samples;  // row indices into the half
  std::vector<int> codes;      // class code per decoded sample
  double threshold = 0.0;
  Vector feature_axis;         // decoder direction expressed in feature space
  Index n_pcs_used = 0;
  bool clamped = false;
};

/// PCA (fit on this half's class-pair samples) followed by the configured
/// decoder, applied back to the same samples.
inline DecodedDvs decode_dvs(const RepresentationSet& half, std::pair<int, int> class_pair,
                             const DvcConfig& config) {
  const auto [c0, c1] = class_pair;
  if (c0 == c1 || c0 < 0 || c1 < 0 || c0 >= half.n_classes() || c1 >= half.n_classes())
    throw Error(ErrorKind::invalid_argument, "decode_dvs: invalid class pair");
  DecodedDvs out;
  std::vector<int> y;
  for (std::size_t i = 0; i < half.codes.size(); ++i) {
    const int c = half.codes[i];
    if (c == c0 || c == c1) {
      out.samples.push_back(static_cast<Index>(i));
      out.codes.push_back(c);
      y.push_back(c == c0 ? 0 : 1);
    }
  }
  const Matrix x = select_rows(half.matrix, out.samples);
  // Two class means use up one more degree of freedom than PCA centering, so
  // more than n - 2 components would leave the within-class scatter singular.
  const Index cap = std::max<Index>(1, x.rows() - 2);
  const Index requested = std::min<Index>(config.n_pcs, cap);
  PcaModel pca = pca_fit_clamped(x, requested, &out.clamped);
  out.clamped = out.clamped || requested < config.n_pcs;
  out.n_pcs_used = pca.n_components();
  const Matrix z = pca_project(pca, x);

  Vector axis;
  if (config.dv_decoder == DvDecoder::lda) {
    LdaAxis lda = lda_fit(z, y, config.lda_solver);
    out.dvs = lda_project(lda, z);
    out.threshold = lda.threshold;
    axis = lda.weights;
  } else {
    LogRegModel model = logreg_fit(z, y);
    axis = (model.weights.row(1) - model.weights.row(0)).transpose();
    out.dvs = z * axis;
    out.threshold = model.biases[0] - model.biases[1];
  }
  out.feature_axis = pca.components.transpose() * axis;
  return out;
}

// ---------------------------------------------------------------------------
// Observer pairs

struct DvcEntry {
  int class0 = 0, class1 = 1;  // codes into DvcResult::class_names, class0 < class1
  int conditioning = 0;        // class0 or class1
  DvcComponents components;
  int repeats_used = 0;
  bool degenerate = false;
  std::string reason;
};

struct DvcResult {
  std::string observer_a, observer_b;
  std::vector<std::string> class_names;
  std::vector<DvcEntry> entries;  // ordered by (class0, class1, conditioning)
  double aggregate = std::numeric_limits<double>::quiet_NaN();
  int n_degenerate = 0;
  DvcConfig config_echo;
  std::vector<std::string> warnings;

  const DvcEntry* find(int class0, int class1, int conditioning) const {
    if (class0 > class1) std::swap(class0, class1);
    for (const auto& e : entries)
      if (e.class0 == class0 && e.class1 == class1 && e.conditioning == conditioning) return &e;
    return nullptr;
  }

  bool has_aggregate() const { return std::isfinite(aggregate); }
};

/// Per-observer split seed for one repeat. Depends on the observers only
/// through their sorted ids and sorted role, so it is symmetric in argument
/// order.
inline std::uint64_t observer_split_seed(std::uint64_t seed, std::string_view id_lo, std::string_view id_hi,
                                         int repeat, int role) {
  return derive_seed(seed, id_lo, id_hi, static_cast<std::uint64_t>(repeat), static_cast<std::uint64_t>(role));
}

namespace detail {

struct UnitOutcome {
  // Six correlations per conditioning class (class0 then class1), ordered
  // cross[0..3], self_a, self_b.
  std::array<std::optional<std::array<double, 6>>, 2> corr;
  std::array<std::string, 2> error;
  std::set<std::string> warnings;
};

inline UnitOutcome run_unit(const std::array<const RepresentationSet*, 4>& halves, std::pair<int, int> pair,
                            const DvcConfig& config) {
  UnitOutcome out;
  std::array<DecodedDvs, 4> dec;
  try {
    for (std::size_t h = 0; h < 4; ++h) {
      dec[h] = decode_dvs(*halves[h], pair, config);
      if (dec[h].clamped)
        out.warnings.insert("n_pcs=" + std::to_string(config.n_pcs) + " exceeds available rank; clamped to " +
                            std::to_string(dec[h].n_pcs_used));
    }
  } catch (const Error& e) {
    out.error = {e.what(), e.what()};
    return out;
  }
  const std::array<int, 2> conds = {pair.first, pair.second};
  for (std::size_t ci = 0; ci < 2; ++ci) {
    std::vector<Index> idx;
    for (std::size_t i = 0; i < dec[0].codes.size(); ++i)
      if (dec[0].codes[i] == conds[ci]) idx.push_back(static_cast<Index>(i));
    const Vector a1 = select(dec[0].dvs, idx), a2 = select(dec[1].dvs, idx);
    const Vector b1 = select(dec[2].dvs, idx), b2 = select(dec[3].dvs, idx);
    try {
      const auto k = config.correlation;
      out.corr[ci] = std::array<double, 6>{correlation(k, a1, b1), correlation(k, a1, b2), correlation(k, a2, b1),
                                           correlation(k, a2, b2), correlation(k, a1, a2), correlation(k, b1, b2)};
    } catch (const Error& e) {
      out.error[ci] = e.what();
    }
  }
  return out;
}

inline std::vector<std::pair<int, int>> class_pairs(int n_classes) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n_classes; ++i)
    for (int j = i + 1; j < n_classes; ++j) pairs.emplace_back(i, j);
  return pairs;
}

}  // namespace detail

/// DVC between two observers that saw the same stimuli in the same order.
inline DvcResult dvc_pair(const RepresentationSet& a, const RepresentationSet& b, const DvcConfig& config,
                          unsigned threads = default_thread_count()) {
  config.validate();
  if (!same_stimuli(a, b))
    throw Error(ErrorKind::shape_mismatch, "dvc_pair: observers '" + a.observer_id + "' and '" + b.observer_id +
                                               "' do not share labels and sample order");
  if (a.n_classes() < 2) throw Error(ErrorKind::invalid_argument, "dvc_pair: need at least two classes");

  // Work in canonical (sorted id) order; relabel at the end.
  const bool swapped = b.observer_id < a.observer_id;
  const RepresentationSet& first = swapped ? b : a;
  const RepresentationSet& second = swapped ? a : b;

  const int repeats = config.split_repeats;
  std::vector<std::array<RepresentationSet, 4>> halves(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    auto [f1, f2] = split_features(
        first, observer_split_seed(config.seed, first.observer_id, second.observer_id, r, 0));
    auto [s1, s2] = split_features(
        second, observer_split_seed(config.seed, first.observer_id, second.observer_id, r, 1));
    halves[static_cast<std::size_t>(r)] = {std::move(f1), std::move(f2), std::move(s1), std::move(s2)};
  }

  const auto pairs = detail::class_pairs(a.n_classes());
  const std::size_t n_units = pairs.size() * static_cast<std::size_t>(repeats);
  std::vector<detail::UnitOutcome> units(n_units);
  parallel_for(
      n_units,
      [&](std::size_t u) {
        const std::size_t r = u / pairs.size(), p = u % pairs.size();
        const auto& h = halves[r];
        units[u] = detail::run_unit({&h[0], &h[1], &h[2], &h[3]}, pairs[p], config);
      },
      threads);

  DvcResult result;
  result.observer_a = a.observer_id;
  result.observer_b = b.observer_id;
  result.class_names = a.class_names;
  result.config_echo = config;
  std::set<std::string> warnings;
  double sum = 0.0;
  int used = 0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (std::size_t ci = 0; ci < 2; ++ci) {
      std::array<double, 6> acc{};
      int count = 0;
      std::string last_error;
      for (int r = 0; r < repeats; ++r) {
        const auto& unit = units[static_cast<std::size_t>(r) * pairs.size() + p];
        if (ci == 0) warnings.insert(unit.warnings.begin(), unit.warnings.end());
        if (unit.corr[ci]) {
          for (std::size_t k = 0; k < 6; ++k) acc[k] += (*unit.corr[ci])[k];
          ++count;
        } else {
          last_error = unit.error[ci];
        }
      }
      DvcEntry e;
      e.class0 = pairs[p].first;
      e.class1 = pairs[p].second;
      e.conditioning = ci == 0 ? e.class0 : e.class1;
      e.repeats_used = count;
      if (count == 0) {
        e.degenerate = true;
        e.reason = last_error;
      } else {
        for (double& v : acc) v /= count;
        // acc is in canonical order; map to caller order.
        std::array<double, 4> cross = {acc[0], acc[1], acc[2], acc[3]};
        double self_a = acc[4], self_b = acc[5];
        try {
          DvcComponents c = combine_correlations(cross, self_a, self_b, config.abs_before_geomean);
          if (swapped) {
            c.cross = {acc[0], acc[2], acc[1], acc[3]};
            std::swap(c.self_a, c.self_b);
          }
          e.components = c;
          sum += c.corrected;
          ++used;
        } catch (const Error& err) {
          e.degenerate = true;
          e.reason = err.what();
          e.components.cross = swapped ? std::array<double, 4>{acc[0], acc[2], acc[1], acc[3]} : cross;
          e.components.self_a = swapped ? self_b : self_a;
          e.components.self_b = swapped ? self_a : self_b;
          e.components.corrected = std::numeric_limits<double>::quiet_NaN();
        }
      }
      if (e.degenerate) ++result.n_degenerate;
      result.entries.push_back(std::move(e));
    }
  }
  if (used > 0) result.aggregate = sum / used;
  result.warnings.assign(warnings.begin(), warnings.end());
  return result;
}

// ---------------------------------------------------------------------------
// Observer cohorts

struct PairOutcome {
  Index i = 0, j = 0;
  std::optional<DvcResult> result;
  std::string error;
};

struct DvcMatrix {
  std::vector<std::string> ids;
  Matrix values;  // symmetric; NaN where a pair failed
  std::vector<PairOutcome> pairs;  // i <= j, row-major

  std::size_t n_failed() const {
    return static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(), [](const PairOutcome& p) {
      return !p.result || !p.result->has_aggregate();
    }));
  }
  std::size_t n_degenerate_entries() const {
    std::size_t n = 0;
    for (const auto& p : pairs)
      if (p.result) n += static_cast<std::size_t>(p.result->n_degenerate);
    return n;
  }
};

/// All unordered observer pairs plus self-DVC on the diagonal. A failed pair
/// is recorded and left as NaN.
inline DvcMatrix dvc_matrix(const std::vector<RepresentationSet>& observers, const DvcConfig& config,
                            unsigned threads = default_thread_count()) {
  config.validate();
  DvcMatrix m;
  const Index n = static_cast<Index>(observers.size());
  for (const auto& o : observers) m.ids.push_back(o.observer_id);
  m.values = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) m.pairs.push_back({i, j, std::nullopt, {}});

  parallel_for(
      m.pairs.size(),
      [&](std::size_t k) {
        auto& p = m.pairs[k];
        try {
          p.result = dvc_pair(observers[static_cast<std::size_t>(p.i)], observers[static_cast<std::size_t>(p.j)],
                              config, 1);
          if (!p.result->has_aggregate()) p.error = "all entries degenerate";
        } catch (const Error& e) {
          p.error = e.what();
        }
      },
      threads);
  for (const auto& p : m.pairs) {
    if (p.result && p.result->has_aggregate()) {
      m.values(p.i, p.j) = p.result->aggregate;
      m.values(p.j, p.i) = p.result->aggregate;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Cohort statistics

struct AccuracyCorrelation {
  std::vector<std::string> observers;
  std::vector<double> mean_dvc;  // mean DVC to the reference set
  std::vector<double> accuracy;
  std::vector<std::string> reference;
  CorrelationTest test;
};

struct FamilyContrast {
  std::vector<double> within;
  std::vector<double> between;
  std::optional<RankSumTest> test;
};

struct GroupSummary {
  std::optional<AccuracyCorrelation> accuracy;
  FamilyContrast family;
  std::vector<std::string> notices;
};

/// Reference set: observers of kind brain when present, otherwise every
/// other observer. Family contrast uses off-diagonal pairs whose observers
/// both carry a family tag.
inline GroupSummary summarize(const Matrix& values, const std::vector<ObserverMeta>& metas) {
  const Index n = values.rows();
  if (values.cols() != n || static_cast<Index>(metas.size()) != n)
    throw Error(ErrorKind::shape_mismatch, "summarize: metas not aligned with matrix");
  GroupSummary s;

  std::vector<Index> brains;
  for (Index i = 0; i < n; ++i)
    if (metas[static_cast<std::size_t>(i)].kind == ObserverKind::brain) brains.push_back(i);

  AccuracyCorrelation acc;
  for (Index i : brains) acc.reference.push_back(metas[static_cast<std::size_t>(i)].observer_id);
  for (Index i = 0; i < n; ++i) {
    const auto& meta = metas[static_cast<std::size_t>(i)];
    if (!meta.accuracy || meta.kind == ObserverKind::brain) continue;
    double sum = 0.0;
    int count = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (!brains.empty() && metas[static_cast<std::size_t>(j)].kind != ObserverKind::brain) continue;
      if (std::isfinite(values(i, j))) {
        sum += values(i, j);
        ++count;
      }
    }
    if (count == 0) continue;
    acc.observers.push_back(meta.observer_id);
    acc.mean_dvc.push_back(sum / count);
    acc.accuracy.push_back(*meta.accuracy);
  }
  if (acc.observers.size() < 3) {
    s.notices.push_back("accuracy correlation skipped: fewer than 3 observers with accuracy metadata");
  } else {
    try {
      acc.test = pearson_test(acc.mean_dvc, acc.accuracy);
      s.accuracy = std::move(acc);
    } catch (const Error& e) {
      s.notices.push_back(std::string("accuracy correlation skipped: ") + e.what());
    }
  }

  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const auto& fi = metas[static_cast<std::size_t>(i)].family;
      const auto& fj = metas[static_cast<std::size_t>(j)].family;
      if (!fi || !fj || !std::isfinite(values(i, j))) continue;
      (*fi == *fj ? s.family.within : s.family.between).push_back(values(i, j));
    }
  }
  if (s.family.within.empty()) s.notices.push_back("within-family set empty");
  if (s.family.between.empty()) s.notices.push_back("between-family set empty");
  s.family.test = rank_sum_test(s.family.within, s.family.between);
  return s;
}

}  // namespace dvc
