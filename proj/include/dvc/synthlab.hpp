#pragma once

// Synthetic observers with known ground truth: latent split decision
// variables, latent cohorts lifted into feature space, the shared-bias
// output simulation, the shared-fluctuation simulation and a fine/coarse
// probability construction with a shared miscalibrated prior.
//
// Sweeps use common random numbers: for a given seed index every level sees
// the same underlying standard-normal draws, only the swept scale changes.

#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "dvc/common.hpp"
#include "dvc/consistency.hpp"
#include "dvc/engine.hpp"
#include "dvc/error.hpp"
#include "dvc/repstore.hpp"

namespace dvc {

inline std::string indexed_name(const char* prefix, int i, int width = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

// ---------------------------------------------------------------------------
// Latent split decision variables

struct LatentDvModel {
  double rho_true = 0.5;
  double sigma_a = 1.0, sigma_b = 1.0;
  double noise_a = 1.0, noise_b = 1.0;  // per split
  Index m = 5000;

  void validate() const {
    if (!(rho_true >= -1.0 && rho_true <= 1.0))
      throw Error(ErrorKind::invalid_argument, "rho_true outside [-1, 1]; signal covariance not PSD");
    if (!(sigma_a > 0.0) || !(sigma_b > 0.0))
      throw Error(ErrorKind::invalid_argument, "signal standard deviations must be positive");
    if (!(noise_a >= 0.0) || !(noise_b >= 0.0))
      throw Error(ErrorKind::invalid_argument, "noise standard deviations must be nonnegative");
    if (m < 3) throw Error(ErrorKind::invalid_argument, "m must be at least 3");
  }

  /// Population correlation of one split from each observer.
  double attenuated_correlation() const {
    return rho_true * sigma_a * sigma_b /
           std::sqrt((sigma_a * sigma_a + noise_a * noise_a) * (sigma_b * sigma_b + noise_b * noise_b));
  }
  double reliability_a() const { return sigma_a * sigma_a / (sigma_a * sigma_a + noise_a * noise_a); }
  double reliability_b() const { return sigma_b * sigma_b / (sigma_b * sigma_b + noise_b * noise_b); }
};

inline SplitDvSet gen_latent_dvs(const LatentDvModel& model, std::uint64_t seed) {
  model.validate();
  Rng rng(seed);
  const Vector z1 = standard_normal(model.m, rng);
  const Vector z2 = standard_normal(model.m, rng);
  const Vector s_a = model.sigma_a * z1;
  const Vector s_b = model.sigma_b * (model.rho_true * z1 + std::sqrt(1.0 - model.rho_true * model.rho_true) * z2);
  SplitDvSet s;
  s.dv_a1 = s_a + model.noise_a * standard_normal(model.m, rng);
  s.dv_a2 = s_a + model.noise_a * standard_normal(model.m, rng);
  s.dv_b1 = s_b + model.noise_b * standard_normal(model.m, rng);
  s.dv_b2 = s_b + model.noise_b * standard_normal(model.m, rng);
  return s;
}

struct RecoverySpec {
  double rho_true = 0.5;
  double sigma_a = 1.0, sigma_b = 1.0;
  std::vector<double> noise_levels = {0.0, 0.5, 1.0, 2.0};
  Index m = 5000;
  int n_seeds = 20;
};

struct RecoveryRow {
  double noise_sd = 0.0;
  double mean_corrected = 0.0;
  double sd_corrected = 0.0;
  double mean_raw_cross = 0.0;  // r(DV_A1, DV_B1)
  double expected_raw_cross = 0.0;
  double mean_self_a = 0.0;
  double expected_self = 0.0;
  int n_valid = 0;
  int n_capped = 0;
};

/// Noise-level sweep of the split-normalized estimator on latent DVs.
inline std::vector<RecoveryRow> sweep_recovery(const RecoverySpec& spec, std::uint64_t seed,
                                               const DvcConfig& config = {}) {
  if (spec.noise_levels.empty()) throw Error(ErrorKind::invalid_argument, "recovery: no noise levels");
  if (spec.n_seeds < 1) throw Error(ErrorKind::invalid_argument, "recovery: n_seeds must be >= 1");
  std::vector<RecoveryRow> rows;
  for (double noise : spec.noise_levels) {
    LatentDvModel model{spec.rho_true, spec.sigma_a, spec.sigma_b, noise, noise, spec.m};
    model.validate();
    RecoveryRow row;
    row.noise_sd = noise;
    row.expected_raw_cross = model.attenuated_correlation();
    row.expected_self = model.reliability_a();
    std::vector<double> corrected;
    double raw = 0.0, self = 0.0;
    for (int i = 0; i < spec.n_seeds; ++i) {
      const SplitDvSet s = gen_latent_dvs(model, derive_seed(seed, "recovery", static_cast<std::uint64_t>(i)));
      raw += correlation(config.correlation, s.dv_a1, s.dv_b1);
      self += correlation(config.correlation, s.dv_a1, s.dv_a2);
      try {
        DvcComponents c = corrected_dvc(s, config);
        corrected.push_back(c.corrected);
        row.n_capped += c.capped_flag ? 1 : 0;
      } catch (const Error&) {
      }
    }
    row.mean_raw_cross = raw / spec.n_seeds;
    row.mean_self_a = self / spec.n_seeds;
    row.n_valid = static_cast<int>(corrected.size());
    if (!corrected.empty()) {
      double sum = 0.0;
      for (double v : corrected) sum += v;
      row.mean_corrected = sum / static_cast<double>(corrected.size());
      double ss = 0.0;
      for (double v : corrected) ss += (v - row.mean_corrected) * (v - row.mean_corrected);
      row.sd_corrected = corrected.size() > 1 ? std::sqrt(ss / static_cast<double>(corrected.size() - 1)) : 0.0;
    } else {
      row.mean_corrected = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Lifting latent DVs into feature space

struct EmbedSpec {
  Index dims = 200;
  double nuisance_sd = 0.5;       // i.i.d. per feature, independent per observer
  double class_separation = 2.0;  // distance between class means along the signal axis
};

/// Two observers whose features are (class offset + latent) * u + noise,
/// with u a seeded random unit vector per observer. Samples alternate
/// between two balanced classes; within a class the latent values are the
/// given ones, so per-class DVC targets corr(s_a, s_b).
inline std::pair<RepresentationSet, RepresentationSet> embed_latents_as_features(const Vector& s_a, const Vector& s_b,
                                                                                 const EmbedSpec& spec,
                                                                                 std::uint64_t seed,
                                                                                 Vector* u_a_out = nullptr,
                                                                                 Vector* u_b_out = nullptr) {
  if (spec.dims < 2) throw Error(ErrorKind::invalid_argument, "embed: dims must be >= 2");
  if (s_a.size() != s_b.size()) throw Error(ErrorKind::shape_mismatch, "embed: latent lengths differ");
  if (!(spec.nuisance_sd >= 0.0)) throw Error(ErrorKind::invalid_argument, "embed: nuisance_sd must be >= 0");
  const Index m = s_a.size();
  std::vector<std::string> labels(static_cast<std::size_t>(m));
  Vector offset(m);
  for (Index i = 0; i < m; ++i) {
    const bool upper = (i % 2) == 1;
    labels[static_cast<std::size_t>(i)] = upper ? "c1" : "c0";
    offset[i] = (upper ? 0.5 : -0.5) * spec.class_separation;
  }
  auto make = [&](const Vector& s, std::string_view tag, Vector* u_out) {
    Rng rng(derive_seed(seed, "embed", tag));
    const Vector u = random_unit_vector(spec.dims, rng);
    Matrix x = (offset + s) * u.transpose();
    if (spec.nuisance_sd > 0.0) x += spec.nuisance_sd * standard_normal(m, spec.dims, rng);
    if (u_out) *u_out = u;
    return make_representation(std::string(tag), std::move(x), labels);
  };
  return {make(s_a, "latent_a", u_a_out), make(s_b, "latent_b", u_b_out)};
}

/// Bivariate normal latent pair with unit variances and correlation rho.
inline std::pair<Vector, Vector> correlated_latents(Index m, double rho, std::uint64_t seed) {
  if (!(rho >= -1.0 && rho <= 1.0)) throw Error(ErrorKind::invalid_argument, "rho outside [-1, 1]");
  Rng rng(seed);
  const Vector z1 = standard_normal(m, rng);
  const Vector z2 = standard_normal(m, rng);
  return {z1, rho * z1 + std::sqrt(1.0 - rho * rho) * z2};
}

// ---------------------------------------------------------------------------
// Latent cohorts: several observers of the same multi-class stimuli

struct CohortSpec {
  int n_classes = 8;
  Index per_class = 400;
  Index dims = 100;
  Index latent_dims = 8;
  double class_separation = 1.0;  // sd of class means per latent dim
  double noise_sd = 1.0;          // per feature
  // loadings[o][k]: variance share of shared source k in observer o's
  // within-class latent; the remainder is private. Observers o and o' then
  // have latent correlation sum_k sqrt(loadings[o][k] * loadings[o'][k]).
  std::vector<std::vector<double>> loadings = {{}};
  std::vector<std::string> ids;  // defaults to obs00, obs01, ...

  static double latent_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    double r = 0.0;
    for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) r += std::sqrt(a[k] * b[k]);
    return r;
  }
};

inline std::vector<RepresentationSet> gen_latent_cohort(const CohortSpec& spec, std::uint64_t seed) {
  if (spec.n_classes < 2 || spec.per_class < 2 || spec.dims < 2 || spec.latent_dims < 1)
    throw Error(ErrorKind::invalid_argument, "cohort: invalid shape parameters");
  if (!spec.ids.empty() && spec.ids.size() != spec.loadings.size())
    throw Error(ErrorKind::invalid_argument, "cohort: ids and loadings differ in length");
  std::size_t n_sources = 0;
  for (const auto& l : spec.loadings) {
    double total = 0.0;
    for (double w : l) {
      if (!(w >= 0.0)) throw Error(ErrorKind::invalid_argument, "cohort: negative loading");
      total += w;
    }
    if (total > 1.0 + 1e-12) throw Error(ErrorKind::invalid_argument, "cohort: loadings sum above 1");
    n_sources = std::max(n_sources, l.size());
  }
  const Index n = spec.n_classes * spec.per_class;
  const Index L = spec.latent_dims;

  Rng base(derive_seed(seed, "cohort"));
  const Matrix means = spec.class_separation * standard_normal(spec.n_classes, L, base);
  std::vector<Matrix> sources;
  for (std::size_t k = 0; k < n_sources; ++k) sources.push_back(standard_normal(n, L, base));
  std::vector<std::string> labels(static_cast<std::size_t>(n));
  std::vector<int> code(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    code[static_cast<std::size_t>(i)] = static_cast<int>(i / spec.per_class);
    labels[static_cast<std::size_t>(i)] = indexed_name("class_", code[static_cast<std::size_t>(i)]);
  }

  std::vector<RepresentationSet> out;
  for (std::size_t o = 0; o < spec.loadings.size(); ++o) {
    const auto& load = spec.loadings[o];
    Rng rng(derive_seed(seed, "observer", static_cast<std::uint64_t>(o)));
    double shared = 0.0;
    Matrix latent = Matrix::Zero(n, L);
    for (std::size_t k = 0; k < load.size(); ++k) {
      latent += std::sqrt(load[k]) * sources[k];
      shared += load[k];
    }
    latent += std::sqrt(std::max(0.0, 1.0 - shared)) * standard_normal(n, L, rng);
    for (Index i = 0; i < n; ++i) latent.row(i) += means.row(code[static_cast<std::size_t>(i)]);
    const Matrix embedding = standard_normal(L, spec.dims, rng);
    Matrix x = latent * embedding + spec.noise_sd * standard_normal(n, spec.dims, rng);
    std::string id = spec.ids.empty() ? indexed_name("obs", static_cast<int>(o)) : spec.ids[o];
    out.push_back(make_representation(std::move(id), std::move(x), labels));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared decision bias: outputs = one-hot(truth) + noise + bias

struct BiasObserverSpec {
  int n_classes = 10;
  Index per_class = 100;
  double noise_sd = 0.5;
  double bias_scale = 0.0;
  std::vector<double> class_bias_pattern;  // empty: 0.1 * (k + 1)

  Vector pattern() const {
    Vector p(n_classes);
    for (int k = 0; k < n_classes; ++k)
      p[k] = class_bias_pattern.empty() ? 0.1 * (k + 1) : class_bias_pattern[static_cast<std::size_t>(k)];
    return p;
  }

  void validate() const {
    if (n_classes < 2) throw Error(ErrorKind::invalid_argument, "bias: n_classes must be >= 2");
    if (per_class < 2) throw Error(ErrorKind::invalid_argument, "bias: per_class must be >= 2");
    if (!(noise_sd >= 0.0)) throw Error(ErrorKind::invalid_argument, "bias: noise_sd must be >= 0");
    if (!(bias_scale >= 0.0)) throw Error(ErrorKind::invalid_argument, "bias: bias_scale must be >= 0");
    if (!class_bias_pattern.empty() && static_cast<int>(class_bias_pattern.size()) != n_classes)
      throw Error(ErrorKind::invalid_argument, "bias: class_bias_pattern length must equal n_classes");
  }
};

struct BiasObserver {
  Matrix outputs;          // n x n_classes
  std::vector<int> truth;  // class code per sample
};

inline std::pair<BiasObserver, BiasObserver> gen_bias_observers(const BiasObserverSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Index n = spec.n_classes * spec.per_class;
  const Vector bias = spec.bias_scale * spec.pattern();
  auto make = [&](std::string_view tag) {
    Rng rng(derive_seed(seed, "bias", tag));
    BiasObserver o;
    o.outputs = spec.noise_sd * standard_normal(n, spec.n_classes, rng);
    o.truth.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const int c = static_cast<int>(i / spec.per_class);
      o.truth[static_cast<std::size_t>(i)] = c;
      o.outputs(i, c) += 1.0;
      o.outputs.row(i) += bias.transpose();
    }
    return o;
  };
  return {make("a"), make("b")};
}

inline std::vector<std::string> class_labels(const std::vector<int>& codes) {
  std::vector<std::string> out;
  out.reserve(codes.size());
  for (int c : codes) out.push_back(indexed_name("class_", c));
  return out;
}

/// Argmax decisions; ties go to the lowest class index.
inline DecisionRecord argmax_decisions(const BiasObserver& o) {
  std::vector<int> choice(o.truth.size());
  for (Index i = 0; i < o.outputs.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < o.outputs.cols(); ++c)
      if (o.outputs(i, c) > o.outputs(i, best)) best = c;
    choice[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return make_decision_record(class_labels(choice), class_labels(o.truth));
}

inline RepresentationSet as_representation(const BiasObserver& o, std::string id) {
  return make_representation(std::move(id), o.outputs, class_labels(o.truth));
}

struct BiasSweepRow {
  double bias_scale = 0.0;
  double kappa = 0.0;
  double dvc = 0.0;
  double accuracy = 0.0;
};

namespace detail {

inline double nan_mean(const std::vector<double>& v) {
  double sum = 0.0;
  int n = 0;
  for (double x : v)
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Per level: kappa of argmax decisions, DVC treating the outputs as
/// features, and mean accuracy; each averaged over `n_seeds` seeds.
inline std::vector<BiasSweepRow> sweep_bias(const BiasObserverSpec& spec, const std::vector<double>& levels,
                                            std::uint64_t seed, int n_seeds = 1, DvcConfig config = {},
                                            unsigned threads = default_thread_count()) {
  if (levels.size() < 2) throw Error(ErrorKind::invalid_argument, "bias sweep needs at least 2 levels");
  if (n_seeds < 1) throw Error(ErrorKind::invalid_argument, "n_seeds must be >= 1");
  const std::size_t n_levels = levels.size();
  std::vector<double> kap(n_levels * static_cast<std::size_t>(n_seeds));
  std::vector<double> dv(kap.size()), acc(kap.size());
  parallel_for(
      kap.size(),
      [&](std::size_t u) {
        const std::size_t s = u / n_levels, l = u % n_levels;
        const std::uint64_t run_seed = derive_seed(seed, "bias-run", static_cast<std::uint64_t>(s));
        BiasObserverSpec level = spec;
        level.bias_scale = levels[l];
        auto [a, b] = gen_bias_observers(level, run_seed);
        const auto da = argmax_decisions(a), db = argmax_decisions(b);
        kap[u] = kappa(da, db).kappa;
        acc[u] = 0.5 * (da.accuracy + db.accuracy);
        DvcConfig cfg = config;
        cfg.seed = run_seed;
        try {
          dv[u] = dvc_pair(as_representation(a, "observer_a"), as_representation(b, "observer_b"), cfg, 1).aggregate;
        } catch (const Error&) {
          dv[u] = std::numeric_limits<double>::quiet_NaN();
        }
      },
      threads);
  std::vector<BiasSweepRow> rows;
  for (std::size_t l = 0; l < n_levels; ++l) {
    std::vector<double> k, d, a;
    for (int s = 0; s < n_seeds; ++s) {
      const std::size_t u = static_cast<std::size_t>(s) * n_levels + l;
      k.push_back(kap[u]);
      d.push_back(dv[u]);
      a.push_back(acc[u]);
    }
    rows.push_back({levels[l], detail::nan_mean(k), detail::nan_mean(d), detail::nan_mean(a)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Shared task-irrelevant fluctuations

struct SharedFluctuationSpec {
  double base_corr = 0.5;       // within-class correlation of the task latents
  double indep_sd = 1.0;        // independent noise on the task features
  double irrelevant_sd = 10.0;  // independent noise on the task-irrelevant features
  double shared_sd = 0.0;       // trial fluctuations common to both observers, task-irrelevant features only
  Index dims = 40;
  Index samples = 100;          // per class
  int n_classes = 8;
  Index task_dims = 20;         // features carrying the task latent
  double class_separation = 1.5;  // ring radius of the class means
  Index shared_rank = 1;          // number of shared fluctuation factors

  void validate() const {
    if (!(base_corr >= -1.0 && base_corr <= 1.0)) throw Error(ErrorKind::invalid_argument, "base_corr outside [-1, 1]");
    if (!(indep_sd >= 0.0) || !(irrelevant_sd >= 0.0) || !(shared_sd >= 0.0))
      throw Error(ErrorKind::invalid_argument, "fluctuation scales must be nonnegative");
    if (dims < 2 || task_dims < 1 || task_dims >= dims)
      throw Error(ErrorKind::invalid_argument, "need 1 <= task_dims < dims");
    if (samples < 2 || n_classes < 3) throw Error(ErrorKind::invalid_argument, "need >= 3 classes of >= 2 samples");
    if (shared_rank < 1) throw Error(ErrorKind::invalid_argument, "shared_rank must be >= 1");
  }
};

/// Class means sit on a ring of radius class_separation in a 2-D task
/// subspace, embedded into the task features through a per-observer frame of
/// two orthogonal directions of norm sqrt(task_dims). Within-class task
/// latents are isotropic in that plane and correlate at base_corr across
/// observers along every direction. The remaining features carry only
/// fluctuations: a shared draw scaled by shared_sd plus independent noise.
inline std::pair<RepresentationSet, RepresentationSet> gen_shared_fluctuation_pair(const SharedFluctuationSpec& spec,
                                                                                   std::uint64_t seed) {
  spec.validate();
  const Index n = spec.n_classes * spec.samples;
  const Index irrelevant = spec.dims - spec.task_dims;
  Rng common(derive_seed(seed, "shared-common"));
  const auto [s_a1, s_b1] = correlated_latents(n, spec.base_corr, derive_seed(seed, "shared-latent", 0u));
  const auto [s_a2, s_b2] = correlated_latents(n, spec.base_corr, derive_seed(seed, "shared-latent", 1u));
  Matrix factors(spec.shared_rank, irrelevant);
  for (Index k = 0; k < spec.shared_rank; ++k)
    factors.row(k) = std::sqrt(static_cast<double>(irrelevant)) * random_unit_vector(irrelevant, common).transpose();
  const Matrix fluct = standard_normal(n, spec.shared_rank, common) * factors;
  std::vector<std::string> labels(static_cast<std::size_t>(n));
  Matrix position(n, 2);
  const double pi = std::acos(-1.0);
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i / spec.samples);
    labels[static_cast<std::size_t>(i)] = indexed_name("class_", c);
    const double angle = 2.0 * pi * c / spec.n_classes;
    position(i, 0) = spec.class_separation * std::cos(angle);
    position(i, 1) = spec.class_separation * std::sin(angle);
  }
  auto make = [&](const Vector& s1, const Vector& s2, std::string_view tag) {
    Rng rng(derive_seed(seed, "shared-observer", tag));
    Matrix frame(2, spec.task_dims);
    Vector u = random_unit_vector(spec.task_dims, rng);
    Vector v = random_unit_vector(spec.task_dims, rng);
    v -= v.dot(u) * u;
    v.normalize();
    frame.row(0) = u.transpose();
    frame.row(1) = v.transpose();
    frame *= std::sqrt(static_cast<double>(spec.task_dims));
    Matrix latent = position;
    latent.col(0) += s1;
    latent.col(1) += s2;
    const Matrix noise = standard_normal(n, spec.dims, rng);
    Matrix x(n, spec.dims);
    x.leftCols(spec.task_dims) = latent * frame + spec.indep_sd * noise.leftCols(spec.task_dims);
    x.rightCols(irrelevant) = spec.shared_sd * fluct + spec.irrelevant_sd * noise.rightCols(irrelevant);
    return make_representation(std::string(tag), std::move(x), labels);
  };
  return {make(s_a1, s_a2, "observer_a"), make(s_b1, s_b2, "observer_b")};
}

struct SharedSweepRow {
  double shared_sd = 0.0;
  double dvc = 0.0;
  double rsa = 0.0;
};

inline std::vector<SharedSweepRow> sweep_shared_fluctuation(const SharedFluctuationSpec& spec,
                                                            const std::vector<double>& shared_levels,
                                                            std::uint64_t seed, int n_seeds = 1,
                                                            DvcConfig config = {},
                                                            unsigned threads = default_thread_count()) {
  if (shared_levels.size() < 2) throw Error(ErrorKind::invalid_argument, "shared sweep needs at least 2 levels");
  if (n_seeds < 1) throw Error(ErrorKind::invalid_argument, "n_seeds must be >= 1");
  const std::size_t n_levels = shared_levels.size();
  std::vector<double> dv(n_levels * static_cast<std::size_t>(n_seeds)), rs(dv.size());
  parallel_for(
      dv.size(),
      [&](std::size_t u) {
        const std::size_t s = u / n_levels, l = u % n_levels;
        const std::uint64_t run_seed = derive_seed(seed, "shared-run", static_cast<std::uint64_t>(s));
        SharedFluctuationSpec level = spec;
        level.shared_sd = shared_levels[l];
        auto [a, b] = gen_shared_fluctuation_pair(level, run_seed);
        DvcConfig cfg = config;
        cfg.seed = run_seed;
        try {
          dv[u] = dvc_pair(a, b, cfg, 1).aggregate;
        } catch (const Error&) {
          dv[u] = std::numeric_limits<double>::quiet_NaN();
        }
        try {
          rs[u] = rsa_category(a, b);
        } catch (const Error&) {
          rs[u] = std::numeric_limits<double>::quiet_NaN();
        }
      },
      threads);
  std::vector<SharedSweepRow> rows;
  for (std::size_t l = 0; l < n_levels; ++l) {
    std::vector<double> d, r;
    for (int s = 0; s < n_seeds; ++s) {
      d.push_back(dv[static_cast<std::size_t>(s) * n_levels + l]);
      r.push_back(rs[static_cast<std::size_t>(s) * n_levels + l]);
    }
    rows.push_back({shared_levels[l], detail::nan_mean(d), detail::nan_mean(r)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Fine-class probabilities with a shared miscalibrated prior

struct SharedPriorSpec {
  std::vector<int> group_sizes = {1, 2, 4, 8};  // fine classes per coarse class
  Index per_class = 100;                        // trials per coarse class
  double signal = 2.0;       // logit boost on the fine members of the true coarse class
  double noise_sd = 1.0;     // independent per observer and fine class
  double prior_scale = 1.5;  // shared logit offset on the members of the first coarse class

  void validate() const {
    if (group_sizes.size() < 2) throw Error(ErrorKind::invalid_argument, "prior: need at least 2 coarse classes");
    for (int g : group_sizes)
      if (g < 1) throw Error(ErrorKind::invalid_argument, "prior: every coarse class needs a fine class");
    if (per_class < 5) throw Error(ErrorKind::invalid_argument, "prior: per_class must be >= 5");
    if (!(noise_sd >= 0.0)) throw Error(ErrorKind::invalid_argument, "prior: noise_sd must be >= 0");
  }
};

struct SharedPriorData {
  ClassGroupMap groups;
  std::vector<std::string> truth;  // coarse class per trial
  RepresentationSet logits_a, logits_b;  // fine logits as features, coarse labels
  Matrix probs_a, probs_b;               // softmax over fine classes
};

inline SharedPriorData gen_shared_prior_observers(const SharedPriorSpec& spec, std::uint64_t seed) {
  spec.validate();
  SharedPriorData d;
  const int k = static_cast<int>(spec.group_sizes.size());
  std::vector<int> group_of;
  for (int g = 0; g < k; ++g)
    for (int f = 0; f < spec.group_sizes[static_cast<std::size_t>(g)]; ++f) {
      const std::string fine = indexed_name("fine_", static_cast<int>(group_of.size()));
      d.groups.fine_classes.push_back(fine);
      d.groups.groups[fine] = indexed_name("coarse_", g);
      group_of.push_back(g);
    }
  const Index n_fine = static_cast<Index>(group_of.size());
  const Index n = k * spec.per_class;
  Matrix base = Matrix::Zero(n, n_fine);
  for (Index i = 0; i < n; ++i) {
    const int g = static_cast<int>(i / spec.per_class);
    d.truth.push_back(indexed_name("coarse_", g));
    for (Index f = 0; f < n_fine; ++f) {
      if (group_of[static_cast<std::size_t>(f)] == g) base(i, f) += spec.signal;
      if (group_of[static_cast<std::size_t>(f)] == 0) base(i, f) += spec.prior_scale;
    }
  }
  auto softmax_rows = [](Matrix z) {
    for (Index i = 0; i < z.rows(); ++i) {
      z.row(i) = (z.row(i).array() - z.row(i).maxCoeff()).exp();
      z.row(i) /= z.row(i).sum();
    }
    return z;
  };
  auto make = [&](std::string_view tag, Matrix& probs) {
    Rng rng(derive_seed(seed, "prior", tag));
    Matrix logits = base + spec.noise_sd * standard_normal(n, n_fine, rng);
    probs = softmax_rows(logits);
    return make_representation(std::string(tag), std::move(logits), d.truth);
  };
  d.logits_a = make("observer_a", d.probs_a);
  d.logits_b = make("observer_b", d.probs_b);
  return d;
}

}  // namespace dvc
