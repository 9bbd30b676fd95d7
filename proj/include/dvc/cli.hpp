#pragma once

// Command implementations behind the `dvc` executable. Each command is a
// pure function of its input files, configuration and seed; outputs are
// written atomically into the output directory.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "dvc/consistency.hpp"
#include "dvc/engine.hpp"
#include "dvc/error.hpp"
#include "dvc/repstore.hpp"
#include "dvc/synthlab.hpp"

namespace dvc::cli {

using nlohmann::json;
namespace fs = std::filesystem;

enum class Status { ok = 0, fatal = 1, partial = 2 };

inline int exit_code(Status s) { return static_cast<int>(s); }

// ---------------------------------------------------------------------------
// JSON helpers

/// Non-finite values become null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json long_record(const std::string& a, const std::string& b, const std::string& metric, double value) {
  return {{"observer_a", a}, {"observer_b", b}, {"metric", metric}, {"value", number(value)}};
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void write_json(const fs::path& path, const json& j) { write_file_atomic(path, dump(j)); }

inline json read_json(const fs::path& path) {
  try {
    return json::parse(detail::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::bad_format, path.string() + ": " + e.what());
  }
}

/// Rejects keys outside `allowed`, naming every offender.
inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& what) {
  if (!obj.is_object()) throw Error(ErrorKind::bad_format, what + ": expected a JSON object");
  std::vector<std::string> unknown;
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) unknown.push_back(key);
  if (!unknown.empty()) {
    std::string msg = what + ": unknown field(s)";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw Error(ErrorKind::invalid_argument, msg);
  }
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  DvcConfig dvc;
  int folds = 5;
  std::optional<ClassGroupMap> class_groups;
};

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = {"n_pcs",       "correlation",        "lda_solver", "shrinkage",
                                             "dv_decoder",  "split_repeats",      "seed",       "abs_before_geomean",
                                             "folds",       "class_groups"};
  return keys;
}

/// Parses a configuration object. Every invalid field is reported in one
/// error. The command-line seed always replaces a configured one.
inline RunConfig parse_run_config(const json& doc) {
  RunConfig rc;
  if (doc.is_null()) return rc;
  check_keys(doc, config_keys(), "config");
  std::vector<std::string> problems;
  auto field = [&](const char* key, auto&& apply) {
    if (!doc.contains(key)) return;
    try {
      apply(doc.at(key));
    } catch (const json::exception&) {
      problems.push_back(std::string(key) + ": wrong type");
    } catch (const std::exception& e) {
      problems.push_back(std::string(key) + ": " + e.what());
    }
  };
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  field("n_pcs", [&](const json& v) {
    rc.dvc.n_pcs = v.get<int>();
    if (rc.dvc.n_pcs < 1) fail("must be >= 1");
  });
  field("correlation", [&](const json& v) {
    const auto s = v.get<std::string>();
    if (s == "pearson") rc.dvc.correlation = CorrelationKind::pearson;
    else if (s == "spearman") rc.dvc.correlation = CorrelationKind::spearman;
    else fail("expected 'pearson' or 'spearman'");
  });
  field("lda_solver", [&](const json& v) {
    const auto s = v.get<std::string>();
    if (s == "svd") rc.dvc.lda_solver.kind = LdaSolver::Kind::svd;
    else if (s == "eigen_shrinkage") rc.dvc.lda_solver.kind = LdaSolver::Kind::eigen_shrinkage;
    else fail("expected 'svd' or 'eigen_shrinkage'");
  });
  field("shrinkage", [&](const json& v) {
    if (v.is_string()) {
      if (v.get<std::string>() != "auto") fail("expected 'auto' or a number in [0, 1]");
      rc.dvc.lda_solver.shrinkage.reset();
    } else {
      const double g = v.get<double>();
      if (!(g >= 0.0 && g <= 1.0)) fail("must lie in [0, 1]");
      rc.dvc.lda_solver.shrinkage = g;
    }
  });
  field("dv_decoder", [&](const json& v) {
    const auto s = v.get<std::string>();
    if (s == "lda") rc.dvc.dv_decoder = DvDecoder::lda;
    else if (s == "logreg") rc.dvc.dv_decoder = DvDecoder::logreg;
    else fail("expected 'lda' or 'logreg'");
  });
  field("split_repeats", [&](const json& v) {
    rc.dvc.split_repeats = v.get<int>();
    if (rc.dvc.split_repeats < 1) fail("must be >= 1");
  });
  field("seed", [&](const json& v) { (void)v.get<std::uint64_t>(); });
  field("abs_before_geomean", [&](const json& v) { rc.dvc.abs_before_geomean = v.get<bool>(); });
  field("folds", [&](const json& v) {
    rc.folds = v.get<int>();
    if (rc.folds < 2) fail("must be >= 2");
  });
  field("class_groups", [&](const json& v) {
    check_keys(v, {"fine_classes", "groups"}, "class_groups");
    ClassGroupMap map;
    map.fine_classes = v.at("fine_classes").get<std::vector<std::string>>();
    map.groups = v.at("groups").get<std::map<std::string, std::string>>();
    map.validate();
    rc.class_groups = std::move(map);
  });
  if (rc.dvc.lda_solver.shrinkage && rc.dvc.lda_solver.kind != LdaSolver::Kind::eigen_shrinkage)
    problems.push_back("shrinkage: only valid with lda_solver 'eigen_shrinkage'");
  if (!problems.empty()) {
    std::string msg = "config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(ErrorKind::invalid_argument, msg);
  }
  return rc;
}

inline RunConfig load_run_config(const std::optional<fs::path>& path) {
  return path ? parse_run_config(read_json(*path)) : RunConfig{};
}

inline json to_json(const DvcConfig& c) {
  json solver = c.lda_solver.kind == LdaSolver::Kind::svd ? json("svd") : json("eigen_shrinkage");
  json shrink = c.lda_solver.kind == LdaSolver::Kind::svd
                    ? json(nullptr)
                    : (c.lda_solver.shrinkage ? json(*c.lda_solver.shrinkage) : json("auto"));
  return {{"n_pcs", c.n_pcs},
          {"correlation", c.correlation == CorrelationKind::pearson ? "pearson" : "spearman"},
          {"lda_solver", solver},
          {"shrinkage", shrink},
          {"dv_decoder", to_string(c.dv_decoder)},
          {"split_repeats", c.split_repeats},
          {"abs_before_geomean", c.abs_before_geomean},
          {"seed", c.seed}};
}

// ---------------------------------------------------------------------------
// Inputs

/// Observer id of a matrix file: its file name without extension.
inline std::string observer_id_of(const fs::path& p) { return p.stem().string(); }

inline RepresentationSet load_observer(const fs::path& matrix, const fs::path& labels, std::string id = {}) {
  ObserverMeta meta;
  meta.observer_id = id.empty() ? observer_id_of(matrix) : std::move(id);
  return load_representation(matrix, labels, meta);
}

/// Distinct ids for two observer files; identical stems get /a and /b.
inline std::pair<std::string, std::string> pair_ids(const fs::path& a, const fs::path& b) {
  std::string ia = observer_id_of(a), ib = observer_id_of(b);
  if (ia == ib) {
    ia += "/a";
    ib += "/b";
  }
  return {ia, ib};
}

inline void ensure_out_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out))
    throw Error(ErrorKind::io, "cannot create output directory '" + out.string() + "'");
}

// ---------------------------------------------------------------------------
// dvc-pair / dvc-matrix

inline json entry_records(const DvcResult& r) {
  json records = json::array();
  for (const auto& e : r.entries) {
    const auto& c = e.components;
    records.push_back({{"observer_a", r.observer_a},
                       {"observer_b", r.observer_b},
                       {"class0", r.class_names[static_cast<std::size_t>(e.class0)]},
                       {"class1", r.class_names[static_cast<std::size_t>(e.class1)]},
                       {"conditioning", r.class_names[static_cast<std::size_t>(e.conditioning)]},
                       {"r_a1_b1", number(c.cross[0])},
                       {"r_a1_b2", number(c.cross[1])},
                       {"r_a2_b1", number(c.cross[2])},
                       {"r_a2_b2", number(c.cross[3])},
                       {"self_a", number(c.self_a)},
                       {"self_b", number(c.self_b)},
                       {"r_cross", number(e.degenerate ? std::nan("") : c.r_cross)},
                       {"r_self", number(e.degenerate ? std::nan("") : c.r_self)},
                       {"corrected", number(e.degenerate ? std::nan("") : c.corrected)},
                       {"capped_flag", !e.degenerate && c.capped_flag},
                       {"degenerate", e.degenerate},
                       {"reason", e.reason},
                       {"repeats_used", e.repeats_used}});
  }
  return records;
}

inline Status cmd_dvc_pair(const fs::path& a_path, const fs::path& b_path, const fs::path& labels,
                           const RunConfig& rc, const fs::path& out, unsigned threads = default_thread_count()) {
  const auto [ia, ib] = pair_ids(a_path, b_path);
  const RepresentationSet a = load_observer(a_path, labels, ia);
  const RepresentationSet b = load_observer(b_path, labels, ib);
  ensure_out_dir(out);
  const DvcResult r = dvc_pair(a, b, rc.dvc, threads);
  write_json(out / "entries.json", {{"records", entry_records(r)}});
  json summary = {{"observer_a", r.observer_a},
                  {"observer_b", r.observer_b},
                  {"aggregate", number(r.aggregate)},
                  {"n_entries", r.entries.size()},
                  {"n_degenerate", r.n_degenerate},
                  {"warnings", r.warnings},
                  {"config", to_json(rc.dvc)},
                  {"records", json::array({long_record(r.observer_a, r.observer_b, "dvc", r.aggregate)})}};
  write_json(out / "summary.json", summary);
  return r.n_degenerate > 0 || !r.has_aggregate() ? Status::partial : Status::ok;
}

inline std::string encode_dvc_matrix_csv(const DvcMatrix& m) {
  std::string s = "observer";
  for (const auto& id : m.ids) s += "," + id;
  s += "\n";
  for (Index i = 0; i < m.values.rows(); ++i) {
    s += m.ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.values.cols(); ++j) s += "," + format_double(m.values(i, j));
    s += "\n";
  }
  return s;
}

inline json summary_json(const GroupSummary& g) {
  json j;
  if (g.accuracy) {
    const auto& a = *g.accuracy;
    j["accuracy_correlation"] = {{"observers", a.observers},   {"mean_dvc", a.mean_dvc},
                                 {"accuracy", a.accuracy},     {"reference", a.reference},
                                 {"r", number(a.test.r)},      {"p_value", number(a.test.p_value)},
                                 {"n", a.test.n}};
  } else {
    j["accuracy_correlation"] = nullptr;
  }
  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  json fam = {{"within", g.family.within},
              {"between", g.family.between},
              {"mean_within", number(mean(g.family.within))},
              {"mean_between", number(mean(g.family.between))}};
  if (g.family.test) {
    fam["u"] = g.family.test->u;
    fam["z"] = g.family.test->z;
    fam["p_value"] = g.family.test->p_value;
  } else {
    fam["u"] = fam["z"] = fam["p_value"] = nullptr;
  }
  j["family_contrast"] = fam;
  j["notices"] = g.notices;
  return j;
}

inline Status cmd_dvc_matrix(const fs::path& registry, const RunConfig& rc, const fs::path& out,
                             unsigned threads = default_thread_count()) {
  const auto entries = registry_load(registry);
  if (entries.empty()) throw Error(ErrorKind::invalid_argument, "registry lists no observers");
  const auto sets = load_registry_sets(entries);
  std::vector<ObserverMeta> metas;
  for (const auto& e : entries) metas.push_back(e.meta);
  ensure_out_dir(out);
  const DvcMatrix m = dvc_matrix(sets, rc.dvc, threads);

  json records = json::array();
  json pairs = json::array();
  json long_records = json::array();
  for (const auto& p : m.pairs) {
    const auto& a = m.ids[static_cast<std::size_t>(p.i)];
    const auto& b = m.ids[static_cast<std::size_t>(p.j)];
    json pj = {{"observer_a", a}, {"observer_b", b}, {"error", p.error}};
    if (p.result) {
      for (auto& rec : entry_records(*p.result)) records.push_back(std::move(rec));
      pj["aggregate"] = number(p.result->aggregate);
      pj["n_degenerate"] = p.result->n_degenerate;
      pj["warnings"] = p.result->warnings;
    } else {
      pj["aggregate"] = nullptr;
      pj["n_degenerate"] = nullptr;
      pj["warnings"] = json::array();
    }
    pairs.push_back(std::move(pj));
    long_records.push_back(long_record(a, b, "dvc", m.values(p.i, p.j)));
  }
  write_file_atomic(out / "matrix.csv", encode_dvc_matrix_csv(m));
  write_json(out / "entries.json", {{"records", records}});
  json summary = summary_json(summarize(m.values, metas));
  summary["observers"] = m.ids;
  summary["pairs"] = pairs;
  summary["n_pairs"] = m.pairs.size();
  summary["n_failed"] = m.n_failed();
  summary["n_degenerate_entries"] = m.n_degenerate_entries();
  summary["config"] = to_json(rc.dvc);
  summary["records"] = long_records;
  write_json(out / "summary.json", summary);
  return m.n_failed() > 0 || m.n_degenerate_entries() > 0 ? Status::partial : Status::ok;
}

// ---------------------------------------------------------------------------
// kappa

enum class BehaviorDecoder { logreg, groupmean };

inline BehaviorDecoder parse_behavior_decoder(const std::string& s) {
  if (s == "logreg") return BehaviorDecoder::logreg;
  if (s == "groupmean") return BehaviorDecoder::groupmean;
  throw Error(ErrorKind::invalid_argument, "decoder must be 'logreg' or 'groupmean', got '" + s + "'");
}

inline std::string encode_decisions_csv(const DecisionRecord& r) {
  std::string s = "trial,choice,truth\n";
  for (std::size_t t = 0; t < r.size(); ++t) s += std::to_string(t) + "," + r.choices[t] + "," + r.truth[t] + "\n";
  return s;
}

inline Status cmd_kappa(const fs::path& a_path, const fs::path& b_path, const fs::path& labels,
                        BehaviorDecoder decoder, const RunConfig& rc, const fs::path& out) {
  const auto [ia, ib] = pair_ids(a_path, b_path);
  DecisionRecord da, db;
  std::vector<std::string> warnings;
  if (decoder == BehaviorDecoder::logreg) {
    const RepresentationSet a = load_observer(a_path, labels, ia);
    const RepresentationSet b = load_observer(b_path, labels, ib);
    if (!same_stimuli(a, b)) throw Error(ErrorKind::shape_mismatch, "kappa: observers differ in stimuli");
    for (const auto* set : {&a, &b}) {
      CvPrediction cv = logreg_fit_cv(set->matrix, set->codes, rc.folds, rc.dvc.seed);
      if (!cv.all_converged())
        warnings.push_back(set->observer_id + ": logistic regression reached the iteration cap in some fold");
      std::vector<std::string> choices;
      for (int c : cv.predicted) choices.push_back(set->class_names[static_cast<std::size_t>(c)]);
      (set == &a ? da : db) = make_decision_record(std::move(choices), set->labels);
    }
  } else {
    if (!rc.class_groups)
      throw Error(ErrorKind::invalid_argument, "groupmean decoder needs 'class_groups' in the config");
    const auto truth = read_labels(labels);
    const Matrix pa = read_matrix(a_path), pb = read_matrix(b_path);
    for (const auto* p : {&pa, &pb})
      if (p->rows() != static_cast<Index>(truth.size()))
        throw Error(ErrorKind::shape_mismatch, "kappa: probability rows differ from label count");
    da = make_decision_record(decide_groupmean(pa, *rc.class_groups).choices, truth);
    db = make_decision_record(decide_groupmean(pb, *rc.class_groups).choices, truth);
  }
  ensure_out_dir(out);
  const KappaResult k = kappa(da, db);
  json j = {{"observer_a", ia},
            {"observer_b", ib},
            {"decoder", decoder == BehaviorDecoder::logreg ? "logreg" : "groupmean"},
            {"kappa", number(k.kappa)},
            {"c_obs", k.c_obs},
            {"c_exp", k.c_exp},
            {"accuracy_a", k.p_a},
            {"accuracy_b", k.p_b},
            {"d", k.d},
            {"bound", k.bound},
            {"degenerate", k.degenerate},
            {"reason", k.reason},
            {"n_trials", da.size()},
            {"warnings", warnings},
            {"records", json::array({long_record(ia, ib, "kappa", k.kappa)})}};
  if (decoder == BehaviorDecoder::logreg) {
    j["folds"] = rc.folds;
    j["seed"] = rc.dvc.seed;
  }
  write_json(out / "kappa.json", j);
  write_file_atomic(out / "decisions_a.csv", encode_decisions_csv(da));
  write_file_atomic(out / "decisions_b.csv", encode_decisions_csv(db));
  return k.degenerate ? Status::partial : Status::ok;
}

// ---------------------------------------------------------------------------
// rsa

inline Status cmd_rsa(const fs::path& a_path, const fs::path& b_path, const fs::path& labels, const fs::path& out) {
  const auto [ia, ib] = pair_ids(a_path, b_path);
  const RepresentationSet a = load_observer(a_path, labels, ia);
  const RepresentationSet b = load_observer(b_path, labels, ib);
  ensure_out_dir(out);
  const double r = rsa_category(a, b);
  write_json(out / "rsa.json", {{"observer_a", ia},
                                {"observer_b", ib},
                                {"rsa", r},
                                {"rdm_distance", "correlation"},
                                {"rdm_comparison", "spearman_upper_triangle"},
                                {"n_classes", a.n_classes()},
                                {"records", json::array({long_record(ia, ib, "rsa", r)})}});
  return Status::ok;
}

// ---------------------------------------------------------------------------
// simulate

enum class SimKind { recovery, bias, shared };

inline SimKind parse_sim_kind(const std::string& s) {
  if (s == "recovery") return SimKind::recovery;
  if (s == "bias") return SimKind::bias;
  if (s == "shared") return SimKind::shared;
  throw Error(ErrorKind::invalid_argument, "kind must be 'recovery', 'bias' or 'shared', got '" + s + "'");
}

namespace detail {

/// Reads typed fields from a spec object, collecting every problem.
class SpecReader {
 public:
  SpecReader(const json& doc, std::string what) : doc_(doc), what_(std::move(what)) {}

  template <class T, class Check>
  void read(const char* key, T& target, Check&& check, const char* rule) {
    known_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      T v = doc_.at(key).get<T>();
      if (!check(v)) {
        problems_.push_back(std::string(key) + ": " + rule);
        return;
      }
      target = std::move(v);
    } catch (const json::exception&) {
      problems_.push_back(std::string(key) + ": wrong type");
    }
  }

  template <class T>
  void read(const char* key, T& target) {
    read(key, target, [](const T&) { return true; }, "");
  }

  void require(bool ok, const std::string& problem) {
    if (!ok) problems_.push_back(problem);
  }

  void finish() {
    if (doc_.is_object())
      for (const auto& [key, value] : doc_.items())
        if (!known_.count(key)) problems_.push_back(key + ": unknown field");
    if (!problems_.empty()) {
      std::string msg = what_ + " spec is invalid:";
      for (const auto& p : problems_) msg += "\n  " + p;
      throw Error(ErrorKind::invalid_argument, msg);
    }
  }

 private:
  const json& doc_;
  std::string what_;
  std::set<std::string> known_;
  std::vector<std::string> problems_;
};

inline bool positive(double v) { return v > 0.0; }
inline bool nonnegative(double v) { return v >= 0.0; }

}  // namespace detail

struct SimulationSpecs {
  RecoverySpec recovery;
  BiasObserverSpec bias;
  std::vector<double> bias_levels = {0.0, 0.5, 1.0, 2.0, 3.0};
  SharedFluctuationSpec shared;
  std::vector<double> shared_levels = {0.0, 10.0, 20.0, 40.0, 80.0};
  int n_seeds = 20;
};

inline SimulationSpecs parse_sim_spec(SimKind kind, const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::bad_format, "simulation spec must be a JSON object");
  SimulationSpecs s;
  auto all_nonneg = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; });
  };
  switch (kind) {
    case SimKind::recovery: {
      detail::SpecReader r(doc, "recovery");
      r.read("rho_true", s.recovery.rho_true, [](double v) { return v >= -1.0 && v <= 1.0; }, "must lie in [-1, 1]");
      r.read("sigma_a", s.recovery.sigma_a, detail::positive, "must be > 0");
      r.read("sigma_b", s.recovery.sigma_b, detail::positive, "must be > 0");
      r.read("noise_levels", s.recovery.noise_levels,
             [&](const std::vector<double>& v) { return !v.empty() && all_nonneg(v); },
             "must be a non-empty list of values >= 0");
      r.read("m", s.recovery.m, [](Index v) { return v >= 3; }, "must be >= 3");
      r.read("n_seeds", s.recovery.n_seeds, [](int v) { return v >= 1; }, "must be >= 1");
      r.finish();
      s.n_seeds = s.recovery.n_seeds;
      break;
    }
    case SimKind::bias: {
      detail::SpecReader r(doc, "bias");
      r.read("n_classes", s.bias.n_classes, [](int v) { return v >= 2; }, "must be >= 2");
      r.read("per_class", s.bias.per_class, [](Index v) { return v >= 2; }, "must be >= 2");
      r.read("noise_sd", s.bias.noise_sd, detail::nonnegative, "must be >= 0");
      r.read("class_bias_pattern", s.bias.class_bias_pattern);
      r.read("bias_levels", s.bias_levels,
             [&](const std::vector<double>& v) { return v.size() >= 2 && all_nonneg(v); },
             "must list at least 2 values >= 0");
      r.read("n_seeds", s.n_seeds, [](int v) { return v >= 1; }, "must be >= 1");
      r.require(s.bias.class_bias_pattern.empty() ||
                    static_cast<int>(s.bias.class_bias_pattern.size()) == s.bias.n_classes,
                "class_bias_pattern: length must equal n_classes");
      r.finish();
      break;
    }
    case SimKind::shared: {
      detail::SpecReader r(doc, "shared");
      auto& sh = s.shared;
      r.read("base_corr", sh.base_corr, [](double v) { return v >= -1.0 && v <= 1.0; }, "must lie in [-1, 1]");
      r.read("indep_sd", sh.indep_sd, detail::nonnegative, "must be >= 0");
      r.read("irrelevant_sd", sh.irrelevant_sd, detail::nonnegative, "must be >= 0");
      r.read("dims", sh.dims, [](Index v) { return v >= 2; }, "must be >= 2");
      r.read("samples", sh.samples, [](Index v) { return v >= 2; }, "must be >= 2");
      r.read("n_classes", sh.n_classes, [](int v) { return v >= 3; }, "must be >= 3");
      r.read("task_dims", sh.task_dims, [](Index v) { return v >= 1; }, "must be >= 1");
      r.read("class_separation", sh.class_separation, detail::positive, "must be > 0");
      r.read("shared_rank", sh.shared_rank, [](Index v) { return v >= 1; }, "must be >= 1");
      r.read("shared_levels", s.shared_levels,
             [&](const std::vector<double>& v) { return v.size() >= 2 && all_nonneg(v); },
             "must list at least 2 values >= 0");
      r.read("n_seeds", s.n_seeds, [](int v) { return v >= 1; }, "must be >= 1");
      r.require(sh.task_dims < sh.dims, "task_dims: must be < dims");
      r.finish();
      break;
    }
  }
  return s;
}

inline json spec_echo(SimKind kind, const SimulationSpecs& s, std::uint64_t seed, const DvcConfig& dvc) {
  json j;
  switch (kind) {
    case SimKind::recovery:
      j = {{"kind", "recovery"},
           {"rho_true", s.recovery.rho_true},
           {"sigma_a", s.recovery.sigma_a},
           {"sigma_b", s.recovery.sigma_b},
           {"noise_levels", s.recovery.noise_levels},
           {"m", s.recovery.m},
           {"n_seeds", s.recovery.n_seeds}};
      break;
    case SimKind::bias: {
      const Vector p = s.bias.pattern();
      j = {{"kind", "bias"},
           {"n_classes", s.bias.n_classes},
           {"per_class", s.bias.per_class},
           {"noise_sd", s.bias.noise_sd},
           {"class_bias_pattern", std::vector<double>(p.data(), p.data() + p.size())},
           {"bias_levels", s.bias_levels},
           {"n_seeds", s.n_seeds}};
      break;
    }
    case SimKind::shared:
      j = {{"kind", "shared"},
           {"base_corr", s.shared.base_corr},
           {"indep_sd", s.shared.indep_sd},
           {"irrelevant_sd", s.shared.irrelevant_sd},
           {"dims", s.shared.dims},
           {"samples", s.shared.samples},
           {"n_classes", s.shared.n_classes},
           {"task_dims", s.shared.task_dims},
           {"class_separation", s.shared.class_separation},
           {"shared_rank", s.shared.shared_rank},
           {"shared_levels", s.shared_levels},
           {"n_seeds", s.n_seeds}};
      break;
  }
  j["seed"] = seed;
  if (kind != SimKind::recovery) j["dvc_config"] = to_json(dvc);
  else j["correlation"] = dvc.correlation == CorrelationKind::pearson ? "pearson" : "spearman";
  return j;
}

inline std::string csv_row(std::initializer_list<double> values) {
  std::string s;
  for (double v : values) {
    if (!s.empty()) s += ",";
    s += format_double(v);
  }
  return s + "\n";
}

inline Status cmd_simulate(SimKind kind, const std::optional<fs::path>& spec_path, const RunConfig& rc,
                           const fs::path& out, unsigned threads = default_thread_count()) {
  const json doc = spec_path ? read_json(*spec_path) : json::object();
  const SimulationSpecs s = parse_sim_spec(kind, doc);
  ensure_out_dir(out);
  const std::uint64_t seed = rc.dvc.seed;
  std::string csv;
  bool any_nan = false;
  switch (kind) {
    case SimKind::recovery: {
      csv = "noise_sd,rho_true,mean_corrected,sd_corrected,mean_raw_cross,expected_raw_cross,mean_self_a,"
            "expected_self,n_valid,n_capped\n";
      for (const auto& r : sweep_recovery(s.recovery, seed, rc.dvc)) {
        any_nan |= !std::isfinite(r.mean_corrected);
        csv += csv_row({r.noise_sd, s.recovery.rho_true, r.mean_corrected, r.sd_corrected, r.mean_raw_cross,
                        r.expected_raw_cross, r.mean_self_a, r.expected_self, static_cast<double>(r.n_valid),
                        static_cast<double>(r.n_capped)});
      }
      break;
    }
    case SimKind::bias: {
      csv = "bias_scale,kappa,dvc,accuracy\n";
      for (const auto& r : sweep_bias(s.bias, s.bias_levels, seed, s.n_seeds, rc.dvc, threads)) {
        any_nan |= !std::isfinite(r.kappa) || !std::isfinite(r.dvc);
        csv += csv_row({r.bias_scale, r.kappa, r.dvc, r.accuracy});
      }
      break;
    }
    case SimKind::shared: {
      csv = "shared_sd,dvc,rsa\n";
      for (const auto& r : sweep_shared_fluctuation(s.shared, s.shared_levels, seed, s.n_seeds, rc.dvc, threads)) {
        any_nan |= !std::isfinite(r.dvc) || !std::isfinite(r.rsa);
        csv += csv_row({r.shared_sd, r.dvc, r.rsa});
      }
      break;
    }
  }
  write_file_atomic(out / "sweep.csv", csv);
  write_json(out / "sweep_spec.json", spec_echo(kind, s, seed, rc.dvc));
  return any_nan ? Status::partial : Status::ok;
}

// ---------------------------------------------------------------------------
// report

struct ReportRow {
  std::string observer_a, observer_b, metric;
  double value = 0.0;
};

/// Merges the "records" arrays of summary files into one long table keyed by
/// (sorted observer pair, metric). Identical duplicates collapse; differing
/// ones are an error.
inline std::vector<ReportRow> merge_records(const std::vector<std::pair<std::string, json>>& docs) {
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, std::string>> rows;
  for (const auto& [source, doc] : docs) {
    if (!doc.is_object() || !doc.contains("records") || !doc.at("records").is_array())
      throw Error(ErrorKind::bad_format, source + ": no 'records' array");
    for (const auto& rec : doc.at("records")) {
      std::string a, b, metric;
      double value = 0.0;
      try {
        a = rec.at("observer_a").get<std::string>();
        b = rec.at("observer_b").get<std::string>();
        metric = rec.at("metric").get<std::string>();
        const auto& v = rec.at("value");
        value = v.is_null() ? std::nan("") : v.get<double>();
      } catch (const json::exception& e) {
        throw Error(ErrorKind::bad_format, source + ": malformed record: " + e.what());
      }
      if (b < a) std::swap(a, b);
      auto key = std::make_tuple(a, b, metric);
      auto it = rows.find(key);
      if (it == rows.end()) {
        rows.emplace(key, std::make_pair(value, source));
        continue;
      }
      const double prev = it->second.first;
      const bool same = (std::isnan(prev) && std::isnan(value)) || prev == value;
      if (!same)
        throw Error(ErrorKind::duplicate_id, "conflicting values for (" + a + ", " + b + ", " + metric + "): " +
                                                 format_double(prev) + " in " + it->second.second + " vs " +
                                                 format_double(value) + " in " + source);
    }
  }
  std::vector<ReportRow> out;
  for (const auto& [key, v] : rows) out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), v.first});
  return out;
}

inline std::string encode_report_csv(const std::vector<ReportRow>& rows) {
  std::string s = "observer_a,observer_b,metric,value\n";
  for (const auto& r : rows) s += r.observer_a + "," + r.observer_b + "," + r.metric + "," + format_double(r.value) + "\n";
  return s;
}

inline Status cmd_report(const std::vector<fs::path>& inputs, const fs::path& out) {
  if (inputs.empty()) throw Error(ErrorKind::invalid_argument, "report needs at least one summary file");
  std::vector<std::pair<std::string, json>> docs;
  for (const auto& p : inputs) docs.emplace_back(p.string(), read_json(p));
  const auto rows = merge_records(docs);
  ensure_out_dir(out);
  write_file_atomic(out / "report.csv", encode_report_csv(rows));
  return Status::ok;
}

}  // namespace dvc::cli
