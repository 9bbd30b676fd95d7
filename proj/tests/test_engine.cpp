#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "dvc/engine.hpp"
#include "dvc/synthlab.hpp"

using namespace dvc;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::invalid_argument;
}

std::pair<RepresentationSet, RepresentationSet> embedded_pair(double rho, Index m, Index dims, std::uint64_t seed) {
  const auto [sa, sb] = correlated_latents(m, rho, derive_seed(seed, "latent"));
  EmbedSpec spec;
  spec.dims = dims;
  return embed_latents_as_features(sa, sb, spec, derive_seed(seed, "embed"));
}

DvcConfig quick_config(std::uint64_t seed = 1) {
  DvcConfig c;
  c.seed = seed;
  c.split_repeats = 4;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Split-normalized correlation

TEST(CorrectedDvc, MatchesIndependentEvaluation) {
  Rng rng(3);
  SplitDvSet s;
  const Vector base = standard_normal(400, rng);
  s.dv_a1 = base + 0.8 * standard_normal(400, rng);
  s.dv_a2 = base + 0.8 * standard_normal(400, rng);
  s.dv_b1 = 0.6 * base + 0.9 * standard_normal(400, rng);
  s.dv_b2 = 0.6 * base + 0.9 * standard_normal(400, rng);
  const DvcComponents c = corrected_dvc(s, DvcConfig{});
  const double c11 = pearson(s.dv_a1, s.dv_b1), c12 = pearson(s.dv_a1, s.dv_b2);
  const double c21 = pearson(s.dv_a2, s.dv_b1), c22 = pearson(s.dv_a2, s.dv_b2);
  const double r_cross = std::pow(std::abs(c11 * c12 * c21 * c22), 0.25);
  const double r_self = std::sqrt(pearson(s.dv_a1, s.dv_a2) * pearson(s.dv_b1, s.dv_b2));
  EXPECT_NEAR(c.r_cross, r_cross, 1e-14);
  EXPECT_NEAR(c.r_self, r_self, 1e-14);
  EXPECT_NEAR(c.corrected, r_cross / r_self, 1e-14);
  EXPECT_EQ(c.cross[1], c12);
  EXPECT_EQ(c.cross[2], c21);
}

TEST(CorrectedDvc, IdenticalSplitsGiveOne) {
  Rng rng(4);
  const Vector v = standard_normal(100, rng);
  const DvcComponents c = corrected_dvc({v, v, v, v}, DvcConfig{});
  EXPECT_DOUBLE_EQ(c.corrected, 1.0);
  EXPECT_FALSE(c.capped_flag);
}

TEST(CorrectedDvc, DegenerateAndCappedCases) {
  EXPECT_EQ(kind_of([] { combine_correlations({0.5, 0.5, 0.5, 0.5}, -0.1, 0.6, true); }), ErrorKind::degenerate);
  EXPECT_EQ(kind_of([] { combine_correlations({0.5, 0.5, 0.5, 0.5}, 0.0, 0.6, true); }), ErrorKind::degenerate);
  EXPECT_EQ(kind_of([] { combine_correlations({0.5, -0.5, 0.5, 0.5}, 0.6, 0.6, false); }), ErrorKind::degenerate);
  const DvcComponents ok = combine_correlations({0.5, -0.5, 0.5, 0.5}, 0.6, 0.6, true);
  EXPECT_NEAR(ok.corrected, 0.5 / 0.6, 1e-15);
  const DvcComponents all_negative = combine_correlations({-0.4, -0.4, -0.4, -0.4}, 0.5, 0.5, false);
  EXPECT_NEAR(all_negative.corrected, 0.8, 1e-15);
  const DvcComponents capped = combine_correlations({0.5, 0.5, 0.5, 0.5}, 0.3, 0.3, true);
  EXPECT_TRUE(capped.capped_flag);
  EXPECT_GT(capped.corrected, 1.0);
}

// ---------------------------------------------------------------------------
// Feature splits and decoding

TEST(FeatureSplit, PartitionsDeterministically) {
  const FeatureSplit s = split_feature_indices(11, 42);
  EXPECT_EQ(s.first.size(), 6u);
  EXPECT_EQ(s.second.size(), 5u);
  std::set<Index> all(s.first.begin(), s.first.end());
  all.insert(s.second.begin(), s.second.end());
  EXPECT_EQ(all.size(), 11u);
  const FeatureSplit again = split_feature_indices(11, 42);
  EXPECT_EQ(s.first, again.first);
  EXPECT_NE(s.first, split_feature_indices(11, 43).first);
  EXPECT_THROW(split_feature_indices(1, 0), Error);
}

TEST(Decode, InvariantToFeatureOrderAndScale) {
  auto [a, b] = embedded_pair(0.5, 600, 20, 5);
  const DecodedDvs base = decode_dvs(a, {0, 1}, quick_config());
  std::vector<Index> perm(20);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::reverse(perm.begin(), perm.end());
  RepresentationSet shuffled = feature_subset(a, perm, "");
  shuffled.matrix = 3.0 * shuffled.matrix.array() + 7.0;
  const DecodedDvs other = decode_dvs(shuffled, {0, 1}, quick_config());
  EXPECT_NEAR(std::abs(pearson(base.dvs, other.dvs)), 1.0, 1e-9);
}

TEST(Decode, LogisticDecoderAxisAgreesWithLda) {
  auto [a, b] = embedded_pair(0.5, 800, 10, 6);
  DvcConfig lda = quick_config(), lr = quick_config();
  lr.dv_decoder = DvDecoder::logreg;
  const DecodedDvs x = decode_dvs(a, {0, 1}, lda), y = decode_dvs(a, {0, 1}, lr);
  EXPECT_GT(pearson(x.dvs, y.dvs), 0.95);
}

TEST(Decode, ClampsComponentsToRank) {
  auto [a, b] = embedded_pair(0.5, 40, 60, 7);
  DvcConfig c = quick_config();
  c.n_pcs = 50;
  const DecodedDvs d = decode_dvs(a, {0, 1}, c);
  EXPECT_TRUE(d.clamped);
  EXPECT_EQ(d.n_pcs_used, 38);  // n - 2 keeps the within-class scatter invertible
}

// ---------------------------------------------------------------------------
// Observer pairs

TEST(DvcPair, SymmetricInArgumentOrder) {
  auto [a, b] = embedded_pair(0.6, 600, 30, 8);
  const DvcResult ab = dvc_pair(a, b, quick_config());
  const DvcResult ba = dvc_pair(b, a, quick_config());
  EXPECT_EQ(ab.aggregate, ba.aggregate);
  ASSERT_EQ(ab.entries.size(), ba.entries.size());
  for (std::size_t i = 0; i < ab.entries.size(); ++i) {
    const auto& x = ab.entries[i].components;
    const auto& y = ba.entries[i].components;
    EXPECT_EQ(x.corrected, y.corrected);
    EXPECT_EQ(x.self_a, y.self_b);
    EXPECT_EQ(x.cross[1], y.cross[2]);
    EXPECT_EQ(x.cross[0], y.cross[0]);
  }
  EXPECT_EQ(ab.observer_a, "latent_a");
  EXPECT_EQ(ba.observer_a, "latent_b");
}

TEST(DvcPair, EntriesPerClassPairAndConditioning) {
  CohortSpec spec;
  spec.n_classes = 4;
  spec.per_class = 60;
  spec.dims = 30;
  spec.loadings = {{0.6}, {0.6}};
  const auto obs = gen_latent_cohort(spec, 9);
  const DvcResult r = dvc_pair(obs[0], obs[1], quick_config());
  EXPECT_EQ(r.entries.size(), 12u);  // 6 class pairs x 2 conditioning classes
  EXPECT_NE(r.find(1, 3, 3), nullptr);
  EXPECT_EQ(r.find(1, 3, 2), nullptr);
  double sum = 0.0;
  int used = 0;
  for (const auto& e : r.entries) {
    EXPECT_EQ(e.repeats_used, 4);
    if (!e.degenerate) {
      sum += e.components.corrected;
      ++used;
      EXPECT_NEAR(e.components.corrected, e.components.r_cross / e.components.r_self, 1e-15);
    }
  }
  EXPECT_NEAR(r.aggregate, sum / used, 1e-15);
}

TEST(DvcPair, RecoversLatentCorrelation) {
  auto [a, b] = embedded_pair(0.7, 3000, 80, 10);
  const DvcResult r = dvc_pair(a, b, quick_config());
  EXPECT_NEAR(r.aggregate, 0.7, 0.07);
}

TEST(DvcPair, InvariantToConstantFeatureOffset) {
  auto [a, b] = embedded_pair(0.5, 600, 30, 11);
  RepresentationSet shifted = b;
  Rng rng(12);
  const Vector offset = 5.0 * standard_normal(30, rng);
  shifted.matrix.rowwise() += offset.transpose();
  const double base = dvc_pair(a, b, quick_config()).aggregate;
  EXPECT_NEAR(dvc_pair(a, shifted, quick_config()).aggregate, base, 1e-9);
}

TEST(DvcPair, SelfDvcIsHighForReliableObserver) {
  CohortSpec spec;
  spec.n_classes = 4;
  spec.per_class = 200;
  spec.dims = 60;
  const auto obs = gen_latent_cohort(spec, 13);
  const DvcResult r = dvc_pair(obs[0], obs[0], quick_config());
  EXPECT_GE(r.aggregate, 0.95);
}

TEST(DvcPair, RejectsMismatchedStimuli) {
  auto [a, b] = embedded_pair(0.5, 100, 10, 14);
  RepresentationSet c = b;
  std::swap(c.labels[0], c.labels[1]);
  EXPECT_EQ(kind_of([&] { dvc_pair(a, c, quick_config()); }), ErrorKind::shape_mismatch);
  DvcConfig bad = quick_config();
  bad.split_repeats = 0;
  EXPECT_EQ(kind_of([&] { dvc_pair(a, b, bad); }), ErrorKind::invalid_argument);
}

TEST(DvcPair, TinyClassesMarkedDegenerate) {
  Rng rng(15);
  std::vector<std::string> labels = {"x", "x", "y", "y", "y", "y"};
  const RepresentationSet a = make_representation("a", standard_normal(6, 4, rng), labels);
  const RepresentationSet b = make_representation("b", standard_normal(6, 4, rng), labels);
  const DvcResult r = dvc_pair(a, b, quick_config());
  const DvcEntry* small = r.find(0, 1, 0);
  ASSERT_NE(small, nullptr);
  EXPECT_TRUE(small->degenerate);
  EXPECT_FALSE(small->reason.empty());
  EXPECT_GE(r.n_degenerate, 1);
}

TEST(DvcPair, ThreadCountDoesNotChangeResults) {
  auto [a, b] = embedded_pair(0.5, 400, 20, 16);
  const DvcResult one = dvc_pair(a, b, quick_config(), 1);
  const DvcResult four = dvc_pair(a, b, quick_config(), 4);
  EXPECT_EQ(one.aggregate, four.aggregate);
}

TEST(DvcPair, RobustnessKnobsAgree) {
  auto [a, b] = embedded_pair(0.6, 2000, 60, 17);
  const double base = dvc_pair(a, b, quick_config()).aggregate;
  DvcConfig sp = quick_config();
  sp.correlation = CorrelationKind::spearman;
  DvcConfig shrink = quick_config();
  shrink.lda_solver = LdaSolver::eigen();
  DvcConfig few = quick_config();
  few.n_pcs = 10;
  for (const auto& c : {sp, shrink, few}) EXPECT_NEAR(dvc_pair(a, b, c).aggregate, base, 0.07);
}

// ---------------------------------------------------------------------------
// Cohorts

TEST(DvcMatrix, SymmetricWithSelfDiagonalAndRecordedFailures) {
  CohortSpec spec;
  spec.n_classes = 3;
  spec.per_class = 80;
  spec.dims = 30;
  spec.loadings = {{0.5}, {0.5}, {0.5}};
  auto obs = gen_latent_cohort(spec, 18);
  RepresentationSet odd = obs[2];
  odd.observer_id = "odd";
  std::swap(odd.labels[0], odd.labels.back());
  obs.push_back(odd);
  const DvcMatrix m = dvc_matrix(obs, quick_config());
  ASSERT_EQ(m.values.rows(), 4);
  EXPECT_EQ(m.pairs.size(), 10u);
  for (Index i = 0; i < 3; ++i) {
    EXPECT_TRUE(std::isfinite(m.values(i, i)));
    for (Index j = 0; j < 3; ++j) EXPECT_EQ(m.values(i, j), m.values(j, i));
  }
  EXPECT_TRUE(std::isnan(m.values(0, 3)));
  EXPECT_EQ(m.n_failed(), 3u);  // odd vs each of the others; odd vs itself succeeds
  EXPECT_TRUE(std::isfinite(m.values(3, 3)));
}

TEST(Summarize, AccuracyCorrelationAgainstBrains) {
  // Model i has mean DVC 0.1 * (i + 1) to the two brains.
  const int models = 4;
  Matrix v = Matrix::Constant(6, 6, 0.5);
  std::vector<ObserverMeta> metas;
  for (int i = 0; i < models; ++i) {
    metas.push_back({"m" + std::to_string(i), std::nullopt, 0.9 - 0.1 * i, ObserverKind::model});
    for (int b = 4; b < 6; ++b) v(i, b) = v(b, i) = 0.1 * (i + 1);
  }
  metas.push_back({"brain1", std::nullopt, std::nullopt, ObserverKind::brain});
  metas.push_back({"brain2", std::nullopt, std::nullopt, ObserverKind::brain});
  const GroupSummary s = summarize(v, metas);
  ASSERT_TRUE(s.accuracy);
  EXPECT_NEAR(s.accuracy->test.r, -1.0, 1e-12);
  EXPECT_EQ(s.accuracy->reference, (std::vector<std::string>{"brain1", "brain2"}));
  EXPECT_NEAR(s.accuracy->mean_dvc[2], 0.3, 1e-15);
}

TEST(Summarize, FamilyContrastAndNotices) {
  Matrix v(4, 4);
  v << 1.0, 0.9, 0.2, 0.1,  //
      0.9, 1.0, 0.3, 0.2,   //
      0.2, 0.3, 1.0, 0.8,   //
      0.1, 0.2, 0.8, 1.0;
  std::vector<ObserverMeta> metas = {{"a", "f", std::nullopt, ObserverKind::model},
                                     {"b", "f", std::nullopt, ObserverKind::model},
                                     {"c", "g", std::nullopt, ObserverKind::model},
                                     {"d", "g", std::nullopt, ObserverKind::model}};
  const GroupSummary s = summarize(v, metas);
  EXPECT_FALSE(s.accuracy);
  EXPECT_EQ(s.family.within, (std::vector<double>{0.9, 0.8}));
  EXPECT_EQ(s.family.between.size(), 4u);
  ASSERT_TRUE(s.family.test);
  EXPECT_EQ(s.family.test->u, 8.0);
  EXPECT_FALSE(s.notices.empty());

  for (auto& m : metas) m.family.reset();
  const GroupSummary none = summarize(v, metas);
  EXPECT_FALSE(none.family.test);
  EXPECT_EQ(std::count_if(none.notices.begin(), none.notices.end(),
                          [](const std::string& n) { return n.find("empty") != std::string::npos; }),
            2);
}
