#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/illusion.hpp"

using namespace patchlab;

namespace {

SyntheticPathwayModel noiseless_model() {
  SyntheticModelConfig cfg;
  cfg.noise_scale = 0.0;
  cfg.d_resid = 16;
  cfg.d_mlp = 64;
  return build_synthetic_model(cfg);
}

}  // namespace

TEST(Fldd, Definition) {
  EXPECT_DOUBLE_EQ(*fldd(2.0, 0.5), 0.75);
  EXPECT_DOUBLE_EQ(*fldd(-2.0, 2.0), 2.0);
  EXPECT_FALSE(fldd(0.0, 1.0).has_value());
  EXPECT_FALSE(fldd(1e-7, 1.0).has_value());
  EXPECT_TRUE(fldd(1e-7, 1.0, 1e-8).has_value());
}

TEST(Fldd, SummaryExcludesTinyCleanValues) {
  const std::vector<PatchOutcome> outcomes{
      {2.0, 1.0, 1}, {1.0, 0.0, 1}, {0.0, 5.0, 1}, {4.0, 4.0, 1}, {1.0, -1.0, 1}};
  const FlddSummary s = summarize_fldd(outcomes);
  EXPECT_EQ(s.used, 4);
  EXPECT_EQ(s.excluded, 1);
  EXPECT_DOUBLE_EQ(s.mean, (0.5 + 1.0 + 0.0 + 2.0) / 4.0);
  EXPECT_DOUBLE_EQ(s.median, 0.75);
}

TEST(InterchangeAccuracy, BothRules) {
  const std::vector<PatchOutcome> outcomes{
      {1.0, -1.0, -1}, {1.0, 0.5, -1}, {-1.0, 2.0, -1}, {-1.0, -3.0, -1}};
  EXPECT_DOUBLE_EQ(interchange_accuracy(outcomes, FlipRule::kFlipCleanArgmax), 0.5);
  EXPECT_DOUBLE_EQ(interchange_accuracy(outcomes, FlipRule::kTargetSign), 0.5);
  EXPECT_THROW(interchange_accuracy({}), ConfigError);
}

TEST(RewriteScore, NormalizedGain) {
  EXPECT_DOUBLE_EQ(rewrite_score(0.2, 0.5), 0.375);
  EXPECT_DOUBLE_EQ(rewrite_score(0.0, 1.0), 1.0);
  EXPECT_THROW(rewrite_score(1.0, 1.0), NumericalError);
  EXPECT_THROW(rewrite_score(-0.1, 0.5), NumericalError);
}

TEST(Cosine, ClampedAndRejectsZero) {
  Vector a(2), b(2);
  a << 1, 0;
  b << 3, 0;
  EXPECT_DOUBLE_EQ(cosine(a, b), 1.0);
  EXPECT_DOUBLE_EQ(cosine(a, -b), -1.0);
  EXPECT_THROW(cosine(a, Vector::Zero(2)), NumericalError);
}

TEST(ProjectionSpread, ClassStatistics) {
  Matrix acts(4, 2);
  acts << 1, 0, 3, 0, -2, 5, -4, 5;
  const auto s = projection_spread(Vector::Unit(2, 0), acts, {1, 1, -1, -1});
  ASSERT_EQ(s.classes.size(), 2u);
  EXPECT_EQ(s.classes[0].label, -1);
  EXPECT_DOUBLE_EQ(s.of(1).mean, 2.0);
  EXPECT_DOUBLE_EQ(s.of(1).stddev, 1.0);
  EXPECT_DOUBLE_EQ(s.of(-1).mean, -3.0);
  EXPECT_THROW(s.of(7), ConfigError);
  std::ostringstream os;
  write_spread_csv(os, s);
  EXPECT_EQ(os.str(), "label,projection\n1,1\n1,3\n-1,-2\n-1,-4\n");
}

TEST(AnalyzeDirection, KernelDirectionHasNoEffectAlone) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  const auto pairs = make_interchange_pairs(m, 40, 3);
  Rng rng(1);
  const Vector n = KernelProjector(m.mlp.w_out)
                       .project_null(gaussian_vector(m.mlp.d_mlp(), 1.0, rng))
                       .normalized();
  const IllusionReport r = analyze_direction(m, n, Site::kMlpPostAct, pairs);
  EXPECT_FALSE(r.row.has_value());
  ASSERT_TRUE(r.null.has_value());
  EXPECT_NEAR(r.norm_null, 1.0, 1e-10);
  EXPECT_NEAR(r.v.fldd.mean, 0.0, 1e-10);
  EXPECT_NEAR(r.null->fldd.mean, 0.0, 1e-10);
  EXPECT_EQ(r.v.interchange_acc, 0.0);
}

TEST(AnalyzeDirection, NormsAreAPythagoreanSplit) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  const auto pairs = make_interchange_pairs(m, 10, 3);
  Rng rng(2);
  const Vector v = random_unit_vector(m.mlp.d_mlp(), rng);
  const IllusionReport r = analyze_direction(m, v, Site::kMlpPostAct, pairs);
  EXPECT_NEAR(r.norm_null * r.norm_null + r.norm_row * r.norm_row, 1.0, 1e-12);
  EXPECT_TRUE(r.row && r.null && r.spread_row && r.spread_null);
  EXPECT_EQ(r.spread_row->projections.size(), 20u);
  EXPECT_THROW(analyze_direction(m, 2.0 * v, Site::kMlpPostAct, pairs), NumericalError);
  EXPECT_THROW(analyze_direction(m, v, Site::kMlpPostAct, {}), ConfigError);
}

TEST(AnalyzeDirection, FullPatchAtResidPostFlipsEverything) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  const auto pairs = make_interchange_pairs(m, 30, 4);
  const auto outcomes = patch_outcomes(m, std::nullopt, Site::kResidPost, pairs);
  for (const auto& o : outcomes) EXPECT_LT(o.clean_logitdiff * o.patched_logitdiff, 0.0);
}

TEST(AngleScan, GridShape) {
  const auto g = quarter_turn_grid(40);
  ASSERT_EQ(g.size(), 41u);
  EXPECT_DOUBLE_EQ(g.front(), 0.0);
  EXPECT_DOUBLE_EQ(g.back(), std::numbers::pi / 2);
  EXPECT_NEAR(g[20], std::numbers::pi / 4, 1e-15);
  EXPECT_THROW(quarter_turn_grid(0), ConfigError);
}

TEST(AngleScan, StrictConstructionPeaksAtQuarterPi) {
  const SyntheticPathwayModel m = noiseless_model();
  const DormantPair dp = strict_dormant_pair(m);
  EXPECT_LT((m.mlp.w_out * dp.v_disc).norm(), 1e-10);
  EXPECT_NEAR(dp.v_disc.dot(dp.v_dorm), 0.0, 1e-12);
  // One orientation only: the signed mean change cancels over +/- pairs.
  std::vector<PatchPair> pairs;
  for (const auto& p : make_interchange_pairs(m, 16, 2)) {
    if (p.base_label == 1) pairs.push_back(p);
  }
  ASSERT_FALSE(pairs.empty());
  const auto scan = optimal_angle_scan(m, dp.v_disc, dp.v_dorm, Site::kMlpPostAct,
                                       pairs, quarter_turn_grid(40));
  EXPECT_FALSE(scan.dormancy_warning);
  EXPECT_NEAR(scan.best_angle, std::numbers::pi / 4, 1e-12);
  // Effect is proportional to cos(a) sin(a).
  const double peak = scan.effects[20];
  for (std::size_t i = 0; i < scan.angles.size(); ++i) {
    const double a = scan.angles[i];
    EXPECT_NEAR(scan.effects[i], peak * 2 * std::cos(a) * std::sin(a),
                1e-9 * std::max(1.0, peak));
  }
}

TEST(AngleScan, WarnsWhenDormantDirectionVaries) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  SyntheticPathwayModel clean = m;
  clean.noise_scale = 0.0;
  const DormantPair dp = strict_dormant_pair(clean);
  const auto pairs = make_interchange_pairs(m, 8, 2);
  const auto scan = optimal_angle_scan(m, dp.v_disc, dp.v_dorm, Site::kMlpPostAct,
                                       pairs, quarter_turn_grid(4));
  EXPECT_TRUE(scan.dormancy_warning);
  const auto lax = optimal_angle_scan(m, dp.v_disc, dp.v_dorm, Site::kMlpPostAct,
                                      pairs, quarter_turn_grid(4), false);
  EXPECT_FALSE(lax.dormancy_warning);
}

TEST(AngleScan, RejectsRowspaceDisconnectedDirection) {
  const SyntheticPathwayModel m = noiseless_model();
  const DormantPair dp = strict_dormant_pair(m);
  const auto pairs = make_interchange_pairs(m, 2, 2);
  EXPECT_THROW(optimal_angle_scan(m, dp.v_dorm, dp.v_disc, Site::kMlpPostAct, pairs,
                                  quarter_turn_grid(4)),
               NumericalError);
  EXPECT_THROW(optimal_angle_scan(m, dp.v_disc, dp.v_dorm, Site::kMlpPostAct, pairs, {2.0}),
               ConfigError);
}

TEST(VarianceRatio, EqualsOneWhenInterventionMatchesEdit) {
  Rng rng(3);
  const Matrix w = gaussian_matrix(4, 10, 1.0, rng);
  const Matrix sigma = random_spd(10, 100.0, rng);
  const Vector v = gaussian_vector(10, 1.0, rng);
  EXPECT_NEAR(variance_ratio(v, w * v, v, w, sigma), 1.0, 1e-12);
  EXPECT_THROW(variance_ratio(v, w * v, Vector::Zero(10), w, sigma), NumericalError);
}
