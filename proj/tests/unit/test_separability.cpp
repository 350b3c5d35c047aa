#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/separability.hpp"

using namespace patchlab;

namespace {

void clusters(Index n, Index d, double gap, std::uint64_t seed, Matrix& x,
              std::vector<int>& y) {
  Rng rng(seed);
  const Vector dir = random_unit_vector(d, rng);
  x = gaussian_matrix(n, d, 1.0, rng);
  y.clear();
  for (Index i = 0; i < n; ++i) {
    const int label = i % 2 ? 1 : -1;
    y.push_back(label);
    const double along = x.row(i).dot(dir);
    x.row(i) += (label * (gap + std::abs(along)) - along) * dir.transpose();
  }
}

}  // namespace

TEST(RidgeRegression, ExactLine) {
  Vector x(5), y(5);
  x << 0, 1, 2, 3, 4;
  y = 2.0 * x.array() + 1.0;
  const RegressionFit f = ridge_regression(x, y, 0.0);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_EQ(f.n, 5);
  EXPECT_LT(ridge_regression(x, y, 10.0).slope, 2.0);
  EXPECT_THROW(ridge_regression(Vector::Ones(5), y, 0.0), NumericalError);
}

TEST(Quadruples, DistinctIndicesAndProducts) {
  Rng rng(1);
  const Matrix x = gaussian_matrix(10, 3, 1.0, rng);
  const Matrix z = gaussian_matrix(10, 2, 1.0, rng);
  for (const auto& q : sample_quadruple_products(x, z, 50, 2)) {
    EXPECT_EQ(std::set<Index>(q.indices.begin(), q.indices.end()).size(), 4u);
    const auto [i, j, k, l] = q.indices;
    EXPECT_NEAR(q.a_val, (x.row(i) - x.row(j)).dot(x.row(k) - x.row(l)), 1e-12);
    EXPECT_NEAR(q.b_val, (z.row(i) - z.row(j)).dot(z.row(k) - z.row(l)), 1e-12);
  }
  EXPECT_THROW(sample_quadruple_products(x.topRows(3), z.topRows(3), 1, 0), ConfigError);
}

TEST(DistortionFit, IsometryGivesExactLambda) {
  Rng rng(3);
  const Matrix x = gaussian_matrix(100, 6, 1.0, rng);
  const Matrix q = random_orthogonal(6, rng);
  const Matrix z = (0.5 * x * q.transpose()).rowwise() + Vector::Ones(6).transpose();
  const RegressionFit f = distortion_fit(x, z, 200, 4);
  EXPECT_NEAR(f.slope, 0.25, 1e-10);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-10);
}

TEST(DistortionRegression, SyntheticModelIsNearlyAffine) {
  SyntheticModelConfig cfg;
  cfg.d_resid = 16;
  cfg.d_mlp = 64;
  const RegressionFit f = distortion_regression(build_synthetic_model(cfg), 256, 200, 1);
  EXPECT_EQ(f.n, 200);
  EXPECT_GT(f.r_squared, 0.5);
}

TEST(LogisticProbe, SeparatesClustersAndLossDecreases) {
  Matrix x;
  std::vector<int> y;
  clusters(400, 5, 1.0, 1, x, y);
  ProbeConfig cfg;
  cfg.steps = 300;
  cfg.learning_rate = 100.0;  // capped internally
  const ProbeResult r = logistic_probe(x, y, cfg);
  EXPECT_GE(r.accuracy, 0.95);
  EXPECT_LT(r.step_size, 100.0);
  ASSERT_EQ(r.train_loss.size(), 300u);
  for (std::size_t i = 1; i < r.train_loss.size(); ++i) {
    EXPECT_LE(r.train_loss[i], r.train_loss[i - 1] + 1e-12);
  }
}

TEST(LogisticProbe, RejectsBadLabels) {
  Matrix x = Matrix::Ones(6, 2);
  EXPECT_THROW(logistic_probe(x, {1, 1, 1, 1, 1, 1}, {}), ConfigError);
  EXPECT_THROW(logistic_probe(x, {1, 0, 1, -1, -1, 1}, {}), ConfigError);
  EXPECT_THROW(logistic_probe(x, {1, -1}, {}), DimensionError);
}

TEST(InjectedDirection, LargeInjectionIsDecodable) {
  SyntheticModelConfig cfg;
  cfg.d_resid = 16;
  cfg.d_mlp = 64;
  const auto results =
      injected_direction_experiment(build_synthetic_model(cfg), {0.0, 1.0}, 400, 3);
  ASSERT_EQ(results.size(), 2u);
  EXPECT_LT(results[0].accuracy, 0.7);
  EXPECT_GT(results[1].accuracy, 0.95);
  std::ostringstream os;
  write_probe_csv(os, results);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "z,accuracy,seed");
}

TEST(LemmaCheck, TransfersThroughIsometry) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix x;
    std::vector<int> y;
    clusters(60, 4, 1.0, seed, x, y);
    const LemmaCheck c = lemma_separability_check(x, y, 0.3, seed);
    EXPECT_TRUE(c.all_correct);
    EXPECT_EQ(c.correct, 60);
    EXPECT_NEAR(c.alpha_sum, 0.0, 1e-9);
    EXPECT_GT(c.original_gap, 0.0);
    EXPECT_NEAR(c.transferred_gap, 0.3 * c.original_gap, 1e-8 * c.original_gap);
  }
}

TEST(LemmaCheck, IdentityTransformKeepsGap) {
  Matrix x;
  std::vector<int> y;
  clusters(40, 3, 0.5, 9, x, y);
  const LemmaCheck c = lemma_separability_check(x, y, 1.0, 1, true);
  EXPECT_TRUE(c.all_correct);
  EXPECT_NEAR(c.transferred_gap, c.original_gap, 1e-8 * c.original_gap);
}

TEST(LemmaCheck, RejectsInseparable) {
  Matrix x(4, 1);
  x << -1, 1, 2, -2;
  EXPECT_THROW(lemma_separability_check(x, {1, -1, 1, -1}, 1.0, 0), NumericalError);
  EXPECT_THROW(lemma_separability_check(x, {1, 1, 1, 1}, 1.0, 0), ConfigError);
}

TEST(RidgeHeldOut, RecoversLinearResponse) {
  Rng rng(4);
  const Matrix x = gaussian_matrix(200, 5, 1.0, rng);
  const Vector w = gaussian_vector(5, 1.0, rng);
  const Vector y = (x * w).array() + 3.0;
  const HeldOutFit f = ridge_heldout(x, y, 1e-8, 1);
  EXPECT_GT(f.r_squared, 0.999999);
  EXPECT_EQ(f.n_train + f.n_test, 200);
  EXPECT_EQ(f.n_test, 40);
  EXPECT_THROW(ridge_heldout(x.topRows(20), y.head(20), 0.0, 1), ConfigError);
}

TEST(ResidualRegression, HiddenFeaturesEncodeResidual) {
  SyntheticModelConfig cfg;
  cfg.d_resid = 16;
  cfg.d_mlp = 64;
  const SyntheticPathwayModel m = build_synthetic_model(cfg);
  Rng rng(5);
  const HeldOutFit f =
      residual_projection_regression(m, random_unit_vector(16, rng), 400, 1e-3, 6);
  EXPECT_GT(f.r_squared, 0.9);
  EXPECT_THROW(residual_projection_regression(m, Vector::Ones(3), 400, 1e-3, 6),
               DimensionError);
}
