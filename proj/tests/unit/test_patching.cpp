#include <gtest/gtest.h>

#include <cmath>

#include "patchlab/error.hpp"
#include "patchlab/patching.hpp"

using namespace patchlab;

TEST(Patch1d, ReplacesOnlyTheProjection) {
  Rng rng(1);
  const Vector base = gaussian_vector(6, 1.0, rng);
  const Vector src = gaussian_vector(6, 1.0, rng);
  const Vector v = random_unit_vector(6, rng);
  const Vector p = patch_1d(base, src, v);
  EXPECT_NEAR(v.dot(p), v.dot(src), 1e-12);
  const Vector perp_p = p - v.dot(p) * v;
  const Vector perp_b = base - v.dot(base) * v;
  EXPECT_LT((perp_p - perp_b).norm(), 1e-12);
}

TEST(Patch1d, SelfPatchIsIdentity) {
  Rng rng(2);
  const Vector base = gaussian_vector(5, 1.0, rng);
  const Vector v = random_unit_vector(5, rng);
  EXPECT_LT((patch_1d(base, base, v) - base).norm(), 1e-14);
}

TEST(Patch1d, RejectsNonUnitDirection) {
  const Vector x = Vector::Ones(3);
  EXPECT_THROW(patch_1d(x, x, 2.0 * Vector::Unit(3, 0)), NumericalError);
  EXPECT_THROW(patch_1d(x, Vector::Ones(4), Vector::Unit(3, 0)), DimensionError);
}

TEST(PatchKd, MatchesSequential1dPatches) {
  Rng rng(3);
  const Matrix basis = orthonormalize_columns(gaussian_matrix(8, 3, 1.0, rng));
  const Vector base = gaussian_vector(8, 1.0, rng);
  const Vector src = gaussian_vector(8, 1.0, rng);
  Vector seq = base;
  for (Index j = 0; j < 3; ++j) seq = patch_1d(seq, src, basis.col(j));
  EXPECT_LT((patch_kd(base, src, basis) - seq).norm(), 1e-12);
}

TEST(PatchKd, EmptyAndFullBases) {
  Rng rng(4);
  const Vector base = gaussian_vector(4, 1.0, rng);
  const Vector src = gaussian_vector(4, 1.0, rng);
  EXPECT_EQ(patch_kd(base, src, Matrix(4, 0)), base);
  EXPECT_LT((patch_kd(base, src, Matrix::Identity(4, 4)) - src).norm(), 1e-14);
  Matrix bad = Matrix::Identity(4, 2);
  bad(0, 1) = 0.1;
  EXPECT_THROW(patch_kd(base, src, bad), NumericalError);
}

TEST(ZeroSubspace, UnnormalizedDirection) {
  Vector x(3);
  x << 1, 2, 3;
  Vector v(3);
  v << 0, 2, 0;
  Vector expect(3);
  expect << 1, 2 - 4 * 2, 3;
  EXPECT_LT((zero_subspace_intervention(x, v) - expect).norm(), 1e-15);
}

TEST(ZeroSubspace, EquivalentToRank1Edit) {
  Rng rng(5);
  const Matrix w = gaussian_matrix(3, 7, 1.0, rng);
  const Vector v = gaussian_vector(7, 0.5, rng);
  const Vector x = gaussian_vector(7, 1.0, rng);
  const Matrix edited = apply_rank1_edit(w, w * v, -v);
  EXPECT_LT((w * zero_subspace_intervention(x, v) - edited * x).norm(), 1e-12);
}

TEST(Validate, Rank1EditOnlyAtDownProjection) {
  InterventionSpec spec{Site::kMlpPostAct, Rank1Edit{Vector::Ones(2), Vector::Ones(3)}};
  EXPECT_THROW(validate(spec), ConfigError);
  spec.site = Site::kMlpOut;
  EXPECT_NO_THROW(validate(spec));
}

TEST(Sites, NamesRoundTrip) {
  for (Site s : {Site::kResidPre, Site::kMlpPostAct, Site::kMlpOut, Site::kResidPost}) {
    EXPECT_EQ(parse_site(to_string(s)), s);
  }
  EXPECT_THROW(parse_site("attn_out"), ConfigError);
}

TEST(IllusoryContribution, MatchesClosedFormUnderDormancy) {
  Rng rng(6);
  const Matrix w = gaussian_matrix(4, 12, 1.0, rng);
  const KernelProjector proj(w);
  const Vector disc = proj.project_null(gaussian_vector(12, 1.0, rng)).normalized();
  Vector dorm = proj.project_row(gaussian_vector(12, 1.0, rng));
  dorm.normalize();
  // Base and source differ only along directions orthogonal to v_dorm.
  const Vector base = gaussian_vector(12, 1.0, rng);
  Vector diff = gaussian_vector(12, 1.0, rng);
  diff -= dorm.dot(diff) * dorm;
  const Vector src = base + diff;
  const Vector got = illusory_contribution(base, src, disc, dorm, w);
  const Vector closed = illusory_contribution_closed_form(base, src, disc, dorm, w);
  EXPECT_LT((got - closed).norm(), 1e-12 * std::max(1.0, closed.norm()));
  EXPECT_GT(closed.norm(), 1e-3);
}

TEST(IllusoryContribution, RejectsDirectionOutsideKernel) {
  Rng rng(7);
  const Matrix w = gaussian_matrix(3, 8, 1.0, rng);
  const Vector row = KernelProjector(w).project_row(gaussian_vector(8, 1.0, rng)).normalized();
  const Vector other = KernelProjector(w).project_null(gaussian_vector(8, 1.0, rng)).normalized();
  const Vector x = Vector::Zero(8);
  EXPECT_THROW(illusory_contribution(x, x, row, other, w), NumericalError);
}
