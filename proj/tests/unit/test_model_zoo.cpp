#include <gtest/gtest.h>

#include <cmath>

#include "patchlab/error.hpp"
#include "patchlab/model_zoo.hpp"

using namespace patchlab;

namespace {

Vector v3(double a, double b, double c) {
  Vector v(3);
  v << a, b, c;
  return v;
}

}  // namespace

TEST(ToyNet, ComputesIdentity) {
  const ToyNet net = ToyNet::canonical();
  for (double x = -5.0; x <= 5.0; x += 0.25) {
    EXPECT_NEAR(toy_forward(net, x).output, x, 1e-14);
  }
}

TEST(ToyNet, IllusoryPatchHiddenClosedForm) {
  const ToyNet net = ToyNet::canonical();
  const Vector v = v3(1, 1, 0) / std::sqrt(2.0);
  for (double x = -5.0; x <= 5.0; x += 0.5) {
    for (double xp = -5.0; xp <= 5.0; xp += 0.5) {
      const Vector h = patch_1d(toy_forward(net, x).hidden, toy_forward(net, xp).hidden, v);
      EXPECT_LT((h - v3((x + xp) / 2, (xp - x) / 2, x)).norm(), 1e-12);
      EXPECT_NEAR(toy_readout(net, h), xp, 1e-12);
      const Vector h3 = patch_1d(toy_forward(net, x).hidden, toy_forward(net, xp).hidden,
                                 v3(0, 0, 1));
      EXPECT_NEAR(toy_readout(net, h3), xp, 1e-12);
    }
  }
}

TEST(RotatedToyNet, RotationIsOrthogonalAndHiddenMatches) {
  const RotatedToyNet rot = RotatedToyNet::canonical();
  EXPECT_LT((rot.rotation * rot.rotation.transpose() - Matrix::Identity(3, 3)).norm(), 1e-14);
  const double x = 1.7;
  const Vector h = rotated_toy_forward(rot, x).hidden;
  EXPECT_LT((h - v3(x / std::sqrt(2.0), -std::sqrt(1.5) * x, 0.0)).norm(), 1e-14);
  EXPECT_NEAR(rotated_toy_forward(rot, x).output, x, 1e-14);
}

TEST(Gelu, DerivativeMatchesFiniteDifference) {
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double h = 1e-6;
    const double fd = (gelu(x + h) - gelu(x - h)) / (2 * h);
    EXPECT_NEAR(gelu_derivative(x), fd, 1e-8);
  }
  EXPECT_NEAR(gelu(0.0), 0.0, 0.0);
  EXPECT_NEAR(gelu(10.0), 10.0, 1e-12);
}

TEST(RandomMlp, OutputNormMatchesTargetOnFreshInputs) {
  const MlpLayer mlp = make_random_mlp(42, 32, 128, 1.0);
  Rng fresh(777);
  const double measured = mean_output_norm(mlp, 512, fresh);
  EXPECT_GE(measured, 0.95);
  EXPECT_LE(measured, 1.05);
}

TEST(RandomMlp, DownProjectionIsFullRank) {
  const MlpLayer mlp = make_random_mlp(1, 16, 64, 2.0);
  const SvdResult s = svd(mlp.w_out);
  EXPECT_EQ(numerical_rank(s.singular_values,
                           default_rank_tolerance(s.singular_values, 16, 64)),
            16);
}

TEST(RandomMlp, RejectsContractingShape) {
  EXPECT_THROW(make_random_mlp(1, 16, 16, 1.0), ConfigError);
  EXPECT_THROW(make_random_mlp(1, 16, 64, -1.0), ConfigError);
}

TEST(SyntheticModel, CanonicalShapesAndReader) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  EXPECT_EQ(m.d_resid, 64);
  EXPECT_EQ(m.mlp.d_mlp(), 256);
  EXPECT_NEAR(m.v_feat.norm(), 1.0, 1e-14);
  EXPECT_NEAR(m.mu.dot(m.v_feat), 0.0, 1e-12);
  EXPECT_LT((m.logitdiff_readout() - 2.0 * m.v_feat).norm(), 1e-14);
}

TEST(SyntheticModel, ClassesSeparateOnCleanRuns) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  Rng rng(5);
  int correct = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2 ? 1 : -1;
    const double ld = forward_with_cache(m, sample_example(m, label, rng())).logitdiff();
    if (ld * label > 0) ++correct;
  }
  EXPECT_GE(correct, 990);
}

TEST(SyntheticModel, SamplingIsDeterministic) {
  const SyntheticPathwayModel a = build_synthetic_model({});
  const SyntheticPathwayModel b = build_synthetic_model({});
  EXPECT_EQ(a.mlp.w_out, b.mlp.w_out);
  EXPECT_EQ(sample_example(a, 1, 9), sample_example(b, 1, 9));
}

TEST(Forward, CacheIsConsistent) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  const Vector x = sample_example(m, 1, 3);
  const ActivationCache c = forward_with_cache(m, x);
  EXPECT_LT((c.mlp_post_act - gelu(c.mlp_pre_act)).norm(), 1e-14);
  EXPECT_LT((c.resid_post - c.resid_pre - c.mlp_out).norm(), 1e-13);
  EXPECT_LT((c.logits - m.unembed * c.resid_post).norm(), 1e-13);
}

TEST(Forward, KernelPatchLeavesLogitsUnchanged) {
  SyntheticModelConfig cfg;
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    cfg.seed = rng();
    const SyntheticPathwayModel m = build_synthetic_model(cfg);
    const Vector n = KernelProjector(m.mlp.w_out)
                         .project_null(gaussian_vector(m.mlp.d_mlp(), 1.0, rng))
                         .normalized();
    const Vector base = sample_example(m, 1, rng());
    const Vector src = sample_example(m, -1, rng());
    const ActivationCache s = forward_with_cache(m, src);
    InterventionSpec spec{Site::kMlpPostAct, SubspacePatch{Matrix(n), s.mlp_post_act}};
    const Vector patched = forward_with_cache(m, base, spec).logits;
    const Vector clean = forward_with_cache(m, base).logits;
    EXPECT_LT((patched - clean).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Forward, Rank1EditMatchesEditedWeights) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  Rng rng(4);
  const Rank1Edit e{gaussian_vector(64, 0.1, rng), gaussian_vector(256, 0.1, rng)};
  const Vector x = sample_example(m, -1, 2);
  const Vector via_spec =
      forward_with_cache(m, x, InterventionSpec{Site::kMlpOut, e}).logits;
  const Vector via_weights = forward_with_cache(with_edited_down_projection(m, e), x).logits;
  EXPECT_LT((via_spec - via_weights).norm(), 1e-12);
}

TEST(Forward, RejectsWrongInputDimension) {
  const SyntheticPathwayModel m = build_synthetic_model({});
  EXPECT_THROW(forward_with_cache(m, Vector::Zero(3)), DimensionError);
}
