#include <gtest/gtest.h>

#include "patchlab/error.hpp"
#include "patchlab/serialization.hpp"

using namespace patchlab;

TEST(Serialization, VectorAndMatrixRoundTrip) {
  Rng rng(1);
  const Vector v = gaussian_vector(7, 1.0, rng);
  const Matrix m = gaussian_matrix(3, 5, 1.0, rng);
  EXPECT_EQ(vector_from_json(vector_to_json(v), "v"), v);
  EXPECT_EQ(matrix_from_json(matrix_to_json(m), "m"), m);
  // Through text as well: %.17g-level precision survives a dump and parse.
  EXPECT_EQ(matrix_from_json(Json::parse(matrix_to_json(m).dump()), "m"), m);
  EXPECT_THROW(matrix_from_json(Json::parse("[[1,2],[3]]"), "m"), ConfigError);
  EXPECT_THROW(vector_from_json(Json::parse("[1,\"x\"]"), "v"), ConfigError);
}

TEST(Serialization, ModelConfigRoundTripAndStrictKeys) {
  SyntheticModelConfig c;
  c.seed = 99;
  c.d_mlp = 128;
  c.noise_scale = 0.25;
  const SyntheticModelConfig back = model_config_from_json(to_json(c));
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.d_mlp, 128);
  EXPECT_EQ(back.noise_scale, 0.25);
  Json j = to_json(c);
  j["bogus"] = 1;
  try {
    model_config_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
}

TEST(Serialization, ModelRoundTripPreservesForward) {
  SyntheticModelConfig c;
  c.d_resid = 8;
  c.d_mlp = 24;
  const SyntheticPathwayModel m = build_synthetic_model(c);
  const SyntheticPathwayModel back = model_from_json(Json::parse(to_json(m).dump()));
  const Vector x = sample_example(m, 1, 4);
  EXPECT_EQ(forward_with_cache(m, x).logits, forward_with_cache(back, x).logits);
}

TEST(Serialization, InterventionKinds) {
  Rng rng(2);
  const std::vector<InterventionSpec> specs{
      {Site::kResidPre, FullReplace{gaussian_vector(4, 1.0, rng)}},
      {Site::kMlpPostAct,
       SubspacePatch{orthonormalize_columns(gaussian_matrix(5, 2, 1.0, rng)),
                     gaussian_vector(5, 1.0, rng)}},
      {Site::kMlpPostAct, ZeroSubspace{gaussian_vector(5, 1.0, rng), false}},
      {Site::kMlpOut, Rank1Edit{gaussian_vector(3, 1.0, rng), gaussian_vector(5, 1.0, rng)}},
  };
  for (const auto& s : specs) {
    const Json j = to_json(s);
    const InterventionSpec back = intervention_from_json(j);
    EXPECT_EQ(back.site, s.site);
    EXPECT_EQ(back.kind.index(), s.kind.index());
    EXPECT_EQ(to_json(back), j);
  }
  Json bad = to_json(specs[3]);
  bad["site"] = "mlp_post_act";
  EXPECT_THROW(intervention_from_json(bad), ConfigError);
  bad["kind"] = "teleport";
  EXPECT_THROW(intervention_from_json(bad), ConfigError);
}

TEST(Serialization, DasConfigRoundTrip) {
  DasConfig c;
  c.site = Site::kResidPre;
  c.subspace_dim = 3;
  c.objective_sign_rule.same_label = Objective::kMinimize;
  const DasConfig back = das_config_from_json(to_json(c));
  EXPECT_EQ(back.site, Site::kResidPre);
  EXPECT_EQ(back.subspace_dim, 3);
  EXPECT_EQ(back.objective_sign_rule.same_label, Objective::kMinimize);
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Serialization, ReportsCarryOptionalComponents) {
  IllusionReport r;
  r.norm_null = 0.5;
  const Json j = to_json(r);
  EXPECT_EQ(j.at("row").at("present"), false);
  EXPECT_EQ(j.at("null").at("present"), false);
  EXPECT_TRUE(j.at("spread_row").is_null());
  EXPECT_EQ(j.at("norm_null"), 0.5);
}

TEST(Serialization, FormatRealIsExact) {
  const double x = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_real(x)), x);
  EXPECT_EQ(format_real(1.5), "1.5");
}
