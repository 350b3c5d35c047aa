#include <cmath>
#include <map>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/separability.hpp"
#include "scenarios.hpp"

namespace patchlab::tools {

Json separability_defaults() {
  return Json{{"scenario", "separability"},
              {"seed", 5},
              {"model", to_json(SyntheticModelConfig{})},
              {"z_values", {1e-4, 1e-3, 1e-2, 1e-1}},
              {"n_per_z", 2000},
              {"distortion_examples", 512},
              {"quadruples", 250},
              {"regression_directions", 5},
              {"regression_examples", 1000},
              {"ridge_lambda", 1e-3},
              {"lemma_datasets", 20},
              {"lemma_points", 100},
              {"lemma_dim", 8},
              {"lemma_lambda", 0.25}};
}

namespace {

// Published probe accuracies for the same z grid, echoed for side-by-side
// reading; they come from a different model and are not asserted.
const std::map<double, double>& reference_accuracy() {
  static const std::map<double, double> table{
      {1e-4, 0.69}, {1e-3, 0.83}, {1e-2, 0.87}, {1e-1, 0.996}};
  return table;
}

std::string reference_for(double z) {
  for (const auto& [key, acc] : reference_accuracy()) {
    if (std::abs(key - z) <= 1e-12 * key) return format_real(acc);
  }
  return "";
}

// Two Gaussian clusters pushed apart along a random direction.
void separable_dataset(Index n, Index d, Rng& rng, Matrix& x, std::vector<int>& y) {
  const Vector dir = random_unit_vector(d, rng);
  x = gaussian_matrix(n, d, 1.0, rng);
  y.assign(static_cast<std::size_t>(n), 1);
  for (Index i = 0; i < n; ++i) {
    const int label = i % 2 == 0 ? 1 : -1;
    y[static_cast<std::size_t>(i)] = label;
    // Remove the along-dir component and place each class at least 1 away.
    const double along = x.row(i).dot(dir);
    x.row(i) += (label * (1.0 + std::abs(along)) - along) * dir.transpose();
  }
}

}  // namespace

ScenarioResult run_separability(const Json& config, OutputDir& out) {
  const auto seed = config.at("seed").get<std::uint64_t>();
  const auto z_values = config.at("z_values").get<std::vector<double>>();
  if (z_values.empty()) throw ConfigError("separability: z_values must not be empty");
  const SyntheticPathwayModel model =
      build_synthetic_model(model_config_from_json(config.at("model")));
  Rng rng(seed);
  ScenarioResult res;
  Json report = Json::object();

  // Injected-direction probes.
  ProbeConfig probe;
  probe.lambda = config.at("ridge_lambda").get<double>();
  const auto probes = injected_direction_experiment(
      model, z_values, config.at("n_per_z").get<Index>(), rng(), probe);
  std::ostringstream pcsv;
  pcsv << "z,accuracy,seed,reference_accuracy\n";
  Index inversions = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    pcsv << format_real(probes[i].z) << ',' << format_real(probes[i].accuracy) << ','
         << probes[i].seed << ',' << reference_for(probes[i].z) << '\n';
    if (i > 0 && probes[i].accuracy < probes[i - 1].accuracy) ++inversions;
  }
  out.write("probe_accuracy.csv", pcsv.str());
  check(res, inversions <= 1,
        "separability: probe accuracy has " + std::to_string(inversions) +
            " inversions over z");
  report["probe_inversions"] = inversions;

  // Distortion regressions: the model map plus an exact isometry self-test.
  std::ostringstream dcsv;
  dcsv << "tag,slope,intercept,r_squared,n\n";
  auto drow = [&](const std::string& tag, const RegressionFit& f) {
    dcsv << tag << ',' << format_real(f.slope) << ',' << format_real(f.intercept) << ','
         << format_real(f.r_squared) << ',' << f.n << '\n';
  };
  const Index n_quad = config.at("quadruples").get<Index>();
  const RegressionFit synth = distortion_regression(
      model, config.at("distortion_examples").get<Index>(), n_quad, rng());
  drow("mlp_kernel", synth);
  report["distortion_mlp_kernel"] = to_json(synth);
  {
    Rng r(rng());
    const Index d = 32;
    const double lam = 0.36;
    const Matrix x = gaussian_matrix(256, d, 1.0, r);
    const Matrix q = random_orthogonal(d, r);
    const Vector t = gaussian_vector(d, 1.0, r);
    const Matrix z = (std::sqrt(lam) * x * q.transpose()).rowwise() + t.transpose();
    const RegressionFit iso = distortion_fit(x, z, n_quad, r());
    drow("isometry_selftest", iso);
    report["distortion_isometry_selftest"] = to_json(iso);
    check(res, std::abs(iso.r_squared - 1.0) <= 1e-8, "separability: isometry r^2 != 1");
    check(res, std::abs(iso.slope - lam) <= 1e-8, "separability: isometry slope != lambda");
  }
  out.write("distortion.csv", dcsv.str());

  // Recovering residual projections from hidden features.
  {
    std::ostringstream rcsv;
    rcsv << "direction,r_squared,train_r_squared,n_train,n_test\n";
    const Index dirs = config.at("regression_directions").get<Index>();
    Rng r(rng());
    Json fits = Json::array();
    for (Index i = 0; i < dirs; ++i) {
      const Vector dir = random_unit_vector(model.d_resid, r);
      const HeldOutFit f = residual_projection_regression(
          model, dir, config.at("regression_examples").get<Index>(),
          config.at("ridge_lambda").get<double>(), r());
      rcsv << i << ',' << format_real(f.r_squared) << ','
           << format_real(f.train_r_squared) << ',' << f.n_train << ',' << f.n_test
           << '\n';
      fits.push_back(to_json(f));
    }
    out.write("residual_regression.csv", rcsv.str());
    report["residual_regression"] = fits;
  }

  // Separability transfer through an exact lambda-isometry.
  {
    const Index sets = config.at("lemma_datasets").get<Index>();
    const Index n = config.at("lemma_points").get<Index>();
    const Index d = config.at("lemma_dim").get<Index>();
    const double lam = config.at("lemma_lambda").get<double>();
    Rng r(rng());
    Json checks = Json::array();
    Index perfect = 0;
    for (Index i = 0; i < sets; ++i) {
      Matrix x;
      std::vector<int> y;
      separable_dataset(n, d, r, x, y);
      const LemmaCheck c = lemma_separability_check(x, y, lam, r());
      if (c.all_correct) ++perfect;
      checks.push_back(to_json(c));
    }
    check(res, perfect == sets,
          "separability: transferred separator misclassified points in " +
              std::to_string(sets - perfect) + " datasets");
    report["lemma_checks"] = checks;
  }

  out.write_json("separability_report.json", report);
  res.summary["probe_inversions"] = inversions;
  return res;
}

}  // namespace patchlab::tools
