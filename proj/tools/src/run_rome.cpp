#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "patchlab/error.hpp"
#include "patchlab/illusion.hpp"
#include "patchlab/rome.hpp"
#include "scenarios.hpp"

namespace patchlab::tools {

Json rome_roundtrip_defaults() {
  return Json{{"scenario", "rome-roundtrip"},
              {"seed", 3},
              {"d_resid", 16},
              {"d_mlp", 64},
              {"rome_instances", 100},
              {"perturbations", 1000},
              {"max_log10_condition", 6.0},
              {"patch_instances", 50},
              {"subspace_instances", 50},
              {"alpha_sq_grid", default_alpha_sq_grid()},
              {"mc_samples", 100000},
              {"model", to_json(SyntheticModelConfig{})},
              {"model_pairs", 20},
              {"covariance_samples", 2000}};
}

namespace {

// Angle between two vectors, accurate near zero.
double angle_between(const Vector& x, const Vector& y) {
  const Vector xu = x.normalized();
  const Vector yu = y.normalized();
  return std::atan2((xu - xu.dot(yu) * yu).norm(), xu.dot(yu));
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

// E ||a b^T x + W v v^T x||^2 over x ~ N(0, S), estimated by sampling.
double monte_carlo_gap(const Vector& a, const Vector& b, const Vector& v,
                       const Matrix& w, const Matrix& sigma, Index samples,
                       Rng& rng) {
  const Matrix l = Eigen::LLT<Matrix>(sigma).matrixL();
  const Vector wv = w * v;
  double total = 0.0;
  for (Index s = 0; s < samples; ++s) {
    const Vector x = l * gaussian_vector(sigma.rows(), 1.0, rng);
    total += (b.dot(x) * a + v.dot(x) * wv).squaredNorm();
  }
  return total / static_cast<double>(samples);
}

}  // namespace

ScenarioResult run_rome_roundtrip(const Json& config, OutputDir& out) {
  const auto seed = config.at("seed").get<std::uint64_t>();
  const Index dr = config.at("d_resid").get<Index>();
  const Index dm = config.at("d_mlp").get<Index>();
  const auto grid = config.at("alpha_sq_grid").get<std::vector<double>>();
  if (grid.empty()) throw ConfigError("rome-roundtrip: alpha_sq_grid must not be empty");
  if (dr < 1 || dm <= dr) throw ConfigError("rome-roundtrip: need d_mlp > d_resid >= 1");
  const double max_log_cond = config.at("max_log10_condition").get<double>();

  ScenarioResult res;
  Rng rng(seed);
  Json report = Json::object();

  // Closed-form edit: constraint, KKT direction and sampled optimality.
  {
    Json rows = Json::array();
    Index violations = 0;
    double worst_constraint = 0.0;
    double worst_angle = 0.0;
    const Index n = config.at("rome_instances").get<Index>();
    const Index perturbations = config.at("perturbations").get<Index>();
    for (Index i = 0; i < n; ++i) {
      const std::uint64_t inst_seed = rng();
      Rng r(inst_seed);
      const double cond = std::pow(10.0, max_log_cond * static_cast<double>(i) /
                                             static_cast<double>(std::max<Index>(n - 1, 1)));
      const Matrix w = gaussian_matrix(dr, dm, 1.0, r);
      RomeRequest req{gaussian_vector(dm, 1.0, r), gaussian_vector(dr, 1.0, r),
                      random_spd(dm, cond, r)};
      const Rank1Edit e = rome_edit(w, req);
      const Matrix edited = apply_rank1_edit(w, e.a, e.b);
      const double constraint =
          (edited * req.k - req.v_target).norm() / req.v_target.norm();
      const double angle = angle_between(req.sigma * e.b, req.k);
      const double base_var = e.b.dot(req.sigma * e.b);
      Index inst_viol = 0;
      for (Index p = 0; p < perturbations; ++p) {
        Vector xi = gaussian_vector(dm, 1.0, r);
        xi -= (req.k.dot(xi) / req.k.squaredNorm()) * req.k;
        const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-4, 1)(r));
        const Vector bp = e.b + scale * e.b.norm() * xi / xi.norm();
        if (bp.dot(req.sigma * bp) < base_var * (1.0 - 1e-12)) ++inst_viol;
      }
      violations += inst_viol;
      worst_constraint = std::max(worst_constraint, constraint);
      worst_angle = std::max(worst_angle, angle);
      rows.push_back(Json{{"seed", inst_seed}, {"condition", cond},
                          {"constraint_rel_error", constraint},
                          {"b_dot_k", e.b.dot(req.k)}, {"kkt_angle", angle},
                          {"variance", edit_variance(e, req.sigma)},
                          {"optimality_violations", inst_viol}});
    }
    check(res, worst_constraint <= 1e-8, "rome: constraint error " + format_real(worst_constraint));
    check(res, worst_angle <= 1e-8, "rome: S b not parallel to k, angle " + format_real(worst_angle));
    check(res, violations == 0, "rome: " + std::to_string(violations) + " optimality violations");
    report["rome_edit"] = Json{{"instances", rows},
                               {"max_constraint_rel_error", worst_constraint},
                               {"max_kkt_angle", worst_angle},
                               {"optimality_violations", violations}};
  }

  // Patch to edit: equality of the layer output at the patched activation.
  {
    Json rows = Json::array();
    double worst = 0.0;
    const Index n = config.at("patch_instances").get<Index>();
    for (Index i = 0; i < n; ++i) {
      const std::uint64_t inst_seed = rng();
      Rng r(inst_seed);
      const Matrix w = gaussian_matrix(dr, dm, 1.0, r);
      const Vector ua = gaussian_vector(dm, 1.0, r);
      const Vector ub = gaussian_vector(dm, 1.0, r);
      const Vector v = random_unit_vector(dm, r);
      const Matrix sigma = random_spd(dm, 100.0, r);
      const Rank1Edit e = patch_to_edit(ua, ub, v, w, sigma);
      const Vector patched = w * patch_1d(ua, ub, v);
      const Vector edited = apply_rank1_edit(w, e.a, e.b) * ua;
      const double rel = (edited - patched).norm() / patched.norm();
      worst = std::max(worst, rel);
      rows.push_back(Json{{"seed", inst_seed}, {"rel_error", rel},
                          {"b_dot_u_a", e.b.dot(ua)}});
    }
    check(res, worst < 1e-9, "patch_to_edit: output mismatch " + format_real(worst));
    report["patch_to_edit"] = Json{{"instances", rows}, {"max_rel_error", worst}};
  }

  // Same equivalence on the synthetic model, end to end.
  {
    const SyntheticPathwayModel model =
        build_synthetic_model(model_config_from_json(config.at("model")));
    const Matrix sigma = activation_covariance(
        model, config.at("covariance_samples").get<Index>(), rng());
    const auto pairs =
        make_interchange_pairs(model, config.at("model_pairs").get<Index>(), rng());
    double worst = 0.0;
    Rng r(rng());
    for (const auto& p : pairs) {
      const Vector v = random_unit_vector(model.mlp.d_mlp(), r);
      const auto cmp = edit_vs_patch_model_comparison(model, p, v, sigma);
      worst = std::max(worst, (cmp.logits_patch - cmp.logits_edit).cwiseAbs().maxCoeff());
    }
    check(res, worst < 1e-9, "edit vs patch: logit mismatch " + format_real(worst));
    report["edit_vs_patch"] = Json{{"pairs", pairs.size()}, {"max_abs_logit_diff", worst}};

    // Round trip patch -> edit -> subspace with a trained direction. Reported
    // only: the edit's b carries no information about v's kernel part, so
    // just the rowspace part is pinned down (W v' is parallel to W v).
    const auto train = make_training_pairs(model, 256, rng());
    const Vector v = das_train(model, train, DasConfig{}).basis.col(0);
    const KernelProjector kernel(model.mlp.w_out);
    std::vector<double> full_cos;
    std::vector<double> row_cos;
    for (const auto& p : pairs) {
      const Vector ua = model.mlp.hidden(p.base_input);
      const Vector ub = model.mlp.hidden(p.source_input);
      const Rank1Edit e = patch_to_edit(ua, ub, v, model.mlp.w_out, sigma);
      const SubspaceApproxResult sa =
          edit_to_subspace(e.a, e.b, model.mlp.w_out, sigma, grid);
      full_cos.push_back(std::abs(cosine(sa.v, v)));
      row_cos.push_back(
          std::abs(cosine(kernel.project_row(sa.v), kernel.project_row(v))));
    }
    report["roundtrip"] = Json{{"median_abs_cos", median(full_cos)},
                               {"median_abs_cos_rowspace", median(row_cos)},
                               {"pairs", pairs.size()}};
  }

  // Edit to subspace: exact-equivalence recovery and the variance curve.
  {
    Json rows = Json::array();
    std::vector<double> cosines;
    double worst_obj = 0.0;
    const Index n = config.at("subspace_instances").get<Index>();
    for (Index i = 0; i < n; ++i) {
      const std::uint64_t inst_seed = rng();
      Rng r(inst_seed);
      const Matrix w = gaussian_matrix(dr, dm, 1.0, r);
      const Vector v0 = gaussian_vector(dm, 1.0, r);
      const Matrix sigma = random_spd(dm, 100.0, r);
      const SubspaceApproxResult sa = edit_to_subspace(w * v0, -v0, w, sigma, grid);
      const double c = std::abs(cosine(sa.v, v0));
      cosines.push_back(c);
      worst_obj = std::max(worst_obj, std::abs(sa.objective_value));
      rows.push_back(Json{{"seed", inst_seed}, {"abs_cos", c},
                          {"alpha", sa.alpha},
                          {"objective", sa.objective_value},
                          {"constraint_violation", sa.constraint_violation}});
    }
    const double med = median(cosines);
    check(res, med >= 0.99, "edit_to_subspace: median |cos| " + format_real(med));
    check(res, worst_obj <= 1e-6, "edit_to_subspace: objective " + format_real(worst_obj));
    report["exact_equivalence"] = Json{{"instances", rows}, {"median_abs_cos", med},
                                       {"max_abs_objective", worst_obj}};

    // A generic closed-form edit: reduced objective against sampled variance.
    Rng r(rng());
    const Matrix w = gaussian_matrix(dr, dm, 1.0, r);
    const Matrix sigma = random_spd(dm, 100.0, r);
    RomeRequest req{gaussian_vector(dm, 1.0, r), gaussian_vector(dr, 1.0, r), sigma};
    const Rank1Edit e = rome_edit(w, req);
    const SubspaceApproxResult sa = edit_to_subspace(e.a, e.b, w, sigma, grid);
    const Index mc = config.at("mc_samples").get<Index>();
    std::ostringstream csv;
    csv << "alpha_sq,reduced,full,monte_carlo,rel_gap,constraint_violation,cos_v_b,variance_ratio\n";
    double worst_gap = 0.0;
    const double edit_var = edit_variance(e, sigma);
    for (const auto& pt : sa.curve) {
      const double predicted = edit_var + e.a.squaredNorm() * pt.reduced;
      const double sampled = monte_carlo_gap(e.a, e.b, pt.v, w, sigma, mc, r);
      const double gap = std::abs(sampled - predicted) / predicted;
      worst_gap = std::max(worst_gap, gap);
      csv << format_real(pt.alpha_sq) << ',' << format_real(pt.reduced) << ','
          << format_real(pt.full) << ',' << format_real(sampled) << ','
          << format_real(gap) << ',' << format_real(pt.constraint_violation) << ','
          << format_real(cosine(pt.v, e.b)) << ','
          << format_real(variance_ratio(pt.v, e.a, e.b, w, sigma)) << '\n';
    }
    out.write("alpha_curve.csv", csv.str());
    check(res, worst_gap <= 0.02,
          "edit_to_subspace: reduced objective vs sampled variance gap " +
              format_real(worst_gap));
    Json best = to_json(sa);
    best["cos_v_b"] = cosine(sa.v, e.b);
    best["max_rel_gap_vs_monte_carlo"] = worst_gap;
    report["generic_edit"] = best;
  }

  out.write_json("rome_report.json", report);
  res.summary["checks"] = 6;
  return res;
}

}  // namespace patchlab::tools
