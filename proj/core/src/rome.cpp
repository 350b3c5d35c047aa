#include "patchlab/rome.hpp"

#include <cmath>
#include <optional>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

SpdSolver sigma_solver(const Matrix& sigma, const char* what) {
  try {
    return SpdSolver(sigma);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(what) +
                         ": covariance is not SPD; add a ridge via "
                         "uncentered_covariance (" + e.what() + ")");
  }
}

}  // namespace

Rank1Edit rome_edit(const Matrix& w_out, const RomeRequest& req) {
  if (req.k.size() != w_out.cols() || req.v_target.size() != w_out.rows() ||
      req.sigma.rows() != w_out.cols()) {
    throw DimensionError("rome_edit: k, v_target and sigma must match W_out");
  }
  if (req.k.norm() == 0.0) throw NumericalError("rome_edit: zero key");
  const SpdSolver solver = sigma_solver(req.sigma, "rome_edit");
  const Vector sk = solver.solve(req.k);
  const double denom = req.k.dot(sk);
  if (!(denom > 0.0)) throw NumericalError("rome_edit: k^T S^-1 k is not positive");
  return Rank1Edit{req.v_target - w_out * req.k, sk / denom};
}

double edit_variance(const Rank1Edit& edit, const Matrix& sigma) {
  return edit.a.squaredNorm() * edit.b.dot(sigma * edit.b);
}

Rank1Edit patch_to_edit(const Vector& u_a, const Vector& u_b, const Vector& v,
                        const Matrix& w_out, const Matrix& sigma) {
  if (u_a.size() != w_out.cols() || u_b.size() != w_out.cols() ||
      v.size() != w_out.cols()) {
    throw DimensionError("patch_to_edit: activations and v must match W_out columns");
  }
  if (std::abs(v.norm() - 1.0) > 1e-10) {
    throw NumericalError("patch_to_edit: v must be unit norm");
  }
  if (u_a.norm() == 0.0) throw NumericalError("patch_to_edit: u_A is zero");
  const SpdSolver solver = sigma_solver(sigma, "patch_to_edit");
  const Vector su = solver.solve(u_a);
  const double gap = (u_b - u_a).dot(v);
  return Rank1Edit{gap * (w_out * v), su / u_a.dot(su)};
}

std::vector<double> default_alpha_sq_grid() {
  return {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
}

SubspaceApproxResult edit_to_subspace(const Vector& a, const Vector& b,
                                      const Matrix& w_out, const Matrix& sigma,
                                      const std::vector<double>& alpha_sq_grid) {
  if (a.size() != w_out.rows() || b.size() != w_out.cols() ||
      sigma.rows() != w_out.cols() || sigma.cols() != w_out.cols()) {
    throw DimensionError("edit_to_subspace: inconsistent dimensions");
  }
  if (a.norm() == 0.0) throw NumericalError("edit_to_subspace: degenerate edit (a = 0)");
  if (alpha_sq_grid.empty()) throw ConfigError("edit_to_subspace: empty alpha grid");
  for (double s : alpha_sq_grid) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ConfigError("edit_to_subspace: alpha^2 values must be positive");
    }
  }

  const SpdSolver sig = sigma_solver(sigma, "edit_to_subspace");
  const Matrix sinv_wt = sig.solve(Matrix(w_out.transpose()));  // S^-1 W^T
  const Matrix gram = w_out * sinv_wt;
  std::optional<SpdSolver> lam_solver;
  try {
    lam_solver.emplace(0.5 * (gram + gram.transpose()));
  } catch (const NumericalError&) {
    throw NumericalError(
        "edit_to_subspace: W S^-1 W^T is not SPD (W_out is rank deficient)");
  }
  const Matrix w_pinv = pseudoinverse(w_out);
  const Vector base = w_pinv * a;
  const KernelProjector kernel(w_out);
  const Vector wb = w_out * b;
  const double a_sq = a.squaredNorm();

  SubspaceApproxResult best;
  bool have = false;
  for (double s : alpha_sq_grid) {
    const double s2 = s * s;
    const Vector lambda = lam_solver->solve(Vector(-2.0 * s * wb - 2.0 * s2 * a));
    const Vector q_raw = -b / s - sinv_wt * lambda / (2.0 * s2);
    const Vector w_raw = q_raw - base;
    AlphaPoint pt;
    pt.alpha_sq = s;
    pt.constraint_violation = (w_out * w_raw).norm();
    const Vector q = base + kernel.project_null(w_raw);
    const Vector sq = sigma * q;
    pt.reduced = s2 * q.dot(sq) + 2.0 * s * b.dot(sq);
    const Vector diff = b + s * q;
    pt.full = a_sq * diff.dot(sigma * diff);
    pt.v = std::sqrt(s) * q;
    best.curve.push_back(pt);
    if (!have || pt.full < best.objective_value ||
        (pt.full == best.objective_value && s < best.alpha * best.alpha)) {
      have = true;
      best.alpha = std::sqrt(s);
      best.v = pt.v;
      best.objective_value = pt.full;
      best.constraint_violation = pt.constraint_violation;
    }
  }
  return best;
}

EditPatchComparison edit_vs_patch_model_comparison(
    const SyntheticPathwayModel& model, const PatchPair& pair, const Vector& v,
    const Matrix& sigma) {
  const ActivationCache base = forward_with_cache(model, pair.base_input);
  const ActivationCache source = forward_with_cache(model, pair.source_input);
  InterventionSpec patch{Site::kMlpPostAct,
                         SubspacePatch{Matrix(v), source.mlp_post_act}};
  const Rank1Edit edit = patch_to_edit(base.mlp_post_act, source.mlp_post_act, v,
                                       model.mlp.w_out, sigma);
  const SyntheticPathwayModel edited = with_edited_down_projection(model, edit);
  EditPatchComparison out;
  out.logits_clean = base.logits;
  out.logits_patch = forward_with_cache(model, pair.base_input, patch).logits;
  out.logits_edit = forward_with_cache(edited, pair.base_input).logits;
  return out;
}

Matrix activation_covariance(const SyntheticPathwayModel& model, Index count,
                             std::uint64_t seed) {
  if (count < 1) throw ConfigError("activation_covariance: count must be >= 1");
  Rng rng(seed);
  Matrix x(count, model.mlp.d_mlp());
  for (Index i = 0; i < count; ++i) {
    const int label = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
    x.row(i) = model.mlp.hidden(sample_example(model, label, rng())).transpose();
  }
  return uncentered_covariance(x);
}

}  // namespace patchlab
