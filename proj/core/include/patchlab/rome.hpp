#pragma once

// Rank-1 model editing and its relation to subspace patching: the closed
// form edit, the edit that reproduces a 1-D patch on one activation, and the
// zero-target subspace intervention that best imitates a given edit.

#include <vector>

#include "patchlab/das.hpp"

namespace patchlab {

struct RomeRequest {
  Vector k;         // key, d_mlp
  Vector v_target;  // value, d_resid
  Matrix sigma;     // SPD, d_mlp x d_mlp
};

/// a = v_target - W k, b = S^-1 k / (k^T S^-1 k). Throws NumericalError when
/// S is not SPD (regularize with uncentered_covariance's ridge).
Rank1Edit rome_edit(const Matrix& w_out, const RomeRequest& req);

/// Trace of the contribution covariance of x -> (b^T x) a under x ~ N(0, S):
/// ||a||^2 b^T S b.
double edit_variance(const Rank1Edit& edit, const Matrix& sigma);

/// The edit that makes W' u_a equal W patch_1d(u_a, u_b, v):
/// a = ((u_b - u_a)^T v) W v, b = S^-1 u_a / (u_a^T S^-1 u_a).
Rank1Edit patch_to_edit(const Vector& u_a, const Vector& u_b, const Vector& v,
                        const Matrix& w_out, const Matrix& sigma);

struct AlphaPoint {
  double alpha_sq = 0.0;
  double reduced = 0.0;  // a^4 q^T S q + 2 a^2 b^T S q
  double full = 0.0;     // ||a||^2 (b + a^2 q)^T S (b + a^2 q)
  double constraint_violation = 0.0;
  Vector v;  // alpha q after the kernel projection
};

struct SubspaceApproxResult {
  Vector v;  // unnormalized; x -> x - (v^T x) v
  double alpha = 0.0;
  double objective_value = 0.0;  // full variance at the selected alpha
  double constraint_violation = 0.0;
  std::vector<AlphaPoint> curve;
};

std::vector<double> default_alpha_sq_grid();

/// For each alpha^2 in the grid, solves the equality-constrained quadratic
/// for v = alpha (W^+ a + w), w in ker W, minimizing the variance of the
/// difference between the edit and the intervention. Returns the grid
/// minimizer of the full variance (ties toward the smaller alpha^2).
SubspaceApproxResult edit_to_subspace(
    const Vector& a, const Vector& b, const Matrix& w_out, const Matrix& sigma,
    const std::vector<double>& alpha_sq_grid = default_alpha_sq_grid());

struct EditPatchComparison {
  Vector logits_patch;
  Vector logits_edit;
  Vector logits_clean;
};

/// Runs the base input once with a 1-D patch at mlp_post_act and once with
/// the equivalent rank-1 edit applied to W_out.
EditPatchComparison edit_vs_patch_model_comparison(
    const SyntheticPathwayModel& model, const PatchPair& pair, const Vector& v,
    const Matrix& sigma);

/// Second moment of mlp_post_act over `count` samples drawn with labels from
/// `seed`, with the default ridge.
Matrix activation_covariance(const SyntheticPathwayModel& model, Index count,
                             std::uint64_t seed);

}  // namespace patchlab
