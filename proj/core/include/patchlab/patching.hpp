#pragma once

// Intervention operators. Everything here is a pure transformation of an
// activation vector or a weight matrix; binding an intervention to a model
// site happens in forward_with_cache (model_zoo.hpp).

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "patchlab/numerics.hpp"

namespace patchlab {

/// Named activation sites of the synthetic pathway model.
enum class Site { kResidPre, kMlpPostAct, kMlpOut, kResidPost };

std::string_view to_string(Site site);
/// Throws ConfigError for unknown names.
Site parse_site(std::string_view name);

/// Rank-1 update W' = W + a b^T.
struct Rank1Edit {
  Vector a;
  Vector b;
};

struct FullReplace {
  Vector value;
};

/// Replace the projection onto span(basis) with that of `source_activation`.
struct SubspacePatch {
  Matrix basis;  // orthonormal columns
  Vector source_activation;
};

/// x -> x - (v^T x) v. `v` may have any norm unless unit_constrained is set.
struct ZeroSubspace {
  Vector v;
  bool unit_constrained = false;
};

using InterventionKind =
    std::variant<FullReplace, SubspacePatch, ZeroSubspace, Rank1Edit>;

struct InterventionSpec {
  Site site = Site::kMlpPostAct;
  InterventionKind kind;
};

/// Checks the kind's invariants (orthonormal basis, unit v when requested,
/// rank-1 edits only at the down-projection output). Throws on violation.
void validate(const InterventionSpec& spec);

/// One-dimensional patch: base + (v.source - v.base) v.
/// Throws NumericalError if |‖v‖ - 1| > 1e-10.
Vector patch_1d(const Vector& act_base, const Vector& act_source,
                const Vector& v);

/// (I - V V^T) base + V V^T source for orthonormal V (possibly 0 columns).
Vector patch_kd(const Vector& act_base, const Vector& act_source,
                const Matrix& basis);

/// x - (v^T x) v without normalizing v.
Vector zero_subspace_intervention(const Vector& x, const Vector& v);

Matrix apply_rank1_edit(const Matrix& w, const Vector& a, const Vector& b);

/// W_out (patched - base) for a patch along v = (v_disc + v_dorm)/sqrt(2).
/// Verifies that v_disc is numerically in ker W_out, that both directions are
/// unit and that they are orthogonal.
Vector illusory_contribution(const Vector& act_base, const Vector& act_source,
                             const Vector& v_disc, const Vector& v_dorm,
                             const Matrix& w_out);

/// Closed form 0.5 (v_disc.(source - base)) W_out v_dorm, valid when the
/// dormant projections of base and source coincide.
Vector illusory_contribution_closed_form(const Vector& act_base,
                                         const Vector& act_source,
                                         const Vector& v_disc,
                                         const Vector& v_dorm,
                                         const Matrix& w_out);

/// Throws NumericalError unless V^T V = I within `tol` (Frobenius).
void require_orthonormal(const Matrix& basis, double tol, std::string_view what);

}  // namespace patchlab
