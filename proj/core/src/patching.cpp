#include "patchlab/patching.hpp"

#include <cmath>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

constexpr double kUnitTol = 1e-10;
constexpr double kOrthoTol = 1e-10;

void require_same_dim(const Vector& a, const Vector& b, std::string_view what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": dimensions " +
                         std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
  }
}

void require_unit(const Vector& v, std::string_view what) {
  const double n = v.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > kUnitTol) {
    throw NumericalError(std::string(what) +
                         ": direction must be unit norm, got norm " +
                         std::to_string(n));
  }
}

}  // namespace

std::string_view to_string(Site site) {
  switch (site) {
    case Site::kResidPre:
      return "resid_pre";
    case Site::kMlpPostAct:
      return "mlp_post_act";
    case Site::kMlpOut:
      return "mlp_out";
    case Site::kResidPost:
      return "resid_post";
  }
  return "unknown";
}

Site parse_site(std::string_view name) {
  if (name == "resid_pre") return Site::kResidPre;
  if (name == "mlp_post_act") return Site::kMlpPostAct;
  if (name == "mlp_out") return Site::kMlpOut;
  if (name == "resid_post") return Site::kResidPost;
  throw ConfigError("unknown site name '" + std::string(name) + "'");
}

void require_orthonormal(const Matrix& basis, double tol,
                         std::string_view what) {
  if (basis.cols() == 0) return;
  const Matrix gram = basis.transpose() * basis;
  const double err = (gram - Matrix::Identity(basis.cols(), basis.cols())).norm();
  if (!std::isfinite(err) || err > tol) {
    throw NumericalError(std::string(what) +
                         ": basis is not orthonormal (||V^T V - I||_F = " +
                         std::to_string(err) + ")");
  }
}

void validate(const InterventionSpec& spec) {
  std::visit(
      [&](const auto& kind) {
        using T = std::decay_t<decltype(kind)>;
        if constexpr (std::is_same_v<T, FullReplace>) {
          require_finite(kind.value, "full_replace");
        } else if constexpr (std::is_same_v<T, SubspacePatch>) {
          require_orthonormal(kind.basis, kOrthoTol, "subspace_patch");
          if (kind.basis.rows() != kind.source_activation.size()) {
            throw DimensionError(
                "subspace_patch: basis rows and source dimension differ");
          }
        } else if constexpr (std::is_same_v<T, ZeroSubspace>) {
          require_finite(kind.v, "zero_subspace");
          if (kind.unit_constrained) require_unit(kind.v, "zero_subspace");
        } else if constexpr (std::is_same_v<T, Rank1Edit>) {
          if (spec.site != Site::kMlpOut) {
            throw ConfigError(
                "rank1_edit applies to the MLP down-projection (site "
                "'mlp_out'), not '" +
                std::string(to_string(spec.site)) + "'");
          }
          require_finite(kind.a, "rank1_edit.a");
          require_finite(kind.b, "rank1_edit.b");
        }
      },
      spec.kind);
}

Vector patch_1d(const Vector& act_base, const Vector& act_source,
                const Vector& v) {
  require_same_dim(act_base, act_source, "patch_1d");
  require_same_dim(act_base, v, "patch_1d");
  require_unit(v, "patch_1d");
  const double gap = v.dot(act_source) - v.dot(act_base);
  return act_base + gap * v;
}

Vector patch_kd(const Vector& act_base, const Vector& act_source,
                const Matrix& basis) {
  require_same_dim(act_base, act_source, "patch_kd");
  if (basis.rows() != act_base.size()) {
    throw DimensionError("patch_kd: basis has " + std::to_string(basis.rows()) +
                         " rows, activation has dimension " +
                         std::to_string(act_base.size()));
  }
  require_orthonormal(basis, kOrthoTol, "patch_kd");
  if (basis.cols() == 0) return act_base;
  return act_base + basis * (basis.transpose() * (act_source - act_base));
}

Vector zero_subspace_intervention(const Vector& x, const Vector& v) {
  require_same_dim(x, v, "zero_subspace_intervention");
  return x - v.dot(x) * v;
}

Matrix apply_rank1_edit(const Matrix& w, const Vector& a, const Vector& b) {
  if (a.size() != w.rows() || b.size() != w.cols()) {
    throw DimensionError("apply_rank1_edit: a must have " +
                         std::to_string(w.rows()) + " entries and b " +
                         std::to_string(w.cols()));
  }
  return w + a * b.transpose();
}

namespace {

void check_illusion_pair(const Vector& v_disc, const Vector& v_dorm,
                         const Matrix& w_out) {
  require_unit(v_disc, "illusory_contribution (v_disc)");
  require_unit(v_dorm, "illusory_contribution (v_dorm)");
  if (v_disc.size() != w_out.cols() || v_dorm.size() != w_out.cols()) {
    throw DimensionError("illusory_contribution: directions must match W_out columns");
  }
  if (std::abs(v_disc.dot(v_dorm)) > 1e-8) {
    throw NumericalError("illusory_contribution: v_disc and v_dorm are not orthogonal");
  }
  const Vector s = Eigen::JacobiSVD<Matrix>(w_out).singularValues();
  const double tol = default_rank_tolerance(s, w_out.rows(), w_out.cols());
  const double leak = (w_out * v_disc).norm();
  if (leak > std::max(tol, 1e-10 * std::max(1.0, w_out.norm()))) {
    throw NumericalError(
        "illusory_contribution: v_disc is not in ker W_out (||W_out v_disc|| = " +
        std::to_string(leak) + ")");
  }
}

}  // namespace

Vector illusory_contribution(const Vector& act_base, const Vector& act_source,
                             const Vector& v_disc, const Vector& v_dorm,
                             const Matrix& w_out) {
  check_illusion_pair(v_disc, v_dorm, w_out);
  const Vector v = (v_disc + v_dorm) / std::sqrt(2.0);
  const Vector patched = patch_1d(act_base, act_source, v / v.norm());
  return w_out * (patched - act_base);
}

Vector illusory_contribution_closed_form(const Vector& act_base,
                                         const Vector& act_source,
                                         const Vector& v_disc,
                                         const Vector& v_dorm,
                                         const Matrix& w_out) {
  check_illusion_pair(v_disc, v_dorm, w_out);
  require_same_dim(act_base, act_source, "illusory_contribution_closed_form");
  return 0.5 * v_disc.dot(act_source - act_base) * (w_out * v_dorm);
}

}  // namespace patchlab
