#pragma once

// Metrics for judging a patching direction and the detection procedure for
// illusory directions: split the direction against the kernel of the layer
// that reads the site, patch each part separately, and compare.

#include <optional>
#include <ostream>
#include <vector>

#include "patchlab/das.hpp"

namespace patchlab {

inline constexpr double kDefaultEpsilonLd = 1e-6;

/// 1 - patched/clean, or nullopt when |clean| <= epsilon_ld.
std::optional<double> fldd(double clean_logitdiff, double patched_logitdiff,
                           double epsilon_ld = kDefaultEpsilonLd);

struct PatchOutcome {
  double clean_logitdiff = 0.0;
  double patched_logitdiff = 0.0;
  int target_sign = 0;  // interchange target, used by kTargetSign
};

struct FlddSummary {
  double mean = 0.0;    // mean of per-example values
  double median = 0.0;
  Index used = 0;
  Index excluded = 0;
};

FlddSummary summarize_fldd(const std::vector<PatchOutcome>& outcomes,
                           double epsilon_ld = kDefaultEpsilonLd);

enum class FlipRule {
  kFlipCleanArgmax,  // success when the patched argmax differs from clean
  kTargetSign,       // success when sign(patched) equals target_sign
};

double interchange_accuracy(const std::vector<PatchOutcome>& outcomes,
                            FlipRule rule = FlipRule::kFlipCleanArgmax);

/// (p_int - p_clean) / (1 - p_clean). Throws for p_clean outside [0, 1).
double rewrite_score(double p_clean_target, double p_intervened_target);

double cosine(const Vector& u, const Vector& v);

struct ClassSpread {
  int label = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  Index count = 0;
};

struct ProjectionSpread {
  std::vector<ClassSpread> classes;  // sorted by label
  std::vector<double> projections;   // row order of the input
  std::vector<int> labels;

  const ClassSpread& of(int label) const;
};

ProjectionSpread projection_spread(const Vector& direction,
                                   const Matrix& activations,
                                   const std::vector<int>& labels);

/// "label,projection" rows with a header.
void write_spread_csv(std::ostream& os, const ProjectionSpread& spread);

/// The matrix whose kernel defines "disconnected" at a site: W_out for the
/// MLP hidden activation, the unembedding for residual-stream sites.
Matrix analysis_matrix(const SyntheticPathwayModel& model, Site site);

struct PatchRow {
  FlddSummary fldd;
  double interchange_acc = 0.0;
};

struct IllusionReport {
  Site site = Site::kMlpPostAct;
  double norm_null = 0.0;
  double norm_row = 0.0;
  PatchRow v;
  std::optional<PatchRow> row;   // absent for a pure-nullspace direction
  std::optional<PatchRow> null;  // absent for a pure-rowspace direction
  PatchRow full_component;
  std::optional<ProjectionSpread> spread_null;
  std::optional<ProjectionSpread> spread_row;
};

/// Patches along v, normalized v_row, normalized v_null and the whole site
/// activation over `pairs`. Components with norm below `absent_tol` are
/// reported as absent.
IllusionReport analyze_direction(const SyntheticPathwayModel& model,
                                 const Vector& v, Site site,
                                 const std::vector<PatchPair>& pairs,
                                 double absent_tol = 1e-8);

/// Outcomes of patching span(basis) (or the full activation when `basis` is
/// empty) from source into base for every pair.
std::vector<PatchOutcome> patch_outcomes(const SyntheticPathwayModel& model,
                                         const std::optional<Matrix>& basis,
                                         Site site,
                                         const std::vector<PatchPair>& pairs);

struct AngleScanResult {
  double best_angle = 0.0;
  std::vector<double> angles;
  std::vector<double> effects;
  bool dormancy_warning = false;
};

/// Patches along cos(a) v_disc + sin(a) v_dorm for each grid angle and
/// records |mean change along v_dorm|. In strict mode a warning is set when
/// the v_dorm projections of the pair activations are not constant.
AngleScanResult optimal_angle_scan(const SyntheticPathwayModel& model,
                                   const Vector& v_disc, const Vector& v_dorm,
                                   Site site,
                                   const std::vector<PatchPair>& pairs,
                                   const std::vector<double>& angle_grid,
                                   bool strict = true);

/// n+1 evenly spaced angles over [0, pi/2].
std::vector<double> quarter_turn_grid(Index n);

struct DormantPair {
  Vector v_disc;  // unit, in ker W_out, along the null part of the class gap
  Vector v_dorm;  // unit, orthogonal to the class gap and to v_disc
};

/// Builds the strict construction at mlp_post_act: with noise 0 every
/// activation is one of two points, v_dorm is orthogonal to their difference
/// and v_disc is the kernel part of that difference.
DormantPair strict_dormant_pair(const SyntheticPathwayModel& model);

/// (||W v||^2 v^T S v) / (||a||^2 b^T S b): contribution variance of the
/// zero-target intervention along v relative to the rank-1 edit (a, b).
double variance_ratio(const Vector& v, const Vector& a, const Vector& b,
                      const Matrix& w_out, const Matrix& sigma);

}  // namespace patchlab
