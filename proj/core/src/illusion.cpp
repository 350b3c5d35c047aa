#include "patchlab/illusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "patchlab/error.hpp"

namespace patchlab {

std::optional<double> fldd(double clean_logitdiff, double patched_logitdiff,
                           double epsilon_ld) {
  if (!(std::abs(clean_logitdiff) > epsilon_ld)) return std::nullopt;
  return 1.0 - patched_logitdiff / clean_logitdiff;
}

FlddSummary summarize_fldd(const std::vector<PatchOutcome>& outcomes,
                           double epsilon_ld) {
  std::vector<double> values;
  values.reserve(outcomes.size());
  FlddSummary s;
  for (const auto& o : outcomes) {
    if (auto f = fldd(o.clean_logitdiff, o.patched_logitdiff, epsilon_ld)) {
      values.push_back(*f);
    } else {
      ++s.excluded;
    }
  }
  s.used = static_cast<Index>(values.size());
  if (values.empty()) return s;
  double total = 0.0;
  for (double x : values) total += x;
  s.mean = total / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return s;
}

double interchange_accuracy(const std::vector<PatchOutcome>& outcomes,
                            FlipRule rule) {
  if (outcomes.empty()) throw ConfigError("interchange_accuracy: no outcomes");
  Index hits = 0;
  for (const auto& o : outcomes) {
    // Ties in the logits count as class 0, matching argmax's first-index rule.
    const int clean_arg = o.clean_logitdiff >= 0.0 ? 1 : -1;
    const int patched_arg = o.patched_logitdiff >= 0.0 ? 1 : -1;
    const bool ok = rule == FlipRule::kFlipCleanArgmax
                        ? patched_arg != clean_arg
                        : patched_arg == o.target_sign;
    if (ok) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

double rewrite_score(double p_clean_target, double p_intervened_target) {
  if (!(p_clean_target >= 0.0 && p_clean_target < 1.0)) {
    throw NumericalError("rewrite_score: clean probability must lie in [0, 1), got " +
                         std::to_string(p_clean_target));
  }
  if (!(p_intervened_target >= 0.0 && p_intervened_target <= 1.0)) {
    throw NumericalError("rewrite_score: intervened probability outside [0, 1]");
  }
  return (p_intervened_target - p_clean_target) / (1.0 - p_clean_target);
}

double cosine(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw DimensionError("cosine: dimensions differ");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw NumericalError("cosine: zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

const ClassSpread& ProjectionSpread::of(int label) const {
  for (const auto& c : classes) {
    if (c.label == label) return c;
  }
  throw ConfigError("projection_spread: no class " + std::to_string(label));
}

ProjectionSpread projection_spread(const Vector& direction,
                                   const Matrix& activations,
                                   const std::vector<int>& labels) {
  if (activations.rows() != static_cast<Index>(labels.size())) {
    throw DimensionError("projection_spread: one label per activation row");
  }
  if (activations.cols() != direction.size()) {
    throw DimensionError("projection_spread: direction and activation widths differ");
  }
  if (labels.empty()) throw ConfigError("projection_spread: empty class");
  ProjectionSpread out;
  const Vector proj = activations * direction;
  out.projections.assign(proj.data(), proj.data() + proj.size());
  out.labels = labels;

  std::vector<int> distinct = labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  for (int label : distinct) {
    ClassSpread c;
    c.label = label;
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != label) continue;
      sum += proj[static_cast<Index>(i)];
      ++c.count;
    }
    c.mean = sum / static_cast<double>(c.count);
    double ss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != label) continue;
      const double d = proj[static_cast<Index>(i)] - c.mean;
      ss += d * d;
    }
    c.stddev = std::sqrt(ss / static_cast<double>(c.count));
    out.classes.push_back(c);
  }
  return out;
}

void write_spread_csv(std::ostream& os, const ProjectionSpread& spread) {
  os << "label,projection\n";
  char buf[64];
  for (std::size_t i = 0; i < spread.labels.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", spread.projections[i]);
    os << spread.labels[i] << ',' << buf << '\n';
  }
}

Matrix analysis_matrix(const SyntheticPathwayModel& model, Site site) {
  return site == Site::kMlpPostAct ? model.mlp.w_out : model.unembed;
}

std::vector<PatchOutcome> patch_outcomes(const SyntheticPathwayModel& model,
                                         const std::optional<Matrix>& basis,
                                         Site site,
                                         const std::vector<PatchPair>& pairs) {
  std::vector<PatchOutcome> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const ActivationCache base = forward_with_cache(model, p.base_input);
    const ActivationCache source = forward_with_cache(model, p.source_input);
    InterventionSpec spec;
    spec.site = site;
    if (basis) {
      spec.kind = SubspacePatch{*basis, source.at(site)};
    } else {
      spec.kind = FullReplace{source.at(site)};
    }
    PatchOutcome o;
    o.clean_logitdiff = base.logitdiff();
    o.patched_logitdiff = forward_with_cache(model, p.base_input, spec).logitdiff();
    o.target_sign = p.target_logitdiff_sign;
    out.push_back(o);
  }
  return out;
}

namespace {

PatchRow run_row(const SyntheticPathwayModel& model,
                 const std::optional<Matrix>& basis, Site site,
                 const std::vector<PatchPair>& pairs) {
  const auto outcomes = patch_outcomes(model, basis, site, pairs);
  return PatchRow{summarize_fldd(outcomes), interchange_accuracy(outcomes)};
}

void site_activation_table(const SyntheticPathwayModel& model, Site site,
                           const std::vector<PatchPair>& pairs, Matrix& acts,
                           std::vector<int>& labels) {
  const Index dim = site_dim(model, site);
  acts.resize(static_cast<Index>(2 * pairs.size()), dim);
  labels.clear();
  Index r = 0;
  for (const auto& p : pairs) {
    acts.row(r++) = forward_with_cache(model, p.base_input).at(site).transpose();
    labels.push_back(p.base_label);
    acts.row(r++) = forward_with_cache(model, p.source_input).at(site).transpose();
    labels.push_back(p.source_label);
  }
}

}  // namespace

IllusionReport analyze_direction(const SyntheticPathwayModel& model,
                                 const Vector& v, Site site,
                                 const std::vector<PatchPair>& pairs,
                                 double absent_tol) {
  if (pairs.empty()) throw ConfigError("analyze_direction: no evaluation pairs");
  if (v.size() != site_dim(model, site)) {
    throw DimensionError("analyze_direction: direction does not match site dimension");
  }
  if (std::abs(v.norm() - 1.0) > 1e-10) {
    throw NumericalError("analyze_direction: direction must be unit norm");
  }
  const KernelSplit parts = decompose_against_kernel(v, analysis_matrix(model, site));

  IllusionReport rep;
  rep.site = site;
  rep.norm_null = parts.null.norm();
  rep.norm_row = parts.row.norm();
  rep.v = run_row(model, Matrix(v), site, pairs);
  rep.full_component = run_row(model, std::nullopt, site, pairs);

  Matrix acts;
  std::vector<int> labels;
  site_activation_table(model, site, pairs, acts, labels);
  if (rep.norm_row > absent_tol) {
    const Vector dir = parts.row / rep.norm_row;
    rep.row = run_row(model, Matrix(dir), site, pairs);
    rep.spread_row = projection_spread(dir, acts, labels);
  }
  if (rep.norm_null > absent_tol) {
    const Vector dir = parts.null / rep.norm_null;
    rep.null = run_row(model, Matrix(dir), site, pairs);
    rep.spread_null = projection_spread(dir, acts, labels);
  }
  return rep;
}

std::vector<double> quarter_turn_grid(Index n) {
  if (n < 1) throw ConfigError("quarter_turn_grid: need at least one step");
  std::vector<double> grid;
  for (Index i = 0; i <= n; ++i) {
    grid.push_back(std::numbers::pi / 2.0 * static_cast<double>(i) /
                   static_cast<double>(n));
  }
  return grid;
}

AngleScanResult optimal_angle_scan(const SyntheticPathwayModel& model,
                                   const Vector& v_disc, const Vector& v_dorm,
                                   Site site,
                                   const std::vector<PatchPair>& pairs,
                                   const std::vector<double>& angle_grid,
                                   bool strict) {
  if (pairs.empty()) throw ConfigError("optimal_angle_scan: no pairs");
  if (angle_grid.empty()) throw ConfigError("optimal_angle_scan: empty angle grid");
  for (double a : angle_grid) {
    if (!(a >= 0.0 && a <= std::numbers::pi / 2.0 + 1e-12)) {
      throw ConfigError("optimal_angle_scan: angles must lie in [0, pi/2]");
    }
  }
  const Index dim = site_dim(model, site);
  if (v_disc.size() != dim || v_dorm.size() != dim) {
    throw DimensionError("optimal_angle_scan: directions do not match site");
  }
  if (std::abs(v_disc.norm() - 1.0) > 1e-10 || std::abs(v_dorm.norm() - 1.0) > 1e-10) {
    throw NumericalError("optimal_angle_scan: v_disc and v_dorm must be unit");
  }
  if (std::abs(v_disc.dot(v_dorm)) > 1e-8) {
    throw NumericalError("optimal_angle_scan: v_disc and v_dorm are not orthogonal");
  }
  const Matrix w = analysis_matrix(model, site);
  const double leak = (w * v_disc).norm();
  if (leak > 1e-10 * std::max(1.0, w.norm())) {
    throw NumericalError("optimal_angle_scan: v_disc is not in the kernel (leak " +
                         std::to_string(leak) + ")");
  }

  std::vector<Vector> base_acts;
  std::vector<Vector> source_acts;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double scale = 0.0;
  for (const auto& p : pairs) {
    base_acts.push_back(forward_with_cache(model, p.base_input).at(site));
    source_acts.push_back(forward_with_cache(model, p.source_input).at(site));
    for (const Vector* a : {&base_acts.back(), &source_acts.back()}) {
      const double proj = v_dorm.dot(*a);
      lo = std::min(lo, proj);
      hi = std::max(hi, proj);
      scale = std::max(scale, a->norm());
    }
  }

  AngleScanResult res;
  res.dormancy_warning = strict && (hi - lo) > 1e-9 * std::max(1.0, scale);
  res.angles = angle_grid;
  double best = -1.0;
  for (double alpha : angle_grid) {
    const Vector u = std::cos(alpha) * v_disc + std::sin(alpha) * v_dorm;
    const Vector unit = u / u.norm();
    double total = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Vector patched = patch_1d(base_acts[i], source_acts[i], unit);
      total += v_dorm.dot(patched - base_acts[i]);
    }
    const double effect = std::abs(total / static_cast<double>(pairs.size()));
    res.effects.push_back(effect);
    if (effect > best) {
      best = effect;
      res.best_angle = alpha;
    }
  }
  return res;
}

DormantPair strict_dormant_pair(const SyntheticPathwayModel& model) {
  const Vector h_pos = model.mlp.hidden(model.mu + model.c * model.v_feat);
  const Vector h_neg = model.mlp.hidden(model.mu - model.c * model.v_feat);
  const Vector gap = h_pos - h_neg;
  const KernelProjector proj(model.mlp.w_out);
  Vector disc = proj.project_null(gap);
  if (disc.norm() < 1e-12) {
    throw NumericalError("strict_dormant_pair: class gap has no kernel component");
  }
  disc.normalize();
  const Vector g = model.mlp.w_out.transpose() * model.logitdiff_readout();
  Vector dorm = proj.project_row(g);
  const Vector gap_unit = gap.normalized();
  dorm -= gap_unit.dot(dorm) * gap_unit;
  // disc is not orthogonal to gap, so remove its part left after the first pass.
  Vector disc_perp = disc - gap_unit.dot(disc) * gap_unit;
  if (disc_perp.norm() > 1e-12) {
    disc_perp.normalize();
    dorm -= disc_perp.dot(dorm) * disc_perp;
  }
  if (dorm.norm() < 1e-12) {
    throw NumericalError("strict_dormant_pair: no dormant direction left");
  }
  dorm.normalize();
  return DormantPair{disc, dorm};
}

double variance_ratio(const Vector& v, const Vector& a, const Vector& b,
                      const Matrix& w_out, const Matrix& sigma) {
  if (v.size() != w_out.cols() || b.size() != w_out.cols() ||
      a.size() != w_out.rows() || sigma.rows() != w_out.cols() ||
      sigma.cols() != w_out.cols()) {
    throw DimensionError("variance_ratio: inconsistent dimensions");
  }
  SpdSolver check(sigma);  // validates SPD
  (void)check;
  const double den = a.squaredNorm() * b.dot(sigma * b);
  if (!(den > 0.0)) throw NumericalError("variance_ratio: zero-variance rank-1 edit");
  const double num = (w_out * v).squaredNorm() * v.dot(sigma * v);
  return num / den;
}

}  // namespace patchlab
