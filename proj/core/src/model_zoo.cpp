#include "patchlab/model_zoo.hpp"

#include <cmath>
#include <vector>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr Index kCalibrationInputs = 256;

Vector vec3(double a, double b, double c) {
  Vector v(3);
  v << a, b, c;
  return v;
}

}  // namespace

ToyNet ToyNet::canonical() { return ToyNet{vec3(1, 0, 1), vec3(0, 2, 1)}; }

ToyForward toy_forward(const ToyNet& net, double x) {
  ToyForward out;
  out.hidden = x * net.w1;
  out.output = net.w2.dot(out.hidden);
  return out;
}

double toy_readout(const ToyNet& net, const Vector& hidden) {
  if (hidden.size() != net.w2.size()) {
    throw DimensionError("toy_readout: hidden vector must have dimension 3");
  }
  return net.w2.dot(hidden);
}

RotatedToyNet RotatedToyNet::canonical() {
  Matrix r(3, 3);
  const double s2 = std::sqrt(2.0), s3 = std::sqrt(3.0), s6 = std::sqrt(6.0);
  r << 1 / s2, 1 / s2, 0,      //
      -1 / s6, 1 / s6, -2 / s6,  //
      -1 / s3, 1 / s3, 1 / s3;
  return RotatedToyNet{r, ToyNet::canonical()};
}

ToyForward rotated_toy_forward(const RotatedToyNet& net, double x) {
  ToyForward out;
  out.hidden = net.rotation * net.base.w1 * x;
  out.output = rotated_toy_readout(net, out.hidden);
  return out;
}

double rotated_toy_readout(const RotatedToyNet& net, const Vector& hidden) {
  if (hidden.size() != 3) {
    throw DimensionError("rotated_toy_readout: hidden vector must have dimension 3");
  }
  return (net.rotation * net.base.w2).dot(hidden);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

Vector gelu(const Vector& x) {
  return x.unaryExpr([](double t) { return gelu(t); });
}

Vector gelu_derivative(const Vector& x) {
  return x.unaryExpr([](double t) { return gelu_derivative(t); });
}

Vector MlpLayer::hidden(const Vector& resid) const {
  return gelu(Vector(w_in * resid + b_in));
}

Vector MlpLayer::operator()(const Vector& resid) const {
  return w_out * hidden(resid) + b_out;
}

void validate(const MlpLayer& mlp) {
  const Index dr = mlp.w_in.cols(), dm = mlp.w_in.rows();
  if (mlp.b_in.size() != dm || mlp.w_out.rows() != dr ||
      mlp.w_out.cols() != dm || mlp.b_out.size() != dr) {
    throw DimensionError("MlpLayer: inconsistent weight shapes");
  }
  if (dm <= dr) {
    throw ConfigError("MlpLayer: d_mlp must exceed d_resid");
  }
  require_finite(mlp.w_in, "MlpLayer.w_in");
  require_finite(mlp.w_out, "MlpLayer.w_out");
  require_finite(mlp.b_in, "MlpLayer.b_in");
  require_finite(mlp.b_out, "MlpLayer.b_out");
}

double mean_output_norm(const MlpLayer& mlp, Index count, Rng& rng) {
  double total = 0.0;
  for (Index i = 0; i < count; ++i) {
    total += mlp(gaussian_vector(mlp.d_resid(), 1.0, rng)).norm();
  }
  return total / static_cast<double>(count);
}

MlpLayer make_random_mlp(std::uint64_t seed, Index d_resid, Index d_mlp,
                         double target_output_norm) {
  if (d_resid < 1 || d_mlp <= d_resid) {
    throw ConfigError("make_random_mlp: need 1 <= d_resid < d_mlp");
  }
  if (!(target_output_norm > 0.0)) {
    throw ConfigError("make_random_mlp: target_output_norm must be > 0");
  }
  Rng rng(seed);
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(d_resid));
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(d_mlp));
  MlpLayer mlp;
  mlp.w_in = gaussian_matrix(d_mlp, d_resid, in_scale, rng);
  mlp.b_in = gaussian_vector(d_mlp, in_scale, rng);
  mlp.w_out = gaussian_matrix(d_resid, d_mlp, out_scale, rng);
  mlp.b_out = gaussian_vector(d_resid, out_scale, rng);

  // mean_i || s * W_out h_i + b_out || is convex in s; bisect for the target.
  std::vector<Vector> pre_bias;
  pre_bias.reserve(kCalibrationInputs);
  for (Index i = 0; i < kCalibrationInputs; ++i) {
    pre_bias.push_back(mlp.w_out * mlp.hidden(gaussian_vector(d_resid, 1.0, rng)));
  }
  auto mean_norm = [&](double s) {
    double total = 0.0;
    for (const auto& y : pre_bias) total += (s * y + mlp.b_out).norm();
    return total / static_cast<double>(pre_bias.size());
  };
  if (mean_norm(0.0) >= target_output_norm) {
    throw ConfigError(
        "make_random_mlp: target_output_norm is below the output bias norm");
  }
  double lo = 0.0, hi = 1.0;
  while (mean_norm(hi) < target_output_norm) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_norm(mid) < target_output_norm ? lo : hi) = mid;
  }
  mlp.w_out *= 0.5 * (lo + hi);
  return mlp;
}

Vector SyntheticPathwayModel::logitdiff_readout() const {
  return unembed.row(0).transpose() - unembed.row(1).transpose();
}

void validate(const SyntheticPathwayModel& model) {
  validate(model.mlp);
  const Index d = model.d_resid;
  if (model.mlp.d_resid() != d || model.mu.size() != d ||
      model.v_feat.size() != d || model.unembed.rows() != 2 ||
      model.unembed.cols() != d) {
    throw DimensionError("SyntheticPathwayModel: inconsistent dimensions");
  }
  if (std::abs(model.v_feat.norm() - 1.0) > 1e-12) {
    throw NumericalError("SyntheticPathwayModel: v_feat must be unit norm");
  }
  if (!(model.c > 0.0) || !(model.noise_scale >= 0.0)) {
    throw ConfigError("SyntheticPathwayModel: need c > 0 and noise_scale >= 0");
  }
  require_finite(model.mu, "SyntheticPathwayModel.mu");
  require_finite(model.unembed, "SyntheticPathwayModel.unembed");
}

void validate(const SyntheticModelConfig& config) {
  if (config.d_resid < 1 || config.d_mlp <= config.d_resid) {
    throw ConfigError("model config: need 1 <= d_resid < d_mlp");
  }
  if (!(config.c > 0.0)) throw ConfigError("model config: c must be > 0");
  if (!(config.noise_scale >= 0.0)) {
    throw ConfigError("model config: noise_scale must be >= 0");
  }
  if (!(config.target_output_norm > 0.0)) {
    throw ConfigError("model config: target_output_norm must be > 0");
  }
  if (!(config.mu_scale >= 0.0)) {
    throw ConfigError("model config: mu_scale must be >= 0");
  }
}

SyntheticPathwayModel build_synthetic_model(const SyntheticModelConfig& config) {
  validate(config);
  Rng rng(config.seed);
  SyntheticPathwayModel model;
  model.d_resid = config.d_resid;
  model.v_feat = random_unit_vector(config.d_resid, rng);
  Vector mu = gaussian_vector(config.d_resid, config.mu_scale, rng);
  model.mu = mu - model.v_feat.dot(mu) * model.v_feat;
  model.c = config.c;
  model.noise_scale = config.noise_scale;
  model.unembed.resize(2, config.d_resid);
  model.unembed.row(0) = model.v_feat.transpose();
  model.unembed.row(1) = -model.v_feat.transpose();
  // Separate stream for the MLP so its weights do not depend on d_resid draws
  // above.
  model.mlp = make_random_mlp(config.seed ^ 0x9e3779b97f4a7c15ULL,
                              config.d_resid, config.d_mlp,
                              config.target_output_norm);
  return model;
}

Vector sample_example(const SyntheticPathwayModel& model, int label,
                      std::uint64_t seed) {
  if (label != 1 && label != -1) {
    throw ConfigError("sample_example: label must be +1 or -1");
  }
  Rng rng(seed);
  Vector x = model.mu + static_cast<double>(label) * model.c * model.v_feat;
  if (model.noise_scale > 0.0) {
    x += gaussian_vector(model.d_resid, model.noise_scale, rng);
  }
  return x;
}

const Vector& ActivationCache::at(Site site) const {
  switch (site) {
    case Site::kResidPre:
      return resid_pre;
    case Site::kMlpPostAct:
      return mlp_post_act;
    case Site::kMlpOut:
      return mlp_out;
    case Site::kResidPost:
      return resid_post;
  }
  throw ConfigError("ActivationCache: unknown site");
}

namespace {

Vector apply_activation_intervention(const InterventionKind& kind,
                                     const Vector& current) {
  return std::visit(
      [&](const auto& k) -> Vector {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, FullReplace>) {
          if (k.value.size() != current.size()) {
            throw DimensionError("full_replace: value dimension " +
                                 std::to_string(k.value.size()) +
                                 " does not match site dimension " +
                                 std::to_string(current.size()));
          }
          return k.value;
        } else if constexpr (std::is_same_v<T, SubspacePatch>) {
          return patch_kd(current, k.source_activation, k.basis);
        } else if constexpr (std::is_same_v<T, ZeroSubspace>) {
          return zero_subspace_intervention(current, k.v);
        } else {
          throw ConfigError("rank1_edit is a weight intervention");
        }
      },
      kind);
}

}  // namespace

ActivationCache forward_with_cache(
    const SyntheticPathwayModel& model, const Vector& resid_pre,
    const std::optional<InterventionSpec>& intervention) {
  if (resid_pre.size() != model.d_resid) {
    throw DimensionError("forward_with_cache: resid_pre has dimension " +
                         std::to_string(resid_pre.size()) + ", expected " +
                         std::to_string(model.d_resid));
  }
  if (intervention) validate(*intervention);
  const auto at_site = [&](Site s) {
    return intervention && intervention->site == s &&
           !std::holds_alternative<Rank1Edit>(intervention->kind);
  };

  ActivationCache cache;
  cache.resid_pre = resid_pre;
  if (at_site(Site::kResidPre)) {
    cache.resid_pre = apply_activation_intervention(intervention->kind, cache.resid_pre);
  }
  const MlpLayer& mlp = model.mlp;
  cache.mlp_pre_act = mlp.w_in * cache.resid_pre + mlp.b_in;
  cache.mlp_post_act = gelu(cache.mlp_pre_act);
  if (at_site(Site::kMlpPostAct)) {
    cache.mlp_post_act =
        apply_activation_intervention(intervention->kind, cache.mlp_post_act);
  }
  cache.mlp_out = mlp.w_out * cache.mlp_post_act + mlp.b_out;
  if (intervention && std::holds_alternative<Rank1Edit>(intervention->kind)) {
    const auto& edit = std::get<Rank1Edit>(intervention->kind);
    if (edit.a.size() != model.d_resid || edit.b.size() != mlp.d_mlp()) {
      throw DimensionError("rank1_edit: a/b dimensions do not match W_out");
    }
    cache.mlp_out += edit.b.dot(cache.mlp_post_act) * edit.a;
  }
  if (at_site(Site::kMlpOut)) {
    cache.mlp_out = apply_activation_intervention(intervention->kind, cache.mlp_out);
  }
  cache.resid_post = cache.resid_pre + cache.mlp_out;
  if (at_site(Site::kResidPost)) {
    cache.resid_post =
        apply_activation_intervention(intervention->kind, cache.resid_post);
  }
  cache.logits = model.unembed * cache.resid_post;
  return cache;
}

SyntheticPathwayModel with_edited_down_projection(
    const SyntheticPathwayModel& model, const Rank1Edit& edit) {
  SyntheticPathwayModel edited = model;
  edited.mlp.w_out = apply_rank1_edit(model.mlp.w_out, edit.a, edit.b);
  return edited;
}

}  // namespace patchlab
