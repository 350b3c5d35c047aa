#pragma once

// The analyzable models: the three-unit linear toy network, its rotated
// reparametrization, and the synthetic residual-pathway model with one MLP
// between a feature writer and a feature reader.

#include <cstdint>
#include <optional>

#include "patchlab/numerics.hpp"
#include "patchlab/patching.hpp"

namespace patchlab {

// ---------------------------------------------------------------------------
// Toy network: x -> h = x w1 -> y = w2^T h.

struct ToyNet {
  Vector w1;  // 3
  Vector w2;  // 3

  /// w1 = (1, 0, 1), w2 = (0, 2, 1): computes the identity function.
  static ToyNet canonical();
};

struct ToyForward {
  Vector hidden;
  double output = 0.0;
};

ToyForward toy_forward(const ToyNet& net, double x);
/// Readout of an arbitrary (e.g. patched) hidden vector.
double toy_readout(const ToyNet& net, const Vector& hidden);

/// Same network with the hidden layer expressed in a rotated basis:
/// h' = R w1 x, y = (R w2)^T h'.
struct RotatedToyNet {
  Matrix rotation;  // rows d1, d2, d3
  ToyNet base;

  static RotatedToyNet canonical();
};

ToyForward rotated_toy_forward(const RotatedToyNet& net, double x);
double rotated_toy_readout(const RotatedToyNet& net, const Vector& hidden);

// ---------------------------------------------------------------------------
// Nonlinearity.

/// Exact gelu(x) = x Phi(x) with the erf-based normal CDF.
double gelu(double x);
/// d/dx gelu(x) = Phi(x) + x phi(x).
double gelu_derivative(double x);
Vector gelu(const Vector& x);
Vector gelu_derivative(const Vector& x);

// ---------------------------------------------------------------------------
// MLP and synthetic pathway model.

struct MlpLayer {
  Matrix w_in;   // d_mlp x d_resid
  Vector b_in;   // d_mlp
  Matrix w_out;  // d_resid x d_mlp
  Vector b_out;  // d_resid

  Index d_resid() const { return w_in.cols(); }
  Index d_mlp() const { return w_in.rows(); }
  /// Post-gelu hidden activation for a residual input.
  Vector hidden(const Vector& resid) const;
  Vector operator()(const Vector& resid) const;
};

/// Throws unless shapes agree and d_mlp > d_resid.
void validate(const MlpLayer& mlp);

/// Gaussian weights and biases with standard deviation 1/sqrt(fan_in); W_out
/// is then rescaled so that the mean output norm over 256 standard-normal
/// residual inputs equals `target_output_norm`.
MlpLayer make_random_mlp(std::uint64_t seed, Index d_resid, Index d_mlp,
                         double target_output_norm);

/// Mean ||mlp(x)|| over `count` standard-normal inputs drawn from `rng`.
double mean_output_norm(const MlpLayer& mlp, Index count, Rng& rng);

struct SyntheticPathwayModel {
  Index d_resid = 0;
  MlpLayer mlp;
  Vector mu;       // residual base
  Vector v_feat;   // unit feature direction
  double c = 0.0;  // feature amplitude
  double noise_scale = 0.0;
  Matrix unembed;  // 2 x d_resid

  /// unembed.row(0) - unembed.row(1): logit difference readout.
  Vector logitdiff_readout() const;
};

void validate(const SyntheticPathwayModel& model);

/// Recipe for building a SyntheticPathwayModel deterministically.
struct SyntheticModelConfig {
  std::uint64_t seed = 20240607;
  Index d_resid = 64;
  Index d_mlp = 256;
  double c = 2.0;
  double noise_scale = 0.1;
  double target_output_norm = 4.0;
  /// Scale of the residual base; mu ~ N(0, mu_scale^2 I) with its v_feat
  /// component removed.
  double mu_scale = 1.0;
};

void validate(const SyntheticModelConfig& config);

/// unembed rows are (v_feat, -v_feat): the feature is read from the same
/// direction it is written to.
SyntheticPathwayModel build_synthetic_model(const SyntheticModelConfig& config);

/// mu + label c v_feat + N(0, noise_scale^2 I), seeded by `seed`.
Vector sample_example(const SyntheticPathwayModel& model, int label,
                      std::uint64_t seed);

struct ActivationCache {
  Vector resid_pre;
  Vector mlp_pre_act;
  Vector mlp_post_act;
  Vector mlp_out;
  Vector resid_post;
  Vector logits;  // 2

  double logitdiff() const { return logits[0] - logits[1]; }
  const Vector& at(Site site) const;
};

/// Runs the model, applying `intervention` (if any) at its site before the
/// value propagates downstream.
ActivationCache forward_with_cache(
    const SyntheticPathwayModel& model, const Vector& resid_pre,
    const std::optional<InterventionSpec>& intervention = std::nullopt);

/// Copy of `model` with W_out replaced by W_out + a b^T.
SyntheticPathwayModel with_edited_down_projection(
    const SyntheticPathwayModel& model, const Rank1Edit& edit);

}  // namespace patchlab
