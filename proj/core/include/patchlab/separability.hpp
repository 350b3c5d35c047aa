#pragma once

// Does a feature that is linearly present in the residual stream survive the
// MLP nonlinearity and the projection onto ker W_out? Distortion regressions,
// probes and a point-by-point check of the separability-transfer argument.

#include <array>
#include <ostream>
#include <vector>

#include "patchlab/model_zoo.hpp"

namespace patchlab {

struct QuadrupleSample {
  double a_val = 0.0;  // (x_i - x_j)^T (x_k - x_l)
  double b_val = 0.0;  // same for z
  std::array<Index, 4> indices{};
};

/// Draws `count` quadruples of distinct row indices.
std::vector<QuadrupleSample> sample_quadruple_products(const Matrix& x,
                                                       const Matrix& z,
                                                       Index count,
                                                       std::uint64_t seed);

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  Index n = 0;
};

/// One predictor with an unpenalized intercept; lambda shrinks the slope.
RegressionFit ridge_regression(const Vector& x, const Vector& y, double lambda);

/// Regresses b_val on a_val over sampled quadruples of rows of (x, z).
RegressionFit distortion_fit(const Matrix& x, const Matrix& z, Index count,
                             std::uint64_t seed);

/// X = pre-gelu activations, Z = kernel projection of the post-gelu ones.
RegressionFit distortion_regression(const SyntheticPathwayModel& model,
                                    Index n_examples, Index n_quadruples,
                                    std::uint64_t seed);

struct ProbeConfig {
  double lambda = 1e-3;
  Index steps = 2000;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
};

struct ProbeResult {
  double accuracy = 0.0;  // held out
  double z = 0.0;
  std::uint64_t seed = 0;
  double step_size = 0.0;  // after capping at 1/L
  std::vector<double> train_loss;  // per step, before the update
};

/// L2-regularized logistic regression on standardized features, full-batch
/// gradient descent with the step capped at the inverse Lipschitz constant.
ProbeResult logistic_probe(const Matrix& features, const std::vector<int>& labels,
                           const ProbeConfig& config);

/// For each z: u' = u + y z ||u|| v with a random unit v and labels y, then
/// probes y from gelu(W_in u' + b_in).
std::vector<ProbeResult> injected_direction_experiment(
    const SyntheticPathwayModel& model, const std::vector<double>& z_values,
    Index n_per_z, std::uint64_t seed, const ProbeConfig& probe = {});

void write_probe_csv(std::ostream& os, const std::vector<ProbeResult>& results);

struct LemmaCheck {
  Index n = 0;
  Index support_size = 0;
  double alpha_sum = 0.0;     // must vanish for the difference expansion
  double original_gap = 0.0;  // min_{y=+1} w*.x - max_{y=-1} w*.x
  double transferred_gap = 0.0;  // M - m
  double lambda = 0.0;
  double bias = 0.0;           // chosen in (m, M)
  Index correct = 0;
  bool all_correct = false;
  Vector w_star;
  Vector w_hat;
};

/// Finds a hard-margin separator of the rows of `points`, expands it in
/// differences of support points, transfers it through
/// f(x) = sqrt(lambda) Q x + t and classifies the transformed points. With
/// `identity_transform` Q = I and t = 0. Throws if the points are not
/// separable.
LemmaCheck lemma_separability_check(const Matrix& points,
                                    const std::vector<int>& labels,
                                    double lambda_iso, std::uint64_t seed,
                                    bool identity_transform = false);

struct HeldOutFit {
  double r_squared = 0.0;        // on held-out rows; can be negative
  double train_r_squared = 0.0;
  Index n_train = 0;
  Index n_test = 0;
};

/// Multi-predictor ridge with an unpenalized intercept, 80/20 split.
HeldOutFit ridge_heldout(const Matrix& features, const Vector& response,
                         double lambda, std::uint64_t seed);

/// Predicts direction^T resid_pre from post-gelu features.
HeldOutFit residual_projection_regression(const SyntheticPathwayModel& model,
                                          const Vector& direction, Index n,
                                          double lambda, std::uint64_t seed);

}  // namespace patchlab
