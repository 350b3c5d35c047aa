#pragma once

// Gradient-based search for a patching subspace (distributed alignment
// search). The subspace is an orthonormal d x k matrix; each step takes a
// plain gradient step on the mean interchange loss and retracts back to
// orthonormal columns with a thin QR.

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "patchlab/model_zoo.hpp"

namespace patchlab {

struct PatchPair {
  Vector base_input;    // resid_pre of the run being patched into
  Vector source_input;  // resid_pre the patched value is taken from
  int target_logitdiff_sign = 1;
  int base_label = 0;    // 0 when unknown
  int source_label = 0;  // 0 when unknown
};

enum class Objective { kMaximize, kMinimize };

/// How each pair type turns into a target sign. "Maximize" keeps the base
/// example's clean preference; "minimize" pushes toward the opposite class.
struct ObjectiveSignRule {
  Objective same_label = Objective::kMaximize;
  Objective opposite_label = Objective::kMinimize;
};

struct DasConfig {
  Index subspace_dim = 1;
  double learning_rate = 0.05;
  Index steps = 500;
  Index batch_size = 32;
  std::uint64_t seed = 7;
  Site site = Site::kMlpPostAct;
  ObjectiveSignRule objective_sign_rule;
};

void validate(const DasConfig& config);

/// Equal numbers of same-label and opposite-label pairs (count/2 each, the
/// odd remainder going to opposite-label), labels drawn deterministically
/// from `seed`.
std::vector<PatchPair> make_training_pairs(const SyntheticPathwayModel& model,
                                           Index count, std::uint64_t seed,
                                           const ObjectiveSignRule& rule = {});

/// Opposite-label pairs only; the target sign is the source label.
std::vector<PatchPair> make_interchange_pairs(const SyntheticPathwayModel& model,
                                              Index count, std::uint64_t seed);

/// -target_sign * patched logit difference when `basis` is patched from the
/// source run into the base run at `site`.
double das_loss(const SyntheticPathwayModel& model, const PatchPair& pair,
                const Matrix& basis, Site site);

/// Loss without any intervention, for reference.
double clean_loss(const SyntheticPathwayModel& model, const PatchPair& pair);

/// Analytic gradient of das_loss with respect to the entries of `basis`.
Matrix das_grad(const SyntheticPathwayModel& model, const PatchPair& pair,
                const Matrix& basis, Site site);

double mean_das_loss(const SyntheticPathwayModel& model,
                     const std::vector<PatchPair>& pairs, const Matrix& basis,
                     Site site);

struct DasTraceRow {
  Index step = 0;
  double mean_loss = 0.0;
};

struct DasResult {
  Matrix basis;            // d x k, orthonormal columns
  Matrix initial_basis;
  double initial_mean_loss = 0.0;  // over all training pairs
  double final_mean_loss = 0.0;
  std::vector<DasTraceRow> trace;  // batch mean loss before each step
};

/// Site dimension for a model (d_resid or d_mlp).
Index site_dim(const SyntheticPathwayModel& model, Site site);

/// Trains a subspace. Throws NumericalError naming the step if the loss
/// becomes non-finite.
DasResult das_train(const SyntheticPathwayModel& model,
                    const std::vector<PatchPair>& pairs,
                    const DasConfig& config);

/// Writes "step,mean_loss" rows with a header.
void write_trace_csv(std::ostream& os, const std::vector<DasTraceRow>& trace);

}  // namespace patchlab
