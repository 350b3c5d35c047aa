#include "patchlab/das.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

int sign_for(Objective objective, int base_label) {
  return objective == Objective::kMaximize ? base_label : -base_label;
}

int draw_label(Rng& rng) {
  return std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
}

// Site activations of the clean base and source runs; fixed during training.
struct PairActivations {
  Vector base;
  Vector source;
  int target = 1;
};

PairActivations site_activations(const SyntheticPathwayModel& model,
                                 const PatchPair& pair, Site site) {
  PairActivations acts;
  acts.base = forward_with_cache(model, pair.base_input).at(site);
  acts.source = forward_with_cache(model, pair.source_input).at(site);
  acts.target = pair.target_logitdiff_sign;
  return acts;
}

// Downstream of `site`, the logit difference of the run whose site value is
// `value` (the base run's residual input is needed for later residual adds).
struct Downstream {
  double logitdiff = 0.0;
  Vector grad;  // d logitdiff / d value
};

Downstream downstream_from(const SyntheticPathwayModel& model, Site site,
                           const Vector& value, const Vector& base_resid_pre,
                           bool want_grad) {
  const Vector u = model.logitdiff_readout();
  const MlpLayer& mlp = model.mlp;
  Downstream out;
  switch (site) {
    case Site::kResidPost:
      out.logitdiff = u.dot(value);
      if (want_grad) out.grad = u;
      break;
    case Site::kMlpOut:
      out.logitdiff = u.dot(base_resid_pre + value);
      if (want_grad) out.grad = u;
      break;
    case Site::kMlpPostAct: {
      const Vector mlp_out = mlp.w_out * value + mlp.b_out;
      out.logitdiff = u.dot(base_resid_pre + mlp_out);
      if (want_grad) out.grad = mlp.w_out.transpose() * u;
      break;
    }
    case Site::kResidPre: {
      const Vector pre = mlp.w_in * value + mlp.b_in;
      const Vector mlp_out = mlp.w_out * gelu(pre) + mlp.b_out;
      out.logitdiff = u.dot(value + mlp_out);
      if (want_grad) {
        const Vector back = mlp.w_out.transpose() * u;
        out.grad = u + mlp.w_in.transpose() *
                           gelu_derivative(pre).cwiseProduct(back);
      }
      break;
    }
  }
  return out;
}

double loss_from_acts(const SyntheticPathwayModel& model, const PatchPair& pair,
                      const PairActivations& acts, const Matrix& basis,
                      Site site) {
  const Vector patched =
      acts.base + basis * (basis.transpose() * (acts.source - acts.base));
  return -acts.target *
         downstream_from(model, site, patched, pair.base_input, false).logitdiff;
}

Matrix grad_from_acts(const SyntheticPathwayModel& model, const PatchPair& pair,
                      const PairActivations& acts, const Matrix& basis,
                      Site site) {
  const Vector delta = acts.source - acts.base;
  const Vector patched = acts.base + basis * (basis.transpose() * delta);
  const Vector g = -static_cast<double>(acts.target) *
                   downstream_from(model, site, patched, pair.base_input, true).grad;
  // p = a_b + V V^T delta  =>  dL/dV = g (delta^T V) + delta (g^T V).
  return g * (delta.transpose() * basis) + delta * (g.transpose() * basis);
}

void check_basis(const SyntheticPathwayModel& model, const Matrix& basis,
                 Site site) {
  if (basis.rows() != site_dim(model, site)) {
    throw DimensionError("DAS: basis has " + std::to_string(basis.rows()) +
                         " rows but site '" + std::string(to_string(site)) +
                         "' has dimension " +
                         std::to_string(site_dim(model, site)));
  }
  require_orthonormal(basis, 1e-8, "DAS");
}

}  // namespace

void validate(const DasConfig& config) {
  if (config.subspace_dim < 1) throw ConfigError("DAS: subspace_dim must be >= 1");
  if (config.steps < 1) throw ConfigError("DAS: steps must be >= 1");
  if (config.batch_size < 1) throw ConfigError("DAS: batch_size must be >= 1");
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw ConfigError("DAS: learning_rate must be finite and >= 0");
  }
}

Index site_dim(const SyntheticPathwayModel& model, Site site) {
  return site == Site::kMlpPostAct ? model.mlp.d_mlp() : model.d_resid;
}

std::vector<PatchPair> make_training_pairs(const SyntheticPathwayModel& model,
                                           Index count, std::uint64_t seed,
                                           const ObjectiveSignRule& rule) {
  if (count < 1) throw ConfigError("make_training_pairs: count must be >= 1");
  Rng rng(seed);
  std::vector<PatchPair> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  const Index same = count / 2;
  for (Index i = 0; i < count; ++i) {
    const bool same_label = i < same;
    const int base_label = draw_label(rng);
    const int source_label = same_label ? base_label : -base_label;
    PatchPair p;
    p.base_label = base_label;
    p.source_label = source_label;
    p.base_input = sample_example(model, base_label, rng());
    p.source_input = sample_example(model, source_label, rng());
    p.target_logitdiff_sign =
        sign_for(same_label ? rule.same_label : rule.opposite_label, base_label);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<PatchPair> make_interchange_pairs(const SyntheticPathwayModel& model,
                                              Index count, std::uint64_t seed) {
  if (count < 1) throw ConfigError("make_interchange_pairs: count must be >= 1");
  Rng rng(seed);
  std::vector<PatchPair> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    const int base_label = draw_label(rng);
    PatchPair p;
    p.base_label = base_label;
    p.source_label = -base_label;
    p.base_input = sample_example(model, base_label, rng());
    p.source_input = sample_example(model, -base_label, rng());
    p.target_logitdiff_sign = -base_label;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

double das_loss(const SyntheticPathwayModel& model, const PatchPair& pair,
                const Matrix& basis, Site site) {
  check_basis(model, basis, site);
  return loss_from_acts(model, pair, site_activations(model, pair, site), basis,
                        site);
}

double clean_loss(const SyntheticPathwayModel& model, const PatchPair& pair) {
  return -pair.target_logitdiff_sign *
         forward_with_cache(model, pair.base_input).logitdiff();
}

Matrix das_grad(const SyntheticPathwayModel& model, const PatchPair& pair,
                const Matrix& basis, Site site) {
  if (basis.rows() != site_dim(model, site)) {
    throw DimensionError("das_grad: basis rows do not match site dimension");
  }
  return grad_from_acts(model, pair, site_activations(model, pair, site), basis,
                        site);
}

double mean_das_loss(const SyntheticPathwayModel& model,
                     const std::vector<PatchPair>& pairs, const Matrix& basis,
                     Site site) {
  if (pairs.empty()) throw ConfigError("mean_das_loss: no pairs");
  double total = 0.0;
  for (const auto& p : pairs) total += das_loss(model, p, basis, site);
  return total / static_cast<double>(pairs.size());
}

DasResult das_train(const SyntheticPathwayModel& model,
                    const std::vector<PatchPair>& pairs,
                    const DasConfig& config) {
  validate(config);
  if (pairs.empty()) throw ConfigError("das_train: need at least one pair");
  const Index d = site_dim(model, config.site);
  if (config.subspace_dim > d) {
    throw ConfigError("das_train: subspace_dim exceeds site dimension");
  }

  std::vector<PairActivations> acts;
  acts.reserve(pairs.size());
  for (const auto& p : pairs) acts.push_back(site_activations(model, p, config.site));

  auto full_mean_loss = [&](const Matrix& basis) {
    double total = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      total += loss_from_acts(model, pairs[i], acts[i], basis, config.site);
    }
    return total / static_cast<double>(pairs.size());
  };

  Rng rng(config.seed);
  DasResult result;
  result.initial_basis =
      orthonormalize_columns(gaussian_matrix(d, config.subspace_dim, 1.0, rng));
  result.basis = result.initial_basis;
  result.initial_mean_loss = full_mean_loss(result.basis);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  const auto batch = static_cast<std::size_t>(
      std::min<Index>(config.batch_size, static_cast<Index>(pairs.size())));

  for (Index step = 0; step < config.steps; ++step) {
    Matrix grad = Matrix::Zero(d, config.subspace_dim);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t i = order[cursor++];
      loss += loss_from_acts(model, pairs[i], acts[i], result.basis, config.site);
      grad += grad_from_acts(model, pairs[i], acts[i], result.basis, config.site);
    }
    loss /= static_cast<double>(batch);
    grad /= static_cast<double>(batch);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw NumericalError("das_train: loss diverged at step " +
                           std::to_string(step));
    }
    result.trace.push_back(DasTraceRow{step, loss});
    if (config.learning_rate == 0.0) continue;
    result.basis =
        orthonormalize_columns(result.basis - config.learning_rate * grad);
  }
  result.final_mean_loss = full_mean_loss(result.basis);
  if (!std::isfinite(result.final_mean_loss)) {
    throw NumericalError("das_train: loss diverged at step " +
                         std::to_string(config.steps));
  }
  return result;
}

void write_trace_csv(std::ostream& os, const std::vector<DasTraceRow>& trace) {
  os << "step,mean_loss\n";
  char buf[64];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof buf, "%.17g", row.mean_loss);
    os << row.step << ',' << buf << '\n';
  }
}

}  // namespace patchlab
