#include "patchlab/separability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

std::vector<Index> shuffled_indices(Index n, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

Matrix take_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(i)) = m.row(rows[i]);
  }
  return out;
}

double log1p_exp(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<QuadrupleSample> sample_quadruple_products(const Matrix& x,
                                                       const Matrix& z,
                                                       Index count,
                                                       std::uint64_t seed) {
  if (x.rows() < 4) throw ConfigError("sample_quadruple_products: need n >= 4");
  if (z.rows() != x.rows()) {
    throw DimensionError("sample_quadruple_products: X and Z must be row aligned");
  }
  Rng rng(seed);
  std::uniform_int_distribution<Index> pick(0, x.rows() - 1);
  std::vector<QuadrupleSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index s = 0; s < count; ++s) {
    std::array<Index, 4> q{};
    for (std::size_t t = 0; t < 4; ++t) {
      Index cand;
      do {
        cand = pick(rng);
      } while (std::find(q.begin(), q.begin() + static_cast<long>(t), cand) !=
               q.begin() + static_cast<long>(t));
      q[t] = cand;
    }
    QuadrupleSample qs;
    qs.indices = q;
    qs.a_val = (x.row(q[0]) - x.row(q[1])).dot(x.row(q[2]) - x.row(q[3]));
    qs.b_val = (z.row(q[0]) - z.row(q[1])).dot(z.row(q[2]) - z.row(q[3]));
    out.push_back(qs);
  }
  return out;
}

RegressionFit ridge_regression(const Vector& x, const Vector& y, double lambda) {
  if (x.size() != y.size()) throw DimensionError("ridge_regression: length mismatch");
  if (x.size() < 3) throw ConfigError("ridge_regression: need at least 3 points");
  if (!(lambda >= 0.0)) throw ConfigError("ridge_regression: lambda must be >= 0");
  const double mx = x.mean();
  const double my = y.mean();
  const Vector dx = x.array() - mx;
  const Vector dy = y.array() - my;
  const double sxx = dx.squaredNorm();
  if (!(sxx > 0.0)) throw NumericalError("ridge_regression: zero predictor variance");
  RegressionFit fit;
  fit.n = x.size();
  fit.slope = dx.dot(dy) / (sxx + lambda);
  fit.intercept = my - fit.slope * mx;
  const double ss_tot = dy.squaredNorm();
  const Vector resid = y.array() - (fit.slope * x.array() + fit.intercept);
  fit.r_squared = ss_tot > 0.0 ? 1.0 - resid.squaredNorm() / ss_tot
                               : (resid.squaredNorm() == 0.0 ? 1.0 : 0.0);
  return fit;
}

RegressionFit distortion_fit(const Matrix& x, const Matrix& z, Index count,
                             std::uint64_t seed) {
  const auto samples = sample_quadruple_products(x, z, count, seed);
  Vector a(static_cast<Index>(samples.size()));
  Vector b(static_cast<Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    a[static_cast<Index>(i)] = samples[i].a_val;
    b[static_cast<Index>(i)] = samples[i].b_val;
  }
  return ridge_regression(a, b, 0.0);
}

RegressionFit distortion_regression(const SyntheticPathwayModel& model,
                                    Index n_examples, Index n_quadruples,
                                    std::uint64_t seed) {
  const KernelProjector kernel(model.mlp.w_out);
  if (kernel.kernel_dim() == 0) {
    throw NumericalError("distortion_regression: W_out has a trivial kernel");
  }
  Rng rng(seed);
  Matrix x(n_examples, model.mlp.d_mlp());
  Matrix z(n_examples, model.mlp.d_mlp());
  for (Index i = 0; i < n_examples; ++i) {
    const int label = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
    const Vector pre =
        model.mlp.w_in * sample_example(model, label, rng()) + model.mlp.b_in;
    x.row(i) = pre.transpose();
    z.row(i) = kernel.project_null(gelu(pre)).transpose();
  }
  return distortion_fit(x, z, n_quadruples, rng());
}

ProbeResult logistic_probe(const Matrix& features, const std::vector<int>& labels,
                           const ProbeConfig& config) {
  const Index n = features.rows();
  if (static_cast<Index>(labels.size()) != n) {
    throw DimensionError("logistic_probe: one label per feature row");
  }
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  const auto negatives = std::count(labels.begin(), labels.end(), -1);
  if (positives + negatives != n) throw ConfigError("logistic_probe: labels must be +-1");
  if (positives < 2 || negatives < 2) {
    throw ConfigError("logistic_probe: need at least two examples per class");
  }
  if (config.steps < 1) throw ConfigError("logistic_probe: steps must be >= 1");

  Rng rng(config.seed);
  const auto order = shuffled_indices(n, rng);
  const auto n_train = std::clamp<Index>(
      static_cast<Index>(std::llround(config.train_fraction * static_cast<double>(n))),
      1, n - 1);
  const std::vector<Index> train(order.begin(), order.begin() + n_train);
  const std::vector<Index> test(order.begin() + n_train, order.end());

  Matrix xtr = take_rows(features, train);
  const Vector mean = xtr.colwise().mean();
  Vector scale = ((xtr.rowwise() - mean.transpose()).colwise().squaredNorm() /
                  static_cast<double>(n_train))
                     .cwiseSqrt()
                     .transpose();
  for (Index j = 0; j < scale.size(); ++j) {
    if (!(scale[j] > 1e-12)) scale[j] = 1.0;
  }
  auto standardize = [&](const Matrix& m) {
    Matrix s = m.rowwise() - mean.transpose();
    return Matrix(s.array().rowwise() / scale.transpose().array());
  };
  xtr = standardize(xtr);
  const Matrix xte = standardize(take_rows(features, test));
  Vector ytr(n_train);
  for (Index i = 0; i < n_train; ++i) ytr[i] = labels[static_cast<std::size_t>(train[i])];

  // Lipschitz constant of the mean logistic loss in (w, bias).
  Matrix aug(n_train, xtr.cols() + 1);
  aug << xtr, Vector::Ones(n_train);
  const Matrix gram = aug.transpose() * aug / static_cast<double>(n_train);
  const double lmax =
      Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .maxCoeff();
  const double lipschitz = 0.25 * lmax + config.lambda;

  ProbeResult res;
  res.seed = config.seed;
  res.step_size = std::min(config.learning_rate, 1.0 / lipschitz);
  Vector w = Vector::Zero(xtr.cols());
  double bias = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n_train);
  for (Index step = 0; step < config.steps; ++step) {
    const Vector margin = (ytr.array() * ((xtr * w).array() + bias)).matrix();
    double loss = 0.0;
    Vector coef(n_train);
    for (Index i = 0; i < n_train; ++i) {
      loss += log1p_exp(-margin[i]);
      coef[i] = -ytr[i] * sigmoid(-margin[i]);
    }
    loss = loss * inv_n + 0.5 * config.lambda * w.squaredNorm();
    if (!std::isfinite(loss)) {
      throw NumericalError("logistic_probe: loss diverged at step " +
                           std::to_string(step));
    }
    res.train_loss.push_back(loss);
    const Vector gw = xtr.transpose() * coef * inv_n + config.lambda * w;
    const double gb = coef.sum() * inv_n;
    w -= res.step_size * gw;
    bias -= res.step_size * gb;
  }

  Index correct = 0;
  const Vector score = (xte * w).array() + bias;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int pred = score[static_cast<Index>(i)] >= 0.0 ? 1 : -1;
    if (pred == labels[static_cast<std::size_t>(test[i])]) ++correct;
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  return res;
}

std::vector<ProbeResult> injected_direction_experiment(
    const SyntheticPathwayModel& model, const std::vector<double>& z_values,
    Index n_per_z, std::uint64_t seed, const ProbeConfig& probe) {
  std::vector<ProbeResult> out;
  Rng master(seed);
  for (double z : z_values) {
    if (!(z >= 0.0) || !std::isfinite(z)) {
      throw ConfigError("injected_direction_experiment: z must be >= 0");
    }
    Rng rng(master());
    const Vector v = random_unit_vector(model.d_resid, rng);
    Matrix feats(n_per_z, model.mlp.d_mlp());
    std::vector<int> ys;
    ys.reserve(static_cast<std::size_t>(n_per_z));
    for (Index i = 0; i < n_per_z; ++i) {
      const int y = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
      const int cls = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
      const Vector u = sample_example(model, cls, rng());
      const Vector injected = u + static_cast<double>(y) * z * u.norm() * v;
      feats.row(i) = model.mlp.hidden(injected).transpose();
      ys.push_back(y);
    }
    ProbeConfig cfg = probe;
    cfg.seed = rng();
    ProbeResult r = logistic_probe(feats, ys, cfg);
    r.z = z;
    out.push_back(std::move(r));
  }
  return out;
}

void write_probe_csv(std::ostream& os, const std::vector<ProbeResult>& results) {
  os << "z,accuracy,seed\n";
  char z[64];
  char acc[64];
  for (const auto& r : results) {
    std::snprintf(z, sizeof z, "%.17g", r.z);
    std::snprintf(acc, sizeof acc, "%.17g", r.accuracy);
    os << z << ',' << acc << ',' << r.seed << '\n';
  }
}

namespace {

// Hard-margin linear SVM dual by sequential minimal optimization with
// maximal-violating-pair selection (no upper bound on the multipliers).
// Returns the multipliers alpha_i >= 0 with sum alpha_i y_i = 0.
Vector hard_margin_dual(const Matrix& x, const Vector& y) {
  const Index n = x.rows();
  const Matrix k = x * x.transpose();
  Vector alpha = Vector::Zero(n);
  Vector grad = -Vector::Ones(n);  // Q alpha - e
  const double eps = 1e-10 * std::max(1.0, k.diagonal().maxCoeff());
  const Index max_iter = 200000;
  for (Index iter = 0; iter < max_iter; ++iter) {
    Index i = -1;
    Index j = -1;
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    for (Index t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      const bool up = y[t] > 0 || alpha[t] > 0.0;
      const bool low = y[t] < 0 || alpha[t] > 0.0;
      if (up && v > gmax) { gmax = v; i = t; }
      if (low && v < gmin) { gmin = v; j = t; }
    }
    if (gmax - gmin < eps) return alpha;
    if (!(gmax - gmin < 1e12)) break;
    const double quad =
        std::max(k(i, i) + k(j, j) - 2.0 * k(i, j), 1e-12);
    const double old_i = alpha[i];
    const double old_j = alpha[j];
    if (y[i] != y[j]) {
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0; alpha[j] = -diff;
      }
    } else {
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = sum; }
      if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = sum; }
    }
    const double di = alpha[i] - old_i;
    const double dj = alpha[j] - old_j;
    for (Index t = 0; t < n; ++t) {
      grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
    }
  }
  throw NumericalError(
      "lemma_separability_check: no hard-margin separator found (points are "
      "not linearly separable)");
}

}  // namespace

LemmaCheck lemma_separability_check(const Matrix& points,
                                    const std::vector<int>& labels,
                                    double lambda_iso, std::uint64_t seed,
                                    bool identity_transform) {
  const Index n = points.rows();
  const Index d = points.cols();
  if (static_cast<Index>(labels.size()) != n) {
    throw DimensionError("lemma_separability_check: one label per point");
  }
  if (!(lambda_iso > 0.0)) throw ConfigError("lemma_separability_check: lambda must be > 0");
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l != 1 && l != -1) throw ConfigError("lemma_separability_check: labels must be +-1");
    y[i] = l;
  }
  if ((y.array() > 0).all() || (y.array() < 0).all()) {
    throw ConfigError("lemma_separability_check: need both classes");
  }

  const Vector dual = hard_margin_dual(points, y);
  const Vector alpha = dual.cwiseProduct(y);  // signed coefficients
  LemmaCheck rec;
  rec.n = n;
  rec.lambda = lambda_iso;
  rec.w_star = points.transpose() * alpha;
  rec.alpha_sum = alpha.sum();
  if (std::abs(rec.alpha_sum) > 1e-8 * std::max(1.0, alpha.cwiseAbs().sum())) {
    throw NumericalError("lemma_separability_check: coefficients do not sum to zero");
  }
  const Vector proj = points * rec.w_star;
  double lo_pos = std::numeric_limits<double>::infinity();
  double hi_neg = -lo_pos;
  for (Index i = 0; i < n; ++i) {
    if (y[i] > 0) lo_pos = std::min(lo_pos, proj[i]);
    else hi_neg = std::max(hi_neg, proj[i]);
  }
  rec.original_gap = lo_pos - hi_neg;
  if (!(rec.original_gap > 0.0)) {
    throw NumericalError(
        "lemma_separability_check: separator search failed (points are not "
        "linearly separable)");
  }

  std::vector<Index> support;
  for (Index i = 0; i < n; ++i) {
    if (dual[i] > 0.0) support.push_back(i);
  }
  rec.support_size = static_cast<Index>(support.size());

  Rng rng(seed);
  Matrix q = Matrix::Identity(d, d);
  Vector shift = Vector::Zero(d);
  if (!identity_transform) {
    q = random_orthogonal(d, rng);
    shift = gaussian_vector(d, 1.0, rng);
  }
  const double root = std::sqrt(lambda_iso);
  const Matrix f = ((root * points * q.transpose()).rowwise() + shift.transpose());

  // beta_j are prefix sums of alpha over the support; with sum alpha = 0 the
  // cyclic difference expansion reproduces w* exactly.
  rec.w_hat = Vector::Zero(d);
  double beta = 0.0;
  const std::size_t t = support.size();
  for (std::size_t s = 0; s < t; ++s) {
    beta += alpha[support[s]];
    const Index next = support[(s + 1) % t];
    rec.w_hat += beta * (f.row(support[s]) - f.row(next)).transpose();
  }

  const Vector score = f * rec.w_hat;
  double big_m = std::numeric_limits<double>::infinity();
  double small_m = -big_m;
  for (Index i = 0; i < n; ++i) {
    if (y[i] > 0) big_m = std::min(big_m, score[i]);
    else small_m = std::max(small_m, score[i]);
  }
  rec.transferred_gap = big_m - small_m;
  rec.bias = 0.5 * (big_m + small_m);
  for (Index i = 0; i < n; ++i) {
    const int pred = score[i] - rec.bias > 0.0 ? 1 : -1;
    if (pred == static_cast<int>(y[i])) ++rec.correct;
  }
  rec.all_correct = rec.correct == n;
  return rec;
}

HeldOutFit ridge_heldout(const Matrix& features, const Vector& response,
                         double lambda, std::uint64_t seed) {
  const Index n = features.rows();
  if (response.size() != n) throw DimensionError("ridge_heldout: length mismatch");
  if (n < 50) throw ConfigError("ridge_heldout: need at least 50 examples");
  if (!(lambda >= 0.0)) throw ConfigError("ridge_heldout: lambda must be >= 0");
  Rng rng(seed);
  const auto order = shuffled_indices(n, rng);
  const Index n_train = static_cast<Index>(std::llround(0.8 * static_cast<double>(n)));
  const std::vector<Index> train(order.begin(), order.begin() + n_train);
  const std::vector<Index> test(order.begin() + n_train, order.end());

  const Matrix xtr = take_rows(features, train);
  Vector ytr(n_train);
  for (Index i = 0; i < n_train; ++i) ytr[i] = response[train[static_cast<std::size_t>(i)]];
  const Vector xmean = xtr.colwise().mean();
  const double ymean = ytr.mean();
  const Matrix xc = xtr.rowwise() - xmean.transpose();
  const Vector yc = ytr.array() - ymean;
  if (!(yc.squaredNorm() > 0.0)) {
    throw NumericalError("ridge_heldout: zero response variance");
  }
  Matrix normal = xc.transpose() * xc;
  normal.diagonal().array() += std::max(lambda, 1e-12 * normal.diagonal().maxCoeff());
  const Vector coef = solve_spd(normal, xc.transpose() * yc);

  auto r2 = [&](const std::vector<Index>& rows) {
    Vector yy(static_cast<Index>(rows.size()));
    Vector pred(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      yy[static_cast<Index>(i)] = response[rows[i]];
      pred[static_cast<Index>(i)] =
          ymean + (features.row(rows[i]).transpose() - xmean).dot(coef);
    }
    const double ss_tot = (yy.array() - yy.mean()).matrix().squaredNorm();
    if (!(ss_tot > 0.0)) throw NumericalError("ridge_heldout: zero response variance");
    return 1.0 - (yy - pred).squaredNorm() / ss_tot;
  };
  HeldOutFit fit;
  fit.n_train = n_train;
  fit.n_test = n - n_train;
  fit.train_r_squared = r2(train);
  fit.r_squared = r2(test);
  return fit;
}

HeldOutFit residual_projection_regression(const SyntheticPathwayModel& model,
                                          const Vector& direction, Index n,
                                          double lambda, std::uint64_t seed) {
  if (direction.size() != model.d_resid) {
    throw DimensionError("residual_projection_regression: direction must live in the residual stream");
  }
  if (n < 50) throw ConfigError("residual_projection_regression: need n >= 50");
  Rng rng(seed);
  Matrix feats(n, model.mlp.d_mlp());
  Vector target(n);
  for (Index i = 0; i < n; ++i) {
    const int label = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
    const Vector u = sample_example(model, label, rng());
    feats.row(i) = model.mlp.hidden(u).transpose();
    target[i] = direction.dot(u);
  }
  return ridge_heldout(feats, target, lambda, rng());
}

}  // namespace patchlab
