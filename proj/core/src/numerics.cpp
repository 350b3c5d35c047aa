#include "patchlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "patchlab/error.hpp"

namespace patchlab {

namespace {

std::string shape_string(Index rows, Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

Eigen::JacobiSVD<Matrix> jacobi(const Matrix& a, unsigned options) {
  Eigen::JacobiSVD<Matrix> dec(a, options);
  const Vector& s = dec.singularValues();
  if (!s.allFinite()) {
    throw NumericalError("svd: Jacobi sweeps did not converge for " +
                         shape_string(a.rows(), a.cols()) + " input");
  }
  return dec;
}

double resolve_tol(std::optional<double> tol, const Vector& s, Index rows,
                   Index cols) {
  if (tol) {
    if (*tol < 0.0) throw ConfigError("rank tolerance must be >= 0");
    return *tol;
  }
  return default_rank_tolerance(s, rows, cols);
}

}  // namespace

void require_finite(const Matrix& m, std::string_view what) {
  if (m.size() == 0) return;
  if (!m.allFinite()) {
    throw NumericalError(std::string(what) + ": non-finite entry");
  }
}

void require_finite(const Vector& v, std::string_view what) {
  if (v.size() == 0) return;
  if (!v.allFinite()) {
    throw NumericalError(std::string(what) + ": non-finite entry");
  }
}

SvdResult svd(const Matrix& a) {
  if (a.rows() < 1 || a.cols() < 1) {
    throw DimensionError("svd: empty matrix");
  }
  require_finite(a, "svd");
  auto dec = jacobi(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return SvdResult{dec.matrixU(), dec.singularValues(), dec.matrixV()};
}

double default_rank_tolerance(const Vector& singular_values, Index rows,
                              Index cols) {
  const double smax = singular_values.size() ? singular_values.maxCoeff() : 0.0;
  return smax * static_cast<double>(std::max(rows, cols)) * 1e-12;
}

Index numerical_rank(const Vector& singular_values, double tol) {
  Index r = 0;
  for (Index i = 0; i < singular_values.size(); ++i) {
    if (singular_values[i] > tol) ++r;
  }
  return r;
}

Matrix nullspace_basis(const Matrix& w, std::optional<double> rank_tol) {
  require_finite(w, "nullspace_basis");
  auto dec = jacobi(w, Eigen::ComputeFullV);
  const Vector& s = dec.singularValues();
  const double tol = resolve_tol(rank_tol, s, w.rows(), w.cols());
  const Index r = numerical_rank(s, tol);
  return dec.matrixV().rightCols(w.cols() - r);
}

Matrix rowspace_basis(const Matrix& w, std::optional<double> rank_tol) {
  require_finite(w, "rowspace_basis");
  auto dec = jacobi(w, Eigen::ComputeThinV);
  const Vector& s = dec.singularValues();
  const double tol = resolve_tol(rank_tol, s, w.rows(), w.cols());
  const Index r = numerical_rank(s, tol);
  return dec.matrixV().leftCols(r);
}

Matrix pseudoinverse(const Matrix& w, std::optional<double> rank_tol) {
  require_finite(w, "pseudoinverse");
  auto dec = jacobi(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = dec.singularValues();
  const double tol = resolve_tol(rank_tol, s, w.rows(), w.cols());
  const Index r = numerical_rank(s, tol);
  const Vector inv = s.head(r).cwiseInverse();
  return dec.matrixV().leftCols(r) * inv.asDiagonal() *
         dec.matrixU().leftCols(r).transpose();
}

KernelProjector::KernelProjector(const Matrix& w, std::optional<double> rank_tol)
    : rowspace_(rowspace_basis(w, rank_tol)) {}

Vector KernelProjector::project_row(const Vector& v) const {
  if (v.size() != rowspace_.rows()) {
    throw DimensionError("kernel projection: vector has dimension " +
                         std::to_string(v.size()) + ", expected " +
                         std::to_string(rowspace_.rows()));
  }
  return rowspace_ * (rowspace_.transpose() * v);
}

Vector KernelProjector::project_null(const Vector& v) const {
  return v - project_row(v);
}

KernelSplit KernelProjector::split(const Vector& v) const {
  Vector row = project_row(v);
  Vector null = v - row;
  return KernelSplit{std::move(null), std::move(row)};
}

KernelSplit decompose_against_kernel(const Vector& v, const Matrix& w) {
  if (v.size() != w.cols()) {
    throw DimensionError("decompose_against_kernel: dim(v) = " +
                         std::to_string(v.size()) + " but W has " +
                         std::to_string(w.cols()) + " columns");
  }
  return KernelProjector(w).split(v);
}

double default_ridge(const Matrix& samples) {
  if (samples.rows() < 1 || samples.cols() < 1) {
    throw DimensionError("default_ridge: empty sample matrix");
  }
  const double n = static_cast<double>(samples.rows());
  const double d = static_cast<double>(samples.cols());
  return 1e-8 * samples.squaredNorm() / n / d;
}

Matrix uncentered_covariance(const Matrix& samples,
                             std::optional<double> ridge) {
  if (samples.rows() < 1 || samples.cols() < 1) {
    throw DimensionError("uncentered_covariance: need at least one sample");
  }
  require_finite(samples, "uncentered_covariance");
  const double r = ridge ? *ridge : default_ridge(samples);
  if (r < 0.0) throw ConfigError("uncentered_covariance: ridge must be >= 0");
  const double n = static_cast<double>(samples.rows());
  Matrix sigma = (samples.transpose() * samples) / n;
  // Symmetrize exactly; the product is symmetric only up to rounding.
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  sigma.diagonal().array() += r;
  return sigma;
}

SpdSolver::SpdSolver(const Matrix& a) : dim_(a.rows()) {
  if (a.rows() != a.cols() || a.rows() < 1) {
    throw DimensionError("SPD solve: matrix must be square and non-empty, got " +
                         shape_string(a.rows(), a.cols()));
  }
  require_finite(a, "SPD solve");
  const double scale = std::max(1.0, a.norm());
  if ((a - a.transpose()).norm() > 1e-10 * scale) {
    throw NumericalError("SPD solve: matrix is not symmetric");
  }
  llt_.compute(a);
  if (llt_.info() != Eigen::Success) {
    throw NumericalError(
        "SPD solve: Cholesky factorization failed (matrix not positive "
        "definite)");
  }
  // LLT succeeds on some numerically semidefinite inputs; reject a pivot that
  // has collapsed relative to the matrix scale.
  const Vector diag = llt_.matrixLLT().diagonal();
  const double amax = a.diagonal().cwiseAbs().maxCoeff();
  if (diag.minCoeff() <= 0.0 ||
      diag.minCoeff() * diag.minCoeff() <= 1e-15 * amax) {
    throw NumericalError(
        "SPD solve: matrix is numerically singular (Cholesky pivot collapsed)");
  }
}

Vector SpdSolver::solve(const Vector& rhs) const {
  if (rhs.size() != dim_) {
    throw DimensionError("SPD solve: rhs has dimension " +
                         std::to_string(rhs.size()) + ", expected " +
                         std::to_string(dim_));
  }
  return llt_.solve(rhs);
}

Matrix SpdSolver::solve(const Matrix& rhs) const {
  if (rhs.rows() != dim_) {
    throw DimensionError("SPD solve: rhs has " + std::to_string(rhs.rows()) +
                         " rows, expected " + std::to_string(dim_));
  }
  return llt_.solve(rhs);
}

Vector solve_spd(const Matrix& a, const Vector& rhs) {
  return SpdSolver(a).solve(rhs);
}

Matrix orthonormalize_columns(const Matrix& a) {
  require_finite(a, "orthonormalize_columns");
  const Index k = a.cols();
  if (k == 0) return a;
  if (a.rows() < k) {
    throw DimensionError("orthonormalize_columns: more columns than rows");
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), k);
  const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const double scale = std::max(a.norm(), 1e-300);
  for (Index j = 0; j < k; ++j) {
    if (std::abs(r(j, j)) <= 1e-13 * scale) {
      throw NumericalError("orthonormalize_columns: rank-deficient input");
    }
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Vector gaussian_vector(Index n, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector out(n);
  for (Index i = 0; i < n; ++i) out[i] = stddev * dist(rng);
  return out;
}

Matrix gaussian_matrix(Index rows, Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix out(rows, cols);
  // Fill row by row so the draw order matches the row-major reading order.
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) out(i, j) = stddev * dist(rng);
  }
  return out;
}

Matrix random_orthogonal(Index n, Rng& rng) {
  return orthonormalize_columns(gaussian_matrix(n, n, 1.0, rng));
}

Vector random_unit_vector(Index n, Rng& rng) {
  Vector v = gaussian_vector(n, 1.0, rng);
  return v / v.norm();
}

Matrix random_spd(Index n, double condition, Rng& rng) {
  if (n < 1 || !(condition >= 1.0)) {
    throw ConfigError("random_spd: need n >= 1 and condition >= 1");
  }
  const Matrix q = random_orthogonal(n, rng);
  Vector eig(n);
  for (Index i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    eig[i] = std::pow(condition, -t);
  }
  Matrix s = q * eig.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

}  // namespace patchlab
