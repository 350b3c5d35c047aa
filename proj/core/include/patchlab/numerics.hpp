#pragma once

// Dense linear algebra used throughout the library. Matrices and vectors are
// plain Eigen dynamic types in 64-bit floating point; the functions here add
// the rank-revealing and SPD machinery on top with explicit error reporting.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

namespace patchlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

/// Throws NumericalError if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
void require_finite(const Vector& v, std::string_view what);

/// Thin singular value decomposition A = U diag(s) V^T with r = min(m, n).
struct SvdResult {
  Matrix u;                 // m x r, orthonormal columns
  Vector singular_values;   // r, nonincreasing, >= 0
  Matrix v;                 // n x r, orthonormal columns
};

SvdResult svd(const Matrix& a);

/// sigma_max * max(m, n) * 1e-12.
double default_rank_tolerance(const Vector& singular_values, Index rows,
                              Index cols);

/// Number of singular values strictly above `tol`.
Index numerical_rank(const Vector& singular_values, double tol);

/// Orthonormal basis (columns) of ker W. Returns an n x 0 matrix when W has
/// full column rank.
Matrix nullspace_basis(const Matrix& w,
                       std::optional<double> rank_tol = std::nullopt);

/// Orthonormal basis (columns) of the rowspace of W, i.e. (ker W)^perp.
Matrix rowspace_basis(const Matrix& w,
                      std::optional<double> rank_tol = std::nullopt);

/// Moore-Penrose pseudoinverse via SVD, discarding singular values at or
/// below the rank tolerance.
Matrix pseudoinverse(const Matrix& w,
                     std::optional<double> rank_tol = std::nullopt);

struct KernelSplit {
  Vector null;  // orthogonal projection onto ker W
  Vector row;   // remainder, lies in the rowspace of W
};

/// Splits directions against ker W. Caches the rowspace basis so repeated
/// decompositions against the same matrix are cheap.
class KernelProjector {
 public:
  explicit KernelProjector(const Matrix& w,
                           std::optional<double> rank_tol = std::nullopt);

  KernelSplit split(const Vector& v) const;
  Vector project_row(const Vector& v) const;
  Vector project_null(const Vector& v) const;

  Index input_dim() const { return rowspace_.rows(); }
  Index rank() const { return rowspace_.cols(); }
  Index kernel_dim() const { return rowspace_.rows() - rowspace_.cols(); }
  const Matrix& rowspace() const { return rowspace_; }

 private:
  Matrix rowspace_;
};

/// v = v_null + v_row with v_null in ker W and v_row in its orthogonal
/// complement.
KernelSplit decompose_against_kernel(const Vector& v, const Matrix& w);

/// 1e-8 * trace(X^T X / n) / d; keeps the covariance invertible.
double default_ridge(const Matrix& samples);

/// (1/n) X^T X + ridge * I for row samples X (n x d). When `ridge` is not
/// given, default_ridge(samples) is used.
Matrix uncentered_covariance(const Matrix& samples,
                             std::optional<double> ridge = std::nullopt);

/// Cholesky-backed solver for a symmetric positive definite matrix. The
/// factorization is computed once; construction throws NumericalError when
/// the matrix is asymmetric beyond 1e-10 (relative) or not positive definite.
class SpdSolver {
 public:
  explicit SpdSolver(const Matrix& a);

  Vector solve(const Vector& rhs) const;
  Matrix solve(const Matrix& rhs) const;
  Index dim() const { return dim_; }

 private:
  Eigen::LLT<Matrix> llt_;
  Index dim_;
};

Vector solve_spd(const Matrix& a, const Vector& rhs);

/// Thin QR retraction: returns Q with orthonormal columns spanning the
/// columns of `a`, with the sign convention diag(R) >= 0 so the map is
/// continuous and deterministic. Throws on rank deficiency.
Matrix orthonormalize_columns(const Matrix& a);

Vector gaussian_vector(Index n, double stddev, Rng& rng);
Matrix gaussian_matrix(Index rows, Index cols, double stddev, Rng& rng);

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian matrix.
Matrix random_orthogonal(Index n, Rng& rng);

/// Q diag(l) Q^T with eigenvalues log-spaced from 1 down to 1/condition.
Matrix random_spd(Index n, double condition, Rng& rng);

/// Uniformly random unit vector.
Vector random_unit_vector(Index n, Rng& rng);

}  // namespace patchlab
