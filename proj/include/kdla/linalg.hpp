#pragma once

#include <vector>

#include "kdla/matrix.hpp"

namespace kdla {

/// Thin SVD A = U diag(s) V^T with r = min(p, q), s sorted descending.
/// Columns of U belonging to zero singular values are left as zero vectors.
struct Svd {
  Matrix u;               // p x r
  std::vector<double> s;  // r
  Matrix v;               // q x r
  std::size_t sweeps = 0; // Jacobi sweeps used
};

/// Householder QR followed by one-sided (Hestenes) Jacobi on the triangular factor.
/// Throws NumericalError if Jacobi has not converged after `max_sweeps`.
Svd svd(const Matrix& a, std::size_t max_sweeps = 80);

inline constexpr double kDefaultRcond = 1e-12;

/// Moore-Penrose inverse. Singular values below rcond * sigma_max are treated as zero.
Matrix pinv(const Matrix& a, double rcond = kDefaultRcond);

/// Adjoint of the pseudoinverse differential
///   dA+ = -A+ dA A+ + (I - A+A) dA^T A+^T A+ + A+ A+^T dA^T (I - AA+)
/// applied to `upstream` (shape of A+). Returns a matrix shaped like A.
/// All three terms are evaluated; none of the q x q or p x p projectors is formed.
Matrix pinv_vjp(const Matrix& a, const Matrix& a_plus, const Matrix& upstream);

/// Solves S X = B for symmetric positive definite S (Cholesky).
Matrix solve_spd(const Matrix& s, const Matrix& b);

}  // namespace kdla
