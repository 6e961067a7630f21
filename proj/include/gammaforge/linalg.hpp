#pragma once

#include <Eigen/Dense>

namespace gammaforge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Rank-revealing factor of a symmetric PSD matrix A: W is rank x n with
/// W A W^T = I on the range, and W^T W = A^+.
struct Whitening {
  int rank = 0;
  Matrix W;
  Matrix pinv;
  double max_eigenvalue = 0.0;
  double min_eigenvalue = 0.0;
};

/// Eigenvalues count toward the rank iff >= 1e-10 * (1 + max eigenvalue).
double rank_threshold(double max_eigenvalue);
Whitening whiten(const Matrix& A);

/// Smallest eigenvalue of the symmetric part of S.
double min_eigenvalue(const Matrix& S);
/// PSD up to min eigenvalue >= -1e-10 * (1 + ||A||).
bool is_psd(const Matrix& A, double* min_eig = nullptr);

/// Generalized eigenpairs of the pencil (M, A) on range(A): eigenvalues of
/// W M W^T ascending, eigenvectors mapped back to coordinates as W^T xi.
struct GeneralizedEigen {
  Vector values;
  Matrix vectors;  // n x rank, columns are coordinate representatives
};
GeneralizedEigen generalized_eigen(const Matrix& M, const Whitening& w);

/// min / max of (l^T M l) / (l^T A l) over l with l^T A l > 0; +inf / -inf
/// when the range is trivial.
double min_generalized_eigenvalue(const Matrix& M, const Whitening& w);
double max_generalized_eigenvalue(const Matrix& M, const Whitening& w);

/// Symmetric part (M + M^T)/2.
Matrix sym(const Matrix& M);
/// Operator (spectral) norm of a symmetric matrix.
double spectral_norm(const Matrix& S);

}  // namespace gammaforge
