#include "gammaforge/linalg.hpp"

#include <cmath>
#include <limits>

namespace gammaforge {

double rank_threshold(double max_eigenvalue) { return 1e-10 * (1.0 + std::max(0.0, max_eigenvalue)); }

Matrix sym(const Matrix& M) { return 0.5 * (M + M.transpose()); }

Whitening whiten(const Matrix& A) {
  const auto n = A.rows();
  Whitening w;
  w.W = Matrix::Zero(0, n);
  w.pinv = Matrix::Zero(n, n);
  if (n == 0) return w;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(A));
  const Vector& d = es.eigenvalues();
  w.max_eigenvalue = d.maxCoeff();
  w.min_eigenvalue = d.minCoeff();
  const double thr = rank_threshold(w.max_eigenvalue);
  int rank = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (d(i) >= thr) ++rank;
  w.rank = rank;
  w.W.resize(rank, n);
  int r = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d(i) < thr) continue;
    w.W.row(r++) = es.eigenvectors().col(i).transpose() / std::sqrt(d(i));
  }
  w.pinv = w.W.transpose() * w.W;
  return w;
}

double min_eigenvalue(const Matrix& S) {
  if (S.rows() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(S), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double spectral_norm(const Matrix& S) {
  if (S.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(S), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_psd(const Matrix& A, double* min_eig) {
  const double m = min_eigenvalue(A);
  if (min_eig) *min_eig = m;
  if (A.rows() == 0) return true;
  return m >= -1e-10 * (1.0 + A.norm());
}

GeneralizedEigen generalized_eigen(const Matrix& M, const Whitening& w) {
  GeneralizedEigen g;
  if (w.rank == 0) {
    g.values = Vector(0);
    g.vectors = Matrix::Zero(M.rows(), 0);
    return g;
  }
  const Matrix S = sym(w.W * sym(M) * w.W.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  g.values = es.eigenvalues();
  g.vectors = w.W.transpose() * es.eigenvectors();
  return g;
}

double min_generalized_eigenvalue(const Matrix& M, const Whitening& w) {
  if (w.rank == 0) return std::numeric_limits<double>::infinity();
  return generalized_eigen(M, w).values(0);
}

double max_generalized_eigenvalue(const Matrix& M, const Whitening& w) {
  if (w.rank == 0) return -std::numeric_limits<double>::infinity();
  const auto g = generalized_eigen(M, w);
  return g.values(g.values.size() - 1);
}

}  // namespace gammaforge
