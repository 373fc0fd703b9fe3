#include "linid/linalg.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>

namespace linid {

bool all_finite(const Matrix& m) { return m.allFinite(); }

SvdResult svd(const Matrix& m) {
  if (!m.allFinite()) {
    throw LinalgError("svd: input has non-finite entries");
  }
  Eigen::BDCSVD<Matrix> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) {
    throw LinalgError("svd: decomposition did not converge");
  }
  return SvdResult{dec.matrixU(), dec.singularValues(), dec.matrixV()};
}

double condition_number(const Matrix& m) {
  const SvdResult s = svd(m);
  const double smax = s.singular_values.size() ? s.singular_values(0) : 0.0;
  const double smin =
      s.singular_values.size() ? s.singular_values(s.singular_values.size() - 1) : 0.0;
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

SolveResult solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols()) {
    throw LinalgError("solve: matrix must be square");
  }
  if (a.rows() != b.rows()) {
    throw LinalgError("solve: dimension mismatch between a and b");
  }
  const double cond = condition_number(a);
  if (!(cond < 1e12)) {
    throw LinalgError("solve: matrix is numerically singular (condition > 1e12)");
  }
  Matrix x = a.partialPivLu().solve(b);
  return SolveResult{std::move(x), cond};
}

int numerical_rank(const Matrix& m, double rel_tol) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
    throw std::invalid_argument("numerical_rank: rel_tol must lie in (0,1)");
  }
  const SvdResult s = svd(m);
  if (s.singular_values.size() == 0) return 0;
  const double smax = s.singular_values(0);
  if (smax == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.singular_values.size(); ++i) {
    if (s.singular_values(i) > rel_tol * smax) ++rank;
  }
  return rank;
}

std::pair<Matrix, Vector> center_columns(const Matrix& m) {
  if (m.rows() < 1) {
    throw std::invalid_argument("center_columns: need at least one row");
  }
  Vector means = m.colwise().mean();
  Matrix centered = m.rowwise() - means.transpose();
  return {std::move(centered), std::move(means)};
}

}  // namespace linid
