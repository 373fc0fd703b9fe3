#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <utility>
#include <vector>

namespace linid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when a decomposition fails to converge or a matrix is
/// numerically singular for the requested operation.
class LinalgError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SvdResult {
  Matrix u;                 // orthonormal columns
  Vector singular_values;   // non-negative, descending
  Matrix v;                 // orthonormal columns
};

struct SolveResult {
  Matrix x;
  double condition;  // estimated condition number of the system matrix
};

// Thin SVD of a dense real matrix. Throws LinalgError on non-convergence
// or non-finite input.
SvdResult svd(const Matrix& m);

// Solves a X = b for square a. Throws LinalgError when the estimated
// condition number exceeds 1e12.
SolveResult solve(const Matrix& a, const Matrix& b);

// Number of singular values above rel_tol * largest. Zero matrix -> 0.
int numerical_rank(const Matrix& m, double rel_tol = 1e-10);

// Ratio of largest to smallest singular value; infinity when singular.
double condition_number(const Matrix& m);

// Subtracts the column means; returns the centered matrix and the means.
std::pair<Matrix, Vector> center_columns(const Matrix& m);

bool all_finite(const Matrix& m);

}  // namespace linid
