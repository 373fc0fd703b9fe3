#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "linid/linalg.hpp"
#include "linid/model.hpp"

namespace linid {

struct ReprMeta {
  std::uint64_t seed = 0;
  std::string task;
  std::string layer;  // "repr" for the final representation, "hidden1", ...
  int iteration = 0;
  std::string model_id;
};

/// n x M matrix of encoded representations plus provenance.
struct ReprDump {
  Matrix data;
  ReprMeta meta;
};

struct CcaReport {
  Vector correlations;  // descending, clamped to [0, 1]
  Matrix x_transform;   // C: columns are canonical directions for X
  Matrix y_transform;   // D
  double mean_rho = 0.0;
};

enum class DiversityRole { kLForF, kMForG };

struct DiversityReport {
  DiversityRole role = DiversityRole::kLForF;
  int rank = 0;
  double condition = 0.0;
  bool satisfied = false;
  std::vector<std::pair<int, int>> tuples;  // indices into the target pool
};

struct RecoveryReport {
  Matrix map;               // the recovered A or B
  double residual = 0.0;    // relative, on the evaluation set
  double condition = 0.0;   // of the recovered map
};

struct PcaResult {
  Matrix projected;             // n x k
  Vector explained_variance;    // fractions, descending
};

/// Raised when centered data is numerically rank-deficient for an analysis.
class RankDeficiencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the candidate pool cannot supply enough distinct targets.
class InsufficientDiversityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Centers columns and projects onto the top-k principal directions.
PcaResult pca_project(const ReprDump& x, int k);

// Canonical correlations via SVD of the whitened cross-covariance, with a
// trace-scaled ridge (1e-8 * mean diagonal) inside each covariance.
CcaReport cca(const ReprDump& x, const ReprDump& y);

// PCA-truncate both sides to k dimensions, then CCA.
CcaReport svcca(const ReprDump& x, const ReprDump& y, int k);

// Least-squares A minimizing ||X A^T - Y||_F; residual relative to ||Y||_F.
RecoveryReport fit_linear_map(const ReprDump& x, const ReprDump& y);

// Builds the M x M matrix of g-difference columns from sampled target
// tuples and reports its rank and condition. Retries up to `attempts`
// tuple draws looking for a full-rank, well-conditioned set.
DiversityReport diversity_check_f(const CanonicalModel& model,
                                  const std::vector<Target>& targets, int attempts,
                                  std::uint64_t seed = 7);

// Constructive recovery of A with f' = A f*: builds the difference
// matrices for both models over a shared tuple set and inverts the
// primed one. Residual is measured on eval_inputs.
RecoveryReport theorem1_recover(const CanonicalModel& model_prime,
                                const CanonicalModel& model_star,
                                const std::vector<Target>& targets,
                                const Matrix& eval_inputs, int attempts = 50,
                                std::uint64_t seed = 7);

// Context-side recovery of B with g' = B g*: forms [-Z(x,S); f(x)]
// columns for M+1 tuples, solves the (M+1)-dimensional affine system,
// checks first-coordinate consistency, and extracts B by least squares
// over the observed targets.
RecoveryReport context_recover(const CanonicalModel& model_prime,
                               const CanonicalModel& model_star,
                               const CandidateBatch& data, int attempts = 50,
                               std::uint64_t seed = 7);

// Log-normalizer Z(x, S) = log sum_y' exp(f(x)^T g(y')) per input row.
Vector log_normalizers(const CanonicalModel& model, const Matrix& inputs,
                       const std::vector<Target>& candidates);

}  // namespace linid
