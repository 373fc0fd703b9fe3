#include "linid/analysis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>

namespace linid {

namespace {

void require_analysis_shape(const ReprDump& x) {
  if (x.data.rows() <= x.data.cols()) {
    throw std::invalid_argument("analysis: need more samples than dimensions (n > M)");
  }
}

// Symmetric inverse square root with a trace-scaled ridge.
Matrix inverse_sqrt_ridged(const Matrix& cov) {
  const double ridge = 1e-8 * cov.diagonal().mean();
  Matrix stabilized = cov;
  stabilized.diagonal().array() += ridge;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(stabilized);
  if (eig.info() != Eigen::Success) {
    throw LinalgError("cca: eigendecomposition failed");
  }
  const Vector& values = eig.eigenvalues();
  const double largest = values(values.size() - 1);
  if (!(largest > 0.0) || values(0) <= largest * 1e-14) {
    throw RankDeficiencyError("cca: covariance numerically singular after ridge");
  }
  return eig.eigenvectors() * values.cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

std::vector<Target> distinct_targets(const std::vector<Target>& targets) {
  std::vector<Target> unique;
  for (const Target& t : targets) {
    bool seen = false;
    for (const Target& u : unique) {
      if (targets_equal(t, u)) {
        seen = true;
        break;
      }
    }
    if (!seen) unique.push_back(t);
  }
  return unique;
}

// M tuple draws without replacement from the distinct-target pair pool.
std::vector<std::pair<int, int>> sample_tuples(int pool_size, int count,
                                               std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, pool_size - 1);
  std::set<std::pair<int, int>> seen;
  std::vector<std::pair<int, int>> tuples;
  int guard = 0;
  while (static_cast<int>(tuples.size()) < count && guard++ < 100 * count) {
    int a = pick(rng), b = pick(rng);
    if (a == b) continue;
    if (!seen.insert({a, b}).second) continue;
    tuples.emplace_back(a, b);
  }
  if (static_cast<int>(tuples.size()) < count) {
    throw InsufficientDiversityError("could not draw enough distinct target tuples");
  }
  return tuples;
}

Matrix difference_columns(const Matrix& g_rows,
                          const std::vector<std::pair<int, int>>& tuples) {
  Matrix l(g_rows.cols(), tuples.size());
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    l.col(i) = (g_rows.row(tuples[i].first) - g_rows.row(tuples[i].second)).transpose();
  }
  return l;
}

}  // namespace

PcaResult pca_project(const ReprDump& x, int k) {
  require_analysis_shape(x);
  if (k < 1 || k > x.data.cols()) {
    throw std::invalid_argument("pca_project: k out of range");
  }
  auto [centered, means] = center_columns(x.data);
  const SvdResult dec = svd(centered);
  PcaResult result;
  result.projected = centered * dec.v.leftCols(k);
  const Eigen::ArrayXd energy = dec.singular_values.array().square();
  const double total = energy.sum();
  result.explained_variance =
      total > 0.0 ? Vector((energy.head(k) / total).matrix()) : Vector::Zero(k);
  return result;
}

CcaReport cca(const ReprDump& x, const ReprDump& y) {
  require_analysis_shape(x);
  require_analysis_shape(y);
  if (x.data.rows() != y.data.rows()) {
    throw std::invalid_argument("cca: sample counts must match");
  }
  const double n = static_cast<double>(x.data.rows());
  auto [xc, xm] = center_columns(x.data);
  auto [yc, ym] = center_columns(y.data);
  const Matrix sxx = xc.transpose() * xc / (n - 1.0);
  const Matrix syy = yc.transpose() * yc / (n - 1.0);
  const Matrix sxy = xc.transpose() * yc / (n - 1.0);
  const Matrix wx = inverse_sqrt_ridged(sxx);
  const Matrix wy = inverse_sqrt_ridged(syy);
  const SvdResult dec = svd(wx * sxy * wy);

  CcaReport report;
  report.x_transform = wx * dec.u;
  report.y_transform = wy * dec.v;

  // Report the empirical correlations of the canonical variates rather
  // than the singular values: the ridge then only picks directions and
  // cannot bias a perfect correlation below one.
  const Matrix xv = xc * report.x_transform;
  const Matrix yv = yc * report.y_transform;
  Vector rho(xv.cols());
  for (Eigen::Index i = 0; i < xv.cols(); ++i) {
    const double denom = xv.col(i).norm() * yv.col(i).norm();
    rho(i) = denom > 0.0 ? xv.col(i).dot(yv.col(i)) / denom
                         : dec.singular_values(i);
  }
  std::sort(rho.data(), rho.data() + rho.size(), std::greater<double>());
  report.correlations = rho.cwiseMin(1.0).cwiseMax(0.0);
  report.mean_rho = report.correlations.mean();
  return report;
}

CcaReport svcca(const ReprDump& x, const ReprDump& y, int k) {
  if (k > std::min(x.data.cols(), y.data.cols())) {
    throw std::invalid_argument("svcca: k exceeds a representation dimension");
  }
  ReprDump px{pca_project(x, k).projected, x.meta};
  ReprDump py{pca_project(y, k).projected, y.meta};
  return cca(px, py);
}

RecoveryReport fit_linear_map(const ReprDump& x, const ReprDump& y) {
  require_analysis_shape(x);
  if (x.data.rows() != y.data.rows()) {
    throw std::invalid_argument("fit_linear_map: sample counts must match");
  }
  if (numerical_rank(x.data) < x.data.cols()) {
    throw RankDeficiencyError("fit_linear_map: X is column rank deficient");
  }
  const Matrix at = x.data.colPivHouseholderQr().solve(y.data);
  RecoveryReport report;
  report.map = at.transpose();
  const double denom = std::max(y.data.norm(), 1.0);
  report.residual = (x.data * at - y.data).norm() / denom;
  report.condition =
      report.map.rows() == report.map.cols() ? condition_number(report.map) : 0.0;
  return report;
}

DiversityReport diversity_check_f(const CanonicalModel& model,
                                  const std::vector<Target>& targets, int attempts,
                                  std::uint64_t seed) {
  const int m = model.repr_dim();
  const std::vector<Target> pool = distinct_targets(targets);
  if (static_cast<int>(pool.size()) < m + 1) {
    throw InsufficientDiversityError(
        "diversity check: need at least M+1 distinct targets (K >= M+1)");
  }
  const Matrix g_rows = encode_g(model, pool);

  std::mt19937_64 rng(seed);
  DiversityReport best;
  best.role = DiversityRole::kLForF;
  best.rank = -1;
  for (int attempt = 0; attempt < std::max(1, attempts); ++attempt) {
    const auto tuples = sample_tuples(static_cast<int>(pool.size()), m, rng);
    const Matrix l = difference_columns(g_rows, tuples);
    const int rank = numerical_rank(l);
    const double cond = condition_number(l);
    const bool ok = rank == m && cond < 1e8;
    if (rank > best.rank || (rank == best.rank && cond < best.condition)) {
      best.rank = rank;
      best.condition = cond;
      best.satisfied = ok;
      best.tuples = tuples;
    }
    if (ok) break;
  }
  return best;
}

RecoveryReport theorem1_recover(const CanonicalModel& model_prime,
                                const CanonicalModel& model_star,
                                const std::vector<Target>& targets,
                                const Matrix& eval_inputs, int attempts,
                                std::uint64_t seed) {
  const int m = model_prime.repr_dim();
  if (model_star.repr_dim() != m) {
    throw std::invalid_argument("theorem1_recover: models must share M");
  }
  const std::vector<Target> pool = distinct_targets(targets);
  if (static_cast<int>(pool.size()) < m + 1) {
    throw InsufficientDiversityError("theorem1_recover: fewer than M+1 distinct targets");
  }
  const Matrix g_prime = encode_g(model_prime, pool);
  const Matrix g_star = encode_g(model_star, pool);

  std::mt19937_64 rng(seed);
  Matrix l_prime, l_star;
  bool found = false;
  for (int attempt = 0; attempt < std::max(1, attempts); ++attempt) {
    const auto tuples = sample_tuples(static_cast<int>(pool.size()), m, rng);
    l_prime = difference_columns(g_prime, tuples);
    l_star = difference_columns(g_star, tuples);
    if (numerical_rank(l_prime) == m && condition_number(l_prime) < 1e8 &&
        numerical_rank(l_star) == m && condition_number(l_star) < 1e8) {
      found = true;
      break;
    }
  }
  if (!found) {
    throw LinalgError(
        "theorem1_recover: L' stayed singular; re-run the diversity check on this model");
  }

  // f'(x) = (L* L'^{-1})^T f*(x)
  const Matrix a = solve(l_prime.transpose(), l_star.transpose()).x;

  RecoveryReport report;
  report.map = a;
  report.condition = condition_number(a);
  const Matrix f_prime = encode_f(model_prime, eval_inputs);
  const Matrix f_star = encode_f(model_star, eval_inputs);
  report.residual =
      (f_prime - f_star * a.transpose()).norm() / std::max(f_prime.norm(), 1.0);
  return report;
}

Vector log_normalizers(const CanonicalModel& model, const Matrix& inputs,
                       const std::vector<Target>& candidates) {
  const Matrix f = encode_f(model, inputs);
  const Matrix g = encode_g(model, candidates);
  const Matrix logits = f * g.transpose();
  Vector z(inputs.rows());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const double maxval = logits.row(i).maxCoeff();
    z(i) = maxval + std::log((logits.row(i).array() - maxval).exp().sum());
  }
  return z;
}

RecoveryReport context_recover(const CanonicalModel& model_prime,
                               const CanonicalModel& model_star,
                               const CandidateBatch& data, int attempts,
                               std::uint64_t seed) {
  const int m = model_prime.repr_dim();
  if (model_star.repr_dim() != m) {
    throw std::invalid_argument("context_recover: models must share M");
  }
  const int n = data.size();
  if (n < m + 1) {
    throw InsufficientDiversityError("context_recover: need at least M+1 (x, S) tuples");
  }

  // tilde-f(x, S) = [-Z(x, S); f(x)] for both models, over all rows.
  const Matrix f_prime = encode_f(model_prime, data.inputs);
  const Matrix f_star = encode_f(model_star, data.inputs);
  const Vector z_prime = log_normalizers(model_prime, data.inputs, data.pool);
  const Vector z_star = log_normalizers(model_star, data.inputs, data.pool);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  Matrix m_prime(m + 1, m + 1), m_star(m + 1, m + 1);
  bool found = false;
  for (int attempt = 0; attempt < std::max(1, attempts); ++attempt) {
    std::set<int> rows;
    while (static_cast<int>(rows.size()) < m + 1) rows.insert(pick(rng));
    int col = 0;
    for (int r : rows) {
      m_prime(0, col) = -z_prime(r);
      m_prime.block(1, col, m, 1) = f_prime.row(r).transpose();
      m_star(0, col) = -z_star(r);
      m_star.block(1, col, m, 1) = f_star.row(r).transpose();
      ++col;
    }
    if (numerical_rank(m_prime) == m + 1 && condition_number(m_prime) < 1e8 &&
        numerical_rank(m_star) == m + 1 && condition_number(m_star) < 1e8) {
      found = true;
      break;
    }
  }
  if (!found) {
    throw LinalgError("context_recover: M' stayed singular across tuple draws");
  }

  // tilde-g'(y) = Atilde tilde-g*(y), Atilde = (M* M'^{-1})^T
  const Matrix atilde = solve(m_prime.transpose(), m_star.transpose()).x;

  const std::vector<Target> pool = distinct_targets(data.pool);
  Matrix g_prime = encode_g(model_prime, pool);
  Matrix g_star = encode_g(model_star, pool);

  // First coordinate of tilde-g is identically 1 on both sides.
  for (Eigen::Index t = 0; t < g_star.rows(); ++t) {
    Vector gt(m + 1);
    gt(0) = 1.0;
    gt.tail(m) = g_star.row(t).transpose();
    const double first = atilde.row(0).dot(gt);
    if (std::abs(first - 1.0) > 1e-6) {
      throw LinalgError("context_recover: first-coordinate consistency violated");
    }
  }

  if (numerical_rank(g_star) < m) {
    throw InsufficientDiversityError(
        "context_recover: g* outputs span fewer than M dimensions");
  }
  const Matrix bt = g_star.colPivHouseholderQr().solve(g_prime);
  RecoveryReport report;
  report.map = bt.transpose();
  report.condition = condition_number(report.map);
  report.residual = (g_star * bt - g_prime).norm() / std::max(g_prime.norm(), 1.0);
  return report;
}

}  // namespace linid
