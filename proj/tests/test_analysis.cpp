#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "linid/analysis.hpp"
#include "linid/model.hpp"

using namespace linid;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  return Matrix::NullaryExpr(rows, cols,
                             [&](Eigen::Index, Eigen::Index) { return normal(rng); });
}

Matrix random_invertible(int n, std::uint64_t seed) {
  return random_matrix(n, n, seed) + n * Matrix::Identity(n, n);
}

ReprDump dump(Matrix m) { return ReprDump{std::move(m), {}}; }

CanonicalModel table_model(int input, int m, int labels, std::uint64_t seed) {
  CanonicalModel model;
  model.f = make_mlp(input, {8, 8}, m, Activation::kTanh, seed);
  model.g = EmbeddingTable{random_matrix(labels, m, seed + 1)};
  return model;
}

std::vector<Target> label_pool(int labels) {
  std::vector<Target> pool;
  for (int k = 0; k < labels; ++k) pool.emplace_back(k);
  return pool;
}

}  // namespace

TEST_CASE("pca with k = M is an isometry on centered data") {
  const Matrix x = random_matrix(40, 3, 1);
  const PcaResult result = pca_project(dump(x), 3);
  // Pairwise distances preserved by the orthonormal change of basis.
  for (int i = 0; i < 10; ++i) {
    for (int j = i + 1; j < 10; ++j) {
      const double before = (x.row(i) - x.row(j)).norm();
      const double after = (result.projected.row(i) - result.projected.row(j)).norm();
      CHECK(before == doctest::Approx(after).epsilon(1e-10));
    }
  }
  CHECK(result.explained_variance.sum() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("planar data explains everything in two components") {
  const Matrix basis = random_matrix(2, 5, 2);
  const Matrix x = random_matrix(60, 2, 3) * basis;  // exactly rank 2
  const PcaResult result = pca_project(dump(x), 2);
  CHECK(result.explained_variance.sum() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("explained variance matches the singular spectrum") {
  const Matrix x = random_matrix(50, 4, 4);
  const auto [centered, means] = center_columns(x);
  const SvdResult decomposition = svd(centered);
  const Vector s2 = decomposition.singular_values.array().square();
  const PcaResult result = pca_project(dump(x), 2);
  CHECK(result.explained_variance(0) ==
        doctest::Approx(s2(0) / s2.sum()).epsilon(1e-10));
  CHECK(result.explained_variance(1) ==
        doctest::Approx(s2(1) / s2.sum()).epsilon(1e-10));
}

TEST_CASE("pca rejects out-of-range k") {
  const Matrix x = random_matrix(20, 3, 5);
  CHECK_THROWS(pca_project(dump(x), 0));
  CHECK_THROWS(pca_project(dump(x), 4));
}

TEST_CASE("cca of identical inputs is one") {
  const Matrix x = random_matrix(200, 3, 6);
  const CcaReport report = cca(dump(x), dump(x));
  for (Eigen::Index i = 0; i < report.correlations.size(); ++i) {
    CHECK(report.correlations(i) == doctest::Approx(1.0).epsilon(1e-8));
  }
  CHECK(report.mean_rho == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("cca is invariant under invertible linear maps") {
  const Matrix x = random_matrix(300, 3, 7);
  const Matrix a = random_invertible(3, 8);
  const CcaReport report = cca(dump(x), dump(x * a.transpose()));
  CHECK(report.mean_rho == doctest::Approx(1.0).epsilon(1e-6));

  const Matrix y = random_matrix(300, 3, 9);
  const CcaReport base = cca(dump(x), dump(y));
  const CcaReport moved = cca(dump(x * a.transpose()), dump(y));
  CHECK(base.mean_rho == doctest::Approx(moved.mean_rho).epsilon(1e-6));
}

TEST_CASE("independent Gaussians decorrelate at n = 10000") {
  const CcaReport report =
      cca(dump(random_matrix(10000, 2, 10)), dump(random_matrix(10000, 2, 11)));
  CHECK(report.mean_rho < 0.05);
}

TEST_CASE("correlations are clamped into [0, 1] and sorted") {
  const Matrix x = random_matrix(100, 4, 12);
  const CcaReport report = cca(dump(x), dump(random_matrix(100, 4, 13)));
  for (Eigen::Index i = 0; i < report.correlations.size(); ++i) {
    CHECK(report.correlations(i) >= 0.0);
    CHECK(report.correlations(i) <= 1.0);
    if (i > 0) CHECK(report.correlations(i) <= report.correlations(i - 1));
  }
}

TEST_CASE("cca rejects mismatched row counts and degenerate data") {
  CHECK_THROWS(cca(dump(random_matrix(10, 2, 14)), dump(random_matrix(11, 2, 15))));
  CHECK_THROWS_AS(cca(dump(Matrix::Zero(30, 2)), dump(random_matrix(30, 2, 16))),
                  RankDeficiencyError);
}

TEST_CASE("svcca with k = M equals plain cca") {
  const Matrix x = random_matrix(120, 3, 17);
  const Matrix y = random_matrix(120, 3, 18);
  const CcaReport full = cca(dump(x), dump(y));
  const CcaReport truncated = svcca(dump(x), dump(y), 3);
  CHECK(full.mean_rho == doctest::Approx(truncated.mean_rho).epsilon(1e-8));
}

TEST_CASE("svcca is symmetric") {
  const Matrix x = random_matrix(150, 4, 19);
  const Matrix y = random_matrix(150, 4, 20);
  CHECK(svcca(dump(x), dump(y), 2).mean_rho ==
        doctest::Approx(svcca(dump(y), dump(x), 2).mean_rho).epsilon(1e-8));
}

TEST_CASE("svcca k=1 isolates a shared signal from tiny noise dims") {
  const Vector signal = random_matrix(500, 1, 21);
  Matrix x(500, 3), y(500, 3);
  x.col(0) = signal;
  x.rightCols(2) = 1e-6 * random_matrix(500, 2, 22);
  y.col(0) = signal;
  y.rightCols(2) = 1e-6 * random_matrix(500, 2, 23);
  const CcaReport report = svcca(dump(x), dump(y), 1);
  CHECK(report.mean_rho == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("fit_linear_map on identical data returns the identity") {
  const Matrix x = random_matrix(80, 3, 24);
  const RecoveryReport report = fit_linear_map(dump(x), dump(x));
  CHECK((report.map - Matrix::Identity(3, 3)).norm() < 1e-10);
  CHECK(report.residual < 1e-10);
}

TEST_CASE("fit_linear_map recovers an exact transform") {
  const Matrix x = random_matrix(80, 3, 25);
  const Matrix a0 = random_invertible(3, 26);
  const RecoveryReport report = fit_linear_map(dump(x), dump(x * a0.transpose()));
  CHECK((report.map - a0).norm() / a0.norm() < 1e-8);
  CHECK(report.residual < 1e-10);
}

TEST_CASE("fit_linear_map reports noise at the noise scale") {
  const Matrix x = random_matrix(400, 3, 27);
  const Matrix a0 = random_invertible(3, 28);
  const Matrix y = x * a0.transpose() + 0.01 * random_matrix(400, 3, 29);
  const RecoveryReport report = fit_linear_map(dump(x), dump(y));
  CHECK(report.residual > 1e-5);
  CHECK(report.residual < 0.05);
  CHECK((report.map - a0).norm() / a0.norm() < 0.05);
}

TEST_CASE("fit_linear_map rejects rank-deficient x") {
  Matrix x = random_matrix(50, 3, 30);
  x.col(2) = x.col(0);  // collinear
  CHECK_THROWS_AS(fit_linear_map(dump(x), dump(random_matrix(50, 3, 31))),
                  RankDeficiencyError);
}

TEST_CASE("diversity holds for a random table with K = M + 1") {
  CanonicalModel model = table_model(3, 3, 4, 32);
  const DiversityReport report = diversity_check_f(model, label_pool(4), 50);
  CHECK(report.satisfied);
  CHECK(report.rank == 3);
  CHECK(report.tuples.size() == 3);
}

TEST_CASE("diversity fails for K <= M") {
  CanonicalModel model = table_model(3, 3, 3, 33);
  CHECK_THROWS_AS(
      static_cast<void>(diversity_check_f(model, label_pool(3), 50)),
      InsufficientDiversityError);
}

TEST_CASE("constant g reports rank zero") {
  CanonicalModel model = table_model(3, 3, 6, 34);
  std::get<EmbeddingTable>(model.g).weights =
      Matrix::Ones(6, 1) * random_matrix(1, 3, 35);
  const DiversityReport report = diversity_check_f(model, label_pool(6), 50);
  CHECK(report.rank == 0);
  CHECK_FALSE(report.satisfied);
}

TEST_CASE("explicit basis differences give a full-rank verdict") {
  // Rows e_1 .. e_M plus a zero row: differences to the zero row span R^M.
  const int m = 4;
  CanonicalModel model;
  model.f = make_mlp(2, {}, m, Activation::kIdentity, 36);
  Matrix w = Matrix::Zero(m + 1, m);
  w.topRows(m) = Matrix::Identity(m, m);
  model.g = EmbeddingTable{w};
  const DiversityReport report = diversity_check_f(model, label_pool(m + 1), 200);
  CHECK(report.satisfied);
}

TEST_CASE("diversity verdict ignores tuple-set ordering") {
  CanonicalModel model = table_model(3, 3, 8, 37);
  std::vector<Target> pool = label_pool(8);
  const bool forward = diversity_check_f(model, pool, 50).satisfied;
  std::reverse(pool.begin(), pool.end());
  CHECK(diversity_check_f(model, pool, 50).satisfied == forward);
}

TEST_CASE("theorem1 recovery is exact on constructed transforms") {
  CanonicalModel star = table_model(4, 3, 8, 38);
  const Matrix a0 = random_invertible(3, 39);
  const CanonicalModel prime =
      apply_linear_transform(star, a0, a0.inverse().transpose());
  const Matrix eval = random_matrix(100, 4, 40);
  const RecoveryReport report = theorem1_recover(prime, star, label_pool(8), eval);
  CHECK((report.map - a0).norm() / a0.norm() < 1e-6);
  CHECK(report.residual < 1e-8);
}

TEST_CASE("theorem1 recovery of a model against itself is the identity") {
  CanonicalModel model = table_model(4, 3, 8, 41);
  const RecoveryReport report =
      theorem1_recover(model, model, label_pool(8), random_matrix(60, 4, 42));
  CHECK((report.map - Matrix::Identity(3, 3)).norm() < 1e-8);
}

TEST_CASE("theorem1 recovery composes transitively") {
  CanonicalModel m1 = table_model(4, 3, 8, 43);
  const Matrix a = random_invertible(3, 44);
  const Matrix c = random_invertible(3, 45);
  const CanonicalModel m2 = apply_linear_transform(m1, a, a.inverse().transpose());
  const CanonicalModel m3 = apply_linear_transform(m2, c, c.inverse().transpose());
  const Matrix eval = random_matrix(80, 4, 46);
  const Matrix a12 = theorem1_recover(m2, m1, label_pool(8), eval).map;
  const Matrix a23 = theorem1_recover(m3, m2, label_pool(8), eval).map;
  const Matrix a13 = theorem1_recover(m3, m1, label_pool(8), eval).map;
  CHECK((a23 * a12 - a13).norm() / a13.norm() < 1e-5);
}

TEST_CASE("fit_linear_map and theorem1 agree on exact fixtures") {
  CanonicalModel star = table_model(4, 3, 8, 47);
  const Matrix a0 = random_invertible(3, 48);
  const CanonicalModel prime =
      apply_linear_transform(star, a0, a0.inverse().transpose());
  const Matrix eval = random_matrix(120, 4, 49);
  const Matrix via_theorem = theorem1_recover(prime, star, label_pool(8), eval).map;
  const Matrix via_fit =
      fit_linear_map(dump(encode_f(star, eval)), dump(encode_f(prime, eval))).map;
  CHECK((via_theorem - via_fit).norm() / via_theorem.norm() < 1e-5);
}

TEST_CASE("context recovery is exact on constructed transforms") {
  CanonicalModel star = table_model(4, 3, 8, 50);
  const Matrix a0 = random_invertible(3, 51);
  const Matrix b0 = a0.inverse().transpose();
  const CanonicalModel prime = apply_linear_transform(star, a0, b0);

  CandidateBatch batch;
  batch.inputs = random_matrix(40, 4, 52);
  for (int k = 0; k < 8; ++k) batch.pool.emplace_back(k);
  batch.target_index.assign(40, 0);

  const RecoveryReport report = context_recover(prime, star, batch);
  CHECK((report.map - b0).norm() / b0.norm() < 1e-6);
}

TEST_CASE("context recovery of a model against itself is the identity") {
  CanonicalModel model = table_model(4, 3, 8, 53);
  CandidateBatch batch;
  batch.inputs = random_matrix(30, 4, 54);
  for (int k = 0; k < 8; ++k) batch.pool.emplace_back(k);
  batch.target_index.assign(30, 0);
  const RecoveryReport report = context_recover(model, model, batch);
  CHECK((report.map - Matrix::Identity(3, 3)).norm() < 1e-8);
}

TEST_CASE("context recovery surfaces degenerate g") {
  CanonicalModel model = table_model(4, 3, 8, 55);
  std::get<EmbeddingTable>(model.g).weights =
      Matrix::Ones(8, 1) * random_matrix(1, 3, 56);
  CandidateBatch batch;
  batch.inputs = random_matrix(30, 4, 57);
  for (int k = 0; k < 8; ++k) batch.pool.emplace_back(k);
  batch.target_index.assign(30, 0);
  CHECK_THROWS_AS(static_cast<void>(context_recover(model, model, batch)),
                  InsufficientDiversityError);
}

TEST_CASE("log normalizers match a direct logsumexp") {
  CanonicalModel model = table_model(3, 2, 5, 58);
  const Matrix inputs = random_matrix(12, 3, 59);
  std::vector<Target> pool = label_pool(5);
  const Vector z = log_normalizers(model, inputs, pool);
  const Matrix f = encode_f(model, inputs);
  const Matrix& table = std::get<EmbeddingTable>(model.g).weights;
  for (int i = 0; i < 12; ++i) {
    double total = 0.0;
    for (int k = 0; k < 5; ++k) total += std::exp(f.row(i).dot(table.row(k)));
    CHECK(z(i) == doctest::Approx(std::log(total)).epsilon(1e-10));
  }
}
