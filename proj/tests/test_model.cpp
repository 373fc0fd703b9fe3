#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

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

CanonicalModel table_model(int input, std::vector<int> hidden, int m, int labels,
                           std::uint64_t seed) {
  CanonicalModel model;
  model.f = make_mlp(input, hidden, m, Activation::kTanh, seed);
  model.g = EmbeddingTable{random_matrix(labels, m, seed + 1)};
  return model;
}

CandidateBatch label_batch(const CanonicalModel& model, int n, int labels,
                           std::uint64_t seed) {
  CandidateBatch batch;
  batch.inputs = random_matrix(n, model.f.input_dim(), seed);
  for (int k = 0; k < labels; ++k) batch.pool.emplace_back(k);
  std::mt19937_64 rng(seed + 1);
  std::uniform_int_distribution<int> pick(0, labels - 1);
  for (int i = 0; i < n; ++i) batch.target_index.push_back(pick(rng));
  return batch;
}

}  // namespace

TEST_CASE("zero-weight network maps everything to zero") {
  Mlp net;
  net.layers.push_back({Matrix::Zero(3, 2), Vector::Zero(3)});
  net.layers.push_back({Matrix::Zero(2, 3), Vector::Zero(2)});
  const Matrix out = net.forward(random_matrix(5, 2, 1));
  CHECK(out.norm() == doctest::Approx(0.0));
}

TEST_CASE("single affine layer computes Wx + b") {
  Mlp net;
  Matrix w(2, 2);
  w << 1.0, 2.0, 3.0, 4.0;
  Vector b(2);
  b << 0.5, -0.5;
  net.layers.push_back({w, b});
  Matrix x(1, 2);
  x << 1.0, -1.0;
  const Matrix out = net.forward(x);
  CHECK(out(0, 0) == doctest::Approx(1.0 - 2.0 + 0.5));
  CHECK(out(0, 1) == doctest::Approx(3.0 - 4.0 - 0.5));
}

TEST_CASE("two-layer relu forward matches hand arithmetic") {
  Mlp net;
  net.hidden_activation = Activation::kRelu;
  Matrix w1(2, 2);
  w1 << 1.0, 2.0, -3.0, 4.0;
  Vector b1(2);
  b1 << 0.5, -1.0;
  Matrix w2(1, 2);
  w2 << 1.0, -1.0;
  Vector b2(1);
  b2 << 0.25;
  net.layers.push_back({w1, b1});
  net.layers.push_back({w2, b2});
  Matrix x(1, 2);
  x << 1.0, 0.0;
  // z1 = (1*1+0.5, -3*1-1) = (1.5, -4); relu -> (1.5, 0); out = 1.5 - 0 + 0.25
  CHECK(net.forward(x)(0, 0) == doctest::Approx(1.75));
}

TEST_CASE("forward_capture returns every hidden activation") {
  const Mlp net = make_mlp(3, {4, 5}, 2, Activation::kRelu, 9);
  std::vector<Matrix> hidden;
  const Matrix out = net.forward_capture(random_matrix(6, 3, 10), &hidden);
  REQUIRE(hidden.size() == 2);
  CHECK(hidden[0].cols() == 4);
  CHECK(hidden[1].cols() == 5);
  CHECK(out.cols() == 2);
}

TEST_CASE("embedding table lookup returns rows") {
  CanonicalModel model;
  model.f = make_mlp(3, {}, 3, Activation::kIdentity, 1);
  model.g = EmbeddingTable{Matrix::Identity(4, 3).eval()};
  const Vector g2 = encode_g(model, Target{2});
  CHECK(g2(2) == doctest::Approx(1.0));
  CHECK(g2.sum() == doctest::Approx(1.0));
  CHECK_THROWS(encode_g(model, Target{7}));
}

TEST_CASE("shared-with-f context map aliases the encoder") {
  CanonicalModel model;
  model.f = make_mlp(3, {4}, 2, Activation::kTanh, 2);
  model.g = SharedWithF{};
  const Vector x = random_matrix(3, 1, 3);
  CHECK((encode_g(model, Target{x}) - encode_f(model, x)).norm() < 1e-15);
}

TEST_CASE("log_prob is uniform when f(x) is zero") {
  CanonicalModel model;
  model.f.layers.push_back({Matrix::Zero(3, 2), Vector::Zero(3)});
  model.g = EmbeddingTable{random_matrix(5, 3, 4)};
  std::vector<Target> pool;
  for (int k = 0; k < 5; ++k) pool.emplace_back(k);
  const Vector x = random_matrix(2, 1, 5);
  for (int k = 0; k < 5; ++k) {
    CHECK(log_prob(model, x, Target{k}, pool) == doctest::Approx(-std::log(5.0)));
  }
}

TEST_CASE("log_prob matches the frozen two-candidate value") {
  CanonicalModel model;
  model.f.layers.push_back({Matrix::Identity(2, 2).eval(), Vector::Zero(2)});
  Matrix w(2, 2);
  w << 1.0, 0.0, 0.0, 1.0;
  model.g = EmbeddingTable{w};
  Vector x(2);
  x << 1.0, 0.0;
  const std::vector<Target> pool = {Target{0}, Target{1}};
  const double expected = 1.0 - std::log(std::exp(1.0) + 1.0);  // ~ -0.31326168751822286
  CHECK(log_prob(model, x, Target{0}, pool) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log_prob rejects a target outside the candidate set") {
  CanonicalModel model = table_model(2, {}, 2, 3, 6);
  const std::vector<Target> pool = {Target{0}, Target{1}};
  CHECK_THROWS(log_prob(model, Vector::Zero(2), Target{2}, pool));
}

TEST_CASE("probabilities normalize over the candidate set") {
  CanonicalModel model = table_model(3, {5}, 2, 6, 7);
  std::vector<Target> pool;
  for (int k = 0; k < 6; ++k) pool.emplace_back(k);
  const Vector x = random_matrix(3, 1, 8);
  double total = 0.0;
  for (int k = 0; k < 6; ++k) total += std::exp(log_prob(model, x, Target{k}, pool));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("log_prob is invariant to a constant shift of g") {
  CanonicalModel model = table_model(3, {4}, 2, 5, 9);
  CanonicalModel shifted = model;
  const Vector c = random_matrix(2, 1, 10);
  std::get<EmbeddingTable>(shifted.g).weights.rowwise() += c.transpose();
  std::vector<Target> pool;
  for (int k = 0; k < 5; ++k) pool.emplace_back(k);
  const Vector x = random_matrix(3, 1, 11);
  for (int k = 0; k < 5; ++k) {
    CHECK(std::abs(log_prob(model, x, Target{k}, pool) -
                   log_prob(shifted, x, Target{k}, pool)) < 1e-12);
  }
}

TEST_CASE("nll is log |S| for the zero-parameter model") {
  CanonicalModel model;
  model.f.layers.push_back({Matrix::Zero(2, 3), Vector::Zero(2)});
  model.g = EmbeddingTable{Matrix::Zero(4, 2).eval()};
  CandidateBatch batch = label_batch(model, 8, 4, 12);
  const LossAndGrads result = nll_and_grads(model, batch);
  CHECK(result.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("final-bias gradient matches the softmax residual formula") {
  // Zero f keeps the forward path trivial while the table is random, so
  // dL/db_f = mean_i sum_y (p_y - 1[y = y_i]) g(y) has a closed form.
  CanonicalModel model;
  model.f.layers.push_back({Matrix::Zero(2, 3), Vector::Zero(2)});
  model.g = EmbeddingTable{random_matrix(4, 2, 13)};
  CandidateBatch batch = label_batch(model, 6, 4, 14);

  const Matrix& table = std::get<EmbeddingTable>(model.g).weights;
  Vector expected = Vector::Zero(2);
  const int n = batch.size();
  for (int i = 0; i < n; ++i) {
    // f = 0 so every logit is zero and p is uniform.
    for (int y = 0; y < 4; ++y) {
      const double residual = 0.25 - (y == batch.target_index[i] ? 1.0 : 0.0);
      expected += residual * table.row(y).transpose();
    }
  }
  expected /= n;

  const LossAndGrads result = nll_and_grads(model, batch);
  CHECK((result.grads.f.back().bias - expected).norm() < 1e-12);
}

TEST_CASE("duplicating the batch leaves loss and gradients unchanged") {
  CanonicalModel model = table_model(3, {4}, 2, 5, 15);
  CandidateBatch batch = label_batch(model, 5, 5, 16);
  CandidateBatch doubled = batch;
  doubled.inputs.conservativeResize(10, Eigen::NoChange);
  doubled.inputs.bottomRows(5) = batch.inputs;
  for (int i = 0; i < 5; ++i) doubled.target_index.push_back(batch.target_index[i]);

  const LossAndGrads a = nll_and_grads(model, batch);
  const LossAndGrads b = nll_and_grads(model, doubled);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  CHECK((a.grads.f.back().weight - b.grads.f.back().weight).norm() < 1e-12);
  CHECK((a.grads.g_table - b.grads.g_table).norm() < 1e-12);
}

TEST_CASE("apply_linear_transform identity leaves outputs unchanged") {
  CanonicalModel model = table_model(3, {4}, 2, 5, 17);
  const CanonicalModel same =
      apply_linear_transform(model, Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  const Matrix x = random_matrix(6, 3, 18);
  CHECK((encode_f(model, x) - encode_f(same, x)).norm() < 1e-14);
}

TEST_CASE("apply_linear_transform scales encode_f exactly") {
  CanonicalModel model = table_model(3, {4}, 2, 5, 19);
  const Matrix a = 2.0 * Matrix::Identity(2, 2);
  const CanonicalModel doubled = apply_linear_transform(model, a, a);
  const Matrix x = random_matrix(6, 3, 20);
  CHECK((encode_f(doubled, x) - 2.0 * encode_f(model, x)).norm() < 1e-12);
}

TEST_CASE("the (A, A^-T) transform preserves log_prob") {
  CanonicalModel model = table_model(3, {4, 4}, 2, 6, 21);
  const Matrix a = random_invertible(2, 22);
  const CanonicalModel moved =
      apply_linear_transform(model, a, a.inverse().transpose());
  std::vector<Target> pool;
  for (int k = 0; k < 6; ++k) pool.emplace_back(k);
  for (int t = 0; t < 25; ++t) {
    const Vector x = random_matrix(3, 1, 100 + t);
    for (int k = 0; k < 6; ++k) {
      CHECK(std::abs(log_prob(model, x, Target{k}, pool) -
                     log_prob(moved, x, Target{k}, pool)) < 1e-10);
    }
  }
}

TEST_CASE("apply_linear_transform rejects singular maps") {
  CanonicalModel model = table_model(2, {}, 2, 3, 23);
  const Matrix singular = Matrix::Zero(2, 2);
  CHECK_THROWS(apply_linear_transform(model, singular, Matrix::Identity(2, 2)));
}

TEST_CASE("param blocks enumerate every trainable scalar once") {
  CanonicalModel model = table_model(3, {4}, 2, 5, 24);
  std::ptrdiff_t seen = 0;
  for_each_param_block(model, [&](double*, std::ptrdiff_t n) { seen += n; });
  // f: 4x3 + 4 + 2x4 + 2, g table: 5x2
  CHECK(seen == 12 + 4 + 8 + 2 + 10);
  CHECK(seen == param_count(model));
}
