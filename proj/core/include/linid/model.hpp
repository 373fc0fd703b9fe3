#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "linid/linalg.hpp"

namespace linid {

enum class Activation { kRelu, kTanh, kIdentity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
  Matrix weight;  // fan_out x fan_in
  Vector bias;    // fan_out
};

/// Fully connected network. Hidden layers use the configured activation,
/// the final layer is affine so linear transforms compose exactly.
struct Mlp {
  std::vector<DenseLayer> layers;
  Activation hidden_activation = Activation::kRelu;

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }

  // Rows of x are inputs; rows of the result are outputs.
  Matrix forward(const Matrix& x) const;

  // As forward, but also returns the post-activation output of every
  // hidden layer (needed for layerwise representation comparisons).
  Matrix forward_capture(const Matrix& x, std::vector<Matrix>* hidden) const;

  void validate() const;
};

// Builds an MLP with Gaussian init, std sqrt(2/fan_in), zero biases.
Mlp make_mlp(int input_dim, const std::vector<int>& hidden_dims, int output_dim,
             Activation activation, std::uint64_t seed);

/// Lookup-table context map: row y is g(y), shape K x M.
struct EmbeddingTable {
  Matrix weights;
  int label_count() const { return static_cast<int>(weights.rows()); }
};

/// Marker for the metric-learning variant where g aliases f.
struct SharedWithF {};

using ContextMap = std::variant<Mlp, EmbeddingTable, SharedWithF>;

/// A candidate target: a class/token id for table-style context maps, or a
/// raw input vector for encoder-style ones.
using Target = std::variant<int, Vector>;

bool targets_equal(const Target& a, const Target& b);

/// Minibatch realization of the (x, y, S) data model. The candidate set S
/// is the full pool for every example, matching how every task variant
/// builds its candidates (class alphabet, in-batch distractors, vocab).
struct CandidateBatch {
  Matrix inputs;                   // one example per row
  std::vector<Target> pool;        // the shared candidate set S
  std::vector<int> target_index;   // index into pool, one per example

  int size() const { return static_cast<int>(inputs.rows()); }
  void validate() const;
};

struct CanonicalModel {
  Mlp f;
  ContextMap g;

  int repr_dim() const { return f.output_dim(); }
  void validate() const;
};

// Forward pass through f; rows of x are examples.
Matrix encode_f(const CanonicalModel& model, const Matrix& x);
Vector encode_f(const CanonicalModel& model, const Vector& x);
Matrix encode_f_capture(const CanonicalModel& model, const Matrix& x,
                        std::vector<Matrix>* hidden);

Vector encode_g(const CanonicalModel& model, const Target& y);
// Encodes a whole candidate pool, one row per target.
Matrix encode_g(const CanonicalModel& model, const std::vector<Target>& pool);

// log p(y | x, S) under the softmax inner-product form, computed with
// max-subtracted logsumexp. Throws if y is not a member of S.
double log_prob(const CanonicalModel& model, const Vector& x, const Target& y,
                const std::vector<Target>& candidates);

/// Gradients shaped like the parameters they belong to.
struct LayerGrads {
  Matrix weight;
  Vector bias;
};

struct ModelGrads {
  std::vector<LayerGrads> f;
  std::vector<LayerGrads> g_mlp;  // empty unless g is an MLP
  Matrix g_table;                 // 0x0 unless g is an embedding table
};

struct LossAndGrads {
  double loss = 0.0;
  ModelGrads grads;
};

// Mean negative log-likelihood over the batch and its exact gradients,
// accumulated by reverse mode through f and through every g(y'), y' in S.
LossAndGrads nll_and_grads(const CanonicalModel& model, const CandidateBatch& batch);

// Loss only (used by finite-difference checks).
double nll(const CanonicalModel& model, const CandidateBatch& batch);

// Returns a model whose f is A*f and g is B*g pointwise, realized on the
// final affine layers. A and B must be invertible M x M (condition < 1e12).
// For the shared-g variant A and B must coincide.
CanonicalModel apply_linear_transform(const CanonicalModel& model, const Matrix& a,
                                      const Matrix& b);

// Flat enumeration of every trainable scalar, in declaration order.
// fn(parameter_pointer, count) is invoked once per block.
void for_each_param_block(CanonicalModel& model,
                          const std::function<void(double*, std::ptrdiff_t)>& fn);
void for_each_grad_block(const ModelGrads& grads,
                         const std::function<void(const double*, std::ptrdiff_t)>& fn);
ModelGrads zero_grads_like(const CanonicalModel& model);
std::ptrdiff_t param_count(const CanonicalModel& model);

}  // namespace linid
