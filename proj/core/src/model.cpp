#include "linid/model.hpp"

#include <cmath>
#include <random>

namespace linid {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  throw std::invalid_argument("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation: " + name);
}

namespace {

Matrix apply_activation(Activation act, const Matrix& z) {
  switch (act) {
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kTanh: return z.array().tanh().matrix();
    case Activation::kIdentity: return z;
  }
  throw std::invalid_argument("unknown activation");
}

// Derivative as a function of the pre-activation.
Matrix activation_grad(Activation act, const Matrix& z) {
  switch (act) {
    case Activation::kRelu:
      return (z.array() > 0.0).cast<double>().matrix();
    case Activation::kTanh:
      return (1.0 - z.array().tanh().square()).matrix();
    case Activation::kIdentity:
      return Matrix::Ones(z.rows(), z.cols());
  }
  throw std::invalid_argument("unknown activation");
}

struct ForwardStash {
  std::vector<Matrix> activations;  // a[0] = input, a[k] = layer-k output
  std::vector<Matrix> pre_acts;     // z[k-1] = pre-activation of layer k
};

Matrix forward_stash(const Mlp& mlp, const Matrix& x, ForwardStash* stash) {
  if (x.cols() != mlp.input_dim()) {
    throw std::invalid_argument("mlp forward: input dimension mismatch");
  }
  const std::size_t depth = mlp.layers.size();
  Matrix a = x;
  if (stash) {
    stash->activations.clear();
    stash->pre_acts.clear();
    stash->activations.push_back(a);
  }
  for (std::size_t k = 0; k < depth; ++k) {
    const DenseLayer& layer = mlp.layers[k];
    Matrix z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    a = (k + 1 < depth) ? apply_activation(mlp.hidden_activation, z) : z;
    if (stash) {
      stash->pre_acts.push_back(std::move(z));
      stash->activations.push_back(a);
    }
  }
  return a;
}

// Accumulates gradients for cot (cotangent of the output) into grads.
void backward_accumulate(const Mlp& mlp, const ForwardStash& stash, const Matrix& cot,
                         std::vector<LayerGrads>& grads) {
  const std::size_t depth = mlp.layers.size();
  Matrix delta = cot;
  for (std::size_t k = depth; k-- > 0;) {
    grads[k].weight.noalias() += delta.transpose() * stash.activations[k];
    grads[k].bias += delta.colwise().sum().transpose();
    if (k > 0) {
      Matrix back = delta * mlp.layers[k].weight;
      delta = back.cwiseProduct(activation_grad(mlp.hidden_activation, stash.pre_acts[k - 1]));
    }
  }
}

std::vector<LayerGrads> zero_layer_grads(const Mlp& mlp) {
  std::vector<LayerGrads> grads;
  grads.reserve(mlp.layers.size());
  for (const DenseLayer& layer : mlp.layers) {
    grads.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                     Vector::Zero(layer.bias.size())});
  }
  return grads;
}

}  // namespace

Matrix Mlp::forward(const Matrix& x) const { return forward_stash(*this, x, nullptr); }

Matrix Mlp::forward_capture(const Matrix& x, std::vector<Matrix>* hidden) const {
  ForwardStash stash;
  Matrix out = forward_stash(*this, x, &stash);
  if (hidden) {
    hidden->clear();
    // Post-activation outputs of the hidden layers only.
    for (std::size_t k = 1; k + 1 < stash.activations.size(); ++k) {
      hidden->push_back(stash.activations[k]);
    }
  }
  return out;
}

void Mlp::validate() const {
  if (layers.empty()) throw std::invalid_argument("mlp: needs at least one layer");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].weight.rows() != layers[k].bias.size()) {
      throw std::invalid_argument("mlp: bias/weight fan-out mismatch");
    }
    if (k > 0 && layers[k].weight.cols() != layers[k - 1].weight.rows()) {
      throw std::invalid_argument("mlp: adjacent layer dimensions do not chain");
    }
  }
}

Mlp make_mlp(int input_dim, const std::vector<int>& hidden_dims, int output_dim,
             Activation activation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mlp mlp;
  mlp.hidden_activation = activation;
  int fan_in = input_dim;
  std::vector<int> dims = hidden_dims;
  dims.push_back(output_dim);
  for (int fan_out : dims) {
    DenseLayer layer;
    layer.weight = Matrix::NullaryExpr(
        fan_out, fan_in, [&](Eigen::Index, Eigen::Index) { return normal(rng); });
    layer.weight *= std::sqrt(2.0 / static_cast<double>(fan_in));
    layer.bias = Vector::Zero(fan_out);
    mlp.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  mlp.validate();
  return mlp;
}

bool targets_equal(const Target& a, const Target& b) {
  if (a.index() != b.index()) return false;
  if (std::holds_alternative<int>(a)) {
    return std::get<int>(a) == std::get<int>(b);
  }
  const Vector& va = std::get<Vector>(a);
  const Vector& vb = std::get<Vector>(b);
  return va.size() == vb.size() && va == vb;
}

void CandidateBatch::validate() const {
  if (pool.size() < 2) throw std::invalid_argument("candidate batch: |S| must be >= 2");
  if (static_cast<int>(target_index.size()) != size()) {
    throw std::invalid_argument("candidate batch: one target per input row required");
  }
  for (int idx : target_index) {
    if (idx < 0 || idx >= static_cast<int>(pool.size())) {
      throw std::invalid_argument("candidate batch: target index out of range");
    }
  }
}

void CanonicalModel::validate() const {
  f.validate();
  const int m = repr_dim();
  if (const Mlp* gm = std::get_if<Mlp>(&g)) {
    gm->validate();
    if (gm->output_dim() != m) {
      throw std::invalid_argument("model: f and g must share the representation dimension");
    }
  } else if (const EmbeddingTable* table = std::get_if<EmbeddingTable>(&g)) {
    if (table->weights.cols() != m) {
      throw std::invalid_argument("model: embedding width must equal repr dim");
    }
  }
}

Matrix encode_f(const CanonicalModel& model, const Matrix& x) { return model.f.forward(x); }

Vector encode_f(const CanonicalModel& model, const Vector& x) {
  return model.f.forward(x.transpose()).row(0).transpose();
}

Matrix encode_f_capture(const CanonicalModel& model, const Matrix& x,
                        std::vector<Matrix>* hidden) {
  return model.f.forward_capture(x, hidden);
}

Vector encode_g(const CanonicalModel& model, const Target& y) {
  if (const EmbeddingTable* table = std::get_if<EmbeddingTable>(&model.g)) {
    const int* id = std::get_if<int>(&y);
    if (!id) throw std::invalid_argument("encode_g: embedding table needs an integer label");
    if (*id < 0 || *id >= table->label_count()) {
      throw std::out_of_range("encode_g: unknown label for embedding table");
    }
    return table->weights.row(*id).transpose();
  }
  const Vector* payload = std::get_if<Vector>(&y);
  if (!payload) throw std::invalid_argument("encode_g: encoder context map needs a vector target");
  if (std::holds_alternative<SharedWithF>(model.g)) {
    return encode_f(model, *payload);
  }
  const Mlp& gm = std::get<Mlp>(model.g);
  return gm.forward(payload->transpose()).row(0).transpose();
}

Matrix encode_g(const CanonicalModel& model, const std::vector<Target>& pool) {
  Matrix out(pool.size(), model.repr_dim());
  if (const EmbeddingTable* table = std::get_if<EmbeddingTable>(&model.g)) {
    for (std::size_t p = 0; p < pool.size(); ++p) {
      const int id = std::get<int>(pool[p]);
      if (id < 0 || id >= table->label_count()) {
        throw std::out_of_range("encode_g: unknown label for embedding table");
      }
      out.row(p) = table->weights.row(id);
    }
    return out;
  }
  const Mlp& net = std::holds_alternative<SharedWithF>(model.g) ? model.f : std::get<Mlp>(model.g);
  Matrix stacked(pool.size(), net.input_dim());
  for (std::size_t p = 0; p < pool.size(); ++p) {
    stacked.row(p) = std::get<Vector>(pool[p]).transpose();
  }
  return net.forward(stacked);
}

double log_prob(const CanonicalModel& model, const Vector& x, const Target& y,
                const std::vector<Target>& candidates) {
  int member = -1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (targets_equal(candidates[i], y)) {
      member = static_cast<int>(i);
      break;
    }
  }
  if (member < 0) throw std::invalid_argument("log_prob: target is not in the candidate set");
  const Vector fx = encode_f(model, x);
  const Matrix g = encode_g(model, candidates);
  const Vector logits = g * fx;
  const double maxval = logits.maxCoeff();
  const double lse = maxval + std::log((logits.array() - maxval).exp().sum());
  return logits(member) - lse;
}

double nll(const CanonicalModel& model, const CandidateBatch& batch) {
  batch.validate();
  const Matrix f = encode_f(model, batch.inputs);
  const Matrix g = encode_g(model, batch.pool);
  const Matrix logits = f * g.transpose();
  double loss = 0.0;
  for (int i = 0; i < batch.size(); ++i) {
    const double maxval = logits.row(i).maxCoeff();
    const double lse = maxval + std::log((logits.row(i).array() - maxval).exp().sum());
    loss += lse - logits(i, batch.target_index[i]);
  }
  return loss / batch.size();
}

LossAndGrads nll_and_grads(const CanonicalModel& model, const CandidateBatch& batch) {
  batch.validate();
  const int n = batch.size();
  const int pool_size = static_cast<int>(batch.pool.size());

  ForwardStash f_stash;
  const Matrix f = forward_stash(model.f, batch.inputs, &f_stash);

  // Pool-side forward, stashed when g is an encoder network.
  ForwardStash g_stash;
  Matrix g;
  const Mlp* g_net = nullptr;
  if (std::holds_alternative<EmbeddingTable>(model.g)) {
    g = encode_g(model, batch.pool);
  } else {
    g_net = std::holds_alternative<SharedWithF>(model.g) ? &model.f : &std::get<Mlp>(model.g);
    Matrix stacked(pool_size, g_net->input_dim());
    for (int p = 0; p < pool_size; ++p) {
      stacked.row(p) = std::get<Vector>(batch.pool[p]).transpose();
    }
    g = forward_stash(*g_net, stacked, &g_stash);
  }

  Matrix logits = f * g.transpose();
  double loss = 0.0;
  Matrix dlogits(n, pool_size);
  for (int i = 0; i < n; ++i) {
    const double maxval = logits.row(i).maxCoeff();
    const Eigen::ArrayXd shifted = (logits.row(i).array() - maxval).exp();
    const double denom = shifted.sum();
    loss += maxval + std::log(denom) - logits(i, batch.target_index[i]);
    dlogits.row(i) = (shifted / denom).matrix().transpose();
    dlogits(i, batch.target_index[i]) -= 1.0;
  }
  loss /= n;
  dlogits /= static_cast<double>(n);

  const Matrix df = dlogits * g;
  const Matrix dg = dlogits.transpose() * f;

  LossAndGrads result;
  result.loss = loss;
  result.grads = zero_grads_like(model);
  backward_accumulate(model.f, f_stash, df, result.grads.f);

  if (const EmbeddingTable* table = std::get_if<EmbeddingTable>(&model.g)) {
    for (int p = 0; p < pool_size; ++p) {
      result.grads.g_table.row(std::get<int>(batch.pool[p])) += dg.row(p);
    }
    (void)table;
  } else if (std::holds_alternative<SharedWithF>(model.g)) {
    backward_accumulate(model.f, g_stash, dg, result.grads.f);
  } else {
    backward_accumulate(std::get<Mlp>(model.g), g_stash, dg, result.grads.g_mlp);
  }
  return result;
}

CanonicalModel apply_linear_transform(const CanonicalModel& model, const Matrix& a,
                                      const Matrix& b) {
  const int m = model.repr_dim();
  if (a.rows() != m || a.cols() != m || b.rows() != m || b.cols() != m) {
    throw std::invalid_argument("apply_linear_transform: transforms must be M x M");
  }
  if (!(condition_number(a) < 1e12) || !(condition_number(b) < 1e12)) {
    throw LinalgError("apply_linear_transform: transform is numerically singular");
  }
  CanonicalModel out = model;
  DenseLayer& last = out.f.layers.back();
  last.weight = a * last.weight;
  last.bias = a * last.bias;
  if (EmbeddingTable* table = std::get_if<EmbeddingTable>(&out.g)) {
    table->weights = table->weights * b.transpose();
  } else if (Mlp* gm = std::get_if<Mlp>(&out.g)) {
    DenseLayer& glast = gm->layers.back();
    glast.weight = b * glast.weight;
    glast.bias = b * glast.bias;
  } else {
    // g aliases f: only a single transform exists.
    if ((a - b).cwiseAbs().maxCoeff() > 0.0) {
      throw std::invalid_argument(
          "apply_linear_transform: shared f/g admits only identical A and B");
    }
  }
  return out;
}

ModelGrads zero_grads_like(const CanonicalModel& model) {
  ModelGrads grads;
  grads.f = zero_layer_grads(model.f);
  if (const Mlp* gm = std::get_if<Mlp>(&model.g)) {
    grads.g_mlp = zero_layer_grads(*gm);
  } else if (const EmbeddingTable* table = std::get_if<EmbeddingTable>(&model.g)) {
    grads.g_table = Matrix::Zero(table->weights.rows(), table->weights.cols());
  }
  return grads;
}

void for_each_param_block(CanonicalModel& model,
                          const std::function<void(double*, std::ptrdiff_t)>& fn) {
  for (DenseLayer& layer : model.f.layers) {
    fn(layer.weight.data(), layer.weight.size());
    fn(layer.bias.data(), layer.bias.size());
  }
  if (Mlp* gm = std::get_if<Mlp>(&model.g)) {
    for (DenseLayer& layer : gm->layers) {
      fn(layer.weight.data(), layer.weight.size());
      fn(layer.bias.data(), layer.bias.size());
    }
  } else if (EmbeddingTable* table = std::get_if<EmbeddingTable>(&model.g)) {
    fn(table->weights.data(), table->weights.size());
  }
}

void for_each_grad_block(const ModelGrads& grads,
                         const std::function<void(const double*, std::ptrdiff_t)>& fn) {
  for (const LayerGrads& layer : grads.f) {
    fn(layer.weight.data(), layer.weight.size());
    fn(layer.bias.data(), layer.bias.size());
  }
  for (const LayerGrads& layer : grads.g_mlp) {
    fn(layer.weight.data(), layer.weight.size());
    fn(layer.bias.data(), layer.bias.size());
  }
  if (grads.g_table.size() > 0) {
    fn(grads.g_table.data(), grads.g_table.size());
  }
}

std::ptrdiff_t param_count(const CanonicalModel& model) {
  std::ptrdiff_t total = 0;
  for_each_param_block(const_cast<CanonicalModel&>(model),
                       [&](double*, std::ptrdiff_t n) { total += n; });
  return total;
}

}  // namespace linid
