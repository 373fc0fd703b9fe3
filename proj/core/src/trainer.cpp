#include "linid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace linid {

std::string task_name(Task task) {
  switch (task) {
    case Task::kSupervised: return "supervised";
    case Task::kContrastive: return "contrastive";
    case Task::kNextToken: return "next_token";
    case Task::kNpair: return "npair";
  }
  throw std::invalid_argument("unknown task");
}

Task task_from_name(const std::string& name) {
  if (name == "supervised") return Task::kSupervised;
  if (name == "contrastive") return Task::kContrastive;
  if (name == "next_token") return Task::kNextToken;
  if (name == "npair") return Task::kNpair;
  throw std::invalid_argument("unknown task: " + name);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate must be > 0");
  if (max_iters < 1) throw std::invalid_argument("config: max_iters must be >= 1");
  if ((task == Task::kContrastive || task == Task::kNpair) && batch_size < 2) {
    throw std::invalid_argument("config: contrastive/npair need batch_size >= 2");
  }
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (eval_interval < 1) throw std::invalid_argument("config: eval_interval must be >= 1");
}

AdamState make_adam_state(const CanonicalModel& model) {
  AdamState state;
  for_each_param_block(const_cast<CanonicalModel&>(model),
                       [&](double*, std::ptrdiff_t n) {
                         state.first_moment.push_back(Vector::Zero(n));
                         state.second_moment.push_back(Vector::Zero(n));
                       });
  return state;
}

void adam_step(CanonicalModel& params, const ModelGrads& grads, AdamState& state,
               const TrainConfig& config) {
  // Gather grad blocks in the same order the parameter walk uses.
  std::vector<std::pair<const double*, std::ptrdiff_t>> grad_blocks;
  for_each_grad_block(grads, [&](const double* g, std::ptrdiff_t n) {
    grad_blocks.emplace_back(g, n);
  });

  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, state.step);
  const double bc2 = 1.0 - std::pow(config.beta2, state.step);

  std::size_t block = 0;
  for_each_param_block(params, [&](double* p, std::ptrdiff_t n) {
    if (block >= grad_blocks.size() || grad_blocks[block].second != n) {
      throw std::invalid_argument("adam_step: gradient shapes do not mirror parameters");
    }
    Eigen::Map<Vector> pv(p, n);
    Eigen::Map<const Vector> gv(grad_blocks[block].first, n);
    Vector& m = state.first_moment[block];
    Vector& v = state.second_moment[block];
    m = config.beta1 * m + (1.0 - config.beta1) * gv;
    v = config.beta2 * v + (1.0 - config.beta2) * gv.cwiseProduct(gv);
    const Vector mhat = m / bc1;
    const Vector vhat = v / bc2;
    pv -= config.learning_rate *
          mhat.cwiseQuotient((vhat.cwiseSqrt().array() + config.epsilon).matrix());
    ++block;
  });
  if (block != grad_blocks.size()) {
    throw std::invalid_argument("adam_step: block count mismatch");
  }
}

Vector encode_context(const TokenCorpus& corpus, int position) {
  const int cw = corpus.context_window;
  if (position < cw || position >= static_cast<int>(corpus.tokens.size())) {
    throw std::out_of_range("encode_context: position outside valid range");
  }
  Vector x = Vector::Zero(static_cast<Eigen::Index>(cw) * corpus.vocab_size);
  for (int j = 0; j < cw; ++j) {
    x(static_cast<Eigen::Index>(j) * corpus.vocab_size + corpus.tokens[position - cw + j]) = 1.0;
  }
  return x;
}

int example_count(Task task, const TrainData& data) {
  switch (task) {
    case Task::kSupervised:
      return static_cast<int>(std::get<LabeledDataset>(data).inputs.rows());
    case Task::kContrastive:
    case Task::kNpair:
      return static_cast<int>(std::get<PatchPairSet>(data).top.rows());
    case Task::kNextToken: {
      const TokenCorpus& corpus = std::get<TokenCorpus>(data);
      return static_cast<int>(corpus.tokens.size()) - corpus.context_window;
    }
  }
  throw std::invalid_argument("unknown task");
}

int input_dim(Task task, const TrainData& data) {
  switch (task) {
    case Task::kSupervised:
      return static_cast<int>(std::get<LabeledDataset>(data).inputs.cols());
    case Task::kContrastive:
    case Task::kNpair:
      return static_cast<int>(std::get<PatchPairSet>(data).top.cols());
    case Task::kNextToken: {
      const TokenCorpus& corpus = std::get<TokenCorpus>(data);
      return corpus.context_window * corpus.vocab_size;
    }
  }
  throw std::invalid_argument("unknown task");
}

CandidateBatch build_candidates(Task task, const TrainData& data,
                                const std::vector<int>& indices,
                                std::optional<int> label_alphabet) {
  if (indices.empty()) throw std::invalid_argument("build_candidates: empty batch");
  CandidateBatch batch;
  const int n = static_cast<int>(indices.size());

  switch (task) {
    case Task::kSupervised: {
      const LabeledDataset& ds = std::get<LabeledDataset>(data);
      const int alphabet = label_alphabet.value_or(ds.class_count);
      if (alphabet < 2) {
        throw std::invalid_argument("build_candidates: label alphabet required for supervised");
      }
      batch.inputs.resize(n, ds.inputs.cols());
      for (int k = 0; k < alphabet; ++k) batch.pool.emplace_back(k);
      batch.target_index.resize(n);
      for (int i = 0; i < n; ++i) {
        batch.inputs.row(i) = ds.inputs.row(indices[i]);
        batch.target_index[i] = ds.labels[indices[i]];
      }
      break;
    }
    case Task::kContrastive: {
      const PatchPairSet& pairs = std::get<PatchPairSet>(data);
      batch.inputs.resize(n, pairs.top.cols());
      batch.target_index.resize(n);
      for (int i = 0; i < n; ++i) {
        batch.inputs.row(i) = pairs.top.row(indices[i]);
        batch.pool.emplace_back(Vector(pairs.bottom.row(indices[i]).transpose()));
        batch.target_index[i] = i;
      }
      break;
    }
    case Task::kNpair: {
      const PatchPairSet& pairs = std::get<PatchPairSet>(data);
      batch.inputs.resize(n, pairs.top.cols());
      batch.target_index.resize(n);
      for (int i = 0; i < n; ++i) {
        batch.inputs.row(i) = pairs.top.row(indices[i]);
        batch.pool.emplace_back(Vector(pairs.bottom.row(indices[i]).transpose()));
        batch.target_index[i] = i;
      }
      break;
    }
    case Task::kNextToken: {
      const TokenCorpus& corpus = std::get<TokenCorpus>(data);
      const int vocab = label_alphabet.value_or(corpus.vocab_size);
      if (vocab < 2) {
        throw std::invalid_argument("build_candidates: vocabulary required for next_token");
      }
      const int cw = corpus.context_window;
      batch.inputs.resize(n, static_cast<Eigen::Index>(cw) * corpus.vocab_size);
      for (int k = 0; k < vocab; ++k) batch.pool.emplace_back(k);
      batch.target_index.resize(n);
      for (int i = 0; i < n; ++i) {
        const int t = indices[i] + cw;  // index 0 is the first predictable position
        batch.inputs.row(i) = encode_context(corpus, t).transpose();
        batch.target_index[i] = corpus.tokens[t];
      }
      break;
    }
  }
  batch.validate();
  return batch;
}

TrainResult train(const CanonicalModel& init, const TrainData& data,
                  const TrainConfig& config) {
  config.validate();
  init.validate();
  const int n = example_count(config.task, data);
  if (n < 2) throw std::invalid_argument("train: dataset too small");

  // Seeded 90/10 split; validation capped so eval stays cheap.
  std::mt19937_64 split_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), split_rng);
  const int val_size = std::max(1, n / 10);
  std::vector<int> val_indices(order.begin(), order.begin() + val_size);
  std::vector<int> train_indices(order.begin() + val_size, order.end());
  if (static_cast<int>(val_indices.size()) > 512) val_indices.resize(512);

  const CandidateBatch val_batch = build_candidates(config.task, data, val_indices);

  CanonicalModel model = init;
  AdamState adam = make_adam_state(model);
  std::mt19937_64 batch_rng(config.seed);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(train_indices.size()) - 1);

  TrainTrace trace;
  double best_val = std::numeric_limits<double>::infinity();
  int best_checkpoint = -1;
  int stale_evals = 0;

  std::vector<int> batch_indices(config.batch_size);
  for (int iter = 0; iter < config.max_iters; ++iter) {
    for (int& idx : batch_indices) idx = train_indices[pick(batch_rng)];
    const CandidateBatch batch = build_candidates(config.task, data, batch_indices);
    const LossAndGrads step = nll_and_grads(model, batch);
    if (!std::isfinite(step.loss)) throw TrainingDiverged(std::move(trace));
    adam_step(model, step.grads, adam, config);

    if ((iter + 1) % config.eval_interval == 0) {
      const double val_loss = nll(model, val_batch);
      if (!std::isfinite(val_loss)) throw TrainingDiverged(std::move(trace));
      trace.records.push_back({iter + 1, step.loss, val_loss});
      trace.checkpoints.push_back({iter + 1, model});
      if (val_loss < best_val) {
        best_val = val_loss;
        best_checkpoint = static_cast<int>(trace.checkpoints.size()) - 1;
        stale_evals = 0;
      } else if (++stale_evals >= config.early_stop_patience) {
        break;
      }
    }
  }

  TrainResult result;
  result.model = best_checkpoint >= 0 ? trace.checkpoints[best_checkpoint].model : model;
  result.trace = std::move(trace);
  return result;
}

double grad_check(const CanonicalModel& model, const CandidateBatch& batch, double eps,
                  std::uint64_t seed) {
  if (!(eps > 1e-8 && eps <= 1e-3)) {
    throw std::invalid_argument("grad_check: eps must lie in (1e-8, 1e-3]");
  }
  const LossAndGrads analytic = nll_and_grads(model, batch);
  std::vector<double> flat_grads;
  for_each_grad_block(analytic.grads, [&](const double* g, std::ptrdiff_t n) {
    flat_grads.insert(flat_grads.end(), g, g + n);
  });

  CanonicalModel probe = model;
  std::vector<double*> flat_params;
  for_each_param_block(probe, [&](double* p, std::ptrdiff_t n) {
    for (std::ptrdiff_t i = 0; i < n; ++i) flat_params.push_back(p + i);
  });

  std::vector<std::size_t> positions(flat_params.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(positions.begin(), positions.end(), rng);
  if (positions.size() > 200) positions.resize(200);

  double worst = 0.0;
  for (std::size_t pos : positions) {
    double* p = flat_params[pos];
    const double original = *p;
    *p = original + eps;
    const double plus = nll(probe, batch);
    *p = original - eps;
    const double minus = nll(probe, batch);
    *p = original;
    const double fd = (plus - minus) / (2.0 * eps);
    const double an = flat_grads[pos];
    const double scale = std::max({std::abs(fd), std::abs(an), 1e-8});
    worst = std::max(worst, std::abs(fd - an) / scale);
  }
  return worst;
}

}  // namespace linid
