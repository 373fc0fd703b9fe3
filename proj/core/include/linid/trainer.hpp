#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "linid/data.hpp"
#include "linid/model.hpp"

namespace linid {

enum class Task { kSupervised, kContrastive, kNextToken, kNpair };

std::string task_name(Task task);
Task task_from_name(const std::string& name);

struct TrainConfig {
  double learning_rate = 1e-4;
  int max_iters = 20000;
  int batch_size = 128;
  int early_stop_patience = 10;  // evaluations without improvement
  int eval_interval = 500;       // iterations between evaluations
  std::uint64_t seed = 0;
  Task task = Task::kSupervised;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct TraceRecord {
  int iteration = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct Checkpoint {
  int iteration = 0;
  CanonicalModel model;
};

struct TrainTrace {
  std::vector<TraceRecord> records;
  std::vector<Checkpoint> checkpoints;
};

/// Raised when the training loss goes non-finite; carries the trace
/// accumulated up to the failure.
class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(TrainTrace trace)
      : std::runtime_error("training diverged: loss became non-finite"),
        trace(std::move(trace)) {}
  TrainTrace trace;
};

struct AdamState {
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
  int step = 0;
};

AdamState make_adam_state(const CanonicalModel& model);

// Bias-corrected Adam update, applied in declaration order over all
// parameter blocks. Deterministic in (params, grads, state, config).
void adam_step(CanonicalModel& params, const ModelGrads& grads, AdamState& state,
               const TrainConfig& config);

using TrainData = std::variant<LabeledDataset, PatchPairSet, TokenCorpus>;

// Number of drawable training examples for a task/dataset combination.
int example_count(Task task, const TrainData& data);

// Realizes the candidate set for the selected examples:
//   supervised  -> S = the label alphabet, constant across the batch
//   contrastive -> S = all bottom patches in the minibatch
//   next_token  -> S = the full vocabulary, x = previous n-1 tokens (one-hot)
//   npair       -> S = every example's paired target, g = f
CandidateBatch build_candidates(Task task, const TrainData& data,
                                const std::vector<int>& indices,
                                std::optional<int> label_alphabet = std::nullopt);

struct TrainResult {
  CanonicalModel model;  // best-validation checkpoint
  TrainTrace trace;
};

TrainResult train(const CanonicalModel& init, const TrainData& data,
                  const TrainConfig& config);

// Central finite differences on a random subsample of at most 200
// parameters; returns the worst relative discrepancy vs nll_and_grads.
double grad_check(const CanonicalModel& model, const CandidateBatch& batch, double eps,
                  std::uint64_t seed = 1);

// Input width f must accept for a task/dataset combination.
int input_dim(Task task, const TrainData& data);

// One-hot concatenation of the context preceding position t.
Vector encode_context(const TokenCorpus& corpus, int position);

}  // namespace linid
