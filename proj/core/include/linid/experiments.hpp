#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "linid/analysis.hpp"
#include "linid/data.hpp"
#include "linid/trainer.hpp"

namespace linid {

enum class ExperimentTag {
  kSimulation,
  kContrastiveSweepData,
  kContrastiveSweepWidth,
  kLayerwise,
  kNplmFig1,
};

std::string experiment_name(ExperimentTag tag);
ExperimentTag experiment_from_name(const std::string& name);

enum class SweepAxis { kDataSize, kWidth };

/// Resolved experiment description; every field has a desk-scale default
/// and the whole struct is embedded into each report for provenance.
struct ExperimentSpec {
  ExperimentTag tag = ExperimentTag::kSimulation;
  int replicates = 2;  // students (simulation) or pairs per sweep point
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int jobs = 1;
  bool render_svg = false;

  // simulation (teacher-student radial classification)
  int sim_points = 16000;
  int sim_classes = 18;
  double sim_sigma = 3.0;
  int sim_noise_dims = 20;
  int sim_repr_dim = 2;
  std::vector<int> sim_hidden = {64, 64};
  TrainConfig teacher_config;
  TrainConfig student_config;

  // contrastive patch experiments
  std::string cifar_path;  // empty -> synthetic images
  int con_images = 3000;
  int con_image_size = 16;
  int con_latent_dim = 6;
  PatchGeometry con_patch{6, 8};
  int con_repr_dim = 16;
  int con_default_width = 64;
  int con_depth = 2;  // hidden layers per encoder
  std::vector<double> con_data_fractions = {0.125, 0.25, 0.5, 1.0};
  std::vector<int> con_widths = {16, 64, 256};
  TrainConfig contrastive_config;

  // layerwise next-token comparison
  int lw_vocab = 32;
  int lw_corpus_len = 20000;
  int lw_context = 3;
  int lw_models = 4;
  std::vector<int> lw_hidden = {32, 32};
  int lw_repr_dim = 16;
  std::vector<int> lw_k_list = {4, 8, 16};
  int lw_eval_points = 2000;
  TrainConfig layerwise_config;

  // log-bilinear embedding alignment
  int np_vocab = 64;
  int np_corpus_len = 30000;
  int np_context = 3;
  int np_repr_dim = 2;
  TrainConfig nplm_config;
};

// Spec with per-experiment training defaults filled in.
ExperimentSpec default_spec(ExperimentTag tag);

std::string spec_to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const std::string& json_text);

struct SimulationResult {
  std::vector<int> checkpoint_iterations;
  std::vector<double> mean_cca_trajectory;  // averaged over student pairs
  double final_mean_cca = 0.0;
  bool diversity_satisfied = false;
  std::string diversity_note;
  std::optional<DiversityReport> diversity;
  std::optional<RecoveryReport> theorem1;
  std::optional<RecoveryReport> context;
  std::optional<RecoveryReport> linear_map;
};

struct SweepPoint {
  double axis_value = 0.0;
  std::vector<double> pair_cca_f;
  std::vector<double> pair_cca_g;
  double mean_f = 0.0, stderr_f = 0.0;
  double mean_g = 0.0, stderr_g = 0.0;
  double median_f = 0.0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::kDataSize;
  std::vector<SweepPoint> points;
  double spearman_f = 0.0;  // rank correlation of median CCA vs axis
  double spearman_g = 0.0;
};

struct LayerwiseResult {
  std::vector<std::string> layer_names;  // ordered input-side first, "repr" last
  std::vector<int> k_list;
  Matrix mean_rho;  // layers x k, averaged over model pairs
};

struct NplmResult {
  double pre_discrepancy = 0.0;
  double post_residual = 0.0;
  double ratio = 0.0;
  Matrix map;
};

// Each runner writes its report files under spec.out_dir and returns the
// aggregate results it computed.
SimulationResult run_simulation(const ExperimentSpec& spec);
SweepResult run_contrastive_sweep(const ExperimentSpec& spec, SweepAxis axis);
LayerwiseResult run_layerwise(const ExperimentSpec& spec);
NplmResult run_nplm_fig1(const ExperimentSpec& spec);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace linid
