#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "linid/linalg.hpp"
#include "linid/model.hpp"

namespace linid {

struct LabeledDataset {
  Matrix inputs;            // n x d
  std::vector<int> labels;  // values in [0, K)
  int class_count = 0;
  int noise_dims = 0;
};

struct PatchPairSet {
  Matrix top;               // n x d, flattened patches
  Matrix bottom;            // n x d
  std::vector<int> source;  // originating image index per row
};

struct TokenCorpus {
  std::vector<int> tokens;
  int vocab_size = 0;
  int context_window = 3;  // n-1 previous tokens condition the next
};

struct ImageSet {
  int height = 0;
  int width = 0;
  int channels = 1;
  Matrix pixels;  // one image per row, plane-major (all of channel 0, then 1, ...)

  int count() const { return static_cast<int>(pixels.rows()); }
};

struct PatchGeometry {
  int height = 8;
  int width = 8;
};

struct AugmentConfig {
  bool enabled = true;
  double brightness_jitter = 0.2;  // additive, uniform in +/- this
  double contrast_low = 0.8;       // multiplicative, uniform in [low, high]
  double contrast_high = 1.25;
};

// 2-D isotropic Gaussian points labeled by equal angular sectors, with
// pure-noise columns appended. Labels depend on the first two columns only.
LabeledDataset radial_gaussian(int n, int class_count, double sigma, int noise_dims,
                               std::uint64_t seed);

// Label assigned to a single 2-D point by the radial rule.
int radial_label(double x, double y, int class_count);

// argmax_y f(x)^T g(y) per row; ties break toward the lowest label.
// The teacher's context map must be an embedding table.
std::vector<int> teacher_relabel(const CanonicalModel& teacher, const Matrix& inputs);

// Labels sampled from the teacher's softmax over the label alphabet, so
// the relabeled conditional is exactly the teacher model's distribution
// (a deterministic argmax cannot be represented by any finite softmax).
std::vector<int> teacher_sample_labels(const CanonicalModel& teacher,
                                       const Matrix& inputs, std::uint64_t seed);

// One top-half and one bottom-half patch per image, independently
// brightness/contrast jittered, clamped to [0,1], flattened plane-major.
PatchPairSet patch_pairs(const ImageSet& images, const PatchGeometry& geometry,
                         const AugmentConfig& augment, std::uint64_t seed);

// Rollout of a random row-stochastic transition matrix; low temperature
// concentrates each row toward a near-deterministic successor.
TokenCorpus markov_corpus(int vocab_size, int length, double temperature,
                          std::uint64_t seed);

// CIFAR-10 binary layout: 3073-byte records, label byte then R/G/B planes.
// Pixels scaled to [0,1]. Throws on truncated records.
ImageSet load_cifar10(const std::string& path);

// Grayscale images driven by a shared low-dimensional latent so that top
// and bottom halves carry mutual information.
ImageSet synthetic_images(int count, int height, int width, int latent_dim,
                          std::uint64_t seed);

}  // namespace linid
