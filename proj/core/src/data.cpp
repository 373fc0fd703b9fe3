#include "linid/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace linid {

int radial_label(double x, double y, int class_count) {
  double angle = std::atan2(y, x);
  if (angle < 0.0) angle += 2.0 * std::numbers::pi;
  int label = static_cast<int>(std::floor(class_count * angle / (2.0 * std::numbers::pi)));
  return std::min(label, class_count - 1);  // guard the angle == 2*pi edge
}

LabeledDataset radial_gaussian(int n, int class_count, double sigma, int noise_dims,
                               std::uint64_t seed) {
  if (class_count < 2) throw std::invalid_argument("radial_gaussian: need K >= 2");
  if (n < class_count) throw std::invalid_argument("radial_gaussian: need n >= K");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledDataset out;
  out.class_count = class_count;
  out.noise_dims = noise_dims;
  out.inputs.resize(n, 2 + noise_dims);
  out.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = sigma * normal(rng);
    const double y = sigma * normal(rng);
    out.inputs(i, 0) = x;
    out.inputs(i, 1) = y;
    out.labels[i] = radial_label(x, y, class_count);
    for (int j = 0; j < noise_dims; ++j) {
      out.inputs(i, 2 + j) = normal(rng);
    }
  }
  return out;
}

std::vector<int> teacher_relabel(const CanonicalModel& teacher, const Matrix& inputs) {
  const EmbeddingTable* table = std::get_if<EmbeddingTable>(&teacher.g);
  if (!table) {
    throw std::invalid_argument("teacher_relabel: teacher's g must be an embedding table");
  }
  const Matrix f = encode_f(teacher, inputs);
  const Matrix logits = f * table->weights.transpose();
  std::vector<int> labels(inputs.rows());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < table->label_count(); ++k) {
      if (logits(i, k) > logits(i, best)) best = k;  // ties keep the lower index
    }
    labels[i] = best;
  }
  return labels;
}

std::vector<int> teacher_sample_labels(const CanonicalModel& teacher,
                                       const Matrix& inputs, std::uint64_t seed) {
  const EmbeddingTable* table = std::get_if<EmbeddingTable>(&teacher.g);
  if (!table) {
    throw std::invalid_argument(
        "teacher_sample_labels: teacher's g must be an embedding table");
  }
  const Matrix f = encode_f(teacher, inputs);
  const Matrix logits = f * table->weights.transpose();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<int> labels(inputs.rows());
  const int k_count = table->label_count();
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const Eigen::ArrayXd probs = (logits.row(i).transpose().array() - m).exp();
    const double total = probs.sum();
    double u = uniform(rng) * total;
    int picked = k_count - 1;
    for (int k = 0; k < k_count; ++k) {
      u -= probs(k);
      if (u <= 0.0) {
        picked = k;
        break;
      }
    }
    labels[i] = picked;
  }
  return labels;
}

namespace {

// Copies a patch (all channels) into a flat plane-major vector.
Vector extract_patch(const ImageSet& images, int image, int row0, int col0,
                     const PatchGeometry& geo) {
  Vector out(geo.height * geo.width * images.channels);
  const int plane = images.height * images.width;
  int idx = 0;
  for (int c = 0; c < images.channels; ++c) {
    for (int r = 0; r < geo.height; ++r) {
      for (int col = 0; col < geo.width; ++col) {
        out(idx++) = images.pixels(image, c * plane + (row0 + r) * images.width + (col0 + col));
      }
    }
  }
  return out;
}

}  // namespace

PatchPairSet patch_pairs(const ImageSet& images, const PatchGeometry& geometry,
                         const AugmentConfig& augment, std::uint64_t seed) {
  const int half = images.height / 2;
  if (geometry.height > half || geometry.width > images.width) {
    throw std::invalid_argument("patch_pairs: patch does not fit in an image half");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> row_top(0, half - geometry.height);
  std::uniform_int_distribution<int> row_bottom(half, images.height - geometry.height);
  std::uniform_int_distribution<int> col(0, images.width - geometry.width);
  std::uniform_real_distribution<double> brightness(-augment.brightness_jitter,
                                                    augment.brightness_jitter);
  std::uniform_real_distribution<double> contrast(augment.contrast_low, augment.contrast_high);

  const int d = geometry.height * geometry.width * images.channels;
  PatchPairSet out;
  out.top.resize(images.count(), d);
  out.bottom.resize(images.count(), d);
  out.source.resize(images.count());

  // Jitter parameters are drawn even when augmentation is off so the crop
  // positions downstream of the shared generator do not depend on the flag.
  auto jitter = [&](Vector patch) {
    const double c = contrast(rng);
    const double b = brightness(rng);
    if (augment.enabled) {
      patch = (patch.array() * c + b).cwiseMax(0.0).cwiseMin(1.0).matrix();
    }
    return patch;
  };

  for (int i = 0; i < images.count(); ++i) {
    out.top.row(i) = jitter(extract_patch(images, i, row_top(rng), col(rng), geometry));
    out.bottom.row(i) = jitter(extract_patch(images, i, row_bottom(rng), col(rng), geometry));
    out.source[i] = i;
  }
  return out;
}

TokenCorpus markov_corpus(int vocab_size, int length, double temperature,
                          std::uint64_t seed) {
  if (vocab_size < 8) throw std::invalid_argument("markov_corpus: need V >= 8");
  if (length < 1) throw std::invalid_argument("markov_corpus: need positive length");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Row-stochastic transitions: normalized exponentials of Gaussian scores.
  Matrix transition(vocab_size, vocab_size);
  const double temp = std::max(temperature, 1e-6);
  for (int i = 0; i < vocab_size; ++i) {
    Eigen::ArrayXd scores(vocab_size);
    for (int j = 0; j < vocab_size; ++j) scores(j) = normal(rng);
    scores /= temp;
    scores -= scores.maxCoeff();
    const Eigen::ArrayXd probs = scores.exp() / scores.exp().sum();
    transition.row(i) = probs.matrix().transpose();
  }

  TokenCorpus corpus;
  corpus.vocab_size = vocab_size;
  corpus.tokens.resize(length);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  int state = static_cast<int>(rng() % vocab_size);
  for (int t = 0; t < length; ++t) {
    corpus.tokens[t] = state;
    double u = uniform(rng);
    int next = vocab_size - 1;
    for (int j = 0; j < vocab_size; ++j) {
      u -= transition(state, j);
      if (u <= 0.0) {
        next = j;
        break;
      }
    }
    state = next;
  }
  return corpus;
}

ImageSet load_cifar10(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_cifar10: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  constexpr int kRecord = 3073;  // 1 label byte + 3 * 1024 pixel bytes
  if (bytes.size() % kRecord != 0) {
    throw std::runtime_error("load_cifar10: malformed file, size not a multiple of 3073");
  }
  const int n = static_cast<int>(bytes.size() / kRecord);
  ImageSet images;
  images.height = 32;
  images.width = 32;
  images.channels = 3;
  images.pixels.resize(n, 3072);
  for (int i = 0; i < n; ++i) {
    const unsigned char* record = bytes.data() + static_cast<std::size_t>(i) * kRecord;
    for (int p = 0; p < 3072; ++p) {
      images.pixels(i, p) = record[1 + p] / 255.0;
    }
  }
  return images;
}

ImageSet synthetic_images(int count, int height, int width, int latent_dim,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> freq(0.5, 2.5);

  // Fixed smooth spatial basis shared by all images.
  struct Wave {
    double fr, fc, pr, pc;
  };
  std::vector<Wave> basis(latent_dim);
  for (Wave& w : basis) w = {freq(rng), freq(rng), phase(rng), phase(rng)};

  ImageSet images;
  images.height = height;
  images.width = width;
  images.channels = 1;
  images.pixels.resize(count, height * width);
  const double scale = 0.35 / std::sqrt(static_cast<double>(latent_dim));
  for (int i = 0; i < count; ++i) {
    Eigen::ArrayXd z(latent_dim);
    for (int k = 0; k < latent_dim; ++k) z(k) = normal(rng);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        double value = 0.5;
        for (int k = 0; k < latent_dim; ++k) {
          const Wave& w = basis[k];
          value += scale * z(k) *
                   std::sin(w.fr * std::numbers::pi * r / height + w.pr) *
                   std::sin(w.fc * std::numbers::pi * c / width + w.pc);
        }
        value += 0.02 * normal(rng);
        images.pixels(i, r * width + c) = std::clamp(value, 0.0, 1.0);
      }
    }
  }
  return images;
}

}  // namespace linid
