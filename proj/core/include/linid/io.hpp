#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "linid/analysis.hpp"
#include "linid/data.hpp"
#include "linid/model.hpp"
#include "linid/trainer.hpp"

namespace linid {

// --- checkpoint format: one JSON header line (architecture, M, activation,
// seed, iteration), then one base64 line per parameter block, little-endian
// 64-bit floats in declaration order.

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int iteration = 0;
};

void save_checkpoint(const std::string& path, const CanonicalModel& model,
                     const CheckpointMeta& meta);
std::pair<CanonicalModel, CheckpointMeta> load_checkpoint(const std::string& path);

// --- representation dumps: JSON metadata line, then CSV rows of M floats.
void save_repr_dump(const std::string& path, const ReprDump& dump);
ReprDump load_repr_dump(const std::string& path);

// --- datasets: CSV with a header row plus a JSON metadata sidecar
// (written next to the CSV as <path>.meta.json).
void save_matrix_csv(const std::string& path, const Matrix& m,
                     const std::vector<std::string>& header);
Matrix load_matrix_csv(const std::string& path, bool has_header = true);
void save_dataset_csv(const std::string& path, const LabeledDataset& dataset,
                      const std::string& generator, std::uint64_t seed);
LabeledDataset load_dataset_csv(const std::string& path);

void save_trace_csv(const std::string& path, const TrainTrace& trace);

// --- config / report plumbing.
std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& json_text);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);

// Minimal SVG line/scatter plot: one polyline per series over a shared x.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series, bool scatter = false);

}  // namespace linid
