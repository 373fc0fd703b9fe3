#include "linid/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace linid {

using nlohmann::json;

namespace {

const char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string format_double(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

// Row-major little-endian f64 serialization of one parameter block.
std::string encode_block(const Matrix& m) {
  std::vector<unsigned char> bytes(m.size() * sizeof(double));
  std::size_t offset = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      std::memcpy(bytes.data() + offset, &v, sizeof(double));
      offset += sizeof(double);
    }
  }
  return base64_encode(bytes.data(), bytes.size());
}

Matrix decode_block(const std::string& text, Eigen::Index rows, Eigen::Index cols) {
  const std::vector<unsigned char> bytes = base64_decode(text);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double)) {
    throw std::runtime_error("checkpoint: parameter block size mismatch");
  }
  Matrix m(rows, cols);
  std::size_t offset = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double v;
      std::memcpy(&v, bytes.data() + offset, sizeof(double));
      m(r, c) = v;
      offset += sizeof(double);
    }
  }
  return m;
}

json mlp_arch(const Mlp& mlp) {
  json layers = json::array();
  for (const DenseLayer& layer : mlp.layers) {
    layers.push_back({layer.weight.rows(), layer.weight.cols()});
  }
  return {{"layers", layers}, {"activation", activation_name(mlp.hidden_activation)}};
}

Mlp mlp_from_arch(const json& arch) {
  Mlp mlp;
  mlp.hidden_activation = activation_from_name(arch.at("activation").get<std::string>());
  for (const auto& dims : arch.at("layers")) {
    DenseLayer layer;
    layer.weight = Matrix::Zero(dims[0].get<Eigen::Index>(), dims[1].get<Eigen::Index>());
    layer.bias = Vector::Zero(dims[0].get<Eigen::Index>());
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

}  // namespace

std::string base64_encode(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned int word = data[i] << 16;
    if (i + 1 < len) word |= data[i + 1] << 8;
    if (i + 2 < len) word |= data[i + 2];
    out.push_back(kB64Alphabet[(word >> 18) & 63]);
    out.push_back(kB64Alphabet[(word >> 12) & 63]);
    out.push_back(i + 1 < len ? kB64Alphabet[(word >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kB64Alphabet[word & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  int word = 0, bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = value_of(c);
    if (v < 0) throw std::runtime_error("base64: invalid character");
    word = (word << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((word >> bits) & 0xff));
    }
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::string& path, const CanonicalModel& model,
                     const CheckpointMeta& meta) {
  json header = {
      {"format", "linid-checkpoint-v1"},
      {"m", model.repr_dim()},
      {"seed", meta.seed},
      {"iteration", meta.iteration},
      {"f", mlp_arch(model.f)},
  };
  if (const Mlp* gm = std::get_if<Mlp>(&model.g)) {
    header["g"] = {{"variant", "mlp"}, {"arch", mlp_arch(*gm)}};
  } else if (const EmbeddingTable* table = std::get_if<EmbeddingTable>(&model.g)) {
    header["g"] = {{"variant", "embedding_table"},
                   {"rows", table->weights.rows()},
                   {"cols", table->weights.cols()}};
  } else {
    header["g"] = {{"variant", "shared_with_f"}};
  }

  std::ostringstream out;
  out << header.dump() << "\n";
  auto dump_mlp = [&](const Mlp& mlp) {
    for (const DenseLayer& layer : mlp.layers) {
      out << encode_block(layer.weight) << "\n";
      out << encode_block(layer.bias) << "\n";
    }
  };
  dump_mlp(model.f);
  if (const Mlp* gm = std::get_if<Mlp>(&model.g)) {
    dump_mlp(*gm);
  } else if (const EmbeddingTable* table = std::get_if<EmbeddingTable>(&model.g)) {
    out << encode_block(table->weights) << "\n";
  }
  write_text_file(path, out.str());
}

std::pair<CanonicalModel, CheckpointMeta> load_checkpoint(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: empty file");
  const json header = json::parse(line);
  if (header.value("format", "") != "linid-checkpoint-v1") {
    throw std::runtime_error("checkpoint: unknown format");
  }

  CanonicalModel model;
  model.f = mlp_from_arch(header.at("f"));
  const json& g = header.at("g");
  const std::string variant = g.at("variant").get<std::string>();
  if (variant == "mlp") {
    model.g = mlp_from_arch(g.at("arch"));
  } else if (variant == "embedding_table") {
    model.g = EmbeddingTable{
        Matrix::Zero(g.at("rows").get<Eigen::Index>(), g.at("cols").get<Eigen::Index>())};
  } else if (variant == "shared_with_f") {
    model.g = SharedWithF{};
  } else {
    throw std::runtime_error("checkpoint: unknown context-map variant");
  }

  auto next_block = [&](Eigen::Index rows, Eigen::Index cols) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing block");
    return decode_block(line, rows, cols);
  };
  auto fill_mlp = [&](Mlp& mlp) {
    for (DenseLayer& layer : mlp.layers) {
      layer.weight = next_block(layer.weight.rows(), layer.weight.cols());
      layer.bias = next_block(layer.bias.size(), 1).col(0);
    }
  };
  fill_mlp(model.f);
  if (Mlp* gm = std::get_if<Mlp>(&model.g)) {
    fill_mlp(*gm);
  } else if (EmbeddingTable* table = std::get_if<EmbeddingTable>(&model.g)) {
    table->weights = next_block(table->weights.rows(), table->weights.cols());
  }
  model.validate();

  CheckpointMeta meta;
  meta.seed = header.value("seed", 0ULL);
  meta.iteration = header.value("iteration", 0);
  return {std::move(model), meta};
}

void save_repr_dump(const std::string& path, const ReprDump& dump) {
  json meta = {{"seed", dump.meta.seed},     {"task", dump.meta.task},
               {"layer", dump.meta.layer},   {"iteration", dump.meta.iteration},
               {"model_id", dump.meta.model_id}, {"rows", dump.data.rows()},
               {"cols", dump.data.cols()}};
  std::ostringstream out;
  out << meta.dump() << "\n";
  for (Eigen::Index r = 0; r < dump.data.rows(); ++r) {
    for (Eigen::Index c = 0; c < dump.data.cols(); ++c) {
      if (c) out << ",";
      out << format_double(dump.data(r, c));
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

ReprDump load_repr_dump(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("repr dump: empty file");
  const json meta = json::parse(line);
  ReprDump dump;
  dump.meta.seed = meta.value("seed", 0ULL);
  dump.meta.task = meta.value("task", "");
  dump.meta.layer = meta.value("layer", "");
  dump.meta.iteration = meta.value("iteration", 0);
  dump.meta.model_id = meta.value("model_id", "");
  const Eigen::Index rows = meta.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = meta.at("cols").get<Eigen::Index>();
  dump.data.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw std::runtime_error("repr dump: truncated rows");
    std::istringstream row(line);
    std::string cell;
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("repr dump: short row");
      dump.data(r, c) = std::stod(cell);
    }
  }
  return dump;
}

void save_matrix_csv(const std::string& path, const Matrix& m,
                     const std::vector<std::string>& header) {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ",";
    out << header[i];
  }
  if (!header.empty()) out << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ",";
      out << format_double(m(r, c));
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

Matrix load_matrix_csv(const std::string& path, bool has_header) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (has_header && !std::getline(in, line)) {
    throw std::runtime_error("csv: empty file");
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw std::runtime_error("csv: ragged rows");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

void save_dataset_csv(const std::string& path, const LabeledDataset& dataset,
                      const std::string& generator, std::uint64_t seed) {
  std::ostringstream out;
  for (Eigen::Index c = 0; c < dataset.inputs.cols(); ++c) out << "x" << c << ",";
  out << "label\n";
  for (Eigen::Index r = 0; r < dataset.inputs.rows(); ++r) {
    for (Eigen::Index c = 0; c < dataset.inputs.cols(); ++c) {
      out << format_double(dataset.inputs(r, c)) << ",";
    }
    out << dataset.labels[r] << "\n";
  }
  write_text_file(path, out.str());
  const json meta = {{"generator", generator},
                     {"seed", seed},
                     {"n", dataset.inputs.rows()},
                     {"class_count", dataset.class_count},
                     {"noise_dims", dataset.noise_dims}};
  write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

LabeledDataset load_dataset_csv(const std::string& path) {
  const Matrix all = load_matrix_csv(path, true);
  if (all.cols() < 2) throw std::runtime_error("dataset csv: too few columns");
  LabeledDataset dataset;
  dataset.inputs = all.leftCols(all.cols() - 1);
  dataset.labels.resize(all.rows());
  int max_label = 0;
  for (Eigen::Index r = 0; r < all.rows(); ++r) {
    dataset.labels[r] = static_cast<int>(std::lround(all(r, all.cols() - 1)));
    max_label = std::max(max_label, dataset.labels[r]);
  }
  dataset.class_count = max_label + 1;
  const json meta = json::parse(read_text_file(path + ".meta.json"));
  dataset.class_count = meta.value("class_count", dataset.class_count);
  dataset.noise_dims = meta.value("noise_dims", 0);
  return dataset;
}

void save_trace_csv(const std::string& path, const TrainTrace& trace) {
  std::ostringstream out;
  out << "iteration,train_loss,val_loss\n";
  for (const TraceRecord& rec : trace.records) {
    out << rec.iteration << "," << format_double(rec.train_loss) << ","
        << format_double(rec.val_loss) << "\n";
  }
  write_text_file(path, out.str());
}

std::string train_config_to_json(const TrainConfig& config) {
  const json j = {{"learning_rate", config.learning_rate},
                  {"max_iters", config.max_iters},
                  {"batch_size", config.batch_size},
                  {"early_stop_patience", config.early_stop_patience},
                  {"eval_interval", config.eval_interval},
                  {"seed", config.seed},
                  {"task", task_name(config.task)},
                  {"beta1", config.beta1},
                  {"beta2", config.beta2},
                  {"epsilon", config.epsilon}};
  return j.dump(2) + "\n";
}

TrainConfig train_config_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  TrainConfig config;
  config.learning_rate = j.value("learning_rate", config.learning_rate);
  config.max_iters = j.value("max_iters", config.max_iters);
  config.batch_size = j.value("batch_size", config.batch_size);
  config.early_stop_patience = j.value("early_stop_patience", config.early_stop_patience);
  config.eval_interval = j.value("eval_interval", config.eval_interval);
  config.seed = j.value("seed", config.seed);
  if (j.contains("task")) config.task = task_from_name(j.at("task").get<std::string>());
  config.beta1 = j.value("beta1", config.beta1);
  config.beta2 = j.value("beta2", config.beta2);
  config.epsilon = j.value("epsilon", config.epsilon);
  config.validate();
  return config;
}

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<PlotSeries>& series, bool scatter) {
  const int width = 640, height = 420, margin = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const PlotSeries& s : series) {
    for (double v : s.x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
    for (double v : s.y) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  auto sx = [&](double v) {
    return margin + (v - xmin) / (xmax - xmin) * (width - 2 * margin);
  };
  auto sy = [&](double v) {
    return height - margin - (v - ymin) / (ymax - ymin) * (height - 2 * margin);
  };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
      << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << width / 2 << "' y='20' text-anchor='middle' font-size='14'>"
      << title << "</text>\n";
  out << "<line x1='" << margin << "' y1='" << height - margin << "' x2='"
      << width - margin << "' y2='" << height - margin << "' stroke='black'/>\n";
  out << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
      << height - margin << "' stroke='black'/>\n";
  out << "<text x='" << margin << "' y='" << height - margin + 16 << "' font-size='10'>"
      << format_double(xmin) << "</text>\n";
  out << "<text x='" << width - margin << "' y='" << height - margin + 16
      << "' text-anchor='end' font-size='10'>" << format_double(xmax) << "</text>\n";
  out << "<text x='" << margin - 4 << "' y='" << height - margin
      << "' text-anchor='end' font-size='10'>" << format_double(ymin) << "</text>\n";
  out << "<text x='" << margin - 4 << "' y='" << margin
      << "' text-anchor='end' font-size='10'>" << format_double(ymax) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % 6];
    const PlotSeries& s = series[k];
    if (scatter) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        out << "<circle cx='" << sx(s.x[i]) << "' cy='" << sy(s.y[i])
            << "' r='2.5' fill='" << color << "'/>\n";
      }
    } else {
      out << "<polyline fill='none' stroke='" << color << "' points='";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        out << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
      }
      out << "'/>\n";
    }
    out << "<text x='" << width - margin - 4 << "' y='" << margin + 14 * (k + 1)
        << "' text-anchor='end' font-size='11' fill='" << color << "'>" << s.label
        << "</text>\n";
  }
  out << "</svg>\n";
  write_text_file(path, out.str());
}

}  // namespace linid
