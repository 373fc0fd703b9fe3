#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "linid/io.hpp"

using namespace linid;
namespace fs = std::filesystem;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  return Matrix::NullaryExpr(rows, cols,
                             [&](Eigen::Index, Eigen::Index) { return normal(rng); });
}

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

std::vector<double> flatten(CanonicalModel& model) {
  std::vector<double> values;
  for_each_param_block(model, [&](double* p, std::ptrdiff_t n) {
    values.insert(values.end(), p, p + n);
  });
  return values;
}

}  // namespace

TEST_CASE("base64 round trips arbitrary byte strings") {
  std::mt19937_64 rng(1);
  for (std::size_t len : {0u, 1u, 2u, 3u, 4u, 17u, 255u}) {
    std::vector<unsigned char> bytes(len);
    for (auto& b : bytes) b = static_cast<unsigned char>(rng());
    const std::string text = base64_encode(bytes.data(), bytes.size());
    CHECK(base64_decode(text) == bytes);
  }
}

TEST_CASE("checkpoints round trip bitwise for every context-map variant") {
  const std::string path = temp_path("linid_ckpt_test.txt");
  std::vector<ContextMap> variants;
  variants.emplace_back(EmbeddingTable{random_matrix(5, 2, 2)});
  variants.emplace_back(make_mlp(3, {4}, 2, Activation::kTanh, 3));
  variants.emplace_back(SharedWithF{});

  for (ContextMap& g : variants) {
    CanonicalModel model;
    model.f = make_mlp(3, {4, 4}, 2, Activation::kRelu, 4);
    model.g = g;
    save_checkpoint(path, model, CheckpointMeta{99, 1234});
    auto [loaded, meta] = load_checkpoint(path);
    CHECK(meta.seed == 99);
    CHECK(meta.iteration == 1234);
    CHECK(flatten(loaded) == flatten(model));
    CHECK(loaded.g.index() == model.g.index());
  }
  std::remove(path.c_str());
}

TEST_CASE("repr dumps round trip with metadata") {
  const std::string path = temp_path("linid_repr_test.txt");
  ReprDump dump;
  dump.data = random_matrix(7, 3, 5);
  dump.meta.seed = 11;
  dump.meta.task = "supervised";
  dump.meta.layer = "hidden2";
  dump.meta.iteration = 500;
  dump.meta.model_id = "m0";
  save_repr_dump(path, dump);
  const ReprDump loaded = load_repr_dump(path);
  CHECK(loaded.data == dump.data);
  CHECK(loaded.meta.seed == 11);
  CHECK(loaded.meta.task == "supervised");
  CHECK(loaded.meta.layer == "hidden2");
  CHECK(loaded.meta.iteration == 500);
  CHECK(loaded.meta.model_id == "m0");
  std::remove(path.c_str());
}

TEST_CASE("matrix csv round trips at full precision") {
  const std::string path = temp_path("linid_matrix_test.csv");
  const Matrix m = random_matrix(9, 4, 6);
  save_matrix_csv(path, m, {"a", "b", "c", "d"});
  CHECK(load_matrix_csv(path) == m);
  std::remove(path.c_str());
}

TEST_CASE("dataset csv round trips with its sidecar") {
  const std::string path = temp_path("linid_dataset_test.csv");
  LabeledDataset ds;
  ds.inputs = random_matrix(12, 3, 7);
  ds.labels = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  ds.class_count = 3;
  ds.noise_dims = 1;
  save_dataset_csv(path, ds, "radial_gaussian", 21);
  const LabeledDataset loaded = load_dataset_csv(path);
  CHECK(loaded.inputs == ds.inputs);
  CHECK(loaded.labels == ds.labels);
  CHECK(loaded.class_count == 3);
  CHECK(loaded.noise_dims == 1);
  std::remove(path.c_str());
  std::remove((path + ".meta.json").c_str());
}

TEST_CASE("train configs round trip through json") {
  TrainConfig config;
  config.learning_rate = 3e-4;
  config.max_iters = 777;
  config.batch_size = 64;
  config.early_stop_patience = 4;
  config.eval_interval = 111;
  config.seed = 5;
  config.task = Task::kNextToken;
  const TrainConfig loaded = train_config_from_json(train_config_to_json(config));
  CHECK(loaded.learning_rate == config.learning_rate);
  CHECK(loaded.max_iters == config.max_iters);
  CHECK(loaded.batch_size == config.batch_size);
  CHECK(loaded.early_stop_patience == config.early_stop_patience);
  CHECK(loaded.eval_interval == config.eval_interval);
  CHECK(loaded.seed == config.seed);
  CHECK(loaded.task == config.task);
}

TEST_CASE("trace csv lists one row per record") {
  const std::string path = temp_path("linid_trace_test.csv");
  TrainTrace trace;
  trace.records.push_back({100, 1.5, 1.6});
  trace.records.push_back({200, 1.2, 1.3});
  save_trace_csv(path, trace);
  const std::string text = read_text_file(path);
  CHECK(text.find("iteration,train_loss,val_loss") == 0);
  CHECK(text.find("200,") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("svg plots are valid standalone documents") {
  const std::string path = temp_path("linid_plot_test.svg");
  PlotSeries series{"rho", {0, 1, 2, 3}, {0.1, 0.5, 0.8, 0.95}};
  write_svg_plot(path, "test plot", {series});
  const std::string text = read_text_file(path);
  CHECK(text.find("<svg") != std::string::npos);
  CHECK(text.find("</svg>") != std::string::npos);
  CHECK(text.find("polyline") != std::string::npos);
  std::remove(path.c_str());
}
