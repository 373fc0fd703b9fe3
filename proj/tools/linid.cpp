// Command-line harness: data generation, training, representation dumps,
// similarity analysis, and the end-to-end verification experiments.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "linid/analysis.hpp"
#include "linid/data.hpp"
#include "linid/experiments.hpp"
#include "linid/io.hpp"
#include "linid/model.hpp"
#include "linid/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace linid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitExperimentFailure = 1;
constexpr int kExitInvalidSpec = 2;

struct CommonFlags {
  std::string spec_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir = "out";
  bool out_given = false;
  int jobs = 1;
  bool render_svg = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--spec", flags.spec_path, "JSON experiment spec file");
  cmd->add_option("--seed", flags.seed, "master seed")
      ->each([&](const std::string&) { flags.seed_given = true; });
  cmd->add_option("--out", flags.out_dir, "output directory")
      ->each([&](const std::string&) { flags.out_given = true; });
  cmd->add_option("--jobs", flags.jobs, "bounded worker pool size")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--svg", flags.render_svg, "also render SVG plots");
}

ExperimentSpec resolve_spec(const CommonFlags& flags, ExperimentTag fallback_tag) {
  ExperimentSpec spec = flags.spec_path.empty()
                            ? default_spec(fallback_tag)
                            : spec_from_json(read_text_file(flags.spec_path));
  if (flags.seed_given) spec.seed = flags.seed;
  if (flags.out_given || spec.out_dir.empty()) spec.out_dir = flags.out_dir;
  spec.jobs = flags.jobs;
  if (flags.render_svg) spec.render_svg = true;
  return spec;
}

void save_corpus(const std::string& path, const TokenCorpus& corpus) {
  Matrix column(corpus.tokens.size(), 1);
  for (std::size_t i = 0; i < corpus.tokens.size(); ++i) column(i, 0) = corpus.tokens[i];
  save_matrix_csv(path, column, {"token"});
  const json meta = {{"vocab_size", corpus.vocab_size},
                     {"context_window", corpus.context_window}};
  write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

TokenCorpus load_corpus(const std::string& path) {
  const Matrix column = load_matrix_csv(path);
  const json meta = json::parse(read_text_file(path + ".meta.json"));
  TokenCorpus corpus;
  corpus.vocab_size = meta.at("vocab_size").get<int>();
  corpus.context_window = meta.value("context_window", 3);
  corpus.tokens.reserve(column.rows());
  for (Eigen::Index i = 0; i < column.rows(); ++i) {
    corpus.tokens.push_back(static_cast<int>(column(i, 0)));
  }
  return corpus;
}

PatchPairSet load_pairs(const std::string& prefix) {
  PatchPairSet pairs;
  pairs.top = load_matrix_csv(prefix + "_top.csv");
  pairs.bottom = load_matrix_csv(prefix + "_bottom.csv");
  pairs.source.resize(pairs.top.rows());
  for (std::size_t i = 0; i < pairs.source.size(); ++i) pairs.source[i] = static_cast<int>(i);
  return pairs;
}

TrainData load_train_data(Task task, const std::string& path) {
  switch (task) {
    case Task::kSupervised:
      return load_dataset_csv(path);
    case Task::kNextToken:
      return load_corpus(path);
    case Task::kContrastive:
    case Task::kNpair:
      return load_pairs(path);
  }
  throw std::invalid_argument("unknown task");
}

int cmd_gen_data(const std::string& kind, const CommonFlags& flags, int points,
                 int classes, double sigma, int noise_dims, int vocab, int length,
                 double temperature, int images, int image_size, int latent_dim,
                 int patch_h, int patch_w) {
  fs::create_directories(flags.out_dir);
  if (kind == "radial") {
    const LabeledDataset ds = radial_gaussian(points, classes, sigma, noise_dims, flags.seed);
    const std::string path = (fs::path(flags.out_dir) / "radial.csv").string();
    save_dataset_csv(path, ds, "radial_gaussian", flags.seed);
    std::cout << "wrote " << path << " (" << points << " x " << ds.inputs.cols() << ")\n";
  } else if (kind == "markov") {
    const TokenCorpus corpus = markov_corpus(vocab, length, temperature, flags.seed);
    const std::string path = (fs::path(flags.out_dir) / "corpus.csv").string();
    save_corpus(path, corpus);
    std::cout << "wrote " << path << " (" << length << " tokens, vocab " << vocab << ")\n";
  } else if (kind == "patches") {
    const ImageSet imgs =
        synthetic_images(images, image_size, image_size, latent_dim, flags.seed);
    AugmentConfig augment;
    const PatchPairSet pairs =
        patch_pairs(imgs, PatchGeometry{patch_h, patch_w}, augment, flags.seed + 1);
    const std::string top = (fs::path(flags.out_dir) / "pairs_top.csv").string();
    const std::string bottom = (fs::path(flags.out_dir) / "pairs_bottom.csv").string();
    std::vector<std::string> header(pairs.top.cols());
    for (Eigen::Index c = 0; c < pairs.top.cols(); ++c) header[c] = "p" + std::to_string(c);
    save_matrix_csv(top, pairs.top, header);
    save_matrix_csv(bottom, pairs.bottom, header);
    std::cout << "wrote " << top << " and " << bottom << "\n";
  } else {
    throw std::invalid_argument("gen-data: unknown kind '" + kind + "'");
  }
  return kExitOk;
}

int cmd_train(const CommonFlags& flags, const std::string& task_str,
              const std::string& data_path, const std::vector<int>& hidden,
              int repr_dim) {
  const Task task = task_from_name(task_str);
  const TrainData data = load_train_data(task, data_path);

  TrainConfig config;
  if (!flags.spec_path.empty()) {
    config = train_config_from_json(read_text_file(flags.spec_path));
  }
  config.task = task;
  if (flags.seed_given) config.seed = flags.seed;

  const int d = input_dim(task, data);
  CanonicalModel init;
  init.f = make_mlp(d, hidden, repr_dim, Activation::kRelu, config.seed + 1);
  switch (task) {
    case Task::kSupervised:
      init.g = EmbeddingTable{
          Matrix::Random(std::get<LabeledDataset>(data).class_count, repr_dim) /
          std::sqrt(static_cast<double>(repr_dim))};
      break;
    case Task::kNextToken:
      init.g = EmbeddingTable{
          Matrix::Random(std::get<TokenCorpus>(data).vocab_size, repr_dim) /
          std::sqrt(static_cast<double>(repr_dim))};
      break;
    case Task::kContrastive:
      init.g = make_mlp(d, hidden, repr_dim, Activation::kRelu, config.seed + 2);
      break;
    case Task::kNpair:
      init.g = SharedWithF{};
      break;
  }

  const TrainResult result = train(init, data, config);

  fs::create_directories(flags.out_dir);
  const std::string ckpt = (fs::path(flags.out_dir) / "checkpoint.txt").string();
  const int final_iter =
      result.trace.records.empty() ? 0 : result.trace.records.back().iteration;
  save_checkpoint(ckpt, result.model, CheckpointMeta{config.seed, final_iter});
  save_trace_csv((fs::path(flags.out_dir) / "trace.csv").string(), result.trace);
  const double final_val =
      result.trace.records.empty() ? 0.0 : result.trace.records.back().val_loss;
  std::cout << "trained " << task_name(task) << ", final val loss " << final_val
            << ", checkpoint " << ckpt << "\n";
  return kExitOk;
}

int cmd_dump_repr(const CommonFlags& flags, const std::string& checkpoint_path,
                  const std::string& data_path, const std::string& layer) {
  const auto [model, meta] = load_checkpoint(checkpoint_path);
  Matrix inputs = load_matrix_csv(data_path);
  // Dataset CSVs carry a trailing label column; tolerate it.
  if (inputs.cols() == model.f.input_dim() + 1) {
    inputs = inputs.leftCols(model.f.input_dim()).eval();
  }

  ReprDump dump;
  if (layer == "repr") {
    dump.data = encode_f(model, inputs);
  } else {
    std::vector<Matrix> hidden;
    encode_f_capture(model, inputs, &hidden);
    bool matched = false;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
      if (layer == "hidden" + std::to_string(l + 1)) {
        dump.data = hidden[l];
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw std::invalid_argument("dump-repr: unknown layer '" + layer + "' (model has " +
                                  std::to_string(hidden.size()) + " hidden layers)");
    }
  }
  dump.meta.seed = meta.seed;
  dump.meta.iteration = meta.iteration;
  dump.meta.layer = layer;
  dump.meta.model_id = fs::path(checkpoint_path).stem().string();

  fs::create_directories(flags.out_dir);
  const std::string path = (fs::path(flags.out_dir) / "repr.txt").string();
  save_repr_dump(path, dump);
  std::cout << "wrote " << path << " (" << dump.data.rows() << " x " << dump.data.cols()
            << ", layer " << layer << ")\n";
  return kExitOk;
}

int cmd_analyze(const CommonFlags& flags, const std::string& x_path,
                const std::string& y_path, int k, bool fit_map) {
  const ReprDump x = load_repr_dump(x_path);
  const ReprDump y = load_repr_dump(y_path);
  const CcaReport report = k > 0 ? svcca(x, y, k) : cca(x, y);

  json body = {{"mean_rho", report.mean_rho}, {"k", k}};
  json rhos = json::array();
  for (Eigen::Index i = 0; i < report.correlations.size(); ++i) {
    rhos.push_back(report.correlations(i));
  }
  body["correlations"] = rhos;
  if (fit_map) {
    const RecoveryReport fit = fit_linear_map(x, y);
    body["fit"] = {{"residual", fit.residual}, {"condition", fit.condition}};
  }
  fs::create_directories(flags.out_dir);
  const std::string path = (fs::path(flags.out_dir) / "analysis.json").string();
  write_text_file(path, body.dump(2) + "\n");
  std::cout << "mean rho " << report.mean_rho << " (report: " << path << ")\n";
  return kExitOk;
}

int cmd_verify(const CommonFlags& flags, const std::string& experiment, double min_cca,
               double max_ratio) {
  const ExperimentTag tag = experiment_from_name(experiment);
  const ExperimentSpec spec = resolve_spec(flags, tag);
  if (tag == ExperimentTag::kSimulation) {
    const SimulationResult result = run_simulation(spec);
    std::cout << "final mean CCA " << result.final_mean_cca << ", diversity "
              << (result.diversity_satisfied ? "satisfied" : "NOT satisfied");
    if (!result.diversity_note.empty()) std::cout << " (" << result.diversity_note << ")";
    std::cout << "\n";
    return result.final_mean_cca >= min_cca && result.diversity_satisfied
               ? kExitOk
               : kExitExperimentFailure;
  }
  if (tag == ExperimentTag::kNplmFig1) {
    const NplmResult result = run_nplm_fig1(spec);
    std::cout << "pre discrepancy " << result.pre_discrepancy << ", post residual "
              << result.post_residual << ", ratio " << result.ratio << "\n";
    return result.ratio < max_ratio ? kExitOk : kExitExperimentFailure;
  }
  throw std::invalid_argument("verify: experiment must be simulation or nplm_fig1");
}

int cmd_sweep(const CommonFlags& flags, const std::string& axis_str) {
  SweepAxis axis;
  ExperimentTag tag;
  if (axis_str == "data_size") {
    axis = SweepAxis::kDataSize;
    tag = ExperimentTag::kContrastiveSweepData;
  } else if (axis_str == "width") {
    axis = SweepAxis::kWidth;
    tag = ExperimentTag::kContrastiveSweepWidth;
  } else {
    throw std::invalid_argument("sweep: axis must be data_size or width");
  }
  const SweepResult result = run_contrastive_sweep(resolve_spec(flags, tag), axis);
  for (const SweepPoint& p : result.points) {
    std::cout << "axis " << p.axis_value << ": f " << p.mean_f << " +/- " << p.stderr_f
              << ", g " << p.mean_g << " +/- " << p.stderr_g << "\n";
  }
  std::cout << "spearman f " << result.spearman_f << ", g " << result.spearman_g << "\n";
  return kExitOk;
}

int cmd_layerwise(const CommonFlags& flags) {
  const LayerwiseResult result =
      run_layerwise(resolve_spec(flags, ExperimentTag::kLayerwise));
  for (std::size_t l = 0; l < result.layer_names.size(); ++l) {
    std::cout << result.layer_names[l] << ":";
    for (std::size_t ki = 0; ki < result.k_list.size(); ++ki) {
      std::cout << " k" << result.k_list[ki] << "=" << result.mean_rho(l, ki);
    }
    std::cout << "\n";
  }
  return kExitOk;
}

int cmd_report(const CommonFlags& flags) {
  bool any = false;
  for (const auto& entry : fs::directory_iterator(flags.out_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() < 12 || name.substr(name.size() - 12) != "_report.json") continue;
    any = true;
    const json body = json::parse(read_text_file(entry.path().string()));
    std::cout << name << "\n";
    for (const auto& [key, value] : body.items()) {
      if (key == "spec") continue;
      if (value.is_number() || value.is_boolean() || value.is_string()) {
        std::cout << "  " << key << ": " << value.dump() << "\n";
      }
    }
  }
  if (!any) {
    std::cout << "no *_report.json files under " << flags.out_dir << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"linear identifiability toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;

  // gen-data
  std::string gen_kind = "radial";
  int gd_points = 16000, gd_classes = 18, gd_noise = 20;
  double gd_sigma = 3.0;
  int gd_vocab = 32, gd_length = 20000;
  double gd_temperature = 1.0;
  int gd_images = 3000, gd_image_size = 16, gd_latent = 6, gd_ph = 6, gd_pw = 8;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, flags);
  gen->add_option("--kind", gen_kind, "radial | markov | patches");
  gen->add_option("--points", gd_points);
  gen->add_option("--classes", gd_classes);
  gen->add_option("--sigma", gd_sigma);
  gen->add_option("--noise-dims", gd_noise);
  gen->add_option("--vocab", gd_vocab);
  gen->add_option("--length", gd_length);
  gen->add_option("--temperature", gd_temperature);
  gen->add_option("--images", gd_images);
  gen->add_option("--image-size", gd_image_size);
  gen->add_option("--latent-dim", gd_latent);
  gen->add_option("--patch-height", gd_ph);
  gen->add_option("--patch-width", gd_pw);

  // train
  std::string tr_task = "supervised", tr_data;
  std::vector<int> tr_hidden = {64, 64};
  int tr_repr = 2;
  CLI::App* tr = app.add_subcommand("train", "train one model");
  add_common(tr, flags);
  tr->add_option("--task", tr_task, "supervised | contrastive | next_token | npair");
  tr->add_option("--data", tr_data, "dataset path (CSV / corpus / pair prefix)")
      ->required();
  tr->add_option("--hidden", tr_hidden, "hidden layer widths");
  tr->add_option("--repr-dim", tr_repr, "representation dimension M");

  // dump-repr
  std::string dr_checkpoint, dr_data, dr_layer = "repr";
  CLI::App* dr = app.add_subcommand("dump-repr", "encode inputs through f");
  add_common(dr, flags);
  dr->add_option("--checkpoint", dr_checkpoint)->required();
  dr->add_option("--data", dr_data, "input matrix CSV")->required();
  dr->add_option("--layer", dr_layer, "repr | hidden1 | hidden2 ...");

  // analyze
  std::string an_x, an_y;
  int an_k = 0;
  bool an_fit = false;
  CLI::App* an = app.add_subcommand("analyze", "CCA/SVCCA between two dumps");
  add_common(an, flags);
  an->add_option("--x", an_x)->required();
  an->add_option("--y", an_y)->required();
  an->add_option("--k", an_k, "SVCCA truncation (0 = plain CCA)");
  an->add_flag("--fit-map", an_fit, "also fit the least-squares linear map");

  // verify
  std::string vf_experiment = "simulation";
  double vf_min_cca = 0.95, vf_max_ratio = 0.5;
  CLI::App* vf = app.add_subcommand("verify", "end-to-end identifiability check");
  add_common(vf, flags);
  vf->add_option("--experiment", vf_experiment, "simulation | nplm_fig1");
  vf->add_option("--min-cca", vf_min_cca, "pass threshold for simulation");
  vf->add_option("--max-ratio", vf_max_ratio, "pass threshold for nplm_fig1");

  // sweep
  std::string sw_axis = "data_size";
  CLI::App* sw = app.add_subcommand("sweep", "contrastive data/width sweep");
  add_common(sw, flags);
  sw->add_option("--axis", sw_axis, "data_size | width");

  // layerwise
  CLI::App* lw = app.add_subcommand("layerwise", "per-layer SVCCA comparison");
  add_common(lw, flags);

  // report
  CLI::App* rp = app.add_subcommand("report", "summarize report files in --out");
  add_common(rp, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalidSpec;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gen_kind, flags, gd_points, gd_classes, gd_sigma, gd_noise,
                          gd_vocab, gd_length, gd_temperature, gd_images, gd_image_size,
                          gd_latent, gd_ph, gd_pw);
    }
    if (tr->parsed()) return cmd_train(flags, tr_task, tr_data, tr_hidden, tr_repr);
    if (dr->parsed()) return cmd_dump_repr(flags, dr_checkpoint, dr_data, dr_layer);
    if (an->parsed()) return cmd_analyze(flags, an_x, an_y, an_k, an_fit);
    if (vf->parsed()) return cmd_verify(flags, vf_experiment, vf_min_cca, vf_max_ratio);
    if (sw->parsed()) return cmd_sweep(flags, sw_axis);
    if (lw->parsed()) return cmd_layerwise(flags);
    if (rp->parsed()) return cmd_report(flags);
  } catch (const json::exception& e) {
    std::cerr << "invalid spec: " << e.what() << "\n";
    return kExitInvalidSpec;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid spec: " << e.what() << "\n";
    return kExitInvalidSpec;
  } catch (const std::exception& e) {
    std::cerr << "experiment failed: " << e.what() << "\n";
    return kExitExperimentFailure;
  }
  return kExitOk;
}
