#include "linid/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <future>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "linid/io.hpp"

namespace linid {

using nlohmann::json;
namespace fs = std::filesystem;

std::string experiment_name(ExperimentTag tag) {
  switch (tag) {
    case ExperimentTag::kSimulation: return "simulation";
    case ExperimentTag::kContrastiveSweepData: return "contrastive_sweep_data";
    case ExperimentTag::kContrastiveSweepWidth: return "contrastive_sweep_width";
    case ExperimentTag::kLayerwise: return "layerwise";
    case ExperimentTag::kNplmFig1: return "nplm_fig1";
  }
  throw std::invalid_argument("unknown experiment tag");
}

ExperimentTag experiment_from_name(const std::string& name) {
  if (name == "simulation") return ExperimentTag::kSimulation;
  if (name == "contrastive_sweep_data") return ExperimentTag::kContrastiveSweepData;
  if (name == "contrastive_sweep_width") return ExperimentTag::kContrastiveSweepWidth;
  if (name == "layerwise") return ExperimentTag::kLayerwise;
  if (name == "nplm_fig1") return ExperimentTag::kNplmFig1;
  throw std::invalid_argument("unknown experiment: " + name);
}

ExperimentSpec default_spec(ExperimentTag tag) {
  ExperimentSpec spec;
  spec.tag = tag;

  spec.teacher_config.task = Task::kSupervised;
  spec.teacher_config.learning_rate = 1e-4;
  spec.teacher_config.max_iters = 12000;
  spec.teacher_config.batch_size = 128;
  spec.teacher_config.eval_interval = 500;
  spec.teacher_config.early_stop_patience = 8;

  spec.student_config = spec.teacher_config;
  spec.student_config.learning_rate = 1e-3;
  spec.student_config.max_iters = 20000;
  spec.student_config.early_stop_patience = 10;

  spec.contrastive_config.task = Task::kContrastive;
  spec.contrastive_config.learning_rate = 1e-3;
  spec.contrastive_config.max_iters = 1200;
  spec.contrastive_config.batch_size = 64;
  spec.contrastive_config.eval_interval = 200;
  spec.contrastive_config.early_stop_patience = 5;

  spec.layerwise_config.task = Task::kNextToken;
  spec.layerwise_config.learning_rate = 1e-3;
  spec.layerwise_config.max_iters = 4000;
  spec.layerwise_config.batch_size = 128;
  spec.layerwise_config.eval_interval = 500;
  spec.layerwise_config.early_stop_patience = 6;

  spec.nplm_config.task = Task::kNextToken;
  spec.nplm_config.learning_rate = 5e-3;
  spec.nplm_config.max_iters = 5000;
  spec.nplm_config.batch_size = 128;
  spec.nplm_config.eval_interval = 500;
  spec.nplm_config.early_stop_patience = 6;

  if (tag == ExperimentTag::kContrastiveSweepData ||
      tag == ExperimentTag::kContrastiveSweepWidth) {
    spec.replicates = 5;  // pairs per point
  }
  if (tag == ExperimentTag::kLayerwise) spec.replicates = 4;
  return spec;
}

namespace {

json config_json(const TrainConfig& c) { return json::parse(train_config_to_json(c)); }

TrainConfig config_from(const json& j, const TrainConfig& base) {
  json merged = config_json(base);
  merged.update(j);
  return train_config_from_json(merged.dump());
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> ranks_of(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return v[a] < v[b];
  });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Deterministic seed mixing for derived runs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

EmbeddingTable make_embedding(int labels, int repr_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w = Matrix::NullaryExpr(labels, repr_dim,
                                 [&](Eigen::Index, Eigen::Index) { return normal(rng); });
  w /= std::sqrt(static_cast<double>(repr_dim));
  return EmbeddingTable{std::move(w)};
}

void run_indexed(int count, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  const int workers = std::min(jobs, count);
  std::vector<std::future<void>> futures;
  futures.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    }));
  }
  for (auto& f : futures) f.get();  // rethrows worker exceptions
}

double mean_cca_between(const Matrix& a, const Matrix& b) {
  ReprDump x{a, {}};
  ReprDump y{b, {}};
  return cca(x, y).mean_rho;
}

Matrix encode_context_encoder(const CanonicalModel& model, const Matrix& inputs) {
  if (const Mlp* gm = std::get_if<Mlp>(&model.g)) return gm->forward(inputs);
  if (std::holds_alternative<SharedWithF>(model.g)) return encode_f(model, inputs);
  throw std::invalid_argument("context encoder CCA needs an encoder-style g");
}

json recovery_json(const RecoveryReport& r) {
  json map = json::array();
  for (Eigen::Index i = 0; i < r.map.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < r.map.cols(); ++j) row.push_back(r.map(i, j));
    map.push_back(row);
  }
  return {{"map", map}, {"residual", r.residual}, {"condition", r.condition}};
}

void write_report(const ExperimentSpec& spec, const std::string& name, json body) {
  fs::create_directories(spec.out_dir);
  body["spec"] = json::parse(spec_to_json(spec));  // full resolved provenance
  write_text_file((fs::path(spec.out_dir) / name).string(), body.dump(2) + "\n");
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman: need two equally sized series");
  }
  const std::vector<double> ra = ranks_of(a);
  const std::vector<double> rb = ranks_of(b);
  const double ma = mean_of(ra), mb = mean_of(rb);
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

std::string spec_to_json(const ExperimentSpec& s) {
  const json j = {
      {"experiment", experiment_name(s.tag)},
      {"replicates", s.replicates},
      {"seed", s.seed},
      {"out_dir", s.out_dir},
      {"jobs", s.jobs},
      {"render_svg", s.render_svg},
      {"simulation",
       {{"points", s.sim_points},
        {"classes", s.sim_classes},
        {"sigma", s.sim_sigma},
        {"noise_dims", s.sim_noise_dims},
        {"repr_dim", s.sim_repr_dim},
        {"hidden", s.sim_hidden},
        {"teacher_config", config_json(s.teacher_config)},
        {"student_config", config_json(s.student_config)}}},
      {"contrastive",
       {{"cifar_path", s.cifar_path},
        {"images", s.con_images},
        {"image_size", s.con_image_size},
        {"latent_dim", s.con_latent_dim},
        {"patch_height", s.con_patch.height},
        {"patch_width", s.con_patch.width},
        {"repr_dim", s.con_repr_dim},
        {"default_width", s.con_default_width},
        {"depth", s.con_depth},
        {"data_fractions", s.con_data_fractions},
        {"widths", s.con_widths},
        {"config", config_json(s.contrastive_config)}}},
      {"layerwise",
       {{"vocab", s.lw_vocab},
        {"corpus_len", s.lw_corpus_len},
        {"context", s.lw_context},
        {"models", s.lw_models},
        {"hidden", s.lw_hidden},
        {"repr_dim", s.lw_repr_dim},
        {"k_list", s.lw_k_list},
        {"eval_points", s.lw_eval_points},
        {"config", config_json(s.layerwise_config)}}},
      {"nplm",
       {{"vocab", s.np_vocab},
        {"corpus_len", s.np_corpus_len},
        {"context", s.np_context},
        {"repr_dim", s.np_repr_dim},
        {"config", config_json(s.nplm_config)}}},
  };
  return j.dump(2) + "\n";
}

ExperimentSpec spec_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  ExperimentSpec s = default_spec(
      experiment_from_name(j.value("experiment", std::string("simulation"))));
  s.replicates = j.value("replicates", s.replicates);
  s.seed = j.value("seed", s.seed);
  s.out_dir = j.value("out_dir", s.out_dir);
  s.jobs = j.value("jobs", s.jobs);
  s.render_svg = j.value("render_svg", s.render_svg);
  if (j.contains("simulation")) {
    const json& c = j.at("simulation");
    s.sim_points = c.value("points", s.sim_points);
    s.sim_classes = c.value("classes", s.sim_classes);
    s.sim_sigma = c.value("sigma", s.sim_sigma);
    s.sim_noise_dims = c.value("noise_dims", s.sim_noise_dims);
    s.sim_repr_dim = c.value("repr_dim", s.sim_repr_dim);
    s.sim_hidden = c.value("hidden", s.sim_hidden);
    if (c.contains("teacher_config"))
      s.teacher_config = config_from(c.at("teacher_config"), s.teacher_config);
    if (c.contains("student_config"))
      s.student_config = config_from(c.at("student_config"), s.student_config);
  }
  if (j.contains("contrastive")) {
    const json& c = j.at("contrastive");
    s.cifar_path = c.value("cifar_path", s.cifar_path);
    s.con_images = c.value("images", s.con_images);
    s.con_image_size = c.value("image_size", s.con_image_size);
    s.con_latent_dim = c.value("latent_dim", s.con_latent_dim);
    s.con_patch.height = c.value("patch_height", s.con_patch.height);
    s.con_patch.width = c.value("patch_width", s.con_patch.width);
    s.con_repr_dim = c.value("repr_dim", s.con_repr_dim);
    s.con_default_width = c.value("default_width", s.con_default_width);
    s.con_depth = c.value("depth", s.con_depth);
    s.con_data_fractions = c.value("data_fractions", s.con_data_fractions);
    s.con_widths = c.value("widths", s.con_widths);
    if (c.contains("config"))
      s.contrastive_config = config_from(c.at("config"), s.contrastive_config);
  }
  if (j.contains("layerwise")) {
    const json& c = j.at("layerwise");
    s.lw_vocab = c.value("vocab", s.lw_vocab);
    s.lw_corpus_len = c.value("corpus_len", s.lw_corpus_len);
    s.lw_context = c.value("context", s.lw_context);
    s.lw_models = c.value("models", s.lw_models);
    s.lw_hidden = c.value("hidden", s.lw_hidden);
    s.lw_repr_dim = c.value("repr_dim", s.lw_repr_dim);
    s.lw_k_list = c.value("k_list", s.lw_k_list);
    s.lw_eval_points = c.value("eval_points", s.lw_eval_points);
    if (c.contains("config"))
      s.layerwise_config = config_from(c.at("config"), s.layerwise_config);
  }
  if (j.contains("nplm")) {
    const json& c = j.at("nplm");
    s.np_vocab = c.value("vocab", s.np_vocab);
    s.np_corpus_len = c.value("corpus_len", s.np_corpus_len);
    s.np_context = c.value("context", s.np_context);
    s.np_repr_dim = c.value("repr_dim", s.np_repr_dim);
    if (c.contains("config")) s.nplm_config = config_from(c.at("config"), s.nplm_config);
  }
  return s;
}

SimulationResult run_simulation(const ExperimentSpec& spec) {
  if (spec.replicates < 2) {
    throw std::invalid_argument("run_simulation: pairwise analysis needs >= 2 students");
  }
  const int m = spec.sim_repr_dim;
  const int input_dim = 2 + spec.sim_noise_dims;

  const LabeledDataset raw = radial_gaussian(spec.sim_points, spec.sim_classes,
                                             spec.sim_sigma, spec.sim_noise_dims,
                                             mix_seed(spec.seed, 1));

  // Teacher fit on the radial pre-labels defines the data-generating process.
  CanonicalModel teacher_init;
  teacher_init.f = make_mlp(input_dim, spec.sim_hidden, m, Activation::kRelu,
                            mix_seed(spec.seed, 2));
  teacher_init.g = make_embedding(spec.sim_classes, m, mix_seed(spec.seed, 3));
  TrainConfig teacher_cfg = spec.teacher_config;
  teacher_cfg.seed = mix_seed(spec.seed, 4);
  const CanonicalModel teacher = train(teacher_init, raw, teacher_cfg).model;

  LabeledDataset relabeled = raw;
  // Sampling (rather than argmax) keeps the relabeled conditional inside the
  // softmax family, so the students' optimum matches the teacher exactly.
  relabeled.labels = teacher_sample_labels(teacher, raw.inputs, mix_seed(spec.seed, 6));

  // Fresh evaluation subset from the same distribution.
  const Matrix eval_inputs =
      radial_gaussian(2048, spec.sim_classes, spec.sim_sigma, spec.sim_noise_dims,
                      mix_seed(spec.seed, 5))
          .inputs;

  std::vector<TrainResult> students(spec.replicates);
  run_indexed(spec.replicates, spec.jobs, [&](int r) {
    CanonicalModel init;
    init.f = make_mlp(input_dim, spec.sim_hidden, m, Activation::kRelu,
                      mix_seed(spec.seed, 10 + 2 * r));
    init.g = make_embedding(spec.sim_classes, m, mix_seed(spec.seed, 11 + 2 * r));
    TrainConfig cfg = spec.student_config;
    cfg.seed = mix_seed(spec.seed, 100 + r);
    students[r] = train(init, TrainData{relabeled}, cfg);
  });

  SimulationResult result;

  // Mean CCA trajectory over checkpoints, averaged across student pairs.
  std::size_t common = students[0].trace.checkpoints.size();
  for (const TrainResult& s : students) {
    common = std::min(common, s.trace.checkpoints.size());
  }
  for (std::size_t t = 0; t < common; ++t) {
    std::vector<double> rhos;
    for (int i = 0; i < spec.replicates; ++i) {
      for (int j = i + 1; j < spec.replicates; ++j) {
        rhos.push_back(mean_cca_between(
            encode_f(students[i].trace.checkpoints[t].model, eval_inputs),
            encode_f(students[j].trace.checkpoints[t].model, eval_inputs)));
      }
    }
    result.checkpoint_iterations.push_back(students[0].trace.checkpoints[t].iteration);
    result.mean_cca_trajectory.push_back(mean_of(rhos));
  }

  std::vector<double> final_rhos;
  for (int i = 0; i < spec.replicates; ++i) {
    for (int j = i + 1; j < spec.replicates; ++j) {
      final_rhos.push_back(mean_cca_between(encode_f(students[i].model, eval_inputs),
                                            encode_f(students[j].model, eval_inputs)));
    }
  }
  result.final_mean_cca = mean_of(final_rhos);

  std::vector<Target> targets;
  for (int k = 0; k < spec.sim_classes; ++k) targets.emplace_back(k);

  try {
    result.diversity = diversity_check_f(students[0].model, targets, 50);
    result.diversity_satisfied = result.diversity->satisfied;
    if (!result.diversity_satisfied) {
      result.diversity_note = "difference matrix not full rank or ill conditioned";
    }
  } catch (const InsufficientDiversityError& e) {
    result.diversity_satisfied = false;
    result.diversity_note = e.what();
  }

  // The recovery oracles are exact only when the two models are exactly
  // linearly related; on trained students they can reject, which is a
  // finding to report rather than a failure of the run.
  auto append_note = [&](const std::string& what) {
    if (!result.diversity_note.empty()) result.diversity_note += "; ";
    result.diversity_note += what;
  };
  if (result.diversity_satisfied) {
    try {
      result.theorem1 = theorem1_recover(students[0].model, students[1].model, targets,
                                         eval_inputs);
    } catch (const std::runtime_error& e) {
      append_note(e.what());
    }
    try {
      const int ctx_rows =
          std::min(4 * (m + 1) + 8, static_cast<int>(eval_inputs.rows()));
      std::vector<int> ctx_indices(ctx_rows);
      std::iota(ctx_indices.begin(), ctx_indices.end(), 0);
      LabeledDataset eval_ds;
      eval_ds.inputs = eval_inputs;
      eval_ds.labels.assign(eval_inputs.rows(), 0);
      eval_ds.class_count = spec.sim_classes;
      result.context = context_recover(
          students[0].model, students[1].model,
          build_candidates(Task::kSupervised, TrainData{eval_ds}, ctx_indices));
    } catch (const std::runtime_error& e) {
      append_note(e.what());
    }
  }
  result.linear_map = fit_linear_map(
      ReprDump{encode_f(students[1].model, eval_inputs), {}},
      ReprDump{encode_f(students[0].model, eval_inputs), {}});

  // Reports.
  fs::create_directories(spec.out_dir);
  Matrix trajectory(result.checkpoint_iterations.size(), 2);
  for (std::size_t t = 0; t < result.checkpoint_iterations.size(); ++t) {
    trajectory(t, 0) = result.checkpoint_iterations[t];
    trajectory(t, 1) = result.mean_cca_trajectory[t];
  }
  save_matrix_csv((fs::path(spec.out_dir) / "simulation_trajectory.csv").string(),
                  trajectory, {"iteration", "mean_cca"});

  json body = {{"final_mean_cca", result.final_mean_cca},
               {"diversity_satisfied", result.diversity_satisfied},
               {"diversity_note", result.diversity_note}};
  if (result.diversity) {
    body["diversity"] = {{"rank", result.diversity->rank},
                         {"condition", result.diversity->condition},
                         {"satisfied", result.diversity->satisfied}};
  }
  if (result.theorem1) body["theorem1"] = recovery_json(*result.theorem1);
  if (result.context) body["context"] = recovery_json(*result.context);
  if (result.linear_map) body["linear_map"] = recovery_json(*result.linear_map);
  write_report(spec, "simulation_report.json", std::move(body));

  if (spec.render_svg) {
    PlotSeries series{"mean CCA", {}, {}};
    for (std::size_t t = 0; t < result.checkpoint_iterations.size(); ++t) {
      series.x.push_back(result.checkpoint_iterations[t]);
      series.y.push_back(result.mean_cca_trajectory[t]);
    }
    write_svg_plot((fs::path(spec.out_dir) / "simulation_trajectory.svg").string(),
                   "student CCA over training", {series});
  }
  return result;
}

SweepResult run_contrastive_sweep(const ExperimentSpec& spec, SweepAxis axis) {
  if (spec.replicates < 2) {
    throw std::invalid_argument("run_contrastive_sweep: need >= 2 pairs per point");
  }
  const ImageSet train_images =
      spec.cifar_path.empty()
          ? synthetic_images(spec.con_images, spec.con_image_size, spec.con_image_size,
                             spec.con_latent_dim, mix_seed(spec.seed, 21))
          : load_cifar10(spec.cifar_path);
  const ImageSet eval_images =
      spec.cifar_path.empty()
          ? synthetic_images(600, spec.con_image_size, spec.con_image_size,
                             spec.con_latent_dim, mix_seed(spec.seed, 22))
          : load_cifar10(spec.cifar_path);

  AugmentConfig augment;
  const PatchPairSet full_pairs =
      patch_pairs(train_images, spec.con_patch, augment, mix_seed(spec.seed, 23));
  AugmentConfig no_augment;
  no_augment.enabled = false;
  const PatchPairSet eval_pairs =
      patch_pairs(eval_images, spec.con_patch, no_augment, mix_seed(spec.seed, 24));
  const int d = static_cast<int>(full_pairs.top.cols());

  std::vector<double> axis_values;
  if (axis == SweepAxis::kDataSize) {
    axis_values.assign(spec.con_data_fractions.begin(), spec.con_data_fractions.end());
  } else {
    for (int w : spec.con_widths) axis_values.push_back(w);
  }

  SweepResult result;
  result.axis = axis;
  result.points.resize(axis_values.size());

  struct Job {
    int point;
    int pair;
  };
  std::vector<Job> jobs_list;
  for (std::size_t p = 0; p < axis_values.size(); ++p) {
    for (int r = 0; r < spec.replicates; ++r) jobs_list.push_back({static_cast<int>(p), r});
  }
  std::vector<std::vector<double>> cca_f(axis_values.size()),
      cca_g(axis_values.size());
  for (std::size_t p = 0; p < axis_values.size(); ++p) {
    cca_f[p].resize(spec.replicates);
    cca_g[p].resize(spec.replicates);
  }

  run_indexed(static_cast<int>(jobs_list.size()), spec.jobs, [&](int idx) {
    const Job job = jobs_list[idx];
    const double value = axis_values[job.point];

    PatchPairSet data = full_pairs;
    int width = spec.con_default_width;
    if (axis == SweepAxis::kDataSize) {
      const int rows = std::max(64, static_cast<int>(value * full_pairs.top.rows()));
      data.top = full_pairs.top.topRows(rows);
      data.bottom = full_pairs.bottom.topRows(rows);
      data.source.assign(full_pairs.source.begin(), full_pairs.source.begin() + rows);
    } else {
      width = static_cast<int>(value);
    }
    const std::vector<int> hidden(spec.con_depth, width);

    CanonicalModel models[2];
    for (int side = 0; side < 2; ++side) {
      const std::uint64_t s =
          mix_seed(spec.seed, 1000 + 10 * (job.point * spec.replicates + job.pair) + side);
      CanonicalModel model;
      model.f = make_mlp(d, hidden, spec.con_repr_dim, Activation::kRelu, s);
      model.g = make_mlp(d, hidden, spec.con_repr_dim, Activation::kRelu, mix_seed(s, 7));
      TrainConfig cfg = spec.contrastive_config;
      cfg.seed = mix_seed(s, 13);
      models[side] = train(model, TrainData{data}, cfg).model;
    }
    cca_f[job.point][job.pair] = mean_cca_between(encode_f(models[0], eval_pairs.top),
                                                  encode_f(models[1], eval_pairs.top));
    cca_g[job.point][job.pair] =
        mean_cca_between(encode_context_encoder(models[0], eval_pairs.bottom),
                         encode_context_encoder(models[1], eval_pairs.bottom));
  });

  std::vector<double> medians_f, medians_g;
  for (std::size_t p = 0; p < axis_values.size(); ++p) {
    SweepPoint& point = result.points[p];
    point.axis_value = axis_values[p];
    point.pair_cca_f = cca_f[p];
    point.pair_cca_g = cca_g[p];
    point.mean_f = mean_of(cca_f[p]);
    point.stderr_f = stderr_of(cca_f[p]);
    point.mean_g = mean_of(cca_g[p]);
    point.stderr_g = stderr_of(cca_g[p]);
    point.median_f = median_of(cca_f[p]);
    medians_f.push_back(point.median_f);
    medians_g.push_back(median_of(cca_g[p]));
  }
  result.spearman_f = spearman(axis_values, medians_f);
  result.spearman_g = spearman(axis_values, medians_g);

  // Reports.
  const std::string stem =
      axis == SweepAxis::kDataSize ? "sweep_data_size" : "sweep_width";
  Matrix table(result.points.size(), 5);
  for (std::size_t p = 0; p < result.points.size(); ++p) {
    const SweepPoint& point = result.points[p];
    table(p, 0) = point.axis_value;
    table(p, 1) = point.mean_f;
    table(p, 2) = point.stderr_f;
    table(p, 3) = point.mean_g;
    table(p, 4) = point.stderr_g;
  }
  fs::create_directories(spec.out_dir);
  save_matrix_csv((fs::path(spec.out_dir) / (stem + ".csv")).string(), table,
                  {"axis", "mean_cca_f", "stderr_f", "mean_cca_g", "stderr_g"});
  json body = {{"axis", axis == SweepAxis::kDataSize ? "data_size" : "width"},
               {"spearman_f", result.spearman_f},
               {"spearman_g", result.spearman_g},
               {"desk_scale_notes",
                "iteration counts and width ceiling reduced from the reference "
                "configuration for minutes-scale CPU runtime"}};
  write_report(spec, stem + "_report.json", std::move(body));

  if (spec.render_svg) {
    PlotSeries sf{"f", axis_values, medians_f};
    PlotSeries sg{"g", axis_values, medians_g};
    write_svg_plot((fs::path(spec.out_dir) / (stem + ".svg")).string(),
                   "linear similarity vs " + std::string(axis == SweepAxis::kDataSize
                                                             ? "data size"
                                                             : "width"),
                   {sf, sg});
  }
  return result;
}

LayerwiseResult run_layerwise(const ExperimentSpec& spec) {
  const int n_models = std::max(spec.lw_models, spec.replicates);
  if (n_models < 2) throw std::invalid_argument("run_layerwise: need >= 2 models");
  const TokenCorpus corpus = markov_corpus(spec.lw_vocab, spec.lw_corpus_len, 1.0,
                                           mix_seed(spec.seed, 31));
  const int input_width = spec.lw_context * spec.lw_vocab;

  std::vector<CanonicalModel> models(n_models);
  run_indexed(n_models, spec.jobs, [&](int r) {
    TokenCorpus data = corpus;
    data.context_window = spec.lw_context;
    CanonicalModel init;
    init.f = make_mlp(input_width, spec.lw_hidden, spec.lw_repr_dim, Activation::kRelu,
                      mix_seed(spec.seed, 40 + 2 * r));
    init.g = make_embedding(spec.lw_vocab, spec.lw_repr_dim,
                            mix_seed(spec.seed, 41 + 2 * r));
    TrainConfig cfg = spec.layerwise_config;
    cfg.seed = mix_seed(spec.seed, 200 + r);
    models[r] = train(init, TrainData{data}, cfg).model;
  });

  // Shared evaluation contexts.
  TokenCorpus eval_corpus = corpus;
  eval_corpus.context_window = spec.lw_context;
  std::mt19937_64 rng(mix_seed(spec.seed, 32));
  const int positions = static_cast<int>(corpus.tokens.size()) - spec.lw_context;
  std::uniform_int_distribution<int> pick(spec.lw_context, positions - 1);
  const int n_eval = std::min(spec.lw_eval_points, positions);
  Matrix eval_inputs(n_eval, input_width);
  for (int i = 0; i < n_eval; ++i) {
    eval_inputs.row(i) = encode_context(eval_corpus, pick(rng)).transpose();
  }

  // Per-model layer captures: hidden layers then the final representation.
  std::vector<std::vector<Matrix>> layer_reprs(n_models);
  for (int r = 0; r < n_models; ++r) {
    std::vector<Matrix> hidden;
    Matrix repr = encode_f_capture(models[r], eval_inputs, &hidden);
    layer_reprs[r] = std::move(hidden);
    layer_reprs[r].push_back(std::move(repr));
  }

  LayerwiseResult result;
  const int n_layers = static_cast<int>(layer_reprs[0].size());
  for (int l = 0; l + 1 < n_layers; ++l) {
    result.layer_names.push_back("hidden" + std::to_string(l + 1));
  }
  result.layer_names.push_back("repr");
  result.k_list = spec.lw_k_list;
  result.mean_rho = Matrix::Zero(n_layers, spec.lw_k_list.size());

  for (int l = 0; l < n_layers; ++l) {
    for (std::size_t ki = 0; ki < spec.lw_k_list.size(); ++ki) {
      const int k = spec.lw_k_list[ki];
      std::vector<double> rhos;
      for (int i = 0; i < n_models; ++i) {
        for (int j = i + 1; j < n_models; ++j) {
          ReprDump x{layer_reprs[i][l], {}};
          ReprDump y{layer_reprs[j][l], {}};
          rhos.push_back(svcca(x, y, k).mean_rho);
        }
      }
      result.mean_rho(l, ki) = mean_of(rhos);
    }
  }

  fs::create_directories(spec.out_dir);
  Matrix table(n_layers, spec.lw_k_list.size() + 1);
  std::vector<std::string> header = {"layer_index"};
  for (int k : spec.lw_k_list) header.push_back("k" + std::to_string(k));
  for (int l = 0; l < n_layers; ++l) {
    table(l, 0) = l;
    for (std::size_t ki = 0; ki < spec.lw_k_list.size(); ++ki) {
      table(l, ki + 1) = result.mean_rho(l, ki);
    }
  }
  save_matrix_csv((fs::path(spec.out_dir) / "layerwise.csv").string(), table, header);
  json body = {{"layers", result.layer_names}, {"k_list", result.k_list}};
  write_report(spec, "layerwise_report.json", std::move(body));

  if (spec.render_svg) {
    std::vector<PlotSeries> series;
    for (std::size_t ki = 0; ki < spec.lw_k_list.size(); ++ki) {
      PlotSeries s{"k=" + std::to_string(spec.lw_k_list[ki]), {}, {}};
      for (int l = 0; l < n_layers; ++l) {
        s.x.push_back(l);
        s.y.push_back(result.mean_rho(l, ki));
      }
      series.push_back(std::move(s));
    }
    write_svg_plot((fs::path(spec.out_dir) / "layerwise.svg").string(),
                   "mean SVCCA by layer", series);
  }
  return result;
}

NplmResult run_nplm_fig1(const ExperimentSpec& spec) {
  if (spec.np_vocab < spec.np_repr_dim + 1) {
    throw InsufficientDiversityError(
        "run_nplm_fig1: vocabulary smaller than M+1 distinct targets");
  }
  TokenCorpus corpus = markov_corpus(spec.np_vocab, spec.np_corpus_len, 1.0,
                                     mix_seed(spec.seed, 51));
  corpus.context_window = spec.np_context;
  const int input_width = spec.np_context * spec.np_vocab;

  std::vector<CanonicalModel> models(2);
  run_indexed(2, spec.jobs, [&](int r) {
    CanonicalModel init;
    // Log-bilinear: the context representation is an affine combination of
    // per-position context word vectors, scored against target vectors.
    init.f = make_mlp(input_width, {}, spec.np_repr_dim, Activation::kIdentity,
                      mix_seed(spec.seed, 60 + r));
    init.g = make_embedding(spec.np_vocab, spec.np_repr_dim, mix_seed(spec.seed, 62 + r));
    TrainConfig cfg = spec.nplm_config;
    cfg.seed = mix_seed(spec.seed, 300 + r);
    models[r] = train(init, TrainData{corpus}, cfg).model;
  });

  const Matrix g1 = std::get<EmbeddingTable>(models[0].g).weights;
  const Matrix g2 = std::get<EmbeddingTable>(models[1].g).weights;

  NplmResult result;
  result.pre_discrepancy = (g1 - g2).norm() / std::max(g2.norm(), 1e-12);
  const RecoveryReport fit = fit_linear_map(ReprDump{g1, {}}, ReprDump{g2, {}});
  result.post_residual = fit.residual;
  result.map = fit.map;
  result.ratio = result.pre_discrepancy > 1e-12
                     ? result.post_residual / result.pre_discrepancy
                     : 0.0;

  fs::create_directories(spec.out_dir);
  const Matrix aligned = g1 * fit.map.transpose();
  Matrix table(spec.np_vocab, 7);
  for (int w = 0; w < spec.np_vocab; ++w) {
    table(w, 0) = w;
    table(w, 1) = g1(w, 0);
    table(w, 2) = g1(w, 1);
    table(w, 3) = g2(w, 0);
    table(w, 4) = g2(w, 1);
    table(w, 5) = aligned(w, 0);
    table(w, 6) = aligned(w, 1);
  }
  save_matrix_csv((fs::path(spec.out_dir) / "nplm_embeddings.csv").string(), table,
                  {"word", "m1_x", "m1_y", "m2_x", "m2_y", "aligned1_x", "aligned1_y"});
  json body = {{"pre_discrepancy", result.pre_discrepancy},
               {"post_residual", result.post_residual},
               {"ratio", result.ratio}};
  write_report(spec, "nplm_report.json", std::move(body));

  if (spec.render_svg) {
    PlotSeries s1{"model1", {}, {}}, s2{"model2", {}, {}}, s3{"aligned", {}, {}};
    for (int w = 0; w < spec.np_vocab; ++w) {
      s1.x.push_back(g1(w, 0));
      s1.y.push_back(g1(w, 1));
      s2.x.push_back(g2(w, 0));
      s2.y.push_back(g2(w, 1));
      s3.x.push_back(aligned(w, 0));
      s3.y.push_back(aligned(w, 1));
    }
    write_svg_plot((fs::path(spec.out_dir) / "nplm_embeddings.svg").string(),
                   "embedding alignment", {s1, s2, s3}, /*scatter=*/true);
  }
  return result;
}

}  // namespace linid
