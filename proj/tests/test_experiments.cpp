#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "linid/experiments.hpp"

using namespace linid;

TEST_CASE("experiment names round trip") {
  for (ExperimentTag tag :
       {ExperimentTag::kSimulation, ExperimentTag::kContrastiveSweepData,
        ExperimentTag::kContrastiveSweepWidth, ExperimentTag::kLayerwise,
        ExperimentTag::kNplmFig1}) {
    CHECK(experiment_from_name(experiment_name(tag)) == tag);
  }
  CHECK_THROWS(experiment_from_name("bogus"));
}

TEST_CASE("defaults encode the reference configuration") {
  const ExperimentSpec spec = default_spec(ExperimentTag::kSimulation);
  CHECK(spec.sim_classes == 18);
  CHECK(spec.sim_sigma == doctest::Approx(3.0));
  CHECK(spec.sim_noise_dims == 20);
  CHECK(spec.sim_repr_dim == 2);
  CHECK(spec.teacher_config.learning_rate == doctest::Approx(1e-4));
  CHECK(spec.student_config.learning_rate == doctest::Approx(1e-3));
  CHECK(spec.student_config.max_iters <= 20000);
  CHECK(spec.replicates >= 2);

  const ExperimentSpec sweep = default_spec(ExperimentTag::kContrastiveSweepData);
  CHECK(sweep.replicates == 5);  // pairs per point
  CHECK(sweep.con_data_fractions.size() >= 4);
  CHECK(sweep.con_widths.size() >= 3);

  const ExperimentSpec lw = default_spec(ExperimentTag::kLayerwise);
  CHECK(lw.lw_models >= 4);
  CHECK(lw.lw_k_list == std::vector<int>{4, 8, 16});

  const ExperimentSpec np = default_spec(ExperimentTag::kNplmFig1);
  CHECK(np.np_repr_dim == 2);
}

TEST_CASE("specs round trip through json with overrides intact") {
  ExperimentSpec spec = default_spec(ExperimentTag::kContrastiveSweepWidth);
  spec.seed = 77;
  spec.out_dir = "elsewhere";
  spec.jobs = 3;
  spec.replicates = 2;
  spec.con_widths = {8, 32};
  spec.con_images = 123;
  spec.contrastive_config.max_iters = 55;
  spec.sim_hidden = {10, 11};
  spec.lw_vocab = 24;
  spec.np_corpus_len = 999;

  const ExperimentSpec loaded = spec_from_json(spec_to_json(spec));
  CHECK(loaded.tag == spec.tag);
  CHECK(loaded.seed == 77);
  CHECK(loaded.out_dir == "elsewhere");
  CHECK(loaded.jobs == 3);
  CHECK(loaded.replicates == 2);
  CHECK(loaded.con_widths == std::vector<int>{8, 32});
  CHECK(loaded.con_images == 123);
  CHECK(loaded.contrastive_config.max_iters == 55);
  CHECK(loaded.sim_hidden == std::vector<int>{10, 11});
  CHECK(loaded.lw_vocab == 24);
  CHECK(loaded.np_corpus_len == 999);
}

TEST_CASE("partial specs fall back to defaults") {
  const ExperimentSpec spec =
      spec_from_json(R"({"experiment": "simulation", "seed": 5})");
  CHECK(spec.tag == ExperimentTag::kSimulation);
  CHECK(spec.seed == 5);
  CHECK(spec.sim_classes == 18);
}

TEST_CASE("spearman behaves like a rank correlation") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Monotone but nonlinear still ranks perfectly.
  CHECK(spearman({1, 2, 3, 4}, {1, 8, 27, 64}) == doctest::Approx(1.0));
  // Ties get averaged ranks rather than breaking the computation.
  const double tied = spearman({1, 2, 2, 4}, {1, 2, 3, 4});
  CHECK(tied > 0.8);
  CHECK(tied <= 1.0);
  CHECK_THROWS(spearman({1.0}, {1.0}));
  CHECK_THROWS(spearman({1, 2}, {1, 2, 3}));
}
