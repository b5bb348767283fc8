#include "qpexo/pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace qpexo;

namespace {

RunConfig small_run(const std::string& name, std::uint64_t seed = 42) {
  auto cfg = parse_run_config(R"(
[synthetic]
trials_per_class = 2
walking_trials = 1
stair_trials = 1
)");
  cfg.seed = seed;
  cfg.out = std::filesystem::path(::testing::TempDir()) / ("qpexo_" + name);
  std::filesystem::remove_all(cfg.out);
  return cfg;
}

}  // namespace

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(parse_run_config("sed = 4\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[dtw]\nband = 3\nbandwidth = 4\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[nonsense]\n"), ConfigError);
  EXPECT_THROW(parse_run_config("seed = \"x\"\n"), ConfigError);
  EXPECT_THROW(parse_run_config("controller = \"pid\"\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[[broken\n"), ConfigError);
}

TEST(Config, EmptyFileGivesDefaults) {
  const auto cfg = parse_run_config("");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.controller.kind, ControllerKind::eumc);
  EXPECT_DOUBLE_EQ(cfg.actuator.precompression_pct, 50.0);
  const auto j = to_json(cfg);
  EXPECT_EQ(j["seed"], 42);
}

TEST(Pipeline, GenSyntheticIsDeterministicWithExpectedCounts) {
  auto a = small_run("gen_a");
  auto b = small_run("gen_b");
  const auto ma = cmd_gen_synthetic(a);
  cmd_gen_synthetic(b);
  EXPECT_EQ(ma.demos.size(), a.synthetic.squat_demos + 2 * a.synthetic.stoop_demos);
  EXPECT_EQ(ma.trials.size(), 3u * 2u + 1u + 1u);
  EXPECT_EQ(ma.references.size(), 4u);
  for (const auto& e : ma.trials)
    EXPECT_EQ(io::read_file(a.data_path() / e.file), io::read_file(b.data_path() / e.file)) << e.id;
  EXPECT_EQ(io::read_file(a.data_path() / "manifest.json"), io::read_file(b.data_path() / "manifest.json"));

  auto c = small_run("gen_c", 43);
  cmd_gen_synthetic(c);
  EXPECT_NE(io::read_file(a.data_path() / ma.trials[0].file), io::read_file(c.data_path() / ma.trials[0].file));
}

TEST(Pipeline, StoopReferenceLeavesOtherSideUnloaded) {
  const auto ref = lift_reference("stoop_left", {});
  EXPECT_EQ(ref.left.role, Role::supporting);
  EXPECT_EQ(ref.right.role, Role::non_supporting);
  const double left = *std::max_element(ref.left.tau.begin(), ref.left.tau.end());
  const double right = *std::max_element(ref.right.tau.begin(), ref.right.tau.end());
  EXPECT_GT(left, 0.0);
  EXPECT_LT(right, 0.05 * left);
}

TEST(Pipeline, EndToEnd) {
  auto cfg = small_run("e2e");
  cmd_gen_synthetic(cfg);
  const auto db = cmd_train(cfg);
  EXPECT_EQ(db.models.size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(cfg.model_db_path()));
  cmd_utility_build(cfg);
  EXPECT_TRUE(std::filesystem::exists(cfg.utility_db_path()));

  cfg.controller.kind = ControllerKind::pec;
  cmd_simulate(cfg);
  cfg.controller.kind = ControllerKind::umc;
  cmd_simulate(cfg);
  // Same kinematics in both logs; only the controller-dependent columns move.
  const auto pec_csv = io::read_file(cfg.out / "simulate" / "pec" / "squat_00.csv");
  const auto umc_csv = io::read_file(cfg.out / "simulate" / "umc" / "squat_00.csv");
  const auto pec = io::lines(pec_csv);
  const auto umc = io::lines(umc_csv);
  ASSERT_EQ(pec.size(), umc.size());
  for (std::size_t i = 1; i < pec.size(); ++i) {
    const auto p = io::split(pec[i], ',');
    const auto u = io::split(umc[i], ',');
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(p[c], u[c]) << i << ":" << c;
  }

  const auto report = cmd_evaluate(cfg);
  const auto peaks = io::read_file(cfg.out / "evaluate" / "peak_torques.csv");
  EXPECT_EQ(io::lines(peaks).size(), 1 + 3 * 8u);
  EXPECT_EQ(report["summary"]["eumc"]["walking"]["false_positives"], 0);
  EXPECT_EQ(report["trials"].size(), 3 * 8u);
}

TEST(Pipeline, MissingInputsAreValidationErrors) {
  auto cfg = small_run("missing");
  EXPECT_THROW(cmd_train(cfg), ValidationError);
  cfg.controller.kind = ControllerKind::umc;
  EXPECT_THROW(cmd_simulate(cfg), ValidationError);
}
