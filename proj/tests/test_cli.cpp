#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "attrib/ensemble_io.hpp"
#include "attrib/errors.hpp"
#include "attrib/runner.hpp"
#include "attrib/score_io.hpp"

using namespace attrib;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("attrib_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string base_config(const fs::path& out) {
  return "[run]\ncommand = eval-lds\nout = " + out.string() +
         "\n[data]\nsource = synth\nnum_classes = 3\ntrain_size = 40\ntest_size = 6\nsynth_dim = 3\n"
         "synth_separation = 3\n[model]\nfamily = lr\n[train]\nepochs = 4\nbatch_size = 8\n"
         "learning_rates = 0.1\n[attribution]\nmethod = trak\nensemble_size = 1\nprojection_dim = 8\n"
         "[evaluation]\nsubsets = 8\n";
}

RunConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_run_config(is, "cfg.ini");
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Runner, RerunReusesByteIdenticalArtifacts) {
  const fs::path out = scratch_dir("rerun");
  const RunConfig cfg = parse(base_config(out));
  std::ostringstream o1, o2, log;
  const RunOutcome a = run(cfg, o1, log);
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_FALSE(a.reused);
  EXPECT_TRUE(manifest_valid(a.directory));
  const std::string lds_before = slurp(a.directory / "lds.csv");
  const RunOutcome b = run(cfg, o2, log);
  EXPECT_TRUE(b.reused);
  EXPECT_EQ(a.directory, b.directory);
  EXPECT_EQ(o1.str(), o2.str());
  EXPECT_EQ(lds_before, slurp(b.directory / "lds.csv"));
}

TEST(Runner, TamperedArtifactInvalidatesManifest) {
  const fs::path out = scratch_dir("tamper");
  const RunConfig cfg = parse(base_config(out));
  std::ostringstream o, log;
  const RunOutcome a = run(cfg, o, log);
  std::ofstream(a.directory / "lds.csv", std::ios::app) << "x";
  EXPECT_FALSE(manifest_valid(a.directory));
  EXPECT_FALSE(run(cfg, o, log).reused);
  EXPECT_TRUE(manifest_valid(a.directory));
}

TEST(Runner, WorkerCountDoesNotChangeDigest) {
  const fs::path out = scratch_dir("workers");
  RunConfig one = parse(base_config(out) + "[run]\nworkers = 1\n");
  RunConfig many = parse(base_config(out) + "[run]\nworkers = 8\n");
  EXPECT_EQ(run_digest(one), run_digest(many));
  many.seed = 1;
  EXPECT_NE(run_digest(one), run_digest(many));
}

TEST(Runner, ScoresMatchingSubsetSumsGivePerfectLds) {
  const fs::path out = scratch_dir("perfect");
  const RunConfig cfg = parse(base_config(out));
  std::ostringstream o, log;
  const RunOutcome first = run(cfg, o, log);
  const SubsetEnsemble e = load_ensemble((first.directory / "ensemble.tdae").string());
  ScoreMatrix s = load_scores((first.directory / "scores.tdas").string());

  // Minimum-norm scores whose subset sums reproduce every model output.
  const auto n = static_cast<Eigen::Index>(s.train_ids.size());
  Matrix membership = Matrix::Zero(static_cast<Eigen::Index>(e.size()), n);
  for (std::size_t k = 0; k < e.size(); ++k)
    for (auto id : e.subsets[k]) {
      const auto at = std::find(s.train_ids.begin(), s.train_ids.end(), id) - s.train_ids.begin();
      membership(static_cast<Eigen::Index>(k), at) = 1.0;
    }
  const Matrix w = membership.completeOrthogonalDecomposition().solve(e.outputs);
  s.scores = w.transpose();
  const fs::path scores_path = out / "crafted.tdas";
  const fs::path ensemble_path = out / "given.tdae";
  save_scores(scores_path.string(), s);
  save_ensemble(ensemble_path.string(), e);

  RunConfig crafted = cfg;
  crafted.scores_file = scores_path.string();
  crafted.ensemble_file = ensemble_path.string();
  const RunOutcome r = run(crafted, o, log);
  ASSERT_EQ(r.exit_code, 0);
  std::istringstream csv(slurp(r.directory / "lds.csv"));
  std::string line;
  std::getline(csv, line);
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    if (line.rfind("mean", 0) == 0) continue;
    const double rho = std::stod(line.substr(line.find(',') + 1));
    EXPECT_NEAR(rho, 1.0, 1e-12) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 6u);
}

TEST(Runner, UnknownKeyRejectedBeforeOutput) {
  const fs::path out = scratch_dir("unknown");
  try {
    parse(base_config(out / "never") + "bogus_key = 1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("bogus_key"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(out / "never"));
}
