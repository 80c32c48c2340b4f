#include <sstream>

#include <gtest/gtest.h>

#include "attrib/data_io.hpp"
#include "attrib/errors.hpp"
#include "attrib/scenarios.hpp"

using namespace attrib;

namespace {

TrainingSchedule schedule(std::size_t epochs) {
  TrainingSchedule s;
  s.epochs = epochs;
  s.batch_size = 16;
  s.learning_rates = {0.1};
  return s;
}

Checkpoint mnist_like_target() {
  const auto c = mlp(784, {64, 32}, 10);
  return Checkpoint{c, init_params(c, RngStream(1)), {}};
}

struct Split {
  Dataset train;
  Dataset test;
};

Split toy(std::size_t n = 60) {
  const Dataset all = synth_clusters(n + 12, 4, 3, 3.0, RngStream(8));
  return {slice(all, 0, n), slice(all, n, 12)};
}

}  // namespace

TEST(Access, ExposureTable) {
  EXPECT_EQ(exposure(AccessLevel::FullAccess), (Exposure{true, true, true, true}));
  EXPECT_EQ(exposure(AccessLevel::ArchAndQuery), (Exposure{true, false, false, true}));
  EXPECT_EQ(exposure(AccessLevel::ArchOnly), (Exposure{true, false, false, false}));
  EXPECT_EQ(exposure(AccessLevel::QueryOnly), (Exposure{false, false, false, true}));
  EXPECT_EQ(exposure(AccessLevel::NoAccess), (Exposure{false, false, false, false}));
  EXPECT_EQ(exposure(AccessLevel::NoTraining), (Exposure{true, true, false, false}));
}

TEST(Access, ParseNamesAndTags) {
  EXPECT_EQ(parse_access_level("S3"), AccessLevel::QueryOnly);
  EXPECT_EQ(parse_access_level("archonly"), AccessLevel::ArchOnly);
  EXPECT_EQ(parse_access_level(to_string(AccessLevel::NoTraining)), AccessLevel::NoTraining);
  EXPECT_THROW(parse_access_level("S9"), ConfigError);
}

TEST(Access, ViewCopiesOnlyExposedFields) {
  const Checkpoint t = mnist_like_target();
  for (auto level : {AccessLevel::FullAccess, AccessLevel::ArchAndQuery, AccessLevel::ArchOnly,
                     AccessLevel::QueryOnly, AccessLevel::NoAccess, AccessLevel::NoTraining}) {
    const TargetView v(level, t);
    const Exposure e = exposure(level);
    EXPECT_EQ(v.family().has_value(), e.family);
    EXPECT_EQ(v.config().has_value(), e.hyperparams);
    EXPECT_EQ(v.trained_model().has_value(), e.trained_model);
    EXPECT_EQ(v.query().has_value(), e.query);
    EXPECT_EQ(v.input_dim(), 784u);
    EXPECT_EQ(v.num_classes(), 10u);
  }
}

TEST(ProxyConfig, Examples) {
  const Checkpoint t = mnist_like_target();
  ProxySpec exact{"exact", GuessStrategy::ExactConfig};
  EXPECT_EQ(build_proxy_config(TargetView(AccessLevel::FullAccess, t), exact), t.config);
  ProxySpec wide{"wide", GuessStrategy::SameFamilyPerturbHyperparams};
  wide.width_factors = std::vector<double>{2.0, 1.0};
  EXPECT_EQ(build_proxy_config(TargetView(AccessLevel::FullAccess, t), wide), mlp(784, {128, 32}, 10));
  ProxySpec cross{"lr", GuessStrategy::CrossFamilyHeuristic};
  EXPECT_EQ(build_proxy_config(TargetView(AccessLevel::ArchOnly, t), cross).family, Family::LogisticRegression);
  EXPECT_EQ(build_proxy_config(TargetView(AccessLevel::NoAccess, t), cross), logistic_regression(784, 10));
}

TEST(ProxyConfig, HiddenHyperparamsUseDefaultGuess) {
  const auto c = mlp(784, {100, 50}, 10);
  const Checkpoint t{c, init_params(c, RngStream(1)), {}};
  ProxySpec wide{"wide", GuessStrategy::SameFamilyPerturbHyperparams};
  wide.width_factors = std::vector<double>{2.0, 1.0};
  const ModelConfig guess = default_guess(Family::MLP, 784, 10);
  ModelConfig expected = guess;
  expected.hidden_widths[0] *= 2;
  EXPECT_EQ(build_proxy_config(TargetView(AccessLevel::ArchAndQuery, t), wide), expected);
}

TEST(ProxyConfig, StrategyAccessMismatchesAreRejected) {
  const Checkpoint t = mnist_like_target();
  ProxySpec exact{"exact", GuessStrategy::ExactConfig};
  EXPECT_THROW(build_proxy_config(TargetView(AccessLevel::NoAccess, t), exact), ConfigError);
  EXPECT_THROW(build_proxy_config(TargetView(AccessLevel::ArchAndQuery, t), exact), ConfigError);
  ProxySpec same{"same", GuessStrategy::SameFamilyPerturbHyperparams};
  EXPECT_THROW(build_proxy_config(TargetView(AccessLevel::QueryOnly, t), same), ConfigError);
  ProxySpec kd{"kd", GuessStrategy::SameFamilyPerturbHyperparams, true};
  EXPECT_THROW(build_proxy_config(TargetView(AccessLevel::ArchOnly, t), kd), ConfigError);
  ProxySpec bad{"bad", GuessStrategy::SameFamilyPerturbHyperparams};
  bad.width_factors = std::vector<double>{3.0, 1.0};
  EXPECT_THROW(build_proxy_config(TargetView(AccessLevel::FullAccess, t), bad), ConfigError);
}

TEST(ProxyConfig, SeededFactorsAreDeterministic) {
  const Checkpoint t = mnist_like_target();
  ProxySpec s{"s", GuessStrategy::SameFamilyPerturbHyperparams};
  s.seed = 42;
  const TargetView v(AccessLevel::FullAccess, t);
  EXPECT_EQ(build_proxy_config(v, s), build_proxy_config(v, s));
}

TEST(ProxyStudy, ExactProxyReproducesSelfAttribution) {
  const Split d = toy();
  const auto target = mlp(4, {6}, 3);
  StudySettings st;
  st.target_schedule = schedule(5);
  st.proxy_schedule = schedule(5);
  st.ground_truth_models = 6;
  st.trak.ensemble_size = 2;
  st.trak.projection_dim = 8;
  const std::vector<ProxyCase> proxies{{ProxySpec{"self", GuessStrategy::ExactConfig}, AccessLevel::FullAccess}};
  SubsetEnsemble ensemble;
  const RngStream rng(5);
  const StudyReport r = run_proxy_study(target, d.train, d.test, proxies, st, rng, &ensemble);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_TRUE(r.rows[0].error.empty()) << r.rows[0].error;
  EXPECT_EQ(r.rows[0].param_ratio, 1.0);
  const ScoreMatrix self = attribute_trak(target, d.train, d.test, st.trak, st.proxy_schedule, rng.derive(3, 0));
  EXPECT_EQ(lds(self, ensemble).mean, r.rows[0].lds_mean);
  EXPECT_TRUE(ensemble == generate_ground_truth(target, d.train, d.test, 6, 0.5, st.target_schedule, rng.derive(1)));
}

TEST(ProxyStudy, RowsPerProxyAndKd) {
  const Split d = toy();
  StudySettings st;
  st.target_schedule = schedule(4);
  st.proxy_schedule = schedule(4);
  st.ground_truth_models = 4;
  st.trak.ensemble_size = 1;
  st.trak.projection_dim = 8;
  ProxySpec narrow{"narrow", GuessStrategy::SameFamilyPerturbHyperparams, true};
  narrow.width_factors = std::vector<double>{0.5};
  const std::vector<ProxyCase> proxies{{narrow, AccessLevel::FullAccess},
                                       {ProxySpec{"lr", GuessStrategy::CrossFamilyHeuristic}, AccessLevel::QueryOnly},
                                       {ProxySpec{"bad", GuessStrategy::ExactConfig}, AccessLevel::NoAccess}};
  const StudyReport r = run_proxy_study(mlp(4, {8}, 3), d.train, d.test, proxies, st, RngStream(2));
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.failures(), 1u);
  for (std::size_t i = 1; i < r.rows.size(); ++i) EXPECT_LE(r.rows[i - 1].param_ratio, r.rows[i].param_ratio);
  std::ostringstream csv, txt;
  write_study_csv(csv, r);
  write_study_summary(txt, r);
  EXPECT_NE(csv.str().find("narrow,kd"), std::string::npos) << csv.str();
  EXPECT_NE(txt.str().find("bad"), std::string::npos);
}

TEST(NoTraining, RowsAndIsolation) {
  const Split d = toy(80);
  NoTrainingSettings st;
  st.methods = {Method::TRAK, Method::RPS, Method::IF};
  st.trak_ensembles = {1, 2};
  st.ground_truth_models = 5;
  st.schedule = schedule(4);
  st.trak.projection_dim = 8;
  st.bootstrap_resamples = 200;
  const NoTrainingReport r = run_no_training_study({logistic_regression(4, 3)}, d.train, d.test, st, RngStream(3));
  // Untrained and trained rows for TRAK-1, TRAK-2, RPS and IF.
  ASSERT_EQ(r.rows.size(), 8u);
  EXPECT_EQ(r.failures(), 0u);
  for (const auto& row : r.rows) {
    EXPECT_GE(row.auc, 0.0);
    EXPECT_LE(row.auc, 1.0);
    EXPECT_LE(row.lds_lower, row.lds_upper);
  }
  std::ostringstream os;
  write_no_training_csv(os, r);
  EXPECT_NE(os.str().find("TRAK-2"), std::string::npos);
}

TEST(Selection, NearFullKeepMatchesFullTraining) {
  const Split d = toy(100);
  SelectionSettings st;
  st.keep_fraction = 0.999;
  st.schedule = schedule(5);
  st.trak.ensemble_size = 1;
  st.trak.projection_dim = 8;
  const auto c = logistic_regression(4, 3);
  const SelectionCurve curve = run_selection_study(c, d.train, d.test, st, RngStream(4));
  EXPECT_EQ(curve.kept_ids.size(), 100u);
  ASSERT_EQ(curve.eval_loss.size(), 5u);
  const Checkpoint full = train(c, d.train, st.schedule, RngStream(4).derive(2));
  EXPECT_NEAR(curve.final_eval_loss, mean_loss(c, full.params, d.test), 1e-12);
}

TEST(Selection, ScorersShareTheFreshModelSeed) {
  const Split d = toy(100);
  SelectionSettings st;
  st.keep_fraction = 0.5;
  st.schedule = schedule(3);
  st.trak.ensemble_size = 1;
  st.trak.projection_dim = 8;
  const auto c = logistic_regression(4, 3);
  std::vector<SelectionCurve> curves;
  for (auto s : {SelectionScorer::Trained, SelectionScorer::Untrained, SelectionScorer::Random}) {
    st.scorer = s;
    curves.push_back(run_selection_study(c, d.train, d.test, st, RngStream(9)));
    EXPECT_EQ(curves.back().kept_ids.size(), 50u);
  }
  EXPECT_NE(curves[0].kept_ids, curves[2].kept_ids);
  st.scorer = SelectionScorer::Pretrained;
  EXPECT_THROW(run_selection_study(c, d.train, d.test, st, RngStream(9)), ConfigError);
  std::ostringstream os;
  write_selection_csv(os, curves);
  EXPECT_NE(os.str().find("untrained"), std::string::npos);
}
