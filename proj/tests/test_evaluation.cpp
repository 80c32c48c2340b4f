#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "attrib/data_io.hpp"
#include "attrib/errors.hpp"
#include "attrib/evaluation.hpp"
#include "attrib/parallel.hpp"
#include "oracles.hpp"

using namespace attrib;

namespace {

std::vector<double> random_values(RngStream& r, std::size_t n, bool ties) {
  std::vector<double> v(n);
  for (auto& x : v) x = ties ? static_cast<double>(r.below(6)) : r.normal();
  return v;
}

TrainingSchedule schedule(std::size_t epochs) {
  TrainingSchedule s;
  s.epochs = epochs;
  s.batch_size = 16;
  s.learning_rates = {0.1};
  return s;
}

// Ensemble of three subsets over train ids {0..3} with hand-set outputs.
SubsetEnsemble hand_ensemble() {
  SubsetEnsemble e;
  e.subsets = {{0, 1}, {1, 2, 3}, {0, 3}};
  e.alpha = 0.5;
  e.seeds = {1, 2, 3};
  e.test_ids = {100};
  e.outputs.resize(3, 1);
  e.outputs << 0.1, 0.5, 0.3;
  return e;
}

ScoreMatrix hand_scores(std::vector<double> row) {
  ScoreMatrix s;
  s.test_ids = {100};
  s.train_ids = {0, 1, 2, 3};
  s.scores.resize(1, 4);
  for (std::size_t i = 0; i < 4; ++i) s.scores(0, static_cast<Eigen::Index>(i)) = row[i];
  return s;
}

}  // namespace

TEST(Spearman, Examples) {
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4}, rev{4, 3, 2, 1};
  EXPECT_NEAR(*spearman(a, a), 1.0, 1e-15);
  EXPECT_NEAR(*spearman(a, rev), -1.0, 1e-15);
  EXPECT_NEAR(*spearman(a, b), 0.8, 1e-15);
}

TEST(Spearman, DegenerateAndInvalid) {
  const std::vector<double> a{1, 2, 3}, flat{2, 2, 2}, one{1};
  EXPECT_FALSE(spearman(a, flat).has_value());
  EXPECT_THROW(spearman(one, one), DimensionError);
  EXPECT_THROW(spearman(a, std::vector<double>{1, 2}), DimensionError);
}

TEST(Spearman, AverageRanksWithTies) {
  const std::vector<double> v{10, 20, 10, 30};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{1.5, 3, 1.5, 4}));
}

TEST(Spearman, MatchesBruteForce) {
  RngStream r(1);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + r.below(199);
    const bool ties = r.below(2) == 0;
    const auto a = random_values(r, n, ties);
    const auto b = random_values(r, n, ties);
    const auto got = spearman(a, b);
    const auto ref = oracle::spearman(a, b);
    ASSERT_EQ(got.has_value(), ref.has_value());
    if (got) EXPECT_NEAR(*got, *ref, 1e-12);
  }
}

TEST(Spearman, MonotoneInvariance) {
  RngStream r(2);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_values(r, 30, t % 2 == 0);
    const auto b = random_values(r, 30, false);
    std::vector<double> ta(a.size()), tb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ta[i] = std::exp(a[i]) * 3.0 + 1.0;
      tb[i] = std::atan(b[i]);
    }
    EXPECT_NEAR(*spearman(a, b), *spearman(ta, tb), 1e-12);
  }
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(pairwise_auc(std::vector<double>{0.9, 0.2}, std::vector<double>{0.5, 0.1}), 0.75);
  EXPECT_DOUBLE_EQ(pairwise_auc(std::vector<double>{3, 4}, std::vector<double>{1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(pairwise_auc(std::vector<double>{1, 1}, std::vector<double>{1, 1, 1}), 0.5);
}

TEST(Auc, MatchesBruteForceAndInvariance) {
  RngStream r(3);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + r.below(199);
    const std::size_t pos = 1 + r.below(n - 1);
    const bool ties = r.below(2) == 0;
    const auto v = random_values(r, n, ties);
    const std::vector<double> p(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(pos));
    const std::vector<double> q(v.begin() + static_cast<std::ptrdiff_t>(pos), v.end());
    const double got = pairwise_auc(p, q);
    EXPECT_NEAR(got, oracle::auc(p, q), 1e-12);
    std::vector<double> tp(p), tq(q);
    for (auto& x : tp) x = std::exp(x);
    for (auto& x : tq) x = std::exp(x);
    EXPECT_NEAR(pairwise_auc(tp, tq), got, 1e-12);
  }
}

TEST(Auc, NoisyUsesMask) {
  NoisyLabelMask mask;
  mask.flipped_ids = {1, 3};
  mask.corrupted_labels = {{1, 0}, {3, 1}};
  mask.original_labels = {{1, 1}, {3, 0}};
  const std::vector<std::uint64_t> ids{0, 1, 2, 3};
  const std::vector<double> scores{0.5, 0.9, 0.1, 0.2};
  EXPECT_DOUBLE_EQ(auc_noisy(ids, scores, mask), 0.75);
}

TEST(Lds, PerfectScoresGiveOne) {
  const SubsetEnsemble e = hand_ensemble();
  // Subset sums 1, 9, 4 order like outputs 0.1, 0.5, 0.3.
  const LdsResult r = lds(hand_scores({0.5, 0.5, 4.0, 3.5}), e);
  ASSERT_TRUE(r.per_test[0].has_value());
  EXPECT_NEAR(*r.per_test[0], 1.0, 1e-15);
  EXPECT_NEAR(r.mean, 1.0, 1e-15);
  const Matrix sums = subset_score_sums(hand_scores({0.5, 0.5, 4.0, 3.5}), e);
  EXPECT_DOUBLE_EQ(sums(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(sums(0, 1), 8.0);
  EXPECT_DOUBLE_EQ(sums(0, 2), 4.0);
}

TEST(Lds, ZeroScoresAreDegenerate) {
  const LdsResult r = lds(hand_scores({0, 0, 0, 0}), hand_ensemble());
  EXPECT_FALSE(r.per_test[0].has_value());
  EXPECT_EQ(r.degenerate, 1u);
  EXPECT_TRUE(std::isnan(r.mean));
  std::ostringstream os;
  write_lds_csv(os, r);
  EXPECT_NE(os.str().find("degenerate"), std::string::npos);
}

TEST(Lds, MonotoneInvarianceOfOutputs) {
  SubsetEnsemble e = hand_ensemble();
  const ScoreMatrix s = hand_scores({0.3, -1.0, 2.0, 0.7});
  const double base = lds(s, e).mean;
  e.outputs = e.outputs.array().exp() * 5.0;
  EXPECT_NEAR(lds(s, e).mean, base, 1e-15);
}

TEST(Lds, MismatchedIdsThrow) {
  ScoreMatrix s = hand_scores({1, 2, 3, 4});
  s.test_ids = {7};
  EXPECT_THROW(lds(s, hand_ensemble()), DimensionError);
}

TEST(GroundTruth, SizesDeterminismAndIdMapping) {
  const Dataset all = synth_clusters(80, 2, 2, 6.0, RngStream(1));
  const Dataset train = slice(all, 0, 60);
  const Dataset test = slice(all, 60, 20);
  const auto c = logistic_regression(2, 2);
  const SubsetEnsemble a = generate_ground_truth(c, train, test, 5, 0.5, schedule(5), RngStream(4));
  const SubsetEnsemble b = generate_ground_truth(c, train, test, 5, 0.5, schedule(5), RngStream(4));
  EXPECT_TRUE(a == b);
  for (const auto& s : a.subsets) {
    EXPECT_EQ(s.size(), 30u);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::set<std::uint64_t>(s.begin(), s.end()).size(), 30u);
  }
  // Subset j depends only on (rng, j): a shorter ensemble is a prefix.
  const SubsetEnsemble p = generate_ground_truth(c, train, test, 3, 0.5, schedule(5), RngStream(4));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(p.subsets[j], a.subsets[j]);
    EXPECT_EQ(p.seeds[j], a.seeds[j]);
    EXPECT_TRUE(p.outputs.row(static_cast<Eigen::Index>(j)) == a.outputs.row(static_cast<Eigen::Index>(j)));
  }
  // Renaming ids renames the subsets and leaves the outputs alone.
  Dataset renamed = train;
  for (auto& id : renamed.ids) id = id * 7 + 3;
  const SubsetEnsemble r = generate_ground_truth(c, renamed, test, 5, 0.5, schedule(5), RngStream(4));
  for (std::size_t j = 0; j < 5; ++j) {
    ASSERT_EQ(r.subsets[j].size(), a.subsets[j].size());
    for (std::size_t i = 0; i < r.subsets[j].size(); ++i) EXPECT_EQ(r.subsets[j][i], a.subsets[j][i] * 7 + 3);
  }
  EXPECT_TRUE(r.outputs == a.outputs);
}

TEST(GroundTruth, EasyPointHasPositiveMargins) {
  const Dataset all = synth_clusters(120, 2, 2, 8.0, RngStream(2));
  const Dataset train = slice(all, 0, 100);
  const Dataset test = slice(all, 100, 20);
  const SubsetEnsemble e =
      generate_ground_truth(logistic_regression(2, 2), train, test, 20, 0.5, schedule(10), RngStream(3));
  for (Eigen::Index t = 0; t < e.outputs.cols(); ++t) {
    const double positive = (e.outputs.col(t).array() > 0.0).cast<double>().mean();
    EXPECT_GE(positive, 0.9);
  }
}

TEST(GroundTruth, IndependentOfWorkerCount) {
  const Dataset all = synth_clusters(80, 3, 3, 3.0, RngStream(1));
  const Dataset train = slice(all, 0, 60);
  const Dataset test = slice(all, 60, 20);
  set_worker_count(1);
  const auto a = generate_ground_truth(mlp(3, {4}, 3), train, test, 6, 0.5, schedule(3), RngStream(4));
  set_worker_count(8);
  const auto b = generate_ground_truth(mlp(3, {4}, 3), train, test, 6, 0.5, schedule(3), RngStream(4));
  set_worker_count(1);
  EXPECT_TRUE(a == b);
}

TEST(FlipLabels, CountsAndConstraints) {
  const Dataset d = synth_clusters(1000, 2, 10, 3.0, RngStream(5));
  const auto [same, none] = flip_labels(d, 0.0, RngStream(1));
  EXPECT_TRUE(same == d);
  EXPECT_TRUE(none.flipped_ids.empty());
  const auto [noisy, mask] = flip_labels(d, 0.1, RngStream(1));
  EXPECT_EQ(mask.flipped_ids.size(), 100u);
  EXPECT_TRUE(std::is_sorted(mask.flipped_ids.begin(), mask.flipped_ids.end()));
  std::size_t changed = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (noisy.labels[i] != d.labels[i]) {
      ++changed;
      EXPECT_TRUE(mask.is_flipped(d.ids[i]));
      EXPECT_EQ(mask.original_labels.at(d.ids[i]), d.labels[i]);
      EXPECT_EQ(mask.corrupted_labels.at(d.ids[i]), noisy.labels[i]);
    }
  }
  EXPECT_EQ(changed, 100u);
  EXPECT_THROW(flip_labels(d, 1.5, RngStream(1)), ConfigError);
}

TEST(TopK, LargestWithLowIndexTies) {
  const std::vector<double> row{0.5, 2.0, 2.0, -1.0, 3.0};
  EXPECT_EQ(top_k(row, 3), (std::vector<std::size_t>{4, 1, 2}));
  EXPECT_TRUE(top_k(row, 0).empty());
}

TEST(Brittleness, ZeroKNeverFlipsAndRequiresCorrectPoints) {
  const Dataset all = synth_clusters(90, 2, 2, 6.0, RngStream(6));
  const Dataset train = slice(all, 0, 80);
  const Dataset test = slice(all, 80, 5);
  ScoreMatrix s;
  s.test_ids = test.ids;
  s.train_ids = train.ids;
  s.scores = Matrix::Zero(5, 80);
  const std::vector<std::size_t> ks{0, 4};
  const auto c = logistic_regression(2, 2);
  const BrittlenessResult r = brittleness(c, train, test, s, ks, schedule(5), RngStream(2));
  EXPECT_EQ(r.guided[0], 0.0);
  EXPECT_EQ(r.random[0], 0.0);
  EXPECT_EQ(r.cells.size(), 10u);
  EXPECT_EQ(r.failures, 0u);
  Dataset wrong = test;
  for (auto& y : wrong.labels) y = 1 - y;
  EXPECT_THROW(brittleness(c, train, wrong, s, ks, schedule(5), RngStream(2)), ConfigError);
}

TEST(Bootstrap, IntervalContainsMean) {
  RngStream r(7);
  std::vector<double> v(200);
  for (auto& x : v) x = 1.0 + r.normal();
  const BootstrapCi ci = bootstrap_mean_ci(v, RngStream(1));
  EXPECT_NEAR(ci.mean, mean_of(v), 1e-15);
  EXPECT_LT(ci.lower, ci.mean);
  EXPECT_GT(ci.upper, ci.mean);
  EXPECT_NEAR(ci.upper - ci.lower, 2 * 1.96 * stddev_of(v) / std::sqrt(200.0), 0.08);
  const BootstrapCi again = bootstrap_mean_ci(v, RngStream(1));
  EXPECT_EQ(ci.lower, again.lower);
  EXPECT_EQ(ci.upper, again.upper);
}
