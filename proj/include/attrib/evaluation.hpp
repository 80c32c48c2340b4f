#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attrib/attributors.hpp"
#include "attrib/dataset.hpp"
#include "attrib/training.hpp"

namespace attrib {

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation with average ranks for ties. Returns nullopt
/// when either vector has zero rank variance. Throws DimensionError for
/// unequal lengths or fewer than two values.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

/// Models retrained on random subsets and their outputs on a test set.
struct SubsetEnsemble {
  std::vector<std::vector<std::uint64_t>> subsets;  // train ids, dataset order
  double alpha = 0.5;
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> test_ids;
  Matrix outputs;  // subsets x test points, output_fn of model j at test point t

  std::size_t size() const { return subsets.size(); }
  void validate() const;
  friend bool operator==(const SubsetEnsemble& a, const SubsetEnsemble& b) {
    return a.subsets == b.subsets && a.alpha == b.alpha && a.seeds == b.seeds &&
           a.test_ids == b.test_ids && a.outputs.rows() == b.outputs.rows() &&
           a.outputs.cols() == b.outputs.cols() && a.outputs == b.outputs;
  }
};

/// Trains m models on subsets of size round(alpha * n) drawn without
/// replacement. Subset j and its training seed depend only on (rng, j).
SubsetEnsemble generate_ground_truth(const ModelConfig& config, const Dataset& train,
                                     const Dataset& test, std::size_t m, double alpha,
                                     const TrainingSchedule& schedule, RngStream rng,
                                     const Trainer& trainer = plain_trainer());

/// Per-subset sums of attribution scores: test points x subsets.
Matrix subset_score_sums(const ScoreMatrix& scores, const SubsetEnsemble& ensemble);

struct LdsResult {
  std::vector<std::uint64_t> test_ids;
  std::vector<std::optional<double>> per_test;  // nullopt: degenerate
  double mean = 0.0;                            // NaN when every point is degenerate
  std::size_t degenerate = 0;

  /// Correlations of the non-degenerate points.
  std::vector<double> valid() const;
};

LdsResult lds(const ScoreMatrix& scores, const SubsetEnsemble& ensemble);

struct NoisyLabelMask {
  std::vector<std::uint64_t> flipped_ids;  // ascending
  std::map<std::uint64_t, int> original_labels;
  std::map<std::uint64_t, int> corrupted_labels;

  bool is_flipped(std::uint64_t id) const { return corrupted_labels.count(id) != 0; }
};

/// Flips exactly round(fraction * n) labels, each to a uniformly chosen other class.
std::pair<Dataset, NoisyLabelMask> flip_labels(const Dataset& data, double fraction, RngStream rng);

/// P(score of a random positive > score of a random negative), ties 0.5.
double pairwise_auc(std::span<const double> positive, std::span<const double> negative);

/// AUC of self-influence scores (one per id) for separating flipped from clean ids.
double auc_noisy(std::span<const std::uint64_t> ids, std::span<const double> self_scores,
                 const NoisyLabelMask& mask);

struct BrittlenessCell {
  std::uint64_t test_id = 0;
  std::size_t k = 0;
  bool guided_flip = false;
  bool random_flip = false;
  std::string error;  // non-empty when a retrain failed
};

struct BrittlenessResult {
  std::vector<std::size_t> k_values;
  std::vector<double> guided;  // flip fraction per k over successful cells
  std::vector<double> random;
  std::vector<BrittlenessCell> cells;
  std::size_t failures = 0;
};

/// For each test point and k, retrains without that point's k highest-scored
/// training examples, and separately without k random ones, using the
/// full-data training seed for every retrain. A flip is a changed argmax.
/// Every test point must be classified correctly by the full-data model.
BrittlenessResult brittleness(const ModelConfig& config, const Dataset& train,
                              const Dataset& test_subset, const ScoreMatrix& scores,
                              std::span<const std::size_t> k_values,
                              const TrainingSchedule& schedule, RngStream rng);

/// Indices of the k largest entries of `row`, ties broken by lower index.
std::vector<std::size_t> top_k(std::span<const double> row, std::size_t k);

struct BootstrapCi {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Percentile bootstrap interval for the mean.
BootstrapCi bootstrap_mean_ci(std::span<const double> values, RngStream rng,
                              std::size_t resamples = 2000, double confidence = 0.95);

double mean_of(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator).
double stddev_of(std::span<const double> values);

void write_lds_csv(std::ostream& os, const LdsResult& result);
void write_brittleness_csv(std::ostream& os, const BrittlenessResult& result);

}  // namespace attrib
