#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "attrib/attributors.hpp"
#include "attrib/evaluation.hpp"
#include "attrib/training.hpp"

namespace attrib {

/// What the model developer discloses to an external attributor.
enum class AccessLevel {
  FullAccess,    // S0: config, trained model, query
  ArchAndQuery,  // S1: family and query
  ArchOnly,      // S2: family
  QueryOnly,     // S3: query
  NoAccess,      // S4: nothing
  NoTraining,    // S5: full config, no trained model
};

std::string to_string(AccessLevel level);
/// Accepts the enum names (case-insensitive) and the tags S0..S5.
AccessLevel parse_access_level(const std::string& text);

struct Exposure {
  bool family = false;       // architecture family
  bool hyperparams = false;  // architecture-specific hyperparameters
  bool trained_model = false;
  bool query = false;

  friend bool operator==(const Exposure&, const Exposure&) = default;
};

Exposure exposure(AccessLevel level);

/// The target as seen under an access level. Fields that the level does not
/// expose are never copied in, so code holding a view cannot read them.
class TargetView {
 public:
  TargetView(AccessLevel level, const Checkpoint& target);

  AccessLevel access() const { return access_; }
  /// Task shape (input and class count) is public knowledge in every scenario.
  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_classes() const { return num_classes_; }

  const std::optional<Family>& family() const { return family_; }
  const std::optional<ModelConfig>& config() const { return config_; }
  const std::optional<Checkpoint>& trained_model() const { return trained_; }
  const std::optional<QueryHandle>& query() const { return query_; }

 private:
  AccessLevel access_;
  std::size_t input_dim_;
  std::size_t num_classes_;
  std::optional<Family> family_;
  std::optional<ModelConfig> config_;
  std::optional<Checkpoint> trained_;
  std::optional<QueryHandle> query_;
};

enum class GuessStrategy { SameFamilyPerturbHyperparams, CrossFamilyHeuristic, ExactConfig };

std::string to_string(GuessStrategy strategy);
GuessStrategy parse_guess_strategy(const std::string& text);

struct ProxySpec {
  std::string name;
  GuessStrategy strategy = GuessStrategy::SameFamilyPerturbHyperparams;
  bool kd_enabled = false;
  KDConfig kd;
  /// Seeds the per-layer width factors when width_factors is unset.
  std::uint64_t seed = 0;
  /// Explicit per-layer factors from {0.5, 1, 2}.
  std::optional<std::vector<double>> width_factors;
};

/// Hidden widths and activation assumed when the hyperparameters are hidden.
ModelConfig default_guess(Family family, std::size_t input_dim, std::size_t num_classes);

/// Proxy architecture from what the view exposes. Throws ConfigError when the
/// strategy or KD needs something the access level hides.
ModelConfig build_proxy_config(const TargetView& view, const ProxySpec& spec);

struct ProxyCase {
  ProxySpec spec;
  AccessLevel access = AccessLevel::FullAccess;
};

struct StudySettings {
  TrainingSchedule target_schedule;
  TrainingSchedule proxy_schedule;
  std::size_t ground_truth_models = 50;
  double subset_fraction = 0.5;
  TrakConfig trak;
};

struct Quartiles {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

Quartiles quartiles(std::vector<double> values);

struct StudyRow {
  std::string proxy;
  std::string training;  // "scratch" or "kd"
  AccessLevel access = AccessLevel::FullAccess;
  std::string config;
  std::size_t param_count = 0;
  double param_ratio = 0.0;
  double lds_mean = 0.0;
  Quartiles lds_spread;
  std::size_t lds_degenerate = 0;
  bool kd = false;
  double kl_to_teacher = 0.0;
  std::string error;
};

struct StudyReport {
  std::string target_config;
  std::size_t target_param_count = 0;
  std::string ground_truth_digest;
  std::vector<StudyRow> rows;  // ascending param ratio, then proxy order
  std::size_t failures() const;
};

/// Trains the target, one shared ground-truth ensemble of target retrains,
/// and for each proxy a scratch row plus a distilled row when kd_enabled.
/// Proxy i draws its seeds from rng.derive(2, i) and rng.derive(3, i), so a
/// row is reproducible from the study seed and its index alone.
StudyReport run_proxy_study(const ModelConfig& target_config, const Dataset& train,
                            const Dataset& test, const std::vector<ProxyCase>& proxies,
                            const StudySettings& settings, RngStream rng,
                            SubsetEnsemble* ensemble_out = nullptr);

struct NoTrainingSettings {
  std::vector<Method> methods{Method::TRAK, Method::RPS};
  std::vector<std::size_t> trak_ensembles{1, 10};
  std::size_t ground_truth_models = 50;
  double subset_fraction = 0.5;
  double flip_fraction = 0.1;
  TrainingSchedule schedule;
  TrakConfig trak;
  IfConfig if_config;
  RpsConfig rps;
  bool include_trained = true;
  std::size_t bootstrap_resamples = 2000;
};

struct NoTrainingRow {
  std::string config;
  std::string method;  // "TRAK-10", "IF", ...
  bool trained = false;
  double lds_mean = 0.0;
  double lds_lower = 0.0;
  double lds_upper = 0.0;
  std::size_t lds_degenerate = 0;
  double auc = 0.0;
  std::string error;
};

struct NoTrainingReport {
  std::vector<NoTrainingRow> rows;
  std::size_t failures() const;
};

/// LDS against trained-model ground truth and noisy-label AUC for attributions
/// computed on an initialization-only checkpoint (plus trained controls).
NoTrainingReport run_no_training_study(const std::vector<ModelConfig>& configs, const Dataset& train,
                                       const Dataset& test, const NoTrainingSettings& settings,
                                       RngStream rng);

enum class SelectionScorer { Untrained, Trained, Random, Pretrained };

std::string to_string(SelectionScorer scorer);
SelectionScorer parse_selection_scorer(const std::string& text);

struct SelectionSettings {
  double keep_fraction = 0.6;
  SelectionScorer scorer = SelectionScorer::Trained;
  TrainingSchedule schedule;
  TrakConfig trak;
  /// Scoring model for SelectionScorer::Pretrained.
  std::optional<Checkpoint> pretrained;
};

struct SelectionCurve {
  SelectionScorer scorer = SelectionScorer::Trained;
  std::vector<std::uint64_t> kept_ids;
  std::vector<double> eval_loss;  // after each epoch
  double final_eval_loss = 0.0;
};

/// Scores training examples by their mean TRAK attribution over `eval_set`,
/// keeps the top keep_fraction, trains a fresh model on them and records the
/// eval loss per epoch. The fresh model's seed does not depend on the scorer.
SelectionCurve run_selection_study(const ModelConfig& config, const Dataset& train,
                                   const Dataset& eval_set, const SelectionSettings& settings,
                                   RngStream rng);

void write_study_csv(std::ostream& os, const StudyReport& report);
void write_study_summary(std::ostream& os, const StudyReport& report);
void write_no_training_csv(std::ostream& os, const NoTrainingReport& report);
void write_selection_csv(std::ostream& os, const std::vector<SelectionCurve>& curves);

}  // namespace attrib
