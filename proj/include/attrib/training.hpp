#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attrib/dataset.hpp"
#include "attrib/models.hpp"
#include "attrib/rng.hpp"

namespace attrib {

/// Mini-batch SGD settings.
struct TrainingSchedule {
  std::size_t epochs = 50;  // 0 returns the initialization untouched
  std::size_t batch_size = 32;
  /// One entry: constant rate. Otherwise one entry per epoch.
  std::vector<double> learning_rates{0.1};
  double momentum = 0.0;  // in [0, 1)
  /// Epoch e is shuffled by Fisher-Yates over RngStream(shuffle_seed, e).
  std::uint64_t shuffle_seed = 0;
  /// Keep a checkpoint after every epoch (multi-checkpoint TracInCP).
  bool retain_per_epoch = false;

  void validate() const;
  double learning_rate(std::size_t epoch) const;
  std::string digest() const;
  TrainingSchedule with_shuffle_seed(std::uint64_t seed) const;
};

/// Knowledge-distillation weights: alpha * T^2 * KL(student || teacher) + (1 - alpha) * CE.
struct KDConfig {
  double alpha = 0.9;
  double temperature = 2.0;

  void validate() const;
  friend bool operator==(const KDConfig&, const KDConfig&) = default;
};

struct Provenance {
  std::uint64_t train_seed = 0;
  std::uint64_t train_stream = 0;
  std::string schedule_digest;
  std::string subset_id = "full";
  std::optional<KDConfig> kd;
  std::size_t epoch_index = 0;

  /// Digest over every field; identifies the training run.
  std::string digest() const;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Checkpoint {
  ModelConfig config;
  ParamVector params;
  Provenance provenance;

  void validate() const;
};

struct TrainingRun {
  Checkpoint final;
  /// Populated when schedule.retain_per_epoch is set; entry e is after epoch e + 1.
  std::vector<Checkpoint> per_epoch;
  /// Mean mini-batch objective seen during each epoch.
  std::vector<double> epoch_losses;
};

/// Called after every completed epoch with the 1-based epoch index.
using EpochObserver = std::function<void(std::size_t epoch, const Checkpoint& checkpoint)>;

/// Black-box access to a model: logits in, logits out, and a call counter.
/// There is deliberately no accessor for the wrapped model.
class QueryHandle {
 public:
  using BatchFn = std::function<Matrix(const Matrix& inputs)>;

  QueryHandle(BatchFn fn, std::size_t input_dim, std::size_t output_dim);

  Vector operator()(std::span<const double> x) const;
  /// Logits for every row; counts one call per row.
  Matrix query_batch(const Matrix& inputs) const;

  std::size_t call_count() const;
  std::size_t input_dim() const;
  std::size_t output_dim() const;

 private:
  struct State;
  std::shared_ptr<State> state_;
};

QueryHandle make_query(const Checkpoint& checkpoint);

/// Initialization-only checkpoint (epochs = 0).
Checkpoint untrained_checkpoint(const ModelConfig& config, RngStream rng);

Checkpoint train(const ModelConfig& config, const Dataset& data, const TrainingSchedule& schedule,
                 RngStream rng);
TrainingRun train_run(const ModelConfig& config, const Dataset& data,
                      const TrainingSchedule& schedule, RngStream rng,
                      const EpochObserver& observer = {});

/// train() on the restriction of `data` to `subset_ids` (dataset order kept).
Checkpoint train_subset(const ModelConfig& config, const Dataset& data,
                        std::span<const std::uint64_t> subset_ids,
                        const TrainingSchedule& schedule, RngStream rng);

Checkpoint kd_train(const ModelConfig& student_config, const Dataset& data,
                    const QueryHandle& teacher, const KDConfig& kd,
                    const TrainingSchedule& schedule, RngStream rng);
TrainingRun kd_train_run(const ModelConfig& student_config, const Dataset& data,
                         const QueryHandle& teacher, const KDConfig& kd,
                         const TrainingSchedule& schedule, RngStream rng,
                         const EpochObserver& observer = {});

/// KL(softmax(student / T) || softmax(teacher / T)).
double softened_kl(const Eigen::Ref<const Vector>& student_logits,
                   const Eigen::Ref<const Vector>& teacher_logits, double temperature);
/// The per-example distillation objective.
double kd_objective(const Eigen::Ref<const Vector>& student_logits,
                    const Eigen::Ref<const Vector>& teacher_logits, int label, const KDConfig& kd);

/// Mean softened KL from the checkpoint's predictions to the teacher's over `probe`.
double kl_to_teacher(const Checkpoint& checkpoint, const QueryHandle& teacher,
                     const Dataset& probe, double temperature);

/// Trains one model for a dataset; lets ensemble builders swap plain SGD for distillation.
using Trainer = std::function<Checkpoint(const ModelConfig& config, const Dataset& data,
                                         const TrainingSchedule& schedule, RngStream rng)>;
Trainer plain_trainer();
Trainer distillation_trainer(QueryHandle teacher, KDConfig kd);

}  // namespace attrib
