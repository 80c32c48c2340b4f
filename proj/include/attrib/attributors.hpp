#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attrib/dataset.hpp"
#include "attrib/models.hpp"
#include "attrib/training.hpp"

namespace attrib {

enum class Method : std::uint8_t { TRAK = 1, IF = 2, TracInCP = 3, RPS = 4 };

std::string to_string(Method method);
Method parse_method(const std::string& text);

/// Attribution scores: rows are test examples, columns training examples.
/// Positive scores mean the training example raises the test output.
struct ScoreMatrix {
  std::vector<std::uint64_t> test_ids;
  std::vector<std::uint64_t> train_ids;
  Matrix scores;
  Method method = Method::TRAK;
  std::map<std::string, std::string> method_params;

  void validate() const;
};

// ---------------------------------------------------------------------------
// TRAK

enum class TrakComposition {
  /// Average the kernels and the Q diagonals separately, then multiply.
  AveragedQ,
  /// Average the per-model products kernel_i * Q_i.
  PerModel,
};

struct TrakConfig {
  std::size_t ensemble_size = 10;
  std::size_t projection_dim = 512;
  double subsample_fraction = 0.5;
  /// Unset: 1e-6 * trace(Phi^T Phi) / k for each member.
  std::optional<double> gram_damping;
  /// Seeds the projection matrices; member i uses RngStream(seed).derive(i).
  std::uint64_t projection_seed = 0;
  TrakComposition composition = TrakComposition::AveragedQ;
  std::size_t gram_cap = kDefaultGramCap;

  void validate() const;
};

struct TrakOptions {
  Trainer trainer = plain_trainer();
  /// Use these members instead of training. One checkpoint is shared by all
  /// ensemble_size members (which then differ only in projection).
  std::vector<Checkpoint> checkpoints;
  /// Replace the random projection by the identity (requires k == param count).
  bool identity_projection = false;
};

/// Trains ensemble_size models on independent subsample_fraction subsets
/// (seeds from `rng`), projects per-example margin gradients, and scores
/// phi(z)^T (Phi^T Phi + lambda I)^{-1} Phi^T weighted by 1 - p(correct).
ScoreMatrix attribute_trak(const ModelConfig& config, const Dataset& train, const Dataset& test,
                           const TrakConfig& trak, const TrainingSchedule& schedule,
                           RngStream rng, const TrakOptions& options = {});

/// Diagonal of attribute_trak(train, train) without the n x n matrix.
Vector self_influence_trak(const ModelConfig& config, const Dataset& train,
                           const TrakConfig& trak, const TrainingSchedule& schedule,
                           RngStream rng, const TrakOptions& options = {});

// ---------------------------------------------------------------------------
// Influence functions

struct IfConfig {
  double damping = 1e-2;
  double cg_tol = 1e-6;
  int cg_max_iter = 1000;
  /// Right-hand sides solved together per block CG call.
  std::size_t block_size = 32;
};

/// grad l(x_j)^T (H + damping I)^{-1} grad l(z), H the Hessian of the mean
/// training loss at the checkpoint. Solves with CG on exact HVPs; unconverged
/// solves are counted in method_params["cg_unconverged"].
ScoreMatrix attribute_if(const Checkpoint& checkpoint, const Dataset& train, const Dataset& test,
                         const IfConfig& config = {});
Vector self_influence_if(const Checkpoint& checkpoint, const Dataset& train,
                         const IfConfig& config = {});

// ---------------------------------------------------------------------------
// TracInCP

/// sum_i lr_i <grad l(theta_i, x_j), grad l(theta_i, z)>.
ScoreMatrix attribute_tracin(std::span<const Checkpoint> checkpoints,
                             std::span<const double> learning_rates, const Dataset& train,
                             const Dataset& test);
Vector self_influence_tracin(std::span<const Checkpoint> checkpoints,
                             std::span<const double> learning_rates, const Dataset& train);

// ---------------------------------------------------------------------------
// Representer points

struct RpsConfig {
  double l2_lambda = 1e-2;
  /// Refit the final layer on frozen features to a stationary point of the
  /// L2-regularized loss. When off, the checkpoint's final layer is used as is.
  bool refit_final_layer = true;
  double stationarity_tol = 1e-7;
  int max_newton_iter = 200;

  void validate() const;
};

struct RepresenterFit {
  Matrix train_features;  // n x d
  Matrix weights;         // classes x d
  Vector bias;            // classes
  Matrix alpha;           // n x classes, -(1/(2 lambda n)) dloss/dlogits
  double stationarity_residual = 0.0;
  int iterations = 0;
};

/// -(1/(2 lambda n)) * logit_grads, n = number of rows.
Matrix representer_coefficients(const Matrix& logit_grads, double lambda);

RepresenterFit fit_representer(const Checkpoint& checkpoint, const Dataset& train,
                               const RpsConfig& config);

/// alpha_j[label(z)] * <h_j, h(z)>.
ScoreMatrix attribute_rps(const Checkpoint& checkpoint, const Dataset& train, const Dataset& test,
                          const RpsConfig& config = {});
Vector self_influence_rps(const Checkpoint& checkpoint, const Dataset& train,
                          const RpsConfig& config = {});

// ---------------------------------------------------------------------------
// Method-generic entry points

/// Everything any method may need. TRAK trains from (config, schedule, rng)
/// unless trak_options.checkpoints is set; IF and RPS use checkpoints[0];
/// TracInCP uses all checkpoints with learning_rates.
struct AttributionInputs {
  ModelConfig config;
  std::vector<Checkpoint> checkpoints;
  std::vector<double> learning_rates;
  TrainingSchedule schedule;
  RngStream rng{0};
  TrakConfig trak;
  TrakOptions trak_options;
  IfConfig if_config;
  RpsConfig rps;
};

ScoreMatrix attribute(Method method, const AttributionInputs& inputs, const Dataset& train,
                      const Dataset& test);
Vector self_influence(Method method, const AttributionInputs& inputs, const Dataset& train);

/// Upper bound on m * n score entries held in memory.
inline constexpr std::size_t kMaxScoreEntries = std::size_t{1} << 28;

}  // namespace attrib
