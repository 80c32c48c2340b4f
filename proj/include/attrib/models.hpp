#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "attrib/dataset.hpp"
#include "attrib/numkernel.hpp"
#include "attrib/rng.hpp"

namespace attrib {

enum class Family { LogisticRegression, MLP };
enum class Activation { Relu, Tanh };

std::string to_string(Family family);
std::string to_string(Activation activation);
Family parse_family(const std::string& text);
Activation parse_activation(const std::string& text);

/// One dense layer inside the flat parameter vector: a row-major out x in
/// weight block at weight_offset followed by `out` biases at bias_offset.
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

/// Architecture family plus its hyperparameters.
struct ModelConfig {
  Family family = Family::LogisticRegression;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> hidden_widths;  // MLP only
  Activation activation = Activation::Relu;

  void validate() const;
  std::vector<LayerShape> layers() const;
  std::size_t param_count() const;
  /// Width of the representation fed to the final linear layer.
  std::size_t feature_dim() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

ModelConfig logistic_regression(std::size_t input_dim, std::size_t num_classes);
ModelConfig mlp(std::size_t input_dim, std::vector<std::size_t> hidden_widths,
                std::size_t num_classes, Activation activation = Activation::Relu);

/// Compact human-readable form, e.g. "mlp(784,[64,32],10,relu)".
std::string describe(const ModelConfig& config);

using ParamVector = Vector;

/// Fan-in scaled normal weights (He gain before relu, LeCun otherwise), zero biases.
ParamVector init_params(const ModelConfig& config, RngStream rng);

Vector forward(const ModelConfig& config, const ParamVector& params, std::span<const double> x);
/// Logits for every row of `x` (n x num_classes).
Matrix forward_batch(const ModelConfig& config, const ParamVector& params, const Matrix& x);

/// Which scalar a per-example gradient differentiates.
enum class Objective {
  Loss,    // cross-entropy -log softmax(logits)[label]
  Margin,  // output_fn: logit[label] - logsumexp(other logits)
};

Vector per_sample_grad(const ModelConfig& config, const ParamVector& params,
                       std::span<const double> x, int label, Objective objective = Objective::Loss);
/// One gradient per row of `x` (n x param_count).
Matrix per_sample_grads(const ModelConfig& config, const ParamVector& params, const Matrix& x,
                        std::span<const int> labels, Objective objective = Objective::Loss);

/// Correct-class margin logit[label] - logsumexp(other logits).
double output_fn(const ModelConfig& config, const ParamVector& params, std::span<const double> x,
                 int label);
Vector output_fn_batch(const ModelConfig& config, const ParamVector& params, const Matrix& x,
                       std::span<const int> labels);

/// Last hidden activation for MLPs, the raw input for logistic regression.
Vector penultimate_features(const ModelConfig& config, const ParamVector& params,
                            std::span<const double> x);
Matrix penultimate_features_batch(const ModelConfig& config, const ParamVector& params,
                                  const Matrix& x);

double mean_loss(const ModelConfig& config, const ParamVector& params, const Dataset& data);
double accuracy(const ModelConfig& config, const ParamVector& params, const Dataset& data);
/// softmax(logits)[label] for each example.
Vector correct_class_probability(const ModelConfig& config, const ParamVector& params,
                                 const Matrix& x, std::span<const int> labels);

/// Gradient of the mean cross-entropy over `data`.
Vector mean_loss_grad(const ModelConfig& config, const ParamVector& params, const Dataset& data);

/// Maps a batch of logits (n x classes) to d objective / d logits.
using LogitGradFn = std::function<Matrix(const Matrix& logits)>;

/// Forward pass over `x`, then reverse mode from the logit gradient supplied
/// by `logit_grad`. Returns sum_i d objective_i / d params; callers fold any
/// batch averaging into the logit gradient.
Vector backprop(const ModelConfig& config, const ParamVector& params, const Matrix& x,
                const LogitGradFn& logit_grad);

/// Exact Hessian of the mean cross-entropy over a dataset, applied to vectors
/// by forward-over-reverse differentiation. Forward activations are computed
/// once at construction.
class HessianOperator {
 public:
  HessianOperator(const ModelConfig& config, const ParamVector& params, const Dataset& data);

  std::size_t dim() const { return param_count_; }
  Vector apply(const Vector& v) const;
  /// H applied to every column of `v` (param_count x r).
  VectorBlock apply_block(const VectorBlock& v) const;

 private:
  ModelConfig config_;
  ParamVector params_;
  std::vector<LayerShape> layers_;
  std::size_t param_count_;
  std::size_t n_;
  std::vector<Matrix> acts_;      // acts_[0] = inputs, acts_[l] = output of hidden layer l
  std::vector<Matrix> pre_;       // pre-activations of hidden layers
  std::vector<Matrix> deltas_;    // dloss/dpre for every layer (per example, unscaled)
  Matrix probs_;                  // softmax of the logits
};

/// (1/n) sum_j Hess(loss_j) v.
Vector batch_hvp(const ModelConfig& config, const ParamVector& params, const Dataset& data,
                 const Vector& v);

/// Numerically stable softmax/log-softmax helpers.
Vector softmax(const Eigen::Ref<const Vector>& logits);
double logsumexp(const Eigen::Ref<const Vector>& logits);
double cross_entropy(const Eigen::Ref<const Vector>& logits, int label);
double margin_from_logits(const Eigen::Ref<const Vector>& logits, int label);

}  // namespace attrib
