#pragma once

#include <optional>
#include <span>
#include <vector>

#include "attrib/attributors.hpp"
#include "attrib/dataset.hpp"
#include "attrib/models.hpp"
#include "attrib/numkernel.hpp"
#include "attrib/training.hpp"

// Slow, direct reimplementations used as references by the tests.
namespace oracle {

using attrib::Checkpoint;
using attrib::Dataset;
using attrib::Matrix;
using attrib::ModelConfig;
using attrib::ParamVector;
using attrib::Vector;

/// Ranks by counting: 1 + #smaller + (#equal - 1) / 2.
std::vector<double> ranks(std::span<const double> v);
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);
/// Every positive/negative pair compared explicitly.
double auc(std::span<const double> positive, std::span<const double> negative);

/// Fourth-order central differences of the chosen objective with respect to every parameter.
Vector finite_difference_grad(const ModelConfig& config, const ParamVector& params,
                              std::span<const double> x, int label, attrib::Objective objective,
                              double step);

/// Closed-form gradients for logistic regression: d objective / d logits
/// outer [x, 1], laid out like the model's parameter vector.
Vector lr_loss_grad(const ModelConfig& config, const ParamVector& params,
                    std::span<const double> x, int label);
Vector lr_margin_grad(const ModelConfig& config, const ParamVector& params,
                      std::span<const double> x, int label);
/// Dense Hessian of the mean cross-entropy of a logistic regression model.
Matrix lr_hessian(const ModelConfig& config, const ParamVector& params, const Dataset& data);

/// g(z)^T (H + damping I)^{-1} g(x_j) with every matrix formed explicitly.
Matrix dense_if_scores(const Checkpoint& lr, const Dataset& train, const Dataset& test,
                       double damping);
/// phi(z)^T (Phi^T Phi + damping I)^{-1} phi(x_j) (1 - p_j) on unprojected margin gradients.
Matrix dense_trak_scores(const Checkpoint& lr, const Dataset& train, const Dataset& test,
                         double damping);

double max_abs(const Matrix& m);

}  // namespace oracle
