#include "attrib/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "attrib/errors.hpp"

namespace attrib {
namespace {

using ConstMatMap = Eigen::Map<const Matrix>;
using MatMap = Eigen::Map<Matrix>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXd>;

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

ConstMatMap weight(const double* params, const LayerShape& s) {
  return ConstMatMap(params + s.weight_offset, idx(s.out), idx(s.in));
}

ConstRowMap bias(const double* params, const LayerShape& s) {
  return ConstRowMap(params + s.bias_offset, idx(s.out));
}

void check_params(const ModelConfig& config, const ParamVector& params) {
  if (static_cast<std::size_t>(params.size()) != config.param_count()) {
    throw DimensionError("parameter vector has length " + std::to_string(params.size()) +
                         ", config " + describe(config) + " needs " +
                         std::to_string(config.param_count()));
  }
}

void check_inputs(const ModelConfig& config, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != config.input_dim) {
    throw DimensionError("input has " + std::to_string(x.cols()) + " features, config " +
                         describe(config) + " expects " + std::to_string(config.input_dim));
  }
}

void check_labels(const ModelConfig& config, const Matrix& x, std::span<const int> labels) {
  if (labels.size() != static_cast<std::size_t>(x.rows())) {
    throw DimensionError("label count does not match the number of inputs");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= config.num_classes) {
      throw DimensionError("label " + std::to_string(y) + " out of range for " +
                           std::to_string(config.num_classes) + " classes");
    }
  }
}

Matrix row_matrix(std::span<const double> x) {
  Matrix m(1, idx(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) m(0, idx(i)) = x[i];
  return m;
}

// Activations of one forward pass over a batch.
struct ForwardPass {
  const Matrix* input = nullptr;
  std::vector<Matrix> pre;  // hidden pre-activations
  std::vector<Matrix> act;  // hidden activations
  Matrix logits;

  const Matrix& layer_input(std::size_t l) const { return l == 0 ? *input : act[l - 1]; }
};

ForwardPass run_forward(const ModelConfig& config, const std::vector<LayerShape>& layers,
                        const ParamVector& params, const Matrix& x) {
  ForwardPass fp;
  fp.input = &x;
  const std::size_t L = layers.size();
  fp.pre.reserve(L - 1);
  fp.act.reserve(L - 1);
  for (std::size_t l = 0; l < L; ++l) {
    const LayerShape& s = layers[l];
    Matrix z = fp.layer_input(l) * weight(params.data(), s).transpose();
    z.rowwise() += bias(params.data(), s);
    if (l + 1 == L) {
      fp.logits = std::move(z);
    } else {
      Matrix a = config.activation == Activation::Relu ? Matrix(z.cwiseMax(0.0))
                                                       : Matrix(z.array().tanh().matrix());
      fp.pre.push_back(std::move(z));
      fp.act.push_back(std::move(a));
    }
  }
  return fp;
}

// sigma'(z) as a function of (pre, act).
Matrix activation_slope(Activation activation, const Matrix& pre, const Matrix& act) {
  if (activation == Activation::Relu) return (pre.array() > 0.0).cast<double>().matrix();
  return (1.0 - act.array().square()).matrix();
}

// sigma''(z); zero almost everywhere for relu.
Matrix activation_curvature(const Matrix& act) {
  return (-2.0 * act.array() * (1.0 - act.array().square())).matrix();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

// d objective / d logits, one row per example.
Matrix objective_logit_grad(const Matrix& logits, std::span<const int> labels,
                            Objective objective) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  Matrix d(n, c);
  if (objective == Objective::Loss) {
    d = softmax_rows(logits);
    for (Eigen::Index i = 0; i < n; ++i) d(i, labels[i]) -= 1.0;
    return d;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[i];
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < c; ++k) {
      if (k != y) mx = std::max(mx, logits(i, k));
    }
    double sum = 0.0;
    for (Eigen::Index k = 0; k < c; ++k) {
      d(i, k) = k == y ? 0.0 : std::exp(logits(i, k) - mx);
      sum += d(i, k);
    }
    for (Eigen::Index k = 0; k < c; ++k) d(i, k) = k == y ? 1.0 : -d(i, k) / sum;
  }
  return d;
}

// Per-example d objective / d pre-activation for each layer.
std::vector<Matrix> backward_deltas(const ModelConfig& config,
                                    const std::vector<LayerShape>& layers,
                                    const ParamVector& params, const ForwardPass& fp,
                                    Matrix dlogits) {
  const std::size_t L = layers.size();
  std::vector<Matrix> deltas(L);
  deltas[L - 1] = std::move(dlogits);
  for (std::size_t l = L - 1; l-- > 0;) {
    Matrix back = deltas[l + 1] * weight(params.data(), layers[l + 1]);
    deltas[l] = back.cwiseProduct(activation_slope(config.activation, fp.pre[l], fp.act[l]));
  }
  return deltas;
}

void check_finite_grad(const Eigen::Ref<const Matrix>& g) {
  if (!g.allFinite()) throw NumericalError("per-example gradient is not finite");
}

}  // namespace

std::string to_string(Family family) {
  return family == Family::LogisticRegression ? "lr" : "mlp";
}

std::string to_string(Activation activation) {
  return activation == Activation::Relu ? "relu" : "tanh";
}

Family parse_family(const std::string& text) {
  if (text == "lr" || text == "logistic_regression") return Family::LogisticRegression;
  if (text == "mlp") return Family::MLP;
  throw ConfigError("unknown model family '" + text + "'");
}

Activation parse_activation(const std::string& text) {
  if (text == "relu") return Activation::Relu;
  if (text == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + text + "'");
}

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("model config: input_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("model config: num_classes must be >= 2");
  if (family == Family::LogisticRegression && !hidden_widths.empty()) {
    throw ConfigError("model config: logistic regression takes no hidden widths");
  }
  if (family == Family::MLP && hidden_widths.empty()) {
    throw ConfigError("model config: an MLP needs at least one hidden layer");
  }
  for (std::size_t w : hidden_widths) {
    if (w < 1) throw ConfigError("model config: hidden widths must be >= 1");
  }
}

std::vector<LayerShape> ModelConfig::layers() const {
  validate();
  std::vector<LayerShape> out;
  std::size_t in = input_dim;
  std::size_t offset = 0;
  auto add = [&](std::size_t width) {
    LayerShape s;
    s.in = in;
    s.out = width;
    s.weight_offset = offset;
    s.bias_offset = offset + in * width;
    offset = s.bias_offset + width;
    out.push_back(s);
    in = width;
  };
  for (std::size_t w : hidden_widths) add(w);
  add(num_classes);
  return out;
}

std::size_t ModelConfig::param_count() const {
  const auto ls = layers();
  return ls.back().bias_offset + ls.back().out;
}

std::size_t ModelConfig::feature_dim() const {
  return hidden_widths.empty() ? input_dim : hidden_widths.back();
}

ModelConfig logistic_regression(std::size_t input_dim, std::size_t num_classes) {
  ModelConfig c;
  c.family = Family::LogisticRegression;
  c.input_dim = input_dim;
  c.num_classes = num_classes;
  c.validate();
  return c;
}

ModelConfig mlp(std::size_t input_dim, std::vector<std::size_t> hidden_widths,
                std::size_t num_classes, Activation activation) {
  ModelConfig c;
  c.family = Family::MLP;
  c.input_dim = input_dim;
  c.num_classes = num_classes;
  c.hidden_widths = std::move(hidden_widths);
  c.activation = activation;
  c.validate();
  return c;
}

std::string describe(const ModelConfig& config) {
  std::ostringstream os;
  os << to_string(config.family) << '(' << config.input_dim << ',';
  if (config.family == Family::MLP) {
    os << '[';
    for (std::size_t i = 0; i < config.hidden_widths.size(); ++i) {
      if (i) os << ',';
      os << config.hidden_widths[i];
    }
    os << "],";
  }
  os << config.num_classes;
  if (config.family == Family::MLP) os << ',' << to_string(config.activation);
  os << ')';
  return os.str();
}

ParamVector init_params(const ModelConfig& config, RngStream rng) {
  const auto layers = config.layers();
  ParamVector p = ParamVector::Zero(idx(layers.back().bias_offset + layers.back().out));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& s = layers[l];
    const bool feeds_relu = l + 1 < layers.size() && config.activation == Activation::Relu;
    const double stddev = std::sqrt((feeds_relu ? 2.0 : 1.0) / static_cast<double>(s.in));
    for (std::size_t i = 0; i < s.in * s.out; ++i) p[idx(s.weight_offset + i)] = stddev * rng.normal();
  }
  return p;
}

Matrix forward_batch(const ModelConfig& config, const ParamVector& params, const Matrix& x) {
  check_params(config, params);
  check_inputs(config, x);
  return run_forward(config, config.layers(), params, x).logits;
}

Vector forward(const ModelConfig& config, const ParamVector& params, std::span<const double> x) {
  return forward_batch(config, params, row_matrix(x)).row(0).transpose();
}

Matrix per_sample_grads(const ModelConfig& config, const ParamVector& params, const Matrix& x,
                        std::span<const int> labels, Objective objective) {
  check_params(config, params);
  check_inputs(config, x);
  check_labels(config, x, labels);
  const auto layers = config.layers();
  const ForwardPass fp = run_forward(config, layers, params, x);
  const auto deltas =
      backward_deltas(config, layers, params, fp, objective_logit_grad(fp.logits, labels, objective));
  const Eigen::Index n = x.rows();
  Matrix g(n, idx(config.param_count()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& s = layers[l];
    const Matrix& a = fp.layer_input(l);
    const Matrix& d = deltas[l];
    for (Eigen::Index i = 0; i < n; ++i) {
      MatMap(g.row(i).data() + s.weight_offset, idx(s.out), idx(s.in)).noalias() =
          d.row(i).transpose() * a.row(i);
      g.row(i).segment(idx(s.bias_offset), idx(s.out)) = d.row(i);
    }
  }
  check_finite_grad(g);
  return g;
}

Vector per_sample_grad(const ModelConfig& config, const ParamVector& params,
                       std::span<const double> x, int label, Objective objective) {
  const int labels[1] = {label};
  return per_sample_grads(config, params, row_matrix(x), labels, objective).row(0).transpose();
}

Vector output_fn_batch(const ModelConfig& config, const ParamVector& params, const Matrix& x,
                       std::span<const int> labels) {
  check_labels(config, x, labels);
  const Matrix logits = forward_batch(config, params, x);
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[i] = margin_from_logits(logits.row(i).transpose(), labels[i]);
  }
  return out;
}

double output_fn(const ModelConfig& config, const ParamVector& params, std::span<const double> x,
                 int label) {
  const int labels[1] = {label};
  return output_fn_batch(config, params, row_matrix(x), labels)[0];
}

Matrix penultimate_features_batch(const ModelConfig& config, const ParamVector& params,
                                  const Matrix& x) {
  check_params(config, params);
  check_inputs(config, x);
  if (config.family == Family::LogisticRegression) return x;
  ForwardPass fp = run_forward(config, config.layers(), params, x);
  return std::move(fp.act.back());
}

Vector penultimate_features(const ModelConfig& config, const ParamVector& params,
                            std::span<const double> x) {
  return penultimate_features_batch(config, params, row_matrix(x)).row(0).transpose();
}

double mean_loss(const ModelConfig& config, const ParamVector& params, const Dataset& data) {
  const Matrix logits = forward_batch(config, params, data.features);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    total += cross_entropy(logits.row(i).transpose(), data.labels[i]);
  }
  return total / static_cast<double>(logits.rows());
}

double accuracy(const ModelConfig& config, const ParamVector& params, const Dataset& data) {
  const Matrix logits = forward_batch(config, params, data.features);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (arg == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

Vector correct_class_probability(const ModelConfig& config, const ParamVector& params,
                                 const Matrix& x, std::span<const int> labels) {
  check_labels(config, x, labels);
  const Matrix p = softmax_rows(forward_batch(config, params, x));
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = p(i, labels[i]);
  return out;
}

Vector mean_loss_grad(const ModelConfig& config, const ParamVector& params, const Dataset& data) {
  check_params(config, params);
  check_inputs(config, data.features);
  const auto layers = config.layers();
  const ForwardPass fp = run_forward(config, layers, params, data.features);
  const auto deltas = backward_deltas(config, layers, params, fp,
                                      objective_logit_grad(fp.logits, data.labels, Objective::Loss));
  Vector g(idx(config.param_count()));
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& s = layers[l];
    MatMap(g.data() + s.weight_offset, idx(s.out), idx(s.in)).noalias() =
        inv_n * (deltas[l].transpose() * fp.layer_input(l));
    g.segment(idx(s.bias_offset), idx(s.out)) = inv_n * deltas[l].colwise().sum().transpose();
  }
  return g;
}

Vector backprop(const ModelConfig& config, const ParamVector& params, const Matrix& x,
               const LogitGradFn& logit_grad) {
  check_params(config, params);
  check_inputs(config, x);
  const auto layers = config.layers();
  const ForwardPass fp = run_forward(config, layers, params, x);
  Matrix dlogits = logit_grad(fp.logits);
  if (dlogits.rows() != fp.logits.rows() || dlogits.cols() != fp.logits.cols()) {
    throw DimensionError("backprop: logit gradient has the wrong shape");
  }
  const auto deltas = backward_deltas(config, layers, params, fp, std::move(dlogits));
  Vector g(idx(config.param_count()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerShape& s = layers[l];
    MatMap(g.data() + s.weight_offset, idx(s.out), idx(s.in)).noalias() =
        deltas[l].transpose() * fp.layer_input(l);
    g.segment(idx(s.bias_offset), idx(s.out)) = deltas[l].colwise().sum().transpose();
  }
  return g;
}

// ---------------------------------------------------------------------------
// Hessian-vector products

HessianOperator::HessianOperator(const ModelConfig& config, const ParamVector& params,
                                 const Dataset& data)
    : config_(config), params_(params), layers_(config.layers()),
      param_count_(config.param_count()), n_(data.size()) {
  check_params(config, params);
  check_inputs(config, data.features);
  check_labels(config, data.features, data.labels);
  ForwardPass fp = run_forward(config, layers_, params, data.features);
  deltas_ = backward_deltas(config, layers_, params, fp,
                            objective_logit_grad(fp.logits, data.labels, Objective::Loss));
  probs_ = softmax_rows(fp.logits);
  acts_.push_back(data.features);
  for (auto& a : fp.act) acts_.push_back(std::move(a));
  pre_ = std::move(fp.pre);
}

Vector HessianOperator::apply(const Vector& v) const {
  VectorBlock block = v;
  return apply_block(block).col(0);
}

VectorBlock HessianOperator::apply_block(const VectorBlock& v) const {
  if (static_cast<std::size_t>(v.rows()) != param_count_) {
    throw DimensionError("hvp: vector length " + std::to_string(v.rows()) + " != " +
                         std::to_string(param_count_));
  }
  const Eigen::Index r = v.cols();
  const Eigen::Index n = idx(n_);
  const std::size_t L = layers_.size();
  const double* theta = params_.data();

  // Tangent quantities in column-stacked layout: n x (r * width), block c is direction c.
  std::vector<Matrix> rz(L);
  std::vector<Matrix> ra(L);  // ra[l] = tangent of hidden activation l (l < L-1)

  for (std::size_t l = 0; l < L; ++l) {
    const LayerShape& s = layers_[l];
    const Eigen::Index in = idx(s.in), out = idx(s.out);
    Matrix vt(in, r * out);
    for (Eigen::Index c = 0; c < r; ++c) {
      vt.block(0, c * out, in, out) = ConstMatMap(v.col(c).data() + s.weight_offset, out, in).transpose();
    }
    Matrix z = acts_[l] * vt;
    for (Eigen::Index c = 0; c < r; ++c) {
      auto blk = z.block(0, c * out, n, out);
      blk.rowwise() += ConstRowMap(v.col(c).data() + s.bias_offset, out);
      if (l > 0) blk.noalias() += ra[l - 1].block(0, c * in, n, in) * weight(theta, s).transpose();
    }
    if (l + 1 < L) {
      const Matrix slope = activation_slope(config_.activation, pre_[l], acts_[l + 1]);
      Matrix a(n, r * out);
      for (Eigen::Index c = 0; c < r; ++c) {
        a.block(0, c * out, n, out) = z.block(0, c * out, n, out).cwiseProduct(slope);
      }
      ra[l] = std::move(a);
    }
    rz[l] = std::move(z);
  }

  // Tangent of the per-example deltas, output layer first.
  std::vector<Matrix> rd(L);
  {
    const Eigen::Index k = idx(config_.num_classes);
    Matrix d(n, r * k);
    for (Eigen::Index c = 0; c < r; ++c) {
      const Matrix pz = probs_.cwiseProduct(rz[L - 1].block(0, c * k, n, k));
      const Vector s = pz.rowwise().sum();
      d.block(0, c * k, n, k) = pz - probs_.cwiseProduct(s.replicate(1, k));
    }
    rd[L - 1] = std::move(d);
  }
  for (std::size_t l = L - 1; l-- > 0;) {
    const LayerShape& s = layers_[l];
    const LayerShape& next = layers_[l + 1];
    const Eigen::Index out = idx(s.out);
    const Eigen::Index nout = idx(next.out);
    Matrix vs(nout, r * out);
    for (Eigen::Index c = 0; c < r; ++c) {
      vs.block(0, c * out, nout, out) = ConstMatMap(v.col(c).data() + next.weight_offset, nout, out);
    }
    Matrix d = deltas_[l + 1] * vs;  // delta_{l+1} V_{l+1}
    const auto w_next = weight(theta, next);
    const Matrix slope = activation_slope(config_.activation, pre_[l], acts_[l + 1]);
    Matrix back;
    Matrix curv;
    if (config_.activation == Activation::Tanh) {
      back = deltas_[l + 1] * w_next;
      curv = activation_curvature(acts_[l + 1]);
    }
    for (Eigen::Index c = 0; c < r; ++c) {
      auto blk = d.block(0, c * out, n, out);
      blk.noalias() += rd[l + 1].block(0, c * nout, n, nout) * w_next;
      blk = blk.cwiseProduct(slope);
      if (config_.activation == Activation::Tanh) {
        blk += curv.cwiseProduct(rz[l].block(0, c * out, n, out)).cwiseProduct(back);
      }
    }
    rd[l] = std::move(d);
  }

  VectorBlock hv(v.rows(), r);
  const double inv_n = 1.0 / static_cast<double>(n_);
  for (std::size_t l = 0; l < L; ++l) {
    const LayerShape& s = layers_[l];
    const Eigen::Index in = idx(s.in), out = idx(s.out);
    const Matrix first = rd[l].transpose() * acts_[l];  // (r*out) x in
    Matrix second;
    if (l > 0) second = deltas_[l].transpose() * ra[l - 1];  // out x (r*in)
    for (Eigen::Index c = 0; c < r; ++c) {
      MatMap w(hv.col(c).data() + s.weight_offset, out, in);
      w = first.block(c * out, 0, out, in);
      if (l > 0) w += second.block(0, c * in, out, in);
      w *= inv_n;
      hv.col(c).segment(idx(s.bias_offset), out) =
          inv_n * rd[l].block(0, c * out, n, out).colwise().sum().transpose();
    }
  }
  return hv;
}

Vector batch_hvp(const ModelConfig& config, const ParamVector& params, const Dataset& data,
                 const Vector& v) {
  return HessianOperator(config, params, data).apply(v);
}

// ---------------------------------------------------------------------------

double logsumexp(const Eigen::Ref<const Vector>& logits) {
  const double mx = logits.maxCoeff();
  return mx + std::log((logits.array() - mx).exp().sum());
}

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

double cross_entropy(const Eigen::Ref<const Vector>& logits, int label) {
  return logsumexp(logits) - logits[label];
}

double margin_from_logits(const Eigen::Ref<const Vector>& logits, int label) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (k != label) mx = std::max(mx, logits[k]);
  }
  double sum = 0.0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (k != label) sum += std::exp(logits[k] - mx);
  }
  return logits[label] - (mx + std::log(sum));
}

}  // namespace attrib
