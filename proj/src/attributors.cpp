#include "attrib/attributors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "attrib/digest.hpp"
#include "attrib/errors.hpp"
#include "attrib/numkernel.hpp"
#include "attrib/parallel.hpp"

namespace attrib {

namespace {

constexpr std::size_t kGradChunk = 64;

std::size_t chunk_count(std::size_t n, std::size_t chunk) { return (n + chunk - 1) / chunk; }

void check_score_size(std::size_t m, std::size_t n) {
  if (n != 0 && m > kMaxScoreEntries / n) {
    throw DimensionError("score matrix " + std::to_string(m) + " x " + std::to_string(n) +
                         " exceeds the in-memory limit");
  }
}

void check_pair(const ModelConfig& config, const Dataset& train, const Dataset* test) {
  config.validate();
  train.validate();
  if (train.size() == 0) throw DimensionError("attribution needs a non-empty training set");
  if (train.input_dim() != config.input_dim) throw DimensionError("training input dim mismatch");
  if (test != nullptr) {
    test->validate();
    if (test->size() > 0 && test->input_dim() != config.input_dim) {
      throw DimensionError("test input dim mismatch");
    }
  }
}

Matrix rows_matrix(const Dataset& data, std::size_t begin, std::size_t count) {
  return data.features.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
}

std::span<const int> rows_labels(const Dataset& data, std::size_t begin, std::size_t count) {
  return std::span<const int>(data.labels).subspan(begin, count);
}

// Per-example gradients, optionally right-multiplied by a projection (p x k).
Matrix gradient_features(const Checkpoint& ckpt, const Dataset& data, const Matrix* projection,
                         Objective objective) {
  const std::size_t n = data.size();
  const std::size_t k = projection ? static_cast<std::size_t>(projection->cols()) : ckpt.params.size();
  Matrix out(n, k);
  parallel_for(chunk_count(n, kGradChunk), [&](std::size_t c) {
    const std::size_t b = c * kGradChunk;
    const std::size_t len = std::min(kGradChunk, n - b);
    Matrix g = per_sample_grads(ckpt.config, ckpt.params, rows_matrix(data, b, len),
                                rows_labels(data, b, len), objective);
    auto dst = out.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(len));
    if (projection) {
      dst.noalias() = g * *projection;
    } else {
      dst = g;
    }
  });
  return out;
}

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------
// TRAK

struct TrakMember {
  Checkpoint checkpoint;
  std::string subset;
};

std::vector<TrakMember> trak_members(const ModelConfig& config, const Dataset& train,
                                     const TrakConfig& trak, const TrainingSchedule& schedule,
                                     const RngStream& rng, const TrakOptions& options) {
  const std::size_t m = trak.ensemble_size;
  std::vector<TrakMember> members(m);
  if (!options.checkpoints.empty()) {
    if (options.checkpoints.size() != 1 && options.checkpoints.size() != m) {
      throw ConfigError("TRAK: supply one checkpoint or ensemble_size checkpoints");
    }
    for (std::size_t i = 0; i < m; ++i) {
      const Checkpoint& c = options.checkpoints[options.checkpoints.size() == 1 ? 0 : i];
      if (!(c.config == config)) throw ConfigError("TRAK: checkpoint architecture mismatch");
      members[i] = {c, c.provenance.subset_id};
    }
    return members;
  }
  const std::size_t n = train.size();
  const auto subset_size = static_cast<std::size_t>(
      std::clamp<double>(std::round(trak.subsample_fraction * static_cast<double>(n)), 1.0,
                         static_cast<double>(n)));
  parallel_for(m, [&](std::size_t i) {
    RngStream pick = rng.derive(i, 1);
    auto pos = sample_without_replacement(pick, n, subset_size);
    std::sort(pos.begin(), pos.end());
    std::vector<std::uint64_t> ids;
    ids.reserve(pos.size());
    for (auto p : pos) ids.push_back(train.ids[p]);
    const std::uint64_t seed = job_seed(rng, i);
    Checkpoint c = options.trainer(config, train.restrict_to(ids), schedule.with_shuffle_seed(seed),
                                   RngStream(seed, 2));
    c.provenance.subset_id = subset_digest(ids);
    members[i].subset = c.provenance.subset_id;
    members[i].checkpoint = std::move(c);
  });
  return members;
}

struct MemberFeatures {
  Matrix train_phi;  // n x k
  Matrix gram_inv;   // k x k
  Vector q;          // n
  double damping = 0.0;
};

MemberFeatures member_features(const TrakMember& member, std::size_t index, const Dataset& train,
                               const TrakConfig& trak, const TrakOptions& options,
                               std::optional<Matrix>& projection) {
  const Checkpoint& c = member.checkpoint;
  const std::size_t p = c.params.size();
  if (options.identity_projection) {
    projection.reset();
  } else {
    projection = gaussian_matrix(RngStream(trak.projection_seed).derive(index), p,
                                 trak.projection_dim);
  }
  MemberFeatures f;
  f.train_phi = gradient_features(c, train, projection ? &*projection : nullptr, Objective::Margin);
  const double k = static_cast<double>(f.train_phi.cols());
  f.damping = trak.gram_damping ? *trak.gram_damping : 1e-6 * f.train_phi.squaredNorm() / k;
  f.gram_inv = damped_gram_inverse(f.train_phi, f.damping, trak.gram_cap);
  f.q = Vector::Ones(static_cast<Eigen::Index>(train.size())) -
        correct_class_probability(c.config, c.params, train.features, train.labels);
  return f;
}

std::map<std::string, std::string> trak_params(const TrakConfig& trak, const TrakOptions& options,
                                               const std::vector<double>& dampings,
                                               const std::vector<TrakMember>& members) {
  std::map<std::string, std::string> out;
  out["ensemble_size"] = std::to_string(trak.ensemble_size);
  out["projection_dim"] = options.identity_projection ? "identity" : std::to_string(trak.projection_dim);
  out["subsample_fraction"] = fmt(trak.subsample_fraction);
  out["projection_seed"] = std::to_string(trak.projection_seed);
  out["composition"] = trak.composition == TrakComposition::AveragedQ ? "averaged_q" : "per_model";
  out["output"] = "margin";
  std::ostringstream d;
  for (std::size_t i = 0; i < dampings.size(); ++i) d << (i ? "," : "") << fmt(dampings[i]);
  out["gram_damping"] = d.str();
  std::ostringstream s;
  for (std::size_t i = 0; i < members.size(); ++i) s << (i ? "," : "") << members[i].subset;
  out["member_subsets"] = s.str();
  return out;
}

void check_trak_dims(const ModelConfig& config, const TrakConfig& trak, const TrakOptions& options) {
  trak.validate();
  if (options.identity_projection && config.param_count() > trak.gram_cap) {
    throw DimensionError("TRAK identity projection: param count " +
                         std::to_string(config.param_count()) + " exceeds gram cap");
  }
}

// ---------------------------------------------------------------------------
// Representer points: final-layer refit on frozen features.

LayerShape final_layer(const ModelConfig& config) { return config.layers().back(); }

Matrix read_weights(const ParamVector& params, const LayerShape& l) {
  Matrix w(l.out, l.in);
  for (std::size_t r = 0; r < l.out; ++r) {
    for (std::size_t c = 0; c < l.in; ++c) w(r, c) = params[l.weight_offset + r * l.in + c];
  }
  return w;
}

Vector read_bias(const ParamVector& params, const LayerShape& l) {
  return params.segment(static_cast<Eigen::Index>(l.bias_offset), static_cast<Eigen::Index>(l.out));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Matrix one_hot(std::span<const int> labels, std::size_t classes) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return y;
}

class FinalLayerProblem {
 public:
  FinalLayerProblem(const Matrix& h, std::span<const int> labels, std::size_t classes, double lambda)
      : h_(h), y_(one_hot(labels, classes)), classes_(classes), d_(static_cast<std::size_t>(h.cols())),
        lambda_(lambda), n_(static_cast<double>(h.rows())) {}

  std::size_t dim() const { return classes_ * (d_ + 1); }

  Vector pack(const Matrix& w, const Vector& b) const {
    Vector t(static_cast<Eigen::Index>(dim()));
    t.head(static_cast<Eigen::Index>(classes_ * d_)) = Eigen::Map<const Vector>(w.data(), w.size());
    t.tail(static_cast<Eigen::Index>(classes_)) = b;
    return t;
  }
  Matrix weights(const Vector& t) const {
    return Eigen::Map<const Matrix>(t.data(), static_cast<Eigen::Index>(classes_),
                                    static_cast<Eigen::Index>(d_));
  }
  Vector bias(const Vector& t) const { return t.tail(static_cast<Eigen::Index>(classes_)); }

  Matrix logits(const Vector& t) const {
    Matrix z = h_ * weights(t).transpose();
    z.rowwise() += bias(t).transpose();
    return z;
  }

  double objective(const Vector& t) const {
    const Matrix z = logits(t);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double mx = z.row(i).maxCoeff();
      const double lse = mx + std::log((z.row(i).array() - mx).exp().sum());
      loss += lse - (z.row(i).array() * y_.row(i).array()).sum();
    }
    return loss / n_ + lambda_ * weights(t).squaredNorm();
  }

  // dloss_j/dlogits (unscaled, n x classes) at t.
  Matrix logit_grads(const Vector& t) const { return softmax_rows(logits(t)) - y_; }

  Vector gradient(const Vector& t, const Matrix& dz) const {
    const Matrix gw = dz.transpose() * h_ / n_ + 2.0 * lambda_ * weights(t);
    const Vector gb = dz.colwise().sum().transpose() / n_;
    return pack(gw, gb);
  }

  Vector hvp(const Matrix& probs, const Vector& v) const {
    Matrix r = h_ * weights(v).transpose();
    r.rowwise() += bias(v).transpose();
    const Matrix pr = probs.cwiseProduct(r);
    Matrix rd = pr;
    const Vector s = pr.rowwise().sum();
    rd -= probs.cwiseProduct(s.replicate(1, probs.cols()));
    const Matrix hw = rd.transpose() * h_ / n_ + 2.0 * lambda_ * weights(v);
    const Vector hb = rd.colwise().sum().transpose() / n_;
    return pack(hw, hb);
  }

 private:
  const Matrix& h_;
  Matrix y_;
  std::size_t classes_;
  std::size_t d_;
  double lambda_;
  double n_;
};

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Method method) {
  switch (method) {
    case Method::TRAK: return "trak";
    case Method::IF: return "if";
    case Method::TracInCP: return "tracincp";
    case Method::RPS: return "rps";
  }
  throw ConfigError("unknown method tag");
}

Method parse_method(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (t == "trak") return Method::TRAK;
  if (t == "if" || t == "influence") return Method::IF;
  if (t == "tracincp" || t == "tracin") return Method::TracInCP;
  if (t == "rps" || t == "representer") return Method::RPS;
  throw ConfigError("unknown attribution method '" + text + "'");
}

void ScoreMatrix::validate() const {
  if (static_cast<std::size_t>(scores.rows()) != test_ids.size() ||
      static_cast<std::size_t>(scores.cols()) != train_ids.size()) {
    throw DimensionError("score matrix shape does not match its id lists");
  }
  if (!all_finite(scores)) throw NumericalError("score matrix has non-finite entries");
}

void TrakConfig::validate() const {
  if (ensemble_size == 0) throw ConfigError("TRAK ensemble_size must be >= 1");
  if (projection_dim == 0) throw ConfigError("TRAK projection_dim must be >= 1");
  if (projection_dim > gram_cap) {
    throw DimensionError("TRAK projection_dim " + std::to_string(projection_dim) +
                         " exceeds gram cap " + std::to_string(gram_cap));
  }
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    throw ConfigError("TRAK subsample_fraction must be in (0, 1]");
  }
  if (gram_damping && !(*gram_damping >= 0.0 && std::isfinite(*gram_damping))) {
    throw ConfigError("TRAK gram_damping must be finite and >= 0");
  }
}

ScoreMatrix attribute_trak(const ModelConfig& config, const Dataset& train, const Dataset& test,
                           const TrakConfig& trak, const TrainingSchedule& schedule,
                           RngStream rng, const TrakOptions& options) {
  check_pair(config, train, &test);
  check_trak_dims(config, trak, options);
  const std::size_t n = train.size();
  const std::size_t m = test.size();
  check_score_size(m, n);

  const auto members = trak_members(config, train, trak, schedule, rng, options);
  const auto em = static_cast<Eigen::Index>(m);
  const auto en = static_cast<Eigen::Index>(n);
  Matrix kernel_sum = Matrix::Zero(em, en);
  Vector q_sum = Vector::Zero(en);
  std::vector<double> dampings;
  for (std::size_t i = 0; i < members.size(); ++i) {
    std::optional<Matrix> projection;
    MemberFeatures f = member_features(members[i], i, train, trak, options, projection);
    dampings.push_back(f.damping);
    const Matrix test_phi = gradient_features(members[i].checkpoint, test,
                                              projection ? &*projection : nullptr, Objective::Margin);
    projection.reset();
    const Matrix left = test_phi * f.gram_inv;
    Matrix kernel(em, en);
    parallel_for(chunk_count(n, 256), [&](std::size_t c) {
      const auto b = static_cast<Eigen::Index>(c * 256);
      const auto len = std::min<Eigen::Index>(256, en - b);
      kernel.middleCols(b, len).noalias() = left * f.train_phi.middleRows(b, len).transpose();
    });
    if (trak.composition == TrakComposition::PerModel) {
      kernel_sum.noalias() += kernel * f.q.asDiagonal();
    } else {
      kernel_sum += kernel;
      q_sum += f.q;
    }
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  ScoreMatrix out;
  out.test_ids = test.ids;
  out.train_ids = train.ids;
  out.method = Method::TRAK;
  if (trak.composition == TrakComposition::PerModel) {
    out.scores = kernel_sum * inv;
  } else {
    out.scores = (kernel_sum * inv) * (q_sum * inv).asDiagonal();
  }
  out.method_params = trak_params(trak, options, dampings, members);
  out.validate();
  return out;
}

Vector self_influence_trak(const ModelConfig& config, const Dataset& train,
                           const TrakConfig& trak, const TrainingSchedule& schedule,
                           RngStream rng, const TrakOptions& options) {
  check_pair(config, train, nullptr);
  check_trak_dims(config, trak, options);
  const auto members = trak_members(config, train, trak, schedule, rng, options);
  const auto en = static_cast<Eigen::Index>(train.size());
  Vector kernel_sum = Vector::Zero(en);
  Vector q_sum = Vector::Zero(en);
  for (std::size_t i = 0; i < members.size(); ++i) {
    std::optional<Matrix> projection;
    MemberFeatures f = member_features(members[i], i, train, trak, options, projection);
    const Vector diag = (f.train_phi * f.gram_inv).cwiseProduct(f.train_phi).rowwise().sum();
    if (trak.composition == TrakComposition::PerModel) {
      kernel_sum += diag.cwiseProduct(f.q);
    } else {
      kernel_sum += diag;
      q_sum += f.q;
    }
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  if (trak.composition == TrakComposition::PerModel) return kernel_sum * inv;
  return (kernel_sum * inv).cwiseProduct(q_sum * inv);
}

// ---------------------------------------------------------------------------

namespace {

struct IfSolve {
  Matrix solutions;  // rows x p, one (H + damping I)^{-1} g per row
  std::size_t unconverged = 0;
  double worst_residual = 0.0;
};

IfSolve solve_rows(const HessianOperator& hess, const Matrix& grads, const IfConfig& cfg) {
  const std::size_t rows = static_cast<std::size_t>(grads.rows());
  const std::size_t bs = std::max<std::size_t>(cfg.block_size, 1);
  const std::size_t blocks = chunk_count(rows, bs);
  IfSolve out;
  out.solutions.resize(grads.rows(), grads.cols());
  std::vector<std::size_t> unconverged(blocks, 0);
  std::vector<double> worst(blocks, 0.0);
  const BlockOperator op = [&hess](const VectorBlock& v) { return hess.apply_block(v); };
  parallel_for(blocks, [&](std::size_t c) {
    const auto b = static_cast<Eigen::Index>(c * bs);
    const auto len = static_cast<Eigen::Index>(std::min(bs, rows - c * bs));
    const VectorBlock rhs = grads.middleRows(b, len).transpose();
    const BlockCgResult r = cg_solve_block(op, rhs, cfg.damping, cfg.cg_tol, cfg.cg_max_iter);
    out.solutions.middleRows(b, len) = r.x.transpose();
    for (std::size_t j = 0; j < r.converged.size(); ++j) {
      if (!r.converged[j]) ++unconverged[c];
      worst[c] = std::max(worst[c], r.relative_residual[j]);
    }
  });
  for (std::size_t c = 0; c < blocks; ++c) {
    out.unconverged += unconverged[c];
    out.worst_residual = std::max(out.worst_residual, worst[c]);
  }
  return out;
}

void check_if_config(const IfConfig& cfg) {
  if (!(cfg.damping >= 0.0) || !std::isfinite(cfg.damping)) throw ConfigError("IF damping must be >= 0");
  if (!(cfg.cg_tol > 0.0)) throw ConfigError("IF cg_tol must be > 0");
  if (cfg.cg_max_iter <= 0) throw ConfigError("IF cg_max_iter must be > 0");
}

}  // namespace

ScoreMatrix attribute_if(const Checkpoint& checkpoint, const Dataset& train, const Dataset& test,
                         const IfConfig& config) {
  checkpoint.validate();
  check_pair(checkpoint.config, train, &test);
  check_if_config(config);
  const std::size_t n = train.size();
  const std::size_t m = test.size();
  check_score_size(m, n);

  const HessianOperator hess(checkpoint.config, checkpoint.params, train);
  const Matrix test_grads = gradient_features(checkpoint, test, nullptr, Objective::Loss);
  const IfSolve solved = solve_rows(hess, test_grads, config);

  ScoreMatrix out;
  out.test_ids = test.ids;
  out.train_ids = train.ids;
  out.method = Method::IF;
  out.scores.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  parallel_for(chunk_count(n, kGradChunk), [&](std::size_t c) {
    const std::size_t b = c * kGradChunk;
    const std::size_t len = std::min(kGradChunk, n - b);
    const Matrix g = per_sample_grads(checkpoint.config, checkpoint.params, rows_matrix(train, b, len),
                                      rows_labels(train, b, len), Objective::Loss);
    out.scores.middleCols(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(len)).noalias() =
        solved.solutions * g.transpose();
  });
  out.method_params["damping"] = fmt(config.damping);
  out.method_params["cg_tol"] = fmt(config.cg_tol);
  out.method_params["cg_max_iter"] = std::to_string(config.cg_max_iter);
  out.method_params["cg_unconverged"] = std::to_string(solved.unconverged);
  out.method_params["cg_worst_residual"] = fmt(solved.worst_residual);
  out.validate();
  return out;
}

Vector self_influence_if(const Checkpoint& checkpoint, const Dataset& train, const IfConfig& config) {
  checkpoint.validate();
  check_pair(checkpoint.config, train, nullptr);
  check_if_config(config);
  const HessianOperator hess(checkpoint.config, checkpoint.params, train);
  const std::size_t n = train.size();
  const std::size_t bs = std::max<std::size_t>(config.block_size, 1);
  Vector out(static_cast<Eigen::Index>(n));
  for (std::size_t b = 0; b < n; b += bs * 8) {
    const std::size_t len = std::min(bs * 8, n - b);
    const Matrix g = per_sample_grads(checkpoint.config, checkpoint.params, rows_matrix(train, b, len),
                                      rows_labels(train, b, len), Objective::Loss);
    const IfSolve solved = solve_rows(hess, g, config);
    out.segment(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(len)) =
        g.cwiseProduct(solved.solutions).rowwise().sum();
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_tracin(std::span<const Checkpoint> checkpoints, std::span<const double> lrs,
                  const Dataset& train, const Dataset* test) {
  if (checkpoints.empty()) throw ConfigError("TracInCP needs at least one checkpoint");
  if (lrs.size() != checkpoints.size()) {
    throw DimensionError("TracInCP: " + std::to_string(lrs.size()) + " learning rates for " +
                         std::to_string(checkpoints.size()) + " checkpoints");
  }
  for (const auto& c : checkpoints) {
    c.validate();
    if (!(c.config == checkpoints.front().config)) {
      throw ConfigError("TracInCP checkpoints must share an architecture");
    }
  }
  check_pair(checkpoints.front().config, train, test);
}

}  // namespace

ScoreMatrix attribute_tracin(std::span<const Checkpoint> checkpoints,
                             std::span<const double> learning_rates, const Dataset& train,
                             const Dataset& test) {
  check_tracin(checkpoints, learning_rates, train, &test);
  const std::size_t n = train.size();
  const std::size_t m = test.size();
  check_score_size(m, n);
  ScoreMatrix out;
  out.test_ids = test.ids;
  out.train_ids = train.ids;
  out.method = Method::TracInCP;
  out.scores = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const Checkpoint& c = checkpoints[i];
    const Matrix test_grads = gradient_features(c, test, nullptr, Objective::Loss) * learning_rates[i];
    parallel_for(chunk_count(n, kGradChunk), [&](std::size_t k) {
      const std::size_t b = k * kGradChunk;
      const std::size_t len = std::min(kGradChunk, n - b);
      const Matrix g = per_sample_grads(c.config, c.params, rows_matrix(train, b, len),
                                        rows_labels(train, b, len), Objective::Loss);
      out.scores.middleCols(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(len)).noalias() +=
          test_grads * g.transpose();
    });
  }
  out.method_params["checkpoints"] = std::to_string(checkpoints.size());
  std::ostringstream lr;
  for (std::size_t i = 0; i < learning_rates.size(); ++i) lr << (i ? "," : "") << fmt(learning_rates[i]);
  out.method_params["learning_rates"] = lr.str();
  out.validate();
  return out;
}

Vector self_influence_tracin(std::span<const Checkpoint> checkpoints,
                             std::span<const double> learning_rates, const Dataset& train) {
  check_tracin(checkpoints, learning_rates, train, nullptr);
  const std::size_t n = train.size();
  Vector out = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const Checkpoint& c = checkpoints[i];
    parallel_for(chunk_count(n, kGradChunk), [&](std::size_t k) {
      const std::size_t b = k * kGradChunk;
      const std::size_t len = std::min(kGradChunk, n - b);
      const Matrix g = per_sample_grads(c.config, c.params, rows_matrix(train, b, len),
                                        rows_labels(train, b, len), Objective::Loss);
      out.segment(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(len)) +=
          learning_rates[i] * g.rowwise().squaredNorm();
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

void RpsConfig::validate() const {
  if (!(l2_lambda > 0.0) || !std::isfinite(l2_lambda)) throw ConfigError("RPS l2_lambda must be > 0");
  if (!(stationarity_tol > 0.0)) throw ConfigError("RPS stationarity_tol must be > 0");
  if (max_newton_iter <= 0) throw ConfigError("RPS max_newton_iter must be > 0");
}

Matrix representer_coefficients(const Matrix& logit_grads, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("representer lambda must be > 0");
  if (logit_grads.rows() == 0) throw DimensionError("representer coefficients need rows");
  return logit_grads * (-1.0 / (2.0 * lambda * static_cast<double>(logit_grads.rows())));
}

RepresenterFit fit_representer(const Checkpoint& checkpoint, const Dataset& train,
                               const RpsConfig& config) {
  checkpoint.validate();
  check_pair(checkpoint.config, train, nullptr);
  config.validate();
  const LayerShape last = final_layer(checkpoint.config);
  RepresenterFit fit;
  fit.train_features = penultimate_features_batch(checkpoint.config, checkpoint.params, train.features);
  const FinalLayerProblem problem(fit.train_features, train.labels, checkpoint.config.num_classes,
                                  config.l2_lambda);
  Vector theta = problem.pack(read_weights(checkpoint.params, last), read_bias(checkpoint.params, last));
  Matrix dz = problem.logit_grads(theta);
  Vector grad = problem.gradient(theta, dz);

  if (config.refit_final_layer) {
    double value = problem.objective(theta);
    int it = 0;
    while (grad.norm() > config.stationarity_tol) {
      if (it == config.max_newton_iter) {
        throw ConvergenceError("representer refit did not reach stationarity after " +
                                   std::to_string(it) + " Newton steps",
                               grad.norm());
      }
      const Matrix p = softmax_rows(problem.logits(theta));
      const LinearOperator hv = [&](const Vector& v) { return problem.hvp(p, v); };
      const CgResult step = cg_solve(hv, -grad, 1e-12, 1e-10, 10 * static_cast<int>(problem.dim()));
      const double slope = grad.dot(step.x);
      double t = 1.0;
      Vector next = theta + step.x;
      double next_value = problem.objective(next);
      while (!(next_value <= value + 1e-4 * t * slope) && t > 1e-12) {
        t *= 0.5;
        next = theta + t * step.x;
        next_value = problem.objective(next);
      }
      if (!(next_value <= value)) {
        throw ConvergenceError("representer refit line search stalled", grad.norm());
      }
      theta = next;
      value = next_value;
      dz = problem.logit_grads(theta);
      grad = problem.gradient(theta, dz);
      ++it;
    }
    fit.iterations = it;
  }
  fit.weights = problem.weights(theta);
  fit.bias = problem.bias(theta);
  fit.alpha = representer_coefficients(dz, config.l2_lambda);
  fit.stationarity_residual = grad.norm();
  return fit;
}

ScoreMatrix attribute_rps(const Checkpoint& checkpoint, const Dataset& train, const Dataset& test,
                          const RpsConfig& config) {
  check_pair(checkpoint.config, train, &test);
  check_score_size(test.size(), train.size());
  const RepresenterFit fit = fit_representer(checkpoint, train, config);
  const Matrix test_h = penultimate_features_batch(checkpoint.config, checkpoint.params, test.features);
  const Matrix y = one_hot(test.labels, checkpoint.config.num_classes);
  ScoreMatrix out;
  out.test_ids = test.ids;
  out.train_ids = train.ids;
  out.method = Method::RPS;
  out.scores = (test_h * fit.train_features.transpose()).cwiseProduct(y * fit.alpha.transpose());
  out.method_params["l2_lambda"] = fmt(config.l2_lambda);
  out.method_params["refit_final_layer"] = config.refit_final_layer ? "true" : "false";
  out.method_params["stationarity_residual"] = fmt(fit.stationarity_residual);
  out.method_params["newton_iterations"] = std::to_string(fit.iterations);
  out.method_params["class_slice"] = "test_label";
  out.validate();
  return out;
}

Vector self_influence_rps(const Checkpoint& checkpoint, const Dataset& train, const RpsConfig& config) {
  const RepresenterFit fit = fit_representer(checkpoint, train, config);
  Vector out(static_cast<Eigen::Index>(train.size()));
  for (std::size_t j = 0; j < train.size(); ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    out[r] = fit.alpha(r, train.labels[j]) * fit.train_features.row(r).squaredNorm();
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const Checkpoint& first_checkpoint(const AttributionInputs& inputs, Method method) {
  if (inputs.checkpoints.empty()) {
    throw ConfigError(to_string(method) + " needs a trained checkpoint");
  }
  return inputs.checkpoints.front();
}

}  // namespace

ScoreMatrix attribute(Method method, const AttributionInputs& inputs, const Dataset& train,
                      const Dataset& test) {
  switch (method) {
    case Method::TRAK:
      return attribute_trak(inputs.config, train, test, inputs.trak, inputs.schedule, inputs.rng,
                            inputs.trak_options);
    case Method::IF: return attribute_if(first_checkpoint(inputs, method), train, test, inputs.if_config);
    case Method::TracInCP:
      return attribute_tracin(inputs.checkpoints, inputs.learning_rates, train, test);
    case Method::RPS: return attribute_rps(first_checkpoint(inputs, method), train, test, inputs.rps);
  }
  throw ConfigError("unknown method");
}

Vector self_influence(Method method, const AttributionInputs& inputs, const Dataset& train) {
  switch (method) {
    case Method::TRAK:
      return self_influence_trak(inputs.config, train, inputs.trak, inputs.schedule, inputs.rng,
                                 inputs.trak_options);
    case Method::IF: return self_influence_if(first_checkpoint(inputs, method), train, inputs.if_config);
    case Method::TracInCP: return self_influence_tracin(inputs.checkpoints, inputs.learning_rates, train);
    case Method::RPS: return self_influence_rps(first_checkpoint(inputs, method), train, inputs.rps);
  }
  throw ConfigError("unknown method");
}

}  // namespace attrib
