#include "attrib/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "attrib/digest.hpp"
#include "attrib/errors.hpp"

namespace attrib {
namespace {

std::vector<std::size_t> shuffled_rows(std::size_t n, std::uint64_t shuffle_seed,
                                       std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(shuffle_seed, epoch);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Matrix log_softmax_rows_scaled(const Matrix& logits, double inv_t) {
  Matrix z = logits * inv_t;
  z = z.colwise() - z.rowwise().maxCoeff();
  const Eigen::VectorXd lse = z.array().exp().rowwise().sum().log().matrix();
  return z.colwise() - lse;
}

struct DistillTarget {
  const Matrix* teacher_logits;  // one row per training example
  KDConfig kd;
};

// Shared SGD loop. With `distill` unset this is plain cross-entropy training.
TrainingRun sgd_loop(const ModelConfig& config, const Dataset& data,
                     const TrainingSchedule& schedule, RngStream rng,
                     const std::optional<DistillTarget>& distill, const EpochObserver& observer) {
  config.validate();
  schedule.validate();
  data.validate();
  if (data.input_dim() != config.input_dim || data.num_classes != config.num_classes) {
    throw DimensionError("training data (" + std::to_string(data.input_dim()) + " features, " +
                         std::to_string(data.num_classes) + " classes) does not match " +
                         describe(config));
  }

  TrainingRun run;
  Checkpoint& ckpt = run.final;
  ckpt.config = config;
  ckpt.params = init_params(config, rng);
  ckpt.provenance.train_seed = rng.seed();
  ckpt.provenance.train_stream = rng.stream_id();
  ckpt.provenance.schedule_digest = schedule.digest();
  if (distill) ckpt.provenance.kd = distill->kd;

  const std::size_t n = data.size();
  Vector velocity = Vector::Zero(ckpt.params.size());
  for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    const double lr = schedule.learning_rate(epoch);
    const auto order = shuffled_rows(n, schedule.shuffle_seed, epoch);
    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t begin = 0; begin < n; begin += schedule.batch_size, ++step) {
      const std::size_t end = std::min(n, begin + schedule.batch_size);
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const Matrix xb = gather_rows(data.features, rows);
      const double inv_b = 1.0 / static_cast<double>(rows.size());
      double batch_loss = 0.0;

      auto logit_grad = [&](const Matrix& logits) -> Matrix {
        const Matrix log_p = log_softmax_rows_scaled(logits, 1.0);
        Matrix p = log_p.array().exp().matrix();
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
          const int y = data.labels[rows[i]];
          batch_loss -= log_p(i, y);
          p(i, y) -= 1.0;
        }
        if (!distill || distill->kd.alpha == 0.0) {
          batch_loss *= inv_b;
          return p * inv_b;
        }
        const double alpha = distill->kd.alpha;
        const double t = distill->kd.temperature;
        const Matrix teacher = gather_rows(*distill->teacher_logits, rows);
        const Matrix log_ps = log_softmax_rows_scaled(logits, 1.0 / t);
        const Matrix log_pt = log_softmax_rows_scaled(teacher, 1.0 / t);
        const Matrix ps = log_ps.array().exp().matrix();
        Matrix g = (1.0 - alpha) * p;
        double kl_sum = 0.0;
        for (Eigen::Index i = 0; i < ps.rows(); ++i) {
          const Eigen::RowVectorXd d = log_ps.row(i) - log_pt.row(i);
          const double kl = ps.row(i).dot(d);
          kl_sum += kl;
          g.row(i) += alpha * t * ps.row(i).cwiseProduct((d.array() - kl).matrix());
        }
        batch_loss = ((1.0 - alpha) * batch_loss + alpha * t * t * kl_sum) * inv_b;
        return g * inv_b;
      };

      const Vector grad = backprop(config, ckpt.params, xb, logit_grad);
      if (!std::isfinite(batch_loss) || !grad.allFinite()) {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << epoch + 1 << ", step " << step
           << " (learning rate " << lr << "); lower the learning rate";
        throw TrainingError(os.str());
      }
      loss_sum += batch_loss * static_cast<double>(rows.size());
      if (schedule.momentum > 0.0) {
        velocity = schedule.momentum * velocity + grad;
        ckpt.params -= lr * velocity;
      } else {
        ckpt.params -= lr * grad;
      }
    }
    if (!ckpt.params.allFinite()) {
      throw TrainingError("parameters diverged in epoch " + std::to_string(epoch + 1));
    }
    ckpt.provenance.epoch_index = epoch + 1;
    run.epoch_losses.push_back(loss_sum / static_cast<double>(n));
    if (schedule.retain_per_epoch) run.per_epoch.push_back(ckpt);
    if (observer) observer(epoch + 1, ckpt);
  }
  return run;
}

}  // namespace

// ---------------------------------------------------------------------------

void TrainingSchedule::validate() const {
  if (batch_size < 1) throw ConfigError("schedule: batch_size must be >= 1");
  if (learning_rates.empty()) throw ConfigError("schedule: no learning rate given");
  if (learning_rates.size() != 1 && learning_rates.size() != epochs) {
    throw ConfigError("schedule: learning_rates needs 1 or `epochs` entries");
  }
  for (double lr : learning_rates) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("schedule: learning rates must be > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("schedule: momentum must be in [0,1)");
}

double TrainingSchedule::learning_rate(std::size_t epoch) const {
  return learning_rates.size() == 1 ? learning_rates[0] : learning_rates.at(epoch);
}

std::string TrainingSchedule::digest() const {
  std::ostringstream os;
  os << "epochs=" << epochs << "\nbatch_size=" << batch_size << "\nlearning_rates=";
  for (std::size_t i = 0; i < learning_rates.size(); ++i) {
    if (i) os << ',';
    os << format_double(learning_rates[i]);
  }
  os << "\nmomentum=" << format_double(momentum) << "\nshuffle_seed=" << shuffle_seed << '\n';
  return sha256_hex(os.str()).substr(0, 16);
}

TrainingSchedule TrainingSchedule::with_shuffle_seed(std::uint64_t seed) const {
  TrainingSchedule s = *this;
  s.shuffle_seed = seed;
  return s;
}

void KDConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("kd: alpha must be in [0,1]");
  if (!(temperature > 0.0)) throw ConfigError("kd: temperature must be positive");
}

std::string Provenance::digest() const {
  std::ostringstream os;
  os << "train_seed=" << train_seed << "\ntrain_stream=" << train_stream
     << "\nschedule=" << schedule_digest << "\nsubset=" << subset_id << "\nepoch=" << epoch_index;
  if (kd) os << "\nkd_alpha=" << format_double(kd->alpha) << "\nkd_t=" << format_double(kd->temperature);
  return sha256_hex(os.str());
}

void Checkpoint::validate() const {
  config.validate();
  if (static_cast<std::size_t>(params.size()) != config.param_count()) {
    throw DimensionError("checkpoint parameter count does not match " + describe(config));
  }
  if (!params.allFinite()) throw NumericalError("checkpoint parameters are not finite");
}

// ---------------------------------------------------------------------------

struct QueryHandle::State {
  BatchFn fn;
  std::size_t input_dim;
  std::size_t output_dim;
  std::atomic<std::size_t> calls{0};
};

QueryHandle::QueryHandle(BatchFn fn, std::size_t input_dim, std::size_t output_dim)
    : state_(std::make_shared<State>()) {
  state_->fn = std::move(fn);
  state_->input_dim = input_dim;
  state_->output_dim = output_dim;
}

Matrix QueryHandle::query_batch(const Matrix& inputs) const {
  if (static_cast<std::size_t>(inputs.cols()) != state_->input_dim) {
    throw DimensionError("query: expected " + std::to_string(state_->input_dim) + " features");
  }
  state_->calls.fetch_add(static_cast<std::size_t>(inputs.rows()));
  Matrix out = state_->fn(inputs);
  if (static_cast<std::size_t>(out.cols()) != state_->output_dim || out.rows() != inputs.rows()) {
    throw DimensionError("query: backend returned logits of the wrong shape");
  }
  return out;
}

Vector QueryHandle::operator()(std::span<const double> x) const {
  Matrix m(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = x[i];
  return query_batch(m).row(0).transpose();
}

std::size_t QueryHandle::call_count() const { return state_->calls.load(); }
std::size_t QueryHandle::input_dim() const { return state_->input_dim; }
std::size_t QueryHandle::output_dim() const { return state_->output_dim; }

QueryHandle make_query(const Checkpoint& checkpoint) {
  checkpoint.validate();
  auto model = std::make_shared<const Checkpoint>(checkpoint);
  return QueryHandle(
      [model](const Matrix& x) { return forward_batch(model->config, model->params, x); },
      checkpoint.config.input_dim, checkpoint.config.num_classes);
}

// ---------------------------------------------------------------------------

Checkpoint untrained_checkpoint(const ModelConfig& config, RngStream rng) {
  Checkpoint c;
  c.config = config;
  c.params = init_params(config, rng);
  c.provenance.train_seed = rng.seed();
  c.provenance.train_stream = rng.stream_id();
  TrainingSchedule none;
  none.epochs = 0;
  c.provenance.schedule_digest = none.digest();
  return c;
}

TrainingRun train_run(const ModelConfig& config, const Dataset& data,
                      const TrainingSchedule& schedule, RngStream rng,
                      const EpochObserver& observer) {
  return sgd_loop(config, data, schedule, rng, std::nullopt, observer);
}

Checkpoint train(const ModelConfig& config, const Dataset& data, const TrainingSchedule& schedule,
                 RngStream rng) {
  return train_run(config, data, schedule, rng).final;
}

Checkpoint train_subset(const ModelConfig& config, const Dataset& data,
                        std::span<const std::uint64_t> subset_ids,
                        const TrainingSchedule& schedule, RngStream rng) {
  if (subset_ids.empty()) throw ConfigError("train_subset: empty subset");
  const Dataset restricted = data.restrict_to(subset_ids);
  Checkpoint c = train(config, restricted, schedule, rng);
  c.provenance.subset_id =
      restricted.size() == data.size() ? "full" : subset_digest(restricted.ids);
  return c;
}

TrainingRun kd_train_run(const ModelConfig& student_config, const Dataset& data,
                         const QueryHandle& teacher, const KDConfig& kd,
                         const TrainingSchedule& schedule, RngStream rng,
                         const EpochObserver& observer) {
  kd.validate();
  if (teacher.output_dim() != student_config.num_classes) {
    throw DimensionError("teacher returns " + std::to_string(teacher.output_dim()) +
                         " logits, student has " + std::to_string(student_config.num_classes) +
                         " classes");
  }
  if (teacher.input_dim() != data.input_dim()) {
    throw DimensionError("teacher input dimension does not match the data");
  }
  Matrix teacher_logits;
  if (kd.alpha > 0.0) teacher_logits = teacher.query_batch(data.features);
  return sgd_loop(student_config, data, schedule, rng, DistillTarget{&teacher_logits, kd},
                  observer);
}

Checkpoint kd_train(const ModelConfig& student_config, const Dataset& data,
                    const QueryHandle& teacher, const KDConfig& kd,
                    const TrainingSchedule& schedule, RngStream rng) {
  return kd_train_run(student_config, data, teacher, kd, schedule, rng).final;
}

double softened_kl(const Eigen::Ref<const Vector>& student_logits,
                   const Eigen::Ref<const Vector>& teacher_logits, double temperature) {
  if (student_logits.size() != teacher_logits.size()) {
    throw DimensionError("softened_kl: logit vectors differ in length");
  }
  const Vector ls = student_logits / temperature;
  const Vector lt = teacher_logits / temperature;
  const double zs = logsumexp(ls);
  const double zt = logsumexp(lt);
  double kl = 0.0;
  for (Eigen::Index k = 0; k < ls.size(); ++k) {
    const double log_ps = ls[k] - zs;
    kl += std::exp(log_ps) * (log_ps - (lt[k] - zt));
  }
  return std::max(kl, 0.0);
}

double kd_objective(const Eigen::Ref<const Vector>& student_logits,
                    const Eigen::Ref<const Vector>& teacher_logits, int label, const KDConfig& kd) {
  const double t = kd.temperature;
  return kd.alpha * t * t * softened_kl(student_logits, teacher_logits, t) +
         (1.0 - kd.alpha) * cross_entropy(student_logits, label);
}

double kl_to_teacher(const Checkpoint& checkpoint, const QueryHandle& teacher,
                     const Dataset& probe, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("kl_to_teacher: temperature must be positive");
  const Matrix s = forward_batch(checkpoint.config, checkpoint.params, probe.features);
  const Matrix t = teacher.query_batch(probe.features);
  if (s.cols() != t.cols()) throw DimensionError("kl_to_teacher: class counts differ");
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    total += softened_kl(s.row(i).transpose(), t.row(i).transpose(), temperature);
  }
  return total / static_cast<double>(s.rows());
}

Trainer plain_trainer() {
  return [](const ModelConfig& config, const Dataset& data, const TrainingSchedule& schedule,
            RngStream rng) { return train(config, data, schedule, rng); };
}

Trainer distillation_trainer(QueryHandle teacher, KDConfig kd) {
  return [teacher = std::move(teacher), kd](const ModelConfig& config, const Dataset& data,
                                            const TrainingSchedule& schedule, RngStream rng) {
    return kd_train(config, data, teacher, kd, schedule, rng);
  };
}

}  // namespace attrib
