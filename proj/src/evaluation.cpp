#include "attrib/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "attrib/digest.hpp"
#include "attrib/errors.hpp"
#include "attrib/parallel.hpp"

namespace attrib {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    i = j;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("spearman: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
  }
  if (a.size() < 2) throw DimensionError("spearman needs at least two values");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw NumericalError("spearman: non-finite input");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double mean = 0.5 * static_cast<double>(a.size() + 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------

void SubsetEnsemble::validate() const {
  if (subsets.size() != seeds.size()) throw DimensionError("ensemble: subsets and seeds differ in count");
  if (static_cast<std::size_t>(outputs.rows()) != subsets.size() ||
      static_cast<std::size_t>(outputs.cols()) != test_ids.size()) {
    throw DimensionError("ensemble: outputs shape does not match subsets x test ids");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("ensemble alpha must be in (0, 1)");
  if (!all_finite(outputs)) throw NumericalError("ensemble outputs are not finite");
  for (const auto& s : subsets) {
    std::vector<std::uint64_t> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ConfigError("ensemble subset contains a repeated id");
    }
  }
}

SubsetEnsemble generate_ground_truth(const ModelConfig& config, const Dataset& train,
                                     const Dataset& test, std::size_t m, double alpha,
                                     const TrainingSchedule& schedule, RngStream rng,
                                     const Trainer& trainer) {
  if (m < 2) throw ConfigError("ground truth needs m >= 2 subsets");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("subset fraction alpha must be in (0, 1)");
  train.validate();
  test.validate();
  const std::size_t n = train.size();
  const auto size = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(n)));
  if (size == 0) throw ConfigError("subset fraction alpha selects no examples");

  SubsetEnsemble e;
  e.alpha = alpha;
  e.subsets.resize(m);
  e.seeds.resize(m);
  e.test_ids = test.ids;
  e.outputs.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(test.size()));
  for (std::size_t j = 0; j < m; ++j) {
    RngStream pick = rng.derive(j, 1);
    auto pos = sample_without_replacement(pick, n, size);
    std::sort(pos.begin(), pos.end());
    e.subsets[j].reserve(size);
    for (auto p : pos) e.subsets[j].push_back(train.ids[p]);
    e.seeds[j] = job_seed(rng, j);
  }
  parallel_for(m, [&](std::size_t j) {
    Checkpoint c;
    try {
      c = trainer(config, train.restrict_to(e.subsets[j]), schedule.with_shuffle_seed(e.seeds[j]),
                  RngStream(e.seeds[j], 2));
    } catch (const std::exception& ex) {
      throw TrainingError("ground-truth subset " + std::to_string(j) + ": " + ex.what());
    }
    e.outputs.row(static_cast<Eigen::Index>(j)) =
        output_fn_batch(c.config, c.params, test.features, test.labels).transpose();
  });
  e.validate();
  return e;
}

namespace {

std::unordered_map<std::uint64_t, std::size_t> column_index(const std::vector<std::uint64_t>& ids) {
  std::unordered_map<std::uint64_t, std::size_t> index;
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  return index;
}

}  // namespace

Matrix subset_score_sums(const ScoreMatrix& scores, const SubsetEnsemble& ensemble) {
  scores.validate();
  ensemble.validate();
  if (scores.test_ids != ensemble.test_ids) {
    throw DimensionError("LDS: score test ids do not match the ensemble's test ids");
  }
  const auto cols = column_index(scores.train_ids);
  Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(scores.test_ids.size()),
                             static_cast<Eigen::Index>(ensemble.size()));
  for (std::size_t j = 0; j < ensemble.size(); ++j) {
    std::vector<Eigen::Index> members;
    members.reserve(ensemble.subsets[j].size());
    for (auto id : ensemble.subsets[j]) {
      const auto it = cols.find(id);
      if (it == cols.end()) {
        throw DimensionError("LDS: subset id " + std::to_string(id) + " has no score column");
      }
      members.push_back(static_cast<Eigen::Index>(it->second));
    }
    for (Eigen::Index t = 0; t < sums.rows(); ++t) {
      double s = 0.0;
      for (auto c : members) s += scores.scores(t, c);
      sums(t, static_cast<Eigen::Index>(j)) = s;
    }
  }
  return sums;
}

std::vector<double> LdsResult::valid() const {
  std::vector<double> out;
  for (const auto& v : per_test) {
    if (v) out.push_back(*v);
  }
  return out;
}

LdsResult lds(const ScoreMatrix& scores, const SubsetEnsemble& ensemble) {
  const Matrix sums = subset_score_sums(scores, ensemble);
  LdsResult r;
  r.test_ids = ensemble.test_ids;
  r.per_test.resize(ensemble.test_ids.size());
  const std::size_t m = ensemble.size();
  std::vector<double> out(m), pred(m);
  for (std::size_t t = 0; t < r.per_test.size(); ++t) {
    for (std::size_t j = 0; j < m; ++j) {
      out[j] = ensemble.outputs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t));
      pred[j] = sums(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j));
    }
    r.per_test[t] = spearman(out, pred);
    if (!r.per_test[t]) ++r.degenerate;
  }
  const auto v = r.valid();
  r.mean = v.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(v);
  return r;
}

// ---------------------------------------------------------------------------

std::pair<Dataset, NoisyLabelMask> flip_labels(const Dataset& data, double fraction, RngStream rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("flip fraction must be in [0, 1]");
  if (data.num_classes < 2) throw ConfigError("label flipping needs at least two classes");
  const std::size_t n = data.size();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  auto rows = sample_without_replacement(rng, n, count);
  Dataset noisy = data;
  NoisyLabelMask mask;
  for (auto r : rows) {
    const int orig = data.labels[r];
    const auto shift = 1 + static_cast<int>(rng.below(data.num_classes - 1));
    const int flipped = (orig + shift) % static_cast<int>(data.num_classes);
    noisy.labels[r] = flipped;
    mask.flipped_ids.push_back(data.ids[r]);
    mask.original_labels[data.ids[r]] = orig;
    mask.corrupted_labels[data.ids[r]] = flipped;
  }
  std::sort(mask.flipped_ids.begin(), mask.flipped_ids.end());
  return {std::move(noisy), std::move(mask)};
}

double pairwise_auc(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) throw ConfigError("AUC needs both classes non-empty");
  std::vector<double> all(positive.begin(), positive.end());
  all.insert(all.end(), negative.begin(), negative.end());
  for (double v : all) {
    if (std::isnan(v)) throw NumericalError("AUC: NaN score");
  }
  const auto ranks = average_ranks(all);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < positive.size(); ++i) rank_sum += ranks[i];
  const double p = static_cast<double>(positive.size());
  const double q = static_cast<double>(negative.size());
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double auc_noisy(std::span<const std::uint64_t> ids, std::span<const double> self_scores,
                 const NoisyLabelMask& mask) {
  if (ids.size() != self_scores.size()) throw DimensionError("auc_noisy: ids and scores differ in length");
  std::vector<double> noisy, clean;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    (mask.is_flipped(ids[i]) ? noisy : clean).push_back(self_scores[i]);
  }
  if (noisy.size() != mask.flipped_ids.size()) {
    throw DimensionError("auc_noisy: scores do not cover every flipped id");
  }
  return pairwise_auc(noisy, clean);
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> top_k(std::span<const double> row, std::size_t k) {
  if (k > row.size()) throw ConfigError("top_k: k exceeds the row length");
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return row[a] > row[b] || (row[a] == row[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

namespace {

int predicted_class(const Checkpoint& c, std::span<const double> x) {
  const Vector logits = forward(c.config, c.params, x);
  Eigen::Index arg = 0;
  logits.maxCoeff(&arg);
  return static_cast<int>(arg);
}

}  // namespace

BrittlenessResult brittleness(const ModelConfig& config, const Dataset& train,
                              const Dataset& test_subset, const ScoreMatrix& scores,
                              std::span<const std::size_t> k_values,
                              const TrainingSchedule& schedule, RngStream rng) {
  train.validate();
  test_subset.validate();
  scores.validate();
  if (scores.train_ids != train.ids) throw DimensionError("brittleness: score columns must match train ids");
  const std::size_t n = train.size();
  for (auto k : k_values) {
    if (k >= n) throw ConfigError("brittleness: k = " + std::to_string(k) + " must be < n");
  }
  const auto rows = column_index(scores.test_ids);
  const Checkpoint full = train_run(config, train, schedule, rng).final;
  std::vector<Eigen::Index> score_row(test_subset.size());
  for (std::size_t t = 0; t < test_subset.size(); ++t) {
    const auto it = rows.find(test_subset.ids[t]);
    if (it == rows.end()) {
      throw DimensionError("brittleness: no scores for test id " + std::to_string(test_subset.ids[t]));
    }
    score_row[t] = static_cast<Eigen::Index>(it->second);
    if (predicted_class(full, test_subset.row(t)) != test_subset.labels[t]) {
      throw ConfigError("brittleness: test id " + std::to_string(test_subset.ids[t]) +
                        " is misclassified by the full-data model");
    }
  }

  const std::size_t nk = k_values.size();
  BrittlenessResult r;
  r.k_values.assign(k_values.begin(), k_values.end());
  r.cells.resize(test_subset.size() * nk);
  for (std::size_t t = 0; t < test_subset.size(); ++t) {
    for (std::size_t ki = 0; ki < nk; ++ki) {
      r.cells[t * nk + ki].test_id = test_subset.ids[t];
      r.cells[t * nk + ki].k = k_values[ki];
    }
  }
  std::vector<std::string> errors(r.cells.size() * 2);
  parallel_for(r.cells.size() * 2, [&](std::size_t job) {
    const std::size_t cell = job / 2;
    const bool guided = job % 2 == 0;
    const std::size_t t = cell / nk;
    const std::size_t k = k_values[cell % nk];
    bool flip = false;
    if (k > 0) {
      std::vector<std::size_t> removed;
      if (guided) {
        const Eigen::Index row = score_row[t];
        std::vector<double> s(n);
        for (std::size_t j = 0; j < n; ++j) s[j] = scores.scores(row, static_cast<Eigen::Index>(j));
        removed = top_k(s, k);
      } else {
        RngStream pick(job_seed(rng, test_subset.ids[t]), k);
        removed = sample_without_replacement(pick, n, k);
      }
      std::vector<std::uint64_t> ids;
      for (auto j : removed) ids.push_back(train.ids[j]);
      try {
        const Checkpoint c = attrib::train(config, train.without(ids), schedule, rng);
        flip = predicted_class(c, test_subset.row(t)) != test_subset.labels[t];
      } catch (const std::exception& ex) {
        errors[job] = ex.what();
      }
    }
    if (guided) {
      r.cells[cell].guided_flip = flip;
    } else {
      r.cells[cell].random_flip = flip;
    }
  });

  r.guided.assign(nk, 0.0);
  r.random.assign(nk, 0.0);
  std::vector<std::size_t> ok(nk, 0);
  for (std::size_t c = 0; c < r.cells.size(); ++c) {
    std::string e = errors[2 * c];
    if (!errors[2 * c + 1].empty()) e += (e.empty() ? "" : "; ") + errors[2 * c + 1];
    r.cells[c].error = e;
    if (!e.empty()) {
      ++r.failures;
      continue;
    }
    const std::size_t ki = c % nk;
    ++ok[ki];
    r.guided[ki] += r.cells[c].guided_flip ? 1.0 : 0.0;
    r.random[ki] += r.cells[c].random_flip ? 1.0 : 0.0;
  }
  for (std::size_t ki = 0; ki < nk; ++ki) {
    const double denom = ok[ki] ? static_cast<double>(ok[ki]) : std::numeric_limits<double>::quiet_NaN();
    r.guided[ki] /= denom;
    r.random[ki] /= denom;
  }
  return r;
}

// ---------------------------------------------------------------------------

double mean_of(std::span<const double> values) {
  if (values.empty()) throw DimensionError("mean of an empty sample");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double stddev_of(std::span<const double> values) {
  if (values.size() < 2) throw DimensionError("standard deviation needs two values");
  const double mu = mean_of(values);
  double s = 0.0;
  for (double v : values) s += (v - mu) * (v - mu);
  return std::sqrt(s / static_cast<double>(values.size() - 1));
}

BootstrapCi bootstrap_mean_ci(std::span<const double> values, RngStream rng, std::size_t resamples,
                              double confidence) {
  if (values.empty()) throw DimensionError("bootstrap of an empty sample");
  if (resamples == 0 || !(confidence > 0.0 && confidence < 1.0)) {
    throw ConfigError("bootstrap needs resamples > 0 and confidence in (0, 1)");
  }
  const std::size_t n = values.size();
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[rng.below(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double tail = 0.5 * (1.0 - confidence);
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, resamples - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  return {mean_of(values), quantile(tail), quantile(1.0 - tail)};
}

void write_lds_csv(std::ostream& os, const LdsResult& result) {
  os << "test_id,lds\n";
  for (std::size_t t = 0; t < result.test_ids.size(); ++t) {
    os << result.test_ids[t] << ','
       << (result.per_test[t] ? format_double(*result.per_test[t]) : std::string("degenerate")) << '\n';
  }
}

void write_brittleness_csv(std::ostream& os, const BrittlenessResult& result) {
  os << "k,guided_flip_fraction,random_flip_fraction\n";
  for (std::size_t i = 0; i < result.k_values.size(); ++i) {
    os << result.k_values[i] << ',' << format_double(result.guided[i]) << ','
       << format_double(result.random[i]) << '\n';
  }
}

}  // namespace attrib
