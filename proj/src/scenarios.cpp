#include "attrib/scenarios.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "attrib/digest.hpp"
#include "attrib/ensemble_io.hpp"
#include "attrib/errors.hpp"
#include "attrib/parallel.hpp"

namespace attrib {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::string to_string(AccessLevel level) {
  switch (level) {
    case AccessLevel::FullAccess: return "FullAccess";
    case AccessLevel::ArchAndQuery: return "ArchAndQuery";
    case AccessLevel::ArchOnly: return "ArchOnly";
    case AccessLevel::QueryOnly: return "QueryOnly";
    case AccessLevel::NoAccess: return "NoAccess";
    case AccessLevel::NoTraining: return "NoTraining";
  }
  throw ConfigError("unknown access level");
}

AccessLevel parse_access_level(const std::string& text) {
  const std::string t = lower(text);
  if (t == "fullaccess" || t == "s0") return AccessLevel::FullAccess;
  if (t == "archandquery" || t == "s1") return AccessLevel::ArchAndQuery;
  if (t == "archonly" || t == "s2") return AccessLevel::ArchOnly;
  if (t == "queryonly" || t == "s3") return AccessLevel::QueryOnly;
  if (t == "noaccess" || t == "s4") return AccessLevel::NoAccess;
  if (t == "notraining" || t == "s5") return AccessLevel::NoTraining;
  throw ConfigError("unknown access level '" + text + "'");
}

Exposure exposure(AccessLevel level) {
  switch (level) {
    case AccessLevel::FullAccess: return {true, true, true, true};
    case AccessLevel::ArchAndQuery: return {true, false, false, true};
    case AccessLevel::ArchOnly: return {true, false, false, false};
    case AccessLevel::QueryOnly: return {false, false, false, true};
    case AccessLevel::NoAccess: return {false, false, false, false};
    case AccessLevel::NoTraining: return {true, true, false, false};
  }
  throw ConfigError("unknown access level");
}

TargetView::TargetView(AccessLevel level, const Checkpoint& target)
    : access_(level), input_dim_(target.config.input_dim), num_classes_(target.config.num_classes) {
  const Exposure e = exposure(level);
  if (e.family) family_ = target.config.family;
  if (e.family && e.hyperparams) config_ = target.config;
  if (e.trained_model) trained_ = target;
  if (e.query) query_ = make_query(target);
}

std::string to_string(GuessStrategy strategy) {
  switch (strategy) {
    case GuessStrategy::SameFamilyPerturbHyperparams: return "same_family";
    case GuessStrategy::CrossFamilyHeuristic: return "cross_family";
    case GuessStrategy::ExactConfig: return "exact";
  }
  throw ConfigError("unknown guess strategy");
}

GuessStrategy parse_guess_strategy(const std::string& text) {
  const std::string t = lower(text);
  if (t == "same_family" || t == "samefamilyperturbhyperparams") return GuessStrategy::SameFamilyPerturbHyperparams;
  if (t == "cross_family" || t == "crossfamilyheuristic") return GuessStrategy::CrossFamilyHeuristic;
  if (t == "exact" || t == "exactconfig") return GuessStrategy::ExactConfig;
  throw ConfigError("unknown guess strategy '" + text + "'");
}

ModelConfig default_guess(Family family, std::size_t input_dim, std::size_t num_classes) {
  if (family == Family::LogisticRegression) return logistic_regression(input_dim, num_classes);
  return mlp(input_dim, {64, 32}, num_classes, Activation::Relu);
}

ModelConfig build_proxy_config(const TargetView& view, const ProxySpec& spec) {
  if (view.access() == AccessLevel::NoTraining) {
    throw ConfigError("proxy '" + spec.name + "': NoTraining uses the target config, not a proxy");
  }
  if (spec.kd_enabled && !view.query()) {
    throw ConfigError("proxy '" + spec.name + "': distillation needs query access, which " +
                      to_string(view.access()) + " does not expose");
  }
  switch (spec.strategy) {
    case GuessStrategy::ExactConfig:
      if (!view.config()) {
        throw ConfigError("proxy '" + spec.name + "': exact config is hidden under " +
                          to_string(view.access()));
      }
      return *view.config();
    case GuessStrategy::SameFamilyPerturbHyperparams: {
      if (!view.family()) {
        throw ConfigError("proxy '" + spec.name + "': architecture family is hidden under " +
                          to_string(view.access()));
      }
      ModelConfig base = view.config() ? *view.config()
                                       : default_guess(*view.family(), view.input_dim(), view.num_classes());
      if (base.family == Family::LogisticRegression) return base;
      std::vector<double> factors;
      if (spec.width_factors) {
        factors = *spec.width_factors;
        if (factors.size() != base.hidden_widths.size()) {
          throw ConfigError("proxy '" + spec.name + "': need one width factor per hidden layer");
        }
        for (double f : factors) {
          if (f != 0.5 && f != 1.0 && f != 2.0) {
            throw ConfigError("proxy '" + spec.name + "': width factors must be 0.5, 1 or 2");
          }
        }
      } else {
        static constexpr double kChoices[] = {0.5, 1.0, 2.0};
        RngStream rng(spec.seed, 0x77);
        for (std::size_t l = 0; l < base.hidden_widths.size(); ++l) factors.push_back(kChoices[rng.below(3)]);
      }
      for (std::size_t l = 0; l < base.hidden_widths.size(); ++l) {
        const double w = std::round(static_cast<double>(base.hidden_widths[l]) * factors[l]);
        base.hidden_widths[l] = std::max<std::size_t>(1, static_cast<std::size_t>(w));
      }
      return base;
    }
    case GuessStrategy::CrossFamilyHeuristic: {
      // Without the family, the task heuristic falls back to the simplest model.
      const Family guess = view.family() && *view.family() == Family::LogisticRegression
                               ? Family::MLP
                               : Family::LogisticRegression;
      return default_guess(guess, view.input_dim(), view.num_classes());
    }
  }
  throw ConfigError("unknown guess strategy");
}

Quartiles quartiles(std::vector<double> values) {
  if (values.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan, nan, nan};
  }
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {values.front(), q(0.25), q(0.5), q(0.75), values.back()};
}

std::size_t StudyReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const StudyRow& r) { return !r.error.empty(); }));
}

StudyReport run_proxy_study(const ModelConfig& target_config, const Dataset& train,
                            const Dataset& test, const std::vector<ProxyCase>& proxies,
                            const StudySettings& settings, RngStream rng,
                            SubsetEnsemble* ensemble_out) {
  target_config.validate();
  const Checkpoint target = train_run(target_config, train, settings.target_schedule, rng.derive(0)).final;
  const SubsetEnsemble ensemble =
      generate_ground_truth(target_config, train, test, settings.ground_truth_models,
                            settings.subset_fraction, settings.target_schedule, rng.derive(1));
  std::ostringstream eb;
  write_ensemble(eb, ensemble);

  StudyReport report;
  report.target_config = describe(target_config);
  report.target_param_count = target_config.param_count();
  report.ground_truth_digest = sha256_hex(eb.str());

  for (std::size_t i = 0; i < proxies.size(); ++i) {
    const ProxyCase& pc = proxies[i];
    const TargetView view(pc.access, target);
    std::vector<bool> modes{false};
    if (pc.spec.kd_enabled) modes.push_back(true);
    for (bool kd : modes) {
      StudyRow row;
      row.proxy = pc.spec.name.empty() ? "proxy" + std::to_string(i) : pc.spec.name;
      row.training = kd ? "kd" : "scratch";
      row.access = pc.access;
      row.kd = kd;
      try {
        const ModelConfig config = build_proxy_config(view, pc.spec);
        row.config = describe(config);
        row.param_count = config.param_count();
        row.param_ratio = static_cast<double>(row.param_count) / static_cast<double>(report.target_param_count);
        const RngStream train_rng = rng.derive(2, i);
        const TrainingSchedule proxy_schedule =
            settings.proxy_schedule.with_shuffle_seed(job_seed(train_rng, 0));
        TrakOptions options;
        Checkpoint proxy;
        if (kd) {
          options.trainer = distillation_trainer(*view.query(), pc.spec.kd);
          proxy = kd_train(config, train, *view.query(), pc.spec.kd, proxy_schedule, train_rng);
        } else {
          proxy = attrib::train(config, train, proxy_schedule, train_rng);
        }
        // Measured against the target even when the view hides the query.
        row.kl_to_teacher = kl_to_teacher(proxy, make_query(target), test, pc.spec.kd.temperature);
        const ScoreMatrix scores = attribute_trak(config, train, test, settings.trak,
                                                  settings.proxy_schedule, rng.derive(3, i), options);
        const LdsResult r = lds(scores, ensemble);
        row.lds_mean = r.mean;
        row.lds_spread = quartiles(r.valid());
        row.lds_degenerate = r.degenerate;
      } catch (const std::exception& ex) {
        row.error = ex.what();
      }
      report.rows.push_back(std::move(row));
    }
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const StudyRow& a, const StudyRow& b) { return a.param_ratio < b.param_ratio; });
  if (ensemble_out) *ensemble_out = ensemble;
  return report;
}

// ---------------------------------------------------------------------------

std::size_t NoTrainingReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const NoTrainingRow& r) { return !r.error.empty(); }));
}

namespace {

std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

NoTrainingReport run_no_training_study(const std::vector<ModelConfig>& configs, const Dataset& train,
                                       const Dataset& test, const NoTrainingSettings& settings,
                                       RngStream rng) {
  NoTrainingReport report;
  const double lr = settings.schedule.learning_rate(settings.schedule.epochs ? settings.schedule.epochs - 1 : 0);
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    const ModelConfig& config = configs[ci];
    const RngStream crng = rng.derive(ci);
    const SubsetEnsemble ensemble =
        generate_ground_truth(config, train, test, settings.ground_truth_models, settings.subset_fraction,
                              settings.schedule, crng.derive(0));
    const auto [noisy, mask] = flip_labels(train, settings.flip_fraction, crng.derive(1));
    const Checkpoint init = untrained_checkpoint(config, crng.derive(2));

    std::vector<bool> states{false};
    if (settings.include_trained) states.push_back(true);
    for (bool trained : states) {
      Checkpoint clean_ckpt = init;
      Checkpoint noisy_ckpt = init;
      if (trained) {
        clean_ckpt = attrib::train(config, train, settings.schedule, crng.derive(3));
        noisy_ckpt = attrib::train(config, noisy, settings.schedule, crng.derive(3));
      }
      for (Method method : settings.methods) {
        std::vector<std::size_t> sizes{1};
        if (method == Method::TRAK) sizes = settings.trak_ensembles;
        for (std::size_t members : sizes) {
          NoTrainingRow row;
          row.config = describe(config);
          row.method = method == Method::TRAK ? "TRAK-" + std::to_string(members) : to_string(method);
          row.trained = trained;
          try {
            AttributionInputs in;
            in.config = config;
            in.schedule = settings.schedule;
            in.trak = settings.trak;
            in.trak.ensemble_size = members;
            in.if_config = settings.if_config;
            in.rps = settings.rps;
            if (!trained) in.rps.refit_final_layer = false;
            in.learning_rates = {lr};
            in.rng = crng.derive(4, members);

            in.checkpoints = {clean_ckpt};
            if (!trained) in.trak_options.checkpoints = {clean_ckpt};
            const ScoreMatrix scores = attribute(method, in, train, test);
            const LdsResult r = lds(scores, ensemble);
            const auto valid = r.valid();
            row.lds_degenerate = r.degenerate;
            row.lds_mean = r.mean;
            if (!valid.empty()) {
              const BootstrapCi ci = bootstrap_mean_ci(valid, crng.derive(5, members),
                                                       settings.bootstrap_resamples);
              row.lds_lower = ci.lower;
              row.lds_upper = ci.upper;
            }

            in.checkpoints = {noisy_ckpt};
            if (!trained) in.trak_options.checkpoints = {noisy_ckpt};
            const Vector self = self_influence(method, in, noisy);
            row.auc = auc_noisy(noisy.ids, as_std(self), mask);
          } catch (const std::exception& ex) {
            row.error = ex.what();
          }
          report.rows.push_back(std::move(row));
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

std::string to_string(SelectionScorer scorer) {
  switch (scorer) {
    case SelectionScorer::Untrained: return "untrained";
    case SelectionScorer::Trained: return "trained";
    case SelectionScorer::Random: return "random";
    case SelectionScorer::Pretrained: return "pretrained";
  }
  throw ConfigError("unknown selection scorer");
}

SelectionScorer parse_selection_scorer(const std::string& text) {
  const std::string t = lower(text);
  if (t == "untrained") return SelectionScorer::Untrained;
  if (t == "trained") return SelectionScorer::Trained;
  if (t == "random") return SelectionScorer::Random;
  if (t == "pretrained") return SelectionScorer::Pretrained;
  throw ConfigError("unknown selection scorer '" + text + "'");
}

SelectionCurve run_selection_study(const ModelConfig& config, const Dataset& train,
                                   const Dataset& eval_set, const SelectionSettings& settings,
                                   RngStream rng) {
  if (!(settings.keep_fraction > 0.0 && settings.keep_fraction < 1.0)) {
    throw ConfigError("keep_fraction must be in (0, 1)");
  }
  if (settings.schedule.epochs == 0) throw ConfigError("selection study needs epochs >= 1");
  const std::size_t n = train.size();
  std::vector<double> score(n);
  if (settings.scorer == SelectionScorer::Random) {
    RngStream r = rng.derive(3);
    for (auto& s : score) s = r.uniform();
  } else {
    Checkpoint scorer;
    switch (settings.scorer) {
      case SelectionScorer::Untrained: scorer = untrained_checkpoint(config, rng.derive(0)); break;
      case SelectionScorer::Trained: scorer = attrib::train(config, train, settings.schedule, rng.derive(1)); break;
      case SelectionScorer::Pretrained:
        if (!settings.pretrained) throw ConfigError("pretrained scorer needs a checkpoint");
        scorer = *settings.pretrained;
        break;
      case SelectionScorer::Random: break;
    }
    TrakOptions options;
    options.checkpoints = {scorer};
    const ScoreMatrix s = attribute_trak(scorer.config, train, eval_set, settings.trak, settings.schedule,
                                         rng.derive(4), options);
    const Vector mean = s.scores.colwise().mean().transpose();
    for (std::size_t j = 0; j < n; ++j) score[j] = mean[static_cast<Eigen::Index>(j)];
  }
  const auto keep = static_cast<std::size_t>(
      std::clamp<double>(std::round(settings.keep_fraction * static_cast<double>(n)), 1.0,
                         static_cast<double>(n)));
  std::vector<std::size_t> rows = top_k(score, keep);
  std::sort(rows.begin(), rows.end());

  SelectionCurve curve;
  curve.scorer = settings.scorer;
  for (auto r : rows) curve.kept_ids.push_back(train.ids[r]);
  const Dataset kept = train.select_rows(rows);
  train_run(config, kept, settings.schedule, rng.derive(2), [&](std::size_t, const Checkpoint& c) {
    curve.eval_loss.push_back(mean_loss(c.config, c.params, eval_set));
  });
  curve.final_eval_loss = curve.eval_loss.back();
  return curve;
}

// ---------------------------------------------------------------------------

void write_study_csv(std::ostream& os, const StudyReport& report) {
  os << "proxy,training,access,config,param_count,param_ratio,lds_mean,lds_min,lds_q1,lds_median,"
        "lds_q3,lds_max,lds_degenerate,kd,kl_to_teacher,error\n";
  for (const auto& r : report.rows) {
    os << r.proxy << ',' << r.training << ',' << to_string(r.access) << ",\"" << r.config << "\","
       << r.param_count << ',' << format_double(r.param_ratio) << ',' << format_double(r.lds_mean) << ','
       << format_double(r.lds_spread.min) << ',' << format_double(r.lds_spread.q1) << ','
       << format_double(r.lds_spread.median) << ',' << format_double(r.lds_spread.q3) << ','
       << format_double(r.lds_spread.max) << ',' << r.lds_degenerate << ',' << (r.kd ? 1 : 0) << ','
       << format_double(r.kl_to_teacher) << ",\"" << r.error << "\"\n";
  }
}

void write_study_summary(std::ostream& os, const StudyReport& report) {
  os << "target " << report.target_config << " (" << report.target_param_count << " params)\n";
  os << "ground truth " << report.ground_truth_digest << '\n';
  for (const auto& r : report.rows) {
    os << r.proxy << " [" << r.training << "] " << r.config << " ratio=" << format_double(r.param_ratio)
       << " lds=" << format_double(r.lds_mean) << " kl=" << format_double(r.kl_to_teacher);
    if (!r.error.empty()) os << " error: " << r.error;
    os << '\n';
  }
}

void write_no_training_csv(std::ostream& os, const NoTrainingReport& report) {
  os << "config,method,trained,lds_mean,lds_ci_lower,lds_ci_upper,lds_degenerate,auc,error\n";
  for (const auto& r : report.rows) {
    os << '"' << r.config << "\"," << r.method << ',' << (r.trained ? 1 : 0) << ','
       << format_double(r.lds_mean) << ',' << format_double(r.lds_lower) << ','
       << format_double(r.lds_upper) << ',' << r.lds_degenerate << ',' << format_double(r.auc) << ",\""
       << r.error << "\"\n";
  }
}

void write_selection_csv(std::ostream& os, const std::vector<SelectionCurve>& curves) {
  os << "scorer,epoch,eval_loss\n";
  for (const auto& c : curves) {
    for (std::size_t e = 0; e < c.eval_loss.size(); ++e) {
      os << to_string(c.scorer) << ',' << e + 1 << ',' << format_double(c.eval_loss[e]) << '\n';
    }
  }
}

}  // namespace attrib
