#include "attrib/runner.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "attrib/checkpoint_io.hpp"
#include "attrib/data_io.hpp"
#include "attrib/digest.hpp"
#include "attrib/ensemble_io.hpp"
#include "attrib/errors.hpp"
#include "attrib/evaluation.hpp"
#include "attrib/scenarios.hpp"
#include "attrib/score_io.hpp"

namespace fs = std::filesystem;

namespace attrib {

SplitData load_data(const DataSpec& spec, std::uint64_t seed) {
  const std::size_t need = spec.train_size + spec.test_size;
  Dataset all;
  if (spec.source == "mnist") {
    if (spec.images.empty() || spec.labels.empty()) throw ConfigError("mnist source needs images and labels");
    all = load_mnist_idx(spec.images, spec.labels, spec.limit);
  } else if (spec.source == "csv") {
    if (spec.csv.empty()) throw ConfigError("csv source needs a csv path");
    all = load_csv(spec.csv, spec.num_classes);
    if (spec.limit && *spec.limit < all.size()) all = slice(all, 0, *spec.limit);
  } else if (spec.source == "synth") {
    all = synth_clusters(spec.limit ? std::min(need, *spec.limit) : need, spec.synth_dim, spec.num_classes,
                         spec.synth_separation, RngStream(seed, 0x5eed));
  } else {
    throw ConfigError("unknown data source '" + spec.source + "'");
  }
  if (all.num_classes != spec.num_classes) {
    throw ConfigError("data has " + std::to_string(all.num_classes) + " classes, config says " +
                      std::to_string(spec.num_classes));
  }
  if (spec.train_size == 0 || spec.test_size == 0) throw ConfigError("train_size and test_size must be >= 1");
  if (all.size() < need) {
    throw ConfigError("data has " + std::to_string(all.size()) + " rows, train_size + test_size = " +
                      std::to_string(need));
  }
  return {slice(all, 0, spec.train_size), slice(all, spec.train_size, spec.test_size)};
}

std::string run_digest(const RunConfig& config) {
  std::string text = config.canonical();
  for (const std::string* path : {&config.data.images, &config.data.labels, &config.data.csv,
                                  &config.scores_file, &config.ensemble_file}) {
    if (!path->empty()) text += "file:" + sha256_file_hex(*path) + "\n";
  }
  return sha256_hex(text).substr(0, 16);
}

bool manifest_valid(const fs::path& dir) {
  std::ifstream is(dir / "MANIFEST");
  if (!is) return false;
  std::string line;
  std::size_t entries = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto sep = line.find("  ");
    if (sep == std::string::npos) return false;
    const fs::path file = dir / line.substr(sep + 2);
    if (!fs::exists(file) || sha256_file_hex(file.string()) != line.substr(0, sep)) return false;
    ++entries;
  }
  return entries > 0;
}

namespace {

class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void text(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream os(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + (dir_ / name).string());
    body(os);
    if (!os) throw Error("write failed for " + (dir_ / name).string());
    names_.push_back(name);
  }

  void file(const std::string& name, const std::function<void(const std::string&)>& save) {
    save((dir_ / name).string());
    names_.push_back(name);
  }

  void commit() {
    std::ostringstream manifest;
    for (const auto& n : names_) manifest << sha256_file_hex((dir_ / n).string()) << "  " << n << '\n';
    const fs::path tmp = dir_ / "MANIFEST.tmp";
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      os << manifest.str();
      if (!os) throw Error("cannot write manifest in " + dir_.string());
    }
    fs::rename(tmp, dir_ / "MANIFEST");
  }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

struct Context {
  const RunConfig& cfg;
  SplitData data;
  ModelConfig model;
  ArtifactWriter& out;
  std::vector<std::string> lines;
  std::size_t failures = 0;
};

RngStream stream(const RunConfig& c, std::uint64_t id) { return RngStream(c.seed, id); }

TrainingRun train_full(const Context& ctx, const Dataset& data) {
  TrainingSchedule s = ctx.cfg.schedule;
  if (ctx.cfg.method == Method::TracInCP && ctx.cfg.tracin_checkpoints > 1) s.retain_per_epoch = true;
  return train_run(ctx.model, data, s, stream(ctx.cfg, 1));
}

AttributionInputs inputs_for(const Context& ctx, const TrainingRun& run) {
  AttributionInputs in;
  in.config = ctx.model;
  in.schedule = ctx.cfg.schedule;
  in.rng = stream(ctx.cfg, 2);
  in.trak = ctx.cfg.trak;
  in.if_config = ctx.cfg.if_config;
  in.rps = ctx.cfg.rps;
  const std::size_t epochs = ctx.cfg.schedule.epochs;
  if (ctx.cfg.method == Method::TracInCP && ctx.cfg.tracin_checkpoints > 1 && !run.per_epoch.empty()) {
    const std::size_t keep = std::min(ctx.cfg.tracin_checkpoints, run.per_epoch.size());
    for (std::size_t e = run.per_epoch.size() - keep; e < run.per_epoch.size(); ++e) {
      in.checkpoints.push_back(run.per_epoch[e]);
      in.learning_rates.push_back(ctx.cfg.schedule.learning_rate(e));
    }
  } else {
    in.checkpoints = {run.final};
    in.learning_rates = {ctx.cfg.schedule.learning_rate(epochs ? epochs - 1 : 0)};
  }
  return in;
}

void params_file(Context& ctx, const ScoreMatrix& s) {
  ctx.out.text("method_params.txt", [&](std::ostream& os) {
    os << "method=" << to_string(s.method) << '\n';
    for (const auto& [k, v] : s.method_params) os << k << '=' << v << '\n';
  });
}

ScoreMatrix compute_scores(Context& ctx, const TrainingRun& run) {
  if (!ctx.cfg.scores_file.empty()) return load_scores(ctx.cfg.scores_file);
  return attribute(ctx.cfg.method, inputs_for(ctx, run), ctx.data.train, ctx.data.test);
}

void cmd_train(Context& ctx) {
  const TrainingRun run = train_full(ctx, ctx.data.train);
  ctx.out.file("model.tdac", [&](const std::string& p) { save_checkpoint(p, run.final); });
  ctx.out.text("epoch_loss.csv", [&](std::ostream& os) {
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < run.epoch_losses.size(); ++e) os << e + 1 << ',' << format_double(run.epoch_losses[e]) << '\n';
  });
  const Checkpoint& c = run.final;
  ctx.lines.push_back("train " + describe(c.config) +
                      " train_acc=" + format_double(accuracy(c.config, c.params, ctx.data.train)) +
                      " test_acc=" + format_double(accuracy(c.config, c.params, ctx.data.test)) +
                      " test_loss=" + format_double(mean_loss(c.config, c.params, ctx.data.test)));
}

void cmd_attribute(Context& ctx) {
  const TrainingRun run = train_full(ctx, ctx.data.train);
  const ScoreMatrix s = compute_scores(ctx, run);
  ctx.out.file("scores.tdas", [&](const std::string& p) { save_scores(p, s); });
  ctx.out.text("scores.csv", [&](std::ostream& os) { write_scores_csv(os, s); });
  params_file(ctx, s);
  ctx.lines.push_back("attribute method=" + to_string(s.method) + " tests=" + std::to_string(s.test_ids.size()) +
                      " train=" + std::to_string(s.train_ids.size()));
}

void cmd_eval_lds(Context& ctx) {
  const SubsetEnsemble e = ctx.cfg.ensemble_file.empty()
                               ? generate_ground_truth(ctx.model, ctx.data.train, ctx.data.test, ctx.cfg.subsets,
                                                       ctx.cfg.subset_fraction, ctx.cfg.schedule, stream(ctx.cfg, 3))
                               : load_ensemble(ctx.cfg.ensemble_file);
  ScoreMatrix s;
  if (ctx.cfg.scores_file.empty()) {
    s = compute_scores(ctx, train_full(ctx, ctx.data.train));
  } else {
    s = load_scores(ctx.cfg.scores_file);
  }
  const LdsResult r = lds(s, e);
  ctx.out.file("ensemble.tdae", [&](const std::string& p) { save_ensemble(p, e); });
  ctx.out.file("scores.tdas", [&](const std::string& p) { save_scores(p, s); });
  ctx.out.text("lds.csv", [&](std::ostream& os) { write_lds_csv(os, r); });
  std::string line = "eval-lds method=" + to_string(s.method) + " mean_lds=" + format_double(r.mean) +
                     " degenerate=" + std::to_string(r.degenerate);
  const auto v = r.valid();
  if (!v.empty()) {
    const BootstrapCi ci = bootstrap_mean_ci(v, stream(ctx.cfg, 7));
    line += " ci95=[" + format_double(ci.lower) + "," + format_double(ci.upper) + "]";
  }
  ctx.lines.push_back(line);
}

void cmd_eval_auc(Context& ctx) {
  const auto [noisy, mask] = flip_labels(ctx.data.train, ctx.cfg.flip_fraction, stream(ctx.cfg, 4));
  const TrainingRun run = train_full(ctx, noisy);
  const Vector self = self_influence(ctx.cfg.method, inputs_for(ctx, run), noisy);
  const std::vector<double> scores(self.data(), self.data() + self.size());
  const double auc = auc_noisy(noisy.ids, scores, mask);
  ctx.out.text("self_influence.csv", [&](std::ostream& os) {
    os << "id,flipped,self_influence\n";
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      os << noisy.ids[i] << ',' << (mask.is_flipped(noisy.ids[i]) ? 1 : 0) << ',' << format_double(scores[i]) << '\n';
    }
  });
  ctx.lines.push_back("eval-auc method=" + to_string(ctx.cfg.method) + " flipped=" +
                      std::to_string(mask.flipped_ids.size()) + " auc=" + format_double(auc));
}

void cmd_brittleness(Context& ctx) {
  const TrainingRun run = train_full(ctx, ctx.data.train);
  std::vector<std::size_t> rows;
  for (std::size_t t = 0; t < ctx.data.test.size() && rows.size() < ctx.cfg.brittleness_tests; ++t) {
    const Vector logits = forward(run.final.config, run.final.params, ctx.data.test.row(t));
    Eigen::Index arg = 0;
    logits.maxCoeff(&arg);
    if (arg == ctx.data.test.labels[t]) rows.push_back(t);
  }
  const Dataset tests = ctx.data.test.select_rows(rows);
  const ScoreMatrix s = attribute(ctx.cfg.method, inputs_for(ctx, run), ctx.data.train, tests);
  const BrittlenessResult r = brittleness(ctx.model, ctx.data.train, tests, s, ctx.cfg.k_values,
                                          ctx.cfg.schedule, stream(ctx.cfg, 1));
  ctx.failures += r.failures;
  ctx.out.file("scores.tdas", [&](const std::string& p) { save_scores(p, s); });
  ctx.out.text("brittleness.csv", [&](std::ostream& os) { write_brittleness_csv(os, r); });
  for (std::size_t i = 0; i < r.k_values.size(); ++i) {
    ctx.lines.push_back("brittleness k=" + std::to_string(r.k_values[i]) + " guided=" + format_double(r.guided[i]) +
                        " random=" + format_double(r.random[i]));
  }
  for (const auto& c : r.cells) {
    if (!c.error.empty()) {
      ctx.lines.push_back("FAILED cell test=" + std::to_string(c.test_id) + " k=" + std::to_string(c.k) + ": " + c.error);
    }
  }
}

std::vector<ProxyCase> default_proxies() {
  std::vector<ProxyCase> out(3);
  out[0].spec.name = "mlp-narrow";
  out[0].spec.width_factors = std::vector<double>{0.5, 0.5};
  out[0].spec.kd_enabled = true;
  out[0].access = AccessLevel::ArchAndQuery;
  out[1].spec.name = "mlp-wide";
  out[1].spec.width_factors = std::vector<double>{2.0, 1.0};
  out[1].spec.kd_enabled = true;
  out[1].access = AccessLevel::ArchAndQuery;
  out[2].spec.name = "lr";
  out[2].spec.strategy = GuessStrategy::CrossFamilyHeuristic;
  out[2].spec.kd_enabled = true;
  out[2].access = AccessLevel::QueryOnly;
  return out;
}

void cmd_proxy_study(Context& ctx) {
  StudySettings st;
  st.target_schedule = ctx.cfg.schedule;
  st.proxy_schedule = ctx.cfg.schedule;
  st.ground_truth_models = ctx.cfg.subsets;
  st.subset_fraction = ctx.cfg.subset_fraction;
  st.trak = ctx.cfg.trak;
  const auto proxies = ctx.cfg.proxies.empty() ? default_proxies() : ctx.cfg.proxies;
  SubsetEnsemble e;
  const StudyReport r = run_proxy_study(ctx.model, ctx.data.train, ctx.data.test, proxies, st, stream(ctx.cfg, 5), &e);
  ctx.failures += r.failures();
  ctx.out.file("ensemble.tdae", [&](const std::string& p) { save_ensemble(p, e); });
  ctx.out.text("study.csv", [&](std::ostream& os) { write_study_csv(os, r); });
  ctx.out.text("study.txt", [&](std::ostream& os) { write_study_summary(os, r); });
  for (const auto& row : r.rows) {
    ctx.lines.push_back("proxy-study " + row.proxy + " " + row.training + " ratio=" + format_double(row.param_ratio) +
                        " lds=" + format_double(row.lds_mean) + " kl=" + format_double(row.kl_to_teacher) +
                        (row.error.empty() ? "" : " FAILED: " + row.error));
  }
}

void cmd_no_train_study(Context& ctx) {
  NoTrainingSettings st;
  st.methods = ctx.cfg.no_train_methods;
  st.trak_ensembles = ctx.cfg.trak_ensembles;
  st.ground_truth_models = ctx.cfg.subsets;
  st.subset_fraction = ctx.cfg.subset_fraction;
  st.flip_fraction = ctx.cfg.flip_fraction;
  st.schedule = ctx.cfg.schedule;
  st.trak = ctx.cfg.trak;
  st.if_config = ctx.cfg.if_config;
  st.rps = ctx.cfg.rps;
  std::vector<ModelConfig> configs;
  for (Family f : ctx.cfg.no_train_families) {
    RunConfig c = ctx.cfg;
    c.family = f;
    configs.push_back(c.model(ctx.data.train.input_dim()));
  }
  const NoTrainingReport r = run_no_training_study(configs, ctx.data.train, ctx.data.test, st, stream(ctx.cfg, 6));
  ctx.failures += r.failures();
  ctx.out.text("no_train.csv", [&](std::ostream& os) { write_no_training_csv(os, r); });
  for (const auto& row : r.rows) {
    ctx.lines.push_back("no-train-study " + row.config + " " + row.method + (row.trained ? " trained" : " untrained") +
                        " lds=" + format_double(row.lds_mean) + " ci95=[" + format_double(row.lds_lower) + "," +
                        format_double(row.lds_upper) + "] auc=" + format_double(row.auc) +
                        (row.error.empty() ? "" : " FAILED: " + row.error));
  }
}

void cmd_selection_study(Context& ctx) {
  std::vector<SelectionCurve> curves;
  for (SelectionScorer scorer : ctx.cfg.scorers) {
    SelectionSettings st;
    st.keep_fraction = ctx.cfg.keep_fraction;
    st.scorer = scorer;
    st.schedule = ctx.cfg.schedule;
    st.trak = ctx.cfg.trak;
    curves.push_back(run_selection_study(ctx.model, ctx.data.train, ctx.data.test, st, stream(ctx.cfg, 8)));
    ctx.lines.push_back("selection-study scorer=" + to_string(scorer) +
                        " final_eval_loss=" + format_double(curves.back().final_eval_loss));
  }
  ctx.out.text("selection.csv", [&](std::ostream& os) { write_selection_csv(os, curves); });
}

}  // namespace

RunOutcome run(const RunConfig& config, std::ostream& out, std::ostream& log) {
  if (!config.command) throw ConfigError("no command configured");
  RunOutcome outcome;
  outcome.directory = fs::path(config.out_dir) / to_string(*config.command) / run_digest(config);
  if (manifest_valid(outcome.directory)) {
    log << "reusing " << outcome.directory.string() << " (MANIFEST digests match)\n";
    std::ifstream summary(outcome.directory / "summary.txt");
    std::string line;
    while (std::getline(summary, line)) {
      if (line.rfind("failures=", 0) == 0) {
        outcome.exit_code = std::stoul(line.substr(9)) == 0 ? 0 : 1;
      } else {
        out << line << '\n';
      }
    }
    outcome.reused = true;
    return outcome;
  }
  log << "running " << to_string(*config.command) << " into " << outcome.directory.string() << '\n';
  ArtifactWriter writer(outcome.directory);
  Context ctx{config, load_data(config.data, config.seed), {}, writer, {}, 0};
  ctx.model = config.model(ctx.data.train.input_dim());
  writer.text("config.txt", [&](std::ostream& os) { os << config.canonical(); });
  switch (*config.command) {
    case Command::Train: cmd_train(ctx); break;
    case Command::Attribute: cmd_attribute(ctx); break;
    case Command::EvalLds: cmd_eval_lds(ctx); break;
    case Command::EvalAuc: cmd_eval_auc(ctx); break;
    case Command::Brittleness: cmd_brittleness(ctx); break;
    case Command::ProxyStudy: cmd_proxy_study(ctx); break;
    case Command::NoTrainStudy: cmd_no_train_study(ctx); break;
    case Command::SelectionStudy: cmd_selection_study(ctx); break;
  }
  writer.text("summary.txt", [&](std::ostream& os) {
    for (const auto& l : ctx.lines) os << l << '\n';
    os << "failures=" << ctx.failures << '\n';
  });
  writer.commit();
  for (const auto& l : ctx.lines) out << l << '\n';
  outcome.exit_code = ctx.failures == 0 ? 0 : 1;
  return outcome;
}

}  // namespace attrib
