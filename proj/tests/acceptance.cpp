#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "attrib/attributors.hpp"
#include "attrib/data_io.hpp"
#include "attrib/evaluation.hpp"
#include "attrib/scenarios.hpp"
#include "oracles.hpp"

using namespace attrib;
namespace fs = std::filesystem;

namespace {

struct Env {
  fs::path data_dir;
  fs::path cli;
  fs::path work;
};

struct Verdict {
  bool pass = false;
  std::string detail;
};

// Tolerances.
constexpr double kMetricTol = 1e-12;
constexpr double kIfRelTol = 1e-6;
constexpr double kIfDamping = 1e-2;
constexpr double kTrakRelTol = 1e-8;
constexpr double kGradRelTol = 1e-4;
// Coordinates smaller than this are compared on an absolute scale.
constexpr double kGradFloor = 1e-7;
constexpr double kFdStep = 1e-5;
constexpr double kHvpSymTol = 1e-8;

// Wall-clock budgets in seconds, criterion 1 first.
constexpr std::array<double, 11> kBudget{10, 60, 60, 120, 1200, 1200, 1800, 1800, 2700, 600, 1800};

constexpr std::size_t kReplicates = 10;

void note(const std::string& line) {
  std::cout << "  " << line << '\n' << std::flush;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

TrainingSchedule mnist_schedule() {
  TrainingSchedule s;
  s.epochs = 20;
  s.batch_size = 32;
  s.learning_rates = {0.01};
  s.momentum = 0.9;
  return s;
}

struct Mnist {
  Dataset train;
  Dataset test;
};

Mnist load_mnist(const Env& env) {
  const Dataset all = load_mnist_idx((env.data_dir / "mnist5k-images-idx3-ubyte").string(),
                                     (env.data_dir / "mnist5k-labels-idx1-ubyte").string(), 1200);
  return {slice(all, 0, 1000), slice(all, 1000, 200)};
}

ModelConfig mnist_lr() { return logistic_regression(784, 10); }
ModelConfig mnist_mlp() { return mlp(784, {64, 32}, 10); }

std::vector<double> random_values(RngStream& rng, std::size_t n) {
  std::vector<double> v(n);
  const bool tied = rng.uniform() < 0.5;
  for (auto& x : v) x = tied ? static_cast<double>(rng.below(8)) : rng.normal();
  return v;
}

// ---------------------------------------------------------------------------

Verdict metric_oracles(const Env&) {
  RngStream rng(101);
  std::size_t spearman_bad = 0, auc_bad = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.below(199);
    const auto a = random_values(rng, n);
    const auto b = random_values(rng, n);
    const auto fast = spearman(a, b);
    const auto slow = oracle::spearman(a, b);
    if (fast.has_value() != slow.has_value()) {
      ++spearman_bad;
    } else if (fast) {
      const double d = std::abs(*fast - *slow);
      worst = std::max(worst, d);
      if (d > kMetricTol) ++spearman_bad;
    }
  }
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.below(199);
    const auto scores = random_values(rng, n);
    std::vector<std::uint64_t> ids(n);
    NoisyLabelMask mask;
    std::vector<double> pos, neg;
    for (std::size_t j = 0; j < n; ++j) {
      ids[j] = 1000 + j;
      const bool flip = j == 0 || (j != 1 && rng.uniform() < 0.3);
      if (flip) {
        mask.original_labels[ids[j]] = 0;
        mask.corrupted_labels[ids[j]] = 1;
        mask.flipped_ids.push_back(ids[j]);
        pos.push_back(scores[j]);
      } else {
        neg.push_back(scores[j]);
      }
    }
    const double d = std::abs(auc_noisy(ids, scores, mask) - oracle::auc(pos, neg));
    worst = std::max(worst, d);
    if (d > kMetricTol) ++auc_bad;
  }
  return {spearman_bad == 0 && auc_bad == 0,
          "spearman mismatches=" + std::to_string(spearman_bad) + "/1000 auc_noisy mismatches=" +
              std::to_string(auc_bad) + "/1000 max_abs_diff=" + fmt(worst)};
}

struct Synthetic {
  ModelConfig config;
  Checkpoint model;
  Dataset train;
  Dataset test;
};

Synthetic synthetic_lr(std::uint64_t seed) {
  const Dataset all = synth_clusters(230, 9, 10, 3.0, RngStream(seed));
  Synthetic s{logistic_regression(9, 10), {}, slice(all, 0, 200), slice(all, 200, 30)};
  TrainingSchedule sch;
  sch.epochs = 30;
  sch.batch_size = 20;
  sch.learning_rates = {0.05};
  s.model = train(s.config, s.train, sch, RngStream(seed).derive(1));
  return s;
}

Verdict if_oracle(const Env&) {
  const Synthetic s = synthetic_lr(202);
  IfConfig cfg;
  cfg.damping = kIfDamping;
  cfg.cg_tol = 1e-10;
  cfg.cg_max_iter = 5000;
  const ScoreMatrix got = attribute_if(s.model, s.train, s.test, cfg);
  const Matrix want = oracle::dense_if_scores(s.model, s.train, s.test, kIfDamping);
  const double scale = oracle::max_abs(want);
  const double err = oracle::max_abs(got.scores - want);
  return {err <= kIfRelTol * scale,
          "p=" + std::to_string(s.config.param_count()) + " n=200 max_abs_err=" + fmt(err) +
              " bound=" + fmt(kIfRelTol * scale)};
}

Verdict trak_oracle(const Env&) {
  const Synthetic s = synthetic_lr(303);
  const double damping = 1e-3;
  TrakConfig cfg;
  cfg.ensemble_size = 1;
  cfg.projection_dim = s.config.param_count();
  cfg.gram_damping = damping;
  TrakOptions opt;
  opt.checkpoints = {s.model};
  opt.identity_projection = true;
  const ScoreMatrix got = attribute_trak(s.config, s.train, s.test, cfg, TrainingSchedule{}, RngStream(3), opt);
  const Matrix want = oracle::dense_trak_scores(s.model, s.train, s.test, damping);
  const double rel = oracle::max_abs(got.scores - want) / oracle::max_abs(want);
  return {rel <= kTrakRelTol, "M=1 identity projection n=200 rel_err=" + fmt(rel)};
}

Verdict gradients(const Env&) {
  struct Family {
    std::string name;
    ModelConfig config;
  };
  const std::vector<Family> families{{"lr", logistic_regression(6, 4)},
                                     {"mlp-relu", mlp(6, {8, 5}, 4, Activation::Relu)},
                                     {"mlp-tanh", mlp(6, {8, 5}, 4, Activation::Tanh)}};
  RngStream rng(404);
  std::string detail;
  bool pass = true;
  for (const auto& f : families) {
    double worst = 0.0;
    std::string worst_at;
    for (int c = 0; c < 100; ++c) {
      ParamVector p = init_params(f.config, rng.derive(c));
      for (auto& v : p) v += 0.3 * rng.normal();
      std::vector<double> x(f.config.input_dim);
      for (auto& v : x) v = rng.normal();
      const int label = static_cast<int>(rng.below(f.config.num_classes));
      for (auto obj : {Objective::Loss, Objective::Margin}) {
        const Vector g = per_sample_grad(f.config, p, x, label, obj);
        const Vector fd = oracle::finite_difference_grad(f.config, p, x, label, obj, kFdStep);
        for (Eigen::Index i = 0; i < g.size(); ++i) {
          const double denom = std::max({std::abs(g[i]), std::abs(fd[i]), kGradFloor});
          const double rel = std::abs(g[i] - fd[i]) / denom;
          if (rel > worst) {
            worst = rel;
            worst_at = "case " + std::to_string(c) + " coord " + std::to_string(i) + " analytic=" + fmt(g[i]) +
                       " fd=" + fmt(fd[i]);
          }
        }
      }
    }
    Dataset d = synth_clusters(24, 6, 4, 1.0, rng.derive(1000));
    double sym = 0.0;
    for (int c = 0; c < 100; ++c) {
      ParamVector p = init_params(f.config, rng.derive(2000 + c));
      for (auto& v : p) v += 0.3 * rng.normal();
      Vector u(p.size()), v(p.size());
      for (auto& e : u) e = rng.normal();
      for (auto& e : v) e = rng.normal();
      sym = std::max(sym, std::abs(u.dot(batch_hvp(f.config, p, d, v)) - v.dot(batch_hvp(f.config, p, d, u))));
    }
    note(f.name + " worst gradient coordinate: " + worst_at);
    pass = pass && worst <= kGradRelTol && sym <= kHvpSymTol;
    detail += f.name + ": grad_rel_err=" + fmt(worst) + " hvp_asym=" + fmt(sym) + "; ";
  }
  return {pass, detail};
}

Verdict trained_lds(const Env& env) {
  const Mnist d = load_mnist(env);
  const ModelConfig c = mnist_lr();
  const TrainingSchedule sch = mnist_schedule();
  std::size_t ensemble_wins = 0;
  bool pass = true;
  std::string detail;
  for (std::size_t r = 0; r < kReplicates; ++r) {
    const RngStream rng(500 + r);
    const SubsetEnsemble gt = generate_ground_truth(c, d.train, d.test, 50, 0.5, sch, rng.derive(1));
    TrakConfig t10;
    t10.projection_seed = r;
    TrakConfig t1 = t10;
    t1.ensemble_size = 1;
    const LdsResult l10 = lds(attribute_trak(c, d.train, d.test, t10, sch, rng.derive(2)), gt);
    const LdsResult l1 = lds(attribute_trak(c, d.train, d.test, t1, sch, rng.derive(2)), gt);
    if (l10.mean >= l1.mean) ++ensemble_wins;
    std::string line = "replicate " + std::to_string(r) + ": TRAK-10=" + fmt(l10.mean) + " TRAK-1=" + fmt(l1.mean);
    if (r == 0) {
      const Checkpoint target = train(c, d.train, sch, rng.derive(0));
      const LdsResult lif = lds(attribute_if(target, d.train, d.test), gt);
      const BootstrapCi ci_if = bootstrap_mean_ci(lif.valid(), rng.derive(8));
      const BootstrapCi ci_trak = bootstrap_mean_ci(l10.valid(), rng.derive(9));
      pass = pass && ci_if.mean > 0 && ci_if.lower > 0 && ci_trak.mean > 0 && ci_trak.lower > 0;
      line += " IF=" + fmt(lif.mean) + " IF_ci=[" + fmt(ci_if.lower) + "," + fmt(ci_if.upper) + "] TRAK-10_ci=[" +
              fmt(ci_trak.lower) + "," + fmt(ci_trak.upper) + "]";
      detail = "IF=" + fmt(ci_if.mean) + " [" + fmt(ci_if.lower) + "," + fmt(ci_if.upper) + "] TRAK-10=" +
               fmt(ci_trak.mean) + " [" + fmt(ci_trak.lower) + "," + fmt(ci_trak.upper) + "]";
    }
    note(line);
  }
  pass = pass && ensemble_wins >= 8;
  return {pass, detail + " TRAK-10>=TRAK-1 in " + std::to_string(ensemble_wins) + "/10"};
}

Verdict no_training(const Env& env) {
  const Mnist d = load_mnist(env);
  NoTrainingSettings st;
  st.methods = {Method::TRAK, Method::RPS};
  st.trak_ensembles = {10};
  st.ground_truth_models = 50;
  st.schedule = mnist_schedule();
  st.include_trained = false;
  const NoTrainingReport r = run_no_training_study({mnist_lr(), mnist_mlp()}, d.train, d.test, st, RngStream(600));
  bool pass = r.failures() == 0;
  std::size_t checked = 0;
  std::string detail;
  for (const auto& row : r.rows) {
    note(row.config + " " + row.method + " lds=" + fmt(row.lds_mean) + " ci=[" + fmt(row.lds_lower) + "," +
         fmt(row.lds_upper) + "] auc=" + fmt(row.auc) + (row.error.empty() ? "" : " error=" + row.error));
    if (row.method == "TRAK-10") {
      pass = pass && row.lds_mean > 0 && row.lds_lower > 0 && row.auc > 0.5;
      ++checked;
    } else if (row.method == to_string(Method::RPS)) {
      pass = pass && row.auc >= 0.45 && row.auc <= 0.55;
      ++checked;
    }
    detail += row.method + (row.config.rfind("lr", 0) == 0 ? "/lr" : "/mlp") + " lds=" + fmt(row.lds_mean) +
              " auc=" + fmt(row.auc) + "; ";
  }
  return {pass && checked == 4, detail};
}

ProxySpec proxy(std::string name, GuessStrategy strategy, bool kd = false) {
  ProxySpec p;
  p.name = std::move(name);
  p.strategy = strategy;
  p.kd_enabled = kd;
  return p;
}

StudySettings proxy_settings() {
  StudySettings st;
  st.target_schedule = mnist_schedule();
  st.proxy_schedule = mnist_schedule();
  st.ground_truth_models = 50;
  return st;
}

Verdict proxy_ordering(const Env& env) {
  const Mnist d = load_mnist(env);
  std::size_t wins = 0;
  for (std::size_t r = 0; r < kReplicates; ++r) {
    ProxySpec a = proxy("mlp-a", GuessStrategy::SameFamilyPerturbHyperparams);
    a.seed = 2 * r;
    ProxySpec b = proxy("mlp-b", GuessStrategy::SameFamilyPerturbHyperparams);
    b.seed = 2 * r + 1;
    const std::vector<ProxyCase> proxies{{a, AccessLevel::ArchOnly},
                                         {b, AccessLevel::ArchOnly},
                                         {proxy("lr", GuessStrategy::CrossFamilyHeuristic), AccessLevel::NoAccess}};
    const StudyReport rep = run_proxy_study(mnist_mlp(), d.train, d.test, proxies, proxy_settings(), RngStream(700 + r));
    double same = 0.0, cross = 0.0;
    std::size_t n_same = 0;
    std::string line = "replicate " + std::to_string(r) + ":";
    for (const auto& row : rep.rows) {
      line += " " + row.proxy + "(" + row.config + ")=" + fmt(row.lds_mean);
      if (row.proxy == "lr") {
        cross = row.lds_mean;
      } else {
        same += row.lds_mean;
        ++n_same;
      }
    }
    same /= static_cast<double>(n_same);
    const bool win = rep.failures() == 0 && same > cross;
    if (win) ++wins;
    note(line + " same_mean=" + fmt(same) + (win ? " win" : " loss"));
  }
  return {wins >= 8, "same-family mean LDS_f > LR LDS_f in " + std::to_string(wins) + "/10"};
}

Verdict kd_effect(const Env& env) {
  const Mnist d = load_mnist(env);
  std::size_t kl_wins = 0;
  std::map<std::string, std::vector<double>> scratch, kd;
  for (std::size_t r = 0; r < kReplicates; ++r) {
    ProxySpec narrow = proxy("mlp-narrow", GuessStrategy::SameFamilyPerturbHyperparams, true);
    narrow.width_factors = std::vector<double>{0.5, 0.5};
    ProxySpec cross = proxy("lr", GuessStrategy::CrossFamilyHeuristic, true);
    const std::vector<ProxyCase> proxies{{narrow, AccessLevel::ArchAndQuery}, {cross, AccessLevel::QueryOnly}};
    const StudyReport rep = run_proxy_study(mnist_mlp(), d.train, d.test, proxies, proxy_settings(), RngStream(800 + r));
    std::map<std::string, double> kl_scratch, kl_kd;
    std::string line = "replicate " + std::to_string(r) + ":";
    for (const auto& row : rep.rows) {
      line += " " + row.proxy + "/" + row.training + " lds=" + fmt(row.lds_mean) + " kl=" + fmt(row.kl_to_teacher);
      (row.kd ? kd : scratch)[row.proxy].push_back(row.lds_mean);
      (row.kd ? kl_kd : kl_scratch)[row.proxy] = row.kl_to_teacher;
    }
    bool win = rep.failures() == 0 && !kl_kd.empty();
    for (const auto& [name, kl] : kl_kd) win = win && kl < kl_scratch.at(name);
    if (win) ++kl_wins;
    note(line);
  }
  bool lds_ok = true;
  std::string detail = "KD KL lower in " + std::to_string(kl_wins) + "/10;";
  for (const auto& [name, s] : scratch) {
    const double gap = std::abs(mean_of(kd.at(name)) - mean_of(s));
    const double sd = stddev_of(s);
    lds_ok = lds_ok && gap <= sd;
    detail += " " + name + " |dLDS_f|=" + fmt(gap) + " sd_scratch=" + fmt(sd) + ";";
  }
  return {kl_wins >= 9 && lds_ok, detail};
}

Verdict brittleness_check(const Env& env) {
  const Mnist d = load_mnist(env);
  const ModelConfig c = mnist_mlp();
  const TrainingSchedule sch = mnist_schedule();
  const RngStream rng(900);
  const Checkpoint target = train(c, d.train, sch, rng.derive(0));
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.test.size() && rows.size() < 100; ++i) {
    const Vector logits = forward(c, target.params, d.test.row(i));
    Eigen::Index arg = 0;
    logits.maxCoeff(&arg);
    if (arg == d.test.labels[i]) rows.push_back(i);
  }
  if (rows.size() < 100) return {false, "only " + std::to_string(rows.size()) + " correctly classified test points"};
  const Dataset probe = d.test.select_rows(rows);
  const ScoreMatrix s = attribute_trak(c, d.train, probe, TrakConfig{}, sch, rng.derive(1));
  const std::vector<std::size_t> ks{10, 20, 40, 80, 160};
  const BrittlenessResult r = brittleness(c, d.train, probe, s, ks, sch, rng.derive(0));
  bool pass = r.failures == 0;
  std::string detail;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    pass = pass && r.guided[i] >= r.random[i];
    detail += "k=" + std::to_string(ks[i]) + " guided=" + fmt(r.guided[i]) + " random=" + fmt(r.random[i]) + "; ";
  }
  pass = pass && r.guided.back() > r.random.back();
  return {pass, detail};
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Verdict determinism(const Env& env) {
  const fs::path root = env.work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string data = "[data]\nsource = mnist\nimages = " + (env.data_dir / "mnist5k-images-idx3-ubyte").string() +
                           "\nlabels = " + (env.data_dir / "mnist5k-labels-idx1-ubyte").string() +
                           "\ntrain_size = 200\ntest_size = 40\n";
  const std::string common = data +
                             "[model]\nfamily = mlp\nhidden = 16,8\n[train]\nepochs = 4\nlearning_rates = 0.01\n"
                             "momentum = 0.9\n[attribution]\nensemble_size = 2\nprojection_dim = 64\n"
                             "[evaluation]\nsubsets = 8\nbrittleness_tests = 4\nk_values = 5,20\n"
                             "[study]\ntrak_ensembles = 1,2\n";
  const std::vector<std::pair<std::string, std::string>> runs{
      {"train", "[run]\ncommand = train\n"},
      {"attribute-trak", "[run]\ncommand = attribute\n"},
      {"attribute-if", "[run]\ncommand = attribute\n[attribution]\nmethod = if\nif_damping = 1\n"},
      {"attribute-tracin", "[run]\ncommand = attribute\n[attribution]\nmethod = tracin\n"},
      {"attribute-rps", "[run]\ncommand = attribute\n[attribution]\nmethod = rps\n"},
      {"eval-lds", "[run]\ncommand = eval-lds\n"},
      {"eval-auc", "[run]\ncommand = eval-auc\n"},
      {"brittleness", "[run]\ncommand = brittleness\n"},
      {"proxy-study", "[run]\ncommand = proxy-study\n[proxy.narrow]\nwidth_factors = 0.5,0.5\nkd = true\n"
                      "[proxy.lr]\nstrategy = cross_family\naccess = S3\n"},
      {"no-train-study", "[run]\ncommand = no-train-study\n"},
      {"selection-study", "[run]\ncommand = selection-study\n"},
  };
  std::size_t compared = 0;
  std::vector<std::string> problems;
  for (const auto& [name, extra] : runs) {
    const fs::path cfg = root / (name + ".ini");
    std::ofstream(cfg) << extra << common;
    for (const char* w : {"1", "8"}) {
      const std::string cmd = env.cli.string() + " --config " + cfg.string() + " --out " +
                              (root / (std::string("w") + w)).string() + " --workers " + w + " > " +
                              (root / (name + "-w" + w + ".log")).string() + " 2>&1";
      if (std::system(cmd.c_str()) != 0) problems.push_back(name + " failed at workers=" + w);
    }
  }
  for (const auto& entry : fs::recursive_directory_iterator(root / "w1")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root / "w1");
    const fs::path other = root / "w8" / rel;
    if (!fs::exists(other) || read_file(entry.path()) != read_file(other)) problems.push_back("differs: " + rel.string());
    ++compared;
  }
  std::size_t other_files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "w8"))
    if (entry.is_regular_file()) ++other_files;
  if (other_files != compared) problems.push_back("file counts differ");
  for (const auto& p : problems) note(p);
  return {problems.empty() && compared > 0,
          std::to_string(runs.size()) + " pipelines, " + std::to_string(compared) + " files compared, " +
              std::to_string(problems.size()) + " problems"};
}

Verdict selection(const Env& env) {
  const Mnist d = load_mnist(env);
  std::size_t trained_wins = 0, untrained_wins = 0;
  for (std::size_t s = 0; s < kReplicates; ++s) {
    SelectionSettings st;
    st.keep_fraction = 0.6;
    st.schedule = mnist_schedule();
    std::map<SelectionScorer, double> loss;
    for (auto scorer : {SelectionScorer::Trained, SelectionScorer::Untrained, SelectionScorer::Random}) {
      st.scorer = scorer;
      loss[scorer] = run_selection_study(mnist_mlp(), d.train, d.test, st, RngStream(1100 + s)).final_eval_loss;
    }
    const bool tw = loss[SelectionScorer::Trained] < loss[SelectionScorer::Random];
    const bool uw = loss[SelectionScorer::Untrained] < loss[SelectionScorer::Random];
    trained_wins += tw;
    untrained_wins += uw;
    note("seed " + std::to_string(s) + ": trained=" + fmt(loss[SelectionScorer::Trained]) +
         " untrained=" + fmt(loss[SelectionScorer::Untrained]) + " random=" + fmt(loss[SelectionScorer::Random]));
  }
  return {trained_wins >= 7 && untrained_wins >= 6,
          "trained beats random " + std::to_string(trained_wins) + "/10, untrained beats random " +
              std::to_string(untrained_wins) + "/10"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks; one PASS/FAIL line per criterion"};
  std::vector<int> only;
  Env env;
  std::string data_dir = "data", cli = "attrib_lab", work = (fs::temp_directory_path() / "attrib_acceptance").string();
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 11));
  app.add_option("--data", data_dir, "Directory holding the MNIST subset");
  app.add_option("--cli", cli, "attrib_lab executable");
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  env.data_dir = data_dir;
  env.cli = fs::absolute(cli);
  env.work = work;

  const std::array<std::function<Verdict(const Env&)>, 11> checks{
      metric_oracles, if_oracle,         trak_oracle,  gradients,   trained_lds, no_training,
      proxy_ordering, kd_effect,         brittleness_check, determinism, selection};
  if (only.empty())
    for (int i = 1; i <= 11; ++i) only.push_back(i);
  int failed = 0;
  for (int n : only) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = checks[n - 1](env);
    } catch (const std::exception& ex) {
      v = {false, std::string("exception: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > kBudget[n - 1]) {
      v.pass = false;
      v.detail += " over budget";
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << v.detail << " (" << fmt(secs) << " s of "
              << kBudget[n - 1] << ")\n"
              << std::flush;
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
