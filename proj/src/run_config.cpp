#include "attrib/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "attrib/digest.hpp"
#include "attrib/errors.hpp"

namespace attrib {

std::string to_string(Command command) {
  switch (command) {
    case Command::Train: return "train";
    case Command::Attribute: return "attribute";
    case Command::EvalLds: return "eval-lds";
    case Command::EvalAuc: return "eval-auc";
    case Command::Brittleness: return "brittleness";
    case Command::ProxyStudy: return "proxy-study";
    case Command::NoTrainStudy: return "no-train-study";
    case Command::SelectionStudy: return "selection-study";
  }
  throw ConfigError("unknown command");
}

Command parse_command(const std::string& text) {
  for (Command c : {Command::Train, Command::Attribute, Command::EvalLds, Command::EvalAuc,
                    Command::Brittleness, Command::ProxyStudy, Command::NoTrainStudy,
                    Command::SelectionStudy}) {
    if (to_string(c) == text) return c;
  }
  throw ConfigError("unknown command '" + text + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T number(const std::string& v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ConfigError("bad number '" + v + "'");
  return out;
}

std::size_t count(const std::string& v) { return number<std::size_t>(v); }
double real(const std::string& v) { return number<double>(v); }

bool flag(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean '" + v + "'");
}

template <typename T, typename F>
std::vector<T> list_of(const std::string& v, F parse) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(parse(item));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.command", [](RunConfig& c, const std::string& v) { c.command = parse_command(v); }},
      {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = number<std::uint64_t>(v); }},
      {"run.out", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      {"run.workers", [](RunConfig& c, const std::string& v) { c.workers = count(v); }},

      {"data.source",
       [](RunConfig& c, const std::string& v) {
         if (v != "mnist" && v != "csv" && v != "synth") throw ConfigError("source must be mnist, csv or synth");
         c.data.source = v;
       }},
      {"data.images", [](RunConfig& c, const std::string& v) { c.data.images = v; }},
      {"data.labels", [](RunConfig& c, const std::string& v) { c.data.labels = v; }},
      {"data.csv", [](RunConfig& c, const std::string& v) { c.data.csv = v; }},
      {"data.num_classes", [](RunConfig& c, const std::string& v) { c.data.num_classes = count(v); }},
      {"data.train_size", [](RunConfig& c, const std::string& v) { c.data.train_size = count(v); }},
      {"data.test_size", [](RunConfig& c, const std::string& v) { c.data.test_size = count(v); }},
      {"data.limit", [](RunConfig& c, const std::string& v) { c.data.limit = count(v); }},
      {"data.synth_dim", [](RunConfig& c, const std::string& v) { c.data.synth_dim = count(v); }},
      {"data.synth_separation", [](RunConfig& c, const std::string& v) { c.data.synth_separation = real(v); }},

      {"model.family", [](RunConfig& c, const std::string& v) { c.family = parse_family(v); }},
      {"model.hidden", [](RunConfig& c, const std::string& v) { c.hidden_widths = list_of<std::size_t>(v, count); }},
      {"model.activation", [](RunConfig& c, const std::string& v) { c.activation = parse_activation(v); }},

      {"train.epochs", [](RunConfig& c, const std::string& v) { c.schedule.epochs = count(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.schedule.batch_size = count(v); }},
      {"train.learning_rates",
       [](RunConfig& c, const std::string& v) { c.schedule.learning_rates = list_of<double>(v, real); }},
      {"train.momentum", [](RunConfig& c, const std::string& v) { c.schedule.momentum = real(v); }},

      {"attribution.method", [](RunConfig& c, const std::string& v) { c.method = parse_method(v); }},
      {"attribution.ensemble_size", [](RunConfig& c, const std::string& v) { c.trak.ensemble_size = count(v); }},
      {"attribution.projection_dim", [](RunConfig& c, const std::string& v) { c.trak.projection_dim = count(v); }},
      {"attribution.subsample_fraction",
       [](RunConfig& c, const std::string& v) { c.trak.subsample_fraction = real(v); }},
      {"attribution.gram_damping", [](RunConfig& c, const std::string& v) { c.trak.gram_damping = real(v); }},
      {"attribution.composition",
       [](RunConfig& c, const std::string& v) {
         if (v == "averaged_q") c.trak.composition = TrakComposition::AveragedQ;
         else if (v == "per_model") c.trak.composition = TrakComposition::PerModel;
         else throw ConfigError("composition must be averaged_q or per_model");
       }},
      {"attribution.if_damping", [](RunConfig& c, const std::string& v) { c.if_config.damping = real(v); }},
      {"attribution.cg_tol", [](RunConfig& c, const std::string& v) { c.if_config.cg_tol = real(v); }},
      {"attribution.cg_max_iter",
       [](RunConfig& c, const std::string& v) { c.if_config.cg_max_iter = number<int>(v); }},
      {"attribution.rps_lambda", [](RunConfig& c, const std::string& v) { c.rps.l2_lambda = real(v); }},
      {"attribution.tracin_checkpoints",
       [](RunConfig& c, const std::string& v) { c.tracin_checkpoints = count(v); }},
      {"attribution.scores_file", [](RunConfig& c, const std::string& v) { c.scores_file = v; }},

      {"evaluation.subsets", [](RunConfig& c, const std::string& v) { c.subsets = count(v); }},
      {"evaluation.subset_fraction", [](RunConfig& c, const std::string& v) { c.subset_fraction = real(v); }},
      {"evaluation.ensemble_file", [](RunConfig& c, const std::string& v) { c.ensemble_file = v; }},
      {"evaluation.flip_fraction", [](RunConfig& c, const std::string& v) { c.flip_fraction = real(v); }},
      {"evaluation.k_values", [](RunConfig& c, const std::string& v) { c.k_values = list_of<std::size_t>(v, count); }},
      {"evaluation.brittleness_tests",
       [](RunConfig& c, const std::string& v) { c.brittleness_tests = count(v); }},

      {"study.no_train_methods",
       [](RunConfig& c, const std::string& v) { c.no_train_methods = list_of<Method>(v, parse_method); }},
      {"study.trak_ensembles",
       [](RunConfig& c, const std::string& v) { c.trak_ensembles = list_of<std::size_t>(v, count); }},
      {"study.no_train_families",
       [](RunConfig& c, const std::string& v) { c.no_train_families = list_of<Family>(v, parse_family); }},
      {"study.keep_fraction", [](RunConfig& c, const std::string& v) { c.keep_fraction = real(v); }},
      {"study.scorers",
       [](RunConfig& c, const std::string& v) {
         c.scorers = list_of<SelectionScorer>(v, parse_selection_scorer);
       }},
  };
  return table;
}

void set_proxy_key(ProxySpec& spec, AccessLevel& access, const std::string& key, const std::string& v) {
  if (key == "strategy") spec.strategy = parse_guess_strategy(v);
  else if (key == "access") access = parse_access_level(v);
  else if (key == "kd") spec.kd_enabled = flag(v);
  else if (key == "kd_alpha") spec.kd.alpha = real(v);
  else if (key == "kd_temperature") spec.kd.temperature = real(v);
  else if (key == "seed") spec.seed = number<std::uint64_t>(v);
  else if (key == "width_factors") spec.width_factors = list_of<double>(v, real);
  else throw ConfigError("unknown key");
}

}  // namespace

ModelConfig RunConfig::model(std::size_t input_dim) const {
  if (family == Family::LogisticRegression) return logistic_regression(input_dim, data.num_classes);
  return mlp(input_dim, hidden_widths, data.num_classes, activation);
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv;
  auto join = [](const auto& items, auto fmt) {
    std::string s;
    for (const auto& x : items) s += (s.empty() ? "" : ",") + fmt(x);
    return s;
  };
  auto sz = [](std::size_t v) { return std::to_string(v); };
  kv["run.command"] = command ? to_string(*command) : "";
  kv["run.seed"] = std::to_string(seed);
  kv["data.source"] = data.source;
  kv["data.images"] = data.images;
  kv["data.labels"] = data.labels;
  kv["data.csv"] = data.csv;
  kv["data.num_classes"] = sz(data.num_classes);
  kv["data.train_size"] = sz(data.train_size);
  kv["data.test_size"] = sz(data.test_size);
  kv["data.limit"] = data.limit ? sz(*data.limit) : "";
  kv["data.synth_dim"] = sz(data.synth_dim);
  kv["data.synth_separation"] = format_double(data.synth_separation);
  kv["model.family"] = to_string(family);
  kv["model.hidden"] = join(hidden_widths, sz);
  kv["model.activation"] = to_string(activation);
  kv["train.schedule"] = schedule.digest();
  kv["attribution.method"] = to_string(method);
  kv["attribution.ensemble_size"] = sz(trak.ensemble_size);
  kv["attribution.projection_dim"] = sz(trak.projection_dim);
  kv["attribution.subsample_fraction"] = format_double(trak.subsample_fraction);
  kv["attribution.gram_damping"] = trak.gram_damping ? format_double(*trak.gram_damping) : "";
  kv["attribution.composition"] = trak.composition == TrakComposition::AveragedQ ? "averaged_q" : "per_model";
  kv["attribution.if_damping"] = format_double(if_config.damping);
  kv["attribution.cg_tol"] = format_double(if_config.cg_tol);
  kv["attribution.cg_max_iter"] = std::to_string(if_config.cg_max_iter);
  kv["attribution.rps_lambda"] = format_double(rps.l2_lambda);
  kv["attribution.tracin_checkpoints"] = sz(tracin_checkpoints);
  kv["attribution.scores_file"] = scores_file;
  kv["evaluation.subsets"] = sz(subsets);
  kv["evaluation.subset_fraction"] = format_double(subset_fraction);
  kv["evaluation.ensemble_file"] = ensemble_file;
  kv["evaluation.flip_fraction"] = format_double(flip_fraction);
  kv["evaluation.k_values"] = join(k_values, sz);
  kv["evaluation.brittleness_tests"] = sz(brittleness_tests);
  kv["study.no_train_methods"] = join(no_train_methods, [](Method m) { return to_string(m); });
  kv["study.trak_ensembles"] = join(trak_ensembles, sz);
  kv["study.no_train_families"] = join(no_train_families, [](Family f) { return to_string(f); });
  kv["study.keep_fraction"] = format_double(keep_fraction);
  kv["study.scorers"] = join(scorers, [](SelectionScorer s) { return to_string(s); });
  for (std::size_t i = 0; i < proxies.size(); ++i) {
    const auto& p = proxies[i];
    const std::string pre = "proxy." + std::to_string(i) + ".";
    kv[pre + "name"] = p.spec.name;
    kv[pre + "strategy"] = to_string(p.spec.strategy);
    kv[pre + "access"] = to_string(p.access);
    kv[pre + "kd"] = p.spec.kd_enabled ? "true" : "false";
    kv[pre + "kd_alpha"] = format_double(p.spec.kd.alpha);
    kv[pre + "kd_temperature"] = format_double(p.spec.kd.temperature);
    kv[pre + "seed"] = std::to_string(p.spec.seed);
    kv[pre + "width_factors"] =
        p.spec.width_factors ? join(*p.spec.width_factors, [](double d) { return format_double(d); }) : "";
  }
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

RunConfig parse_run_config(std::istream& is, const std::string& source) {
  RunConfig c;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> proxy_index;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      static const std::vector<std::string> known{"run", "data", "model", "train",
                                                  "attribution", "evaluation", "study"};
      if (section.rfind("proxy.", 0) == 0 && section.size() > 6) {
        if (!proxy_index.count(section)) {
          proxy_index[section] = c.proxies.size();
          ProxyCase pc;
          pc.spec.name = section.substr(6);
          c.proxies.push_back(pc);
        }
      } else if (std::find(known.begin(), known.end(), section) == known.end()) {
        throw ConfigError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key '" + key + "' appears before any section");
    try {
      if (section.rfind("proxy.", 0) == 0) {
        ProxyCase& pc = c.proxies[proxy_index.at(section)];
        set_proxy_key(pc.spec, pc.access, key, value);
      } else {
        const auto it = setters().find(section + "." + key);
        if (it == setters().end()) throw ConfigError("unknown key");
        it->second(c, value);
      }
    } catch (const Error& ex) {
      throw ConfigError(where + ": key '" + key + "' in [" + section + "]: " + ex.what());
    }
  }
  if (!c.command) throw ConfigError(source + ": missing required key 'command' in [run]");
  if (c.data.source.empty()) throw ConfigError(source + ": missing required key 'source' in [data]");
  try {
    c.schedule.validate();
    c.trak.validate();
    c.rps.validate();
    if (c.family == Family::MLP && c.hidden_widths.empty()) throw ConfigError("model.hidden is empty");
  } catch (const Error& ex) {
    throw ConfigError(source + ": " + ex.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  return parse_run_config(is, path);
}

}  // namespace attrib
