#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "attrib/attributors.hpp"
#include "attrib/scenarios.hpp"
#include "attrib/training.hpp"

namespace attrib {

enum class Command {
  Train,
  Attribute,
  EvalLds,
  EvalAuc,
  Brittleness,
  ProxyStudy,
  NoTrainStudy,
  SelectionStudy,
};

std::string to_string(Command command);
Command parse_command(const std::string& text);

struct DataSpec {
  std::string source;  // "mnist", "csv" or "synth"
  std::string images;
  std::string labels;
  std::string csv;
  std::size_t num_classes = 10;
  std::size_t train_size = 1000;
  std::size_t test_size = 200;
  std::optional<std::size_t> limit;
  std::size_t synth_dim = 2;
  double synth_separation = 10.0;
};

struct RunConfig {
  std::optional<Command> command;
  DataSpec data;

  Family family = Family::MLP;
  std::vector<std::size_t> hidden_widths{64, 32};
  Activation activation = Activation::Relu;
  TrainingSchedule schedule;

  Method method = Method::TRAK;
  TrakConfig trak;
  IfConfig if_config;
  RpsConfig rps;
  /// TracInCP uses the last this-many epoch checkpoints.
  std::size_t tracin_checkpoints = 1;
  std::string scores_file;  // precomputed TDAS scores for eval-lds

  std::size_t subsets = 50;
  double subset_fraction = 0.5;
  std::string ensemble_file;  // precomputed TDAE ensemble for eval-lds
  double flip_fraction = 0.1;
  std::vector<std::size_t> k_values{10, 20, 40, 80, 160};
  std::size_t brittleness_tests = 100;

  std::vector<ProxyCase> proxies;
  std::vector<Method> no_train_methods{Method::TRAK, Method::RPS};
  std::vector<std::size_t> trak_ensembles{1, 10};
  std::vector<Family> no_train_families{Family::LogisticRegression, Family::MLP};
  double keep_fraction = 0.6;
  std::vector<SelectionScorer> scorers{SelectionScorer::Trained, SelectionScorer::Untrained,
                                       SelectionScorer::Random};

  std::string out_dir = "attrib_out";
  std::uint64_t seed = 0;
  std::optional<std::size_t> workers;

  ModelConfig model(std::size_t input_dim) const;
  /// Every effective setting as sorted key=value lines (output paths and
  /// worker count excluded); the basis of the run digest.
  std::string canonical() const;
};

/// INI-style text: "[section]" headers and "key = value" lines; '#' and ';'
/// start comments. Unknown sections or keys, malformed lines and bad values
/// throw ConfigError naming the source, line and key.
RunConfig parse_run_config(std::istream& is, const std::string& source = "config");
RunConfig load_run_config(const std::string& path);

}  // namespace attrib
