#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plreg/model.hpp"
#include "plreg/protocols.hpp"
#include "plreg/trainer.hpp"

namespace plreg {

/// Fully resolved experiment description. Everything a run needs, nothing else.
struct ExperimentConfig {
  Task task = Task::Gcd;
  std::string preset;  // empty when no preset was requested
  SyntheticSpec spec;
  std::size_t dim = 32;
  std::size_t depth = 2;
  HeadInput head_input = HeadInput::Masked;
  bool use_mask = true;
  TrainRun train;
  std::size_t sessions = 5;  // CIL incremental sessions
  CilStyle style = CilStyle::Ordered;
  std::optional<int> held_out_domain;  // mDG+GCD; nullopt means every domain
  std::size_t test_per_class = 100;    // CIL balanced test set size
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "plreg_out";

  void validate() const;
  bool operator==(const ExperimentConfig&) const;
};

/// Named weight presets taken from the published hyper-parameter tables.
struct Preset {
  std::string name;
  LossWeights weights;
  // w_lreg is multiplied by lambda_infomax when set (the "x lambda" entries)
  bool lreg_scaled_by_lambda = false;
  std::optional<Task> task;
  std::optional<CilStyle> style;
  std::optional<std::size_t> epochs;
};

const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& name);

/// Parses a JSON document (or a run manifest that embeds one).
/// Unknown keys, type mismatches and a missing "task" raise ConfigError naming
/// the key and its line. Preset values only fill keys the document leaves unset.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Every key, fully resolved; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

/// Keys accepted by `sweep --axis`.
const std::vector<std::string>& sweep_axes();
/// Sets one sweepable field.
void set_axis(ExperimentConfig& config, const std::string& axis, double value);

}  // namespace plreg
