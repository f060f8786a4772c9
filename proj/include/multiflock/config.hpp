#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "multiflock/mobility.hpp"
#include "multiflock/model.hpp"
#include "multiflock/multiplex.hpp"
#include "multiflock/trainer.hpp"

namespace multiflock {

/// Everything one command needs. Every field has a default; a config file
/// overrides defaults and command-line flags override the file.
struct RunConfig {
  std::uint64_t seed = 1;  // root seed: simulation and parameter initialization
  SimConfig sim;
  DatasetOptions data;
  std::size_t train_count = 50;
  ModelDims model;  // num_nodes, num_layers and feature_dim follow the dataset
  TrainConfig train;
  bool baseline = false;
  std::string output_dir = "out";

  /// Sets one key (e.g. "train.lr"). Throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// Keys accepted by set(), in serialization order.
  static std::vector<std::string> keys();
  /// Current value of `key` in the format set() accepts.
  std::string get(std::string_view key) const;

  /// Copies the root seed into the simulation and training seeds, then validates.
  void finalize();
  void validate() const;

  /// "key = value" lines for every key, in keys() order.
  std::string to_text() const;
  /// Hex FNV-1a of to_text() without output_dir.
  std::string fingerprint() const;
};

/// Applies a flat "key = value" file ('#' starts a comment). Throws ParseError
/// with line and column for malformed lines, unknown keys or bad values.
void apply_config_text(RunConfig& cfg, std::string_view text);
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Shortest decimal string that reads back to the same double.
std::string format_double(double v);

/// Model dimensions for `seq` using the widths in `cfg`.
ModelDims model_dims(const RunConfig& cfg, const MultiplexSequence& seq);

}  // namespace multiflock
