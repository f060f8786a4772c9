#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "multiflock/model.hpp"
#include "multiflock/multiplex.hpp"
#include "multiflock/objective.hpp"

namespace multiflock {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global L2 norm the gradient is rescaled to when exceeded; 0 disables clipping.
  double clip_norm = 5.0;

  void validate() const;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t window = 11;
  OptimizerConfig optimizer;
  LossWeights loss;
  std::uint64_t seed = 1;
  /// Save a checkpoint every this many epochs (0 = only when asked by the caller).
  std::size_t checkpoint_every = 0;

  void validate() const;
};

struct TrainLogRow {
  std::size_t epoch = 0;   // 1-based
  std::size_t sample = 0;  // target snapshot index of the window
  LossBreakdown loss;
  double seconds = 0.0;    // wall time since training started
};

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<Matrix> m;  // first moments, one per parameter (Adam only)
  std::vector<Matrix> v;  // second moments

  friend bool operator==(const OptimizerState& a, const OptimizerState& b);
};

/// Zeroed state sized for `params` (moments are only allocated for Adam).
OptimizerState make_optimizer_state(const ModelParams& params, const OptimizerConfig& cfg);

/// Applies one update from the gradients stored on the parameters. Clipping by
/// global norm happens first. Returns the global gradient norm before clipping.
double optimizer_step(const ModelParams& params, OptimizerState& state, const OptimizerConfig& cfg);

struct Checkpoint {
  ModelParams params;
  OptimizerKind optimizer = OptimizerKind::adam;
  OptimizerState state;
  std::uint64_t epochs_completed = 0;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on corruption, truncation or a version mismatch.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
/// As load_checkpoint, but throws ConfigError naming both shapes when the stored
/// dimensions differ from `expected`.
Checkpoint load_checkpoint(const std::string& path, const ModelDims& expected);

struct TrainHooks {
  /// Called after every optimizer step.
  std::function<void(const TrainLogRow&)> on_step;
  /// Called at the end of every `checkpoint_every`-th epoch.
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
};

/// Loss terms and gradients for one window; gradients are left on the parameters.
LossTerms loss_and_gradients(const ModelParams& params, const WindowSample& sample, const LossWeights& w);

/// Runs epochs (start.epochs_completed, cfg.epochs] over `samples` in the given
/// (chronological) order with one optimizer step per sample. `start` is not modified.
/// A non-finite loss throws NumericError naming epoch, sample and term.
TrainResult train(const std::vector<WindowSample>& samples, const Checkpoint& start,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Fresh run: initializes parameters from cfg.seed and trains.
TrainResult train(const std::vector<WindowSample>& samples, const ModelDims& dims,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace multiflock
