#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "multiflock/config.hpp"
#include "multiflock/eval.hpp"
#include "multiflock/trainer.hpp"

namespace multiflock {

/// A sequence plus its chronological train/test windows. Samples point into
/// `sequence`, which the struct keeps alive.
struct Dataset {
  std::shared_ptr<const MultiplexSequence> sequence;
  std::vector<WindowSample> train;
  std::vector<WindowSample> test;
};

/// Throws ConfigError when the sequence has fewer than train_count + 1 windows.
Dataset prepare_dataset(std::shared_ptr<const MultiplexSequence> sequence, std::size_t window,
                        std::size_t train_count);
Dataset generate_dataset(const RunConfig& cfg);

/// Builds a sequence from externally supplied waypoint traces: one trace per
/// layer, or a single trace shared by every layer.
MultiplexSequence sequence_from_traces(const std::vector<MobilityTrace>& traces, const RunConfig& cfg);

/// Upper-case model name used in reports, e.g. "RW".
std::string dataset_label(const MultiplexSequence& seq);

struct LegResult {
  TrainResult training;
  EvalReport model;
  std::optional<EvalReport> baseline;
};

/// Trains on ds.train from cfg.seed, evaluates on ds.test (and the persistence
/// baseline when cfg.baseline is set).
LegResult run_leg(const RunConfig& cfg, const Dataset& ds, const TrainHooks& hooks = {});

/// epoch,sample,rec,intra,inter,total,seconds
std::string train_log_csv(const std::vector<TrainLogRow>& log);

/// node_id,layer,z0..z{d-1} for the fused embeddings of input step `step`.
std::string embeddings_csv(const ForwardResult& result, std::size_t step);

/// Human-readable per-layer and pooled edge statistics.
std::string stats_text(const MultiplexSequence& seq);

}  // namespace multiflock
