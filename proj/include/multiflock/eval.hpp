#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "multiflock/model.hpp"
#include "multiflock/multiplex.hpp"
#include "multiflock/trainer.hpp"

namespace multiflock {

/// Probability that a random positive outranks a random negative, ties counted
/// half (midrank formula). Throws std::domain_error ("undefined AUC") without
/// at least one positive and one negative.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// sum_k (R_k - R_{k-1}) P_k over the ranking sorted by descending score, ties
/// broken by ascending index. Throws std::domain_error without a positive.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct LayerMetrics {
  double auc = 0.0;
  double ap = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  bool all_tied = false;     // every score equal: auc reported as 0.5
  bool no_positives = false; // target layer empty: excluded from averages
  bool no_negatives = false; // target layer complete: excluded from averages
  bool usable() const { return !no_positives && !no_negatives; }
};

struct EvalReport {
  std::string dataset;
  std::string method;
  std::string fingerprint;
  std::vector<std::size_t> sample_targets;       // target snapshot index per sample
  std::vector<std::vector<LayerMetrics>> cells;  // [sample][layer]
  std::vector<double> layer_auc;                 // mean over samples, per layer
  std::vector<double> layer_ap;
  double mean_auc = 0.0;  // mean over layers, then over samples
  double mean_ap = 0.0;
  std::size_t tied_cells = 0;
  std::size_t skipped_cells = 0;
};

/// Maps one window to per-layer N x N score matrices. Receives only the
/// window's inputs.
using Scorer = std::function<std::vector<Matrix>(const ModelInput&)>;

/// Scores i<j pairs against the target snapshot of every sample.
EvalReport evaluate(const Scorer& scorer, const std::vector<WindowSample>& samples,
                    const std::string& method = "scorer");
EvalReport evaluate(const ModelParams& params, const std::vector<WindowSample>& samples,
                    const std::string& method = "CLF-ULP");

/// Scores from the last input snapshot: 0.75 where linked, 0.25 elsewhere.
std::vector<Matrix> persistence_baseline(const ModelInput& input);

struct AblationResult {
  std::uint64_t seed = 0;
  EvalReport full;
  EvalReport variant;
  std::size_t full_parameters = 0;
  std::size_t variant_parameters = 0;
};

/// Trains and evaluates the full model and the No-Inter-Layer variant (beta forced
/// to 0) from the same seed.
AblationResult run_ablation(const std::vector<WindowSample>& train_samples,
                            const std::vector<WindowSample>& test_samples, const ModelDims& dims,
                            const TrainConfig& cfg);

// --- report formats ------------------------------------------------------------

/// One row per report: dataset,method,auc,ap,(per-layer columns),tied,skipped.
std::string reports_csv(const std::vector<EvalReport>& reports);
std::string reports_json(const std::vector<EvalReport>& reports);
/// Aligned text table with dataset, method, AUC and AP columns.
std::string reports_table(const std::vector<EvalReport>& reports);

}  // namespace multiflock
