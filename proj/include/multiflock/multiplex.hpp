#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "multiflock/matrix.hpp"
#include "multiflock/mobility.hpp"

namespace multiflock {

/// Undirected binary adjacency with zero diagonal, stored as a dense 0/1 matrix.
class Adjacency {
public:
  Adjacency() = default;
  explicit Adjacency(std::size_t num_nodes);
  /// Throws std::invalid_argument unless `m` is square, binary, symmetric and zero on the diagonal.
  static Adjacency from_matrix(Matrix m);

  std::size_t num_nodes() const { return static_cast<std::size_t>(m_.rows()); }
  bool linked(std::size_t i, std::size_t j) const { return m_(i, j) != 0.0; }
  void set_link(std::size_t i, std::size_t j, bool on = true);
  std::size_t edge_count() const;
  /// Unordered links as (i, j) with i < j, row-major order.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;
  const Matrix& matrix() const { return m_; }

  friend bool operator==(const Adjacency& a, const Adjacency& b);

private:
  Matrix m_;
};

/// All r layers at one time step.
using MultiplexSnapshot = std::vector<Adjacency>;

struct SequenceMetadata {
  std::string mobility_model;
  std::uint64_t seed = 0;
  double sample_interval = 0.0;

  friend bool operator==(const SequenceMetadata&, const SequenceMetadata&) = default;
};

/// T snapshots of r layers over a fixed node set, plus the static node feature matrix.
/// Immutable after construction.
class MultiplexSequence {
public:
  MultiplexSequence(std::vector<MultiplexSnapshot> snapshots, Matrix features,
                    std::vector<double> layer_radii, SequenceMetadata metadata);

  std::size_t num_nodes() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t num_layers() const { return layer_radii_.size(); }
  std::size_t num_steps() const { return snapshots_.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features_.cols()); }

  const MultiplexSnapshot& snapshot(std::size_t t) const { return snapshots_.at(t); }
  const Adjacency& adjacency(std::size_t t, std::size_t layer) const { return snapshots_.at(t).at(layer); }
  const Matrix& features() const { return features_; }
  const std::vector<double>& layer_radii() const { return layer_radii_; }
  const SequenceMetadata& metadata() const { return metadata_; }

  friend bool operator==(const MultiplexSequence& a, const MultiplexSequence& b);

private:
  std::vector<MultiplexSnapshot> snapshots_;
  Matrix features_;
  std::vector<double> layer_radii_;
  SequenceMetadata metadata_;
};

/// What the model is allowed to see: the L-1 input snapshots and the features.
struct ModelInput {
  std::vector<const MultiplexSnapshot*> steps;
  const Matrix* features = nullptr;
};

/// L consecutive multiplex snapshots; the first L-1 are input, the last is the target.
/// References its sequence, which must outlive the sample.
class WindowSample {
public:
  WindowSample(const MultiplexSequence& sequence, std::size_t first, std::size_t window_length);

  std::size_t window_length() const { return length_; }
  std::size_t first_index() const { return first_; }
  std::size_t target_index() const { return first_ + length_ - 1; }
  std::size_t num_inputs() const { return length_ - 1; }

  const MultiplexSnapshot& input(std::size_t k) const;
  const MultiplexSnapshot& target() const { return seq_->snapshot(target_index()); }
  const MultiplexSequence& sequence() const { return *seq_; }
  ModelInput model_input() const;

private:
  const MultiplexSequence* seq_;
  std::size_t first_;
  std::size_t length_;
};

struct EdgeStats {
  std::size_t min_edges = 0;
  std::size_t max_edges = 0;
  double avg_edges = 0.0;
  double avg_density = 0.0;
};

struct SequenceStats {
  std::vector<EdgeStats> per_layer;
  EdgeStats pooled;  // over every (t, layer)
};

enum class FeatureEncoding {
  ip_address,   // 10.0.0.0 + i, big-endian
  plain_index,  // i, big-endian
};

/// Links every pair whose distance is within `radius` (inclusive).
Adjacency build_snapshot(const PositionFrame& frame, double radius);

/// `frames_per_layer[l][t]` holds layer l's positions at step t.
MultiplexSequence build_sequence(const std::vector<std::vector<PositionFrame>>& frames_per_layer,
                                 const std::vector<double>& layer_radii, Matrix features,
                                 SequenceMetadata metadata = {});

/// N x d_x binary address matrix; row i is the d_x-bit encoding of node i's address.
Matrix node_features(std::size_t num_nodes, std::size_t bits,
                     FeatureEncoding encoding = FeatureEncoding::ip_address);

std::vector<WindowSample> sliding_windows(const MultiplexSequence& sequence, std::size_t window_length);

/// Chronological split: the first `train_count` samples train, the rest test.
std::pair<std::vector<WindowSample>, std::vector<WindowSample>> split(
    const std::vector<WindowSample>& samples, std::size_t train_count);

SequenceStats stats(const MultiplexSequence& sequence);

struct DatasetOptions {
  std::vector<double> layer_radii{1000.0, 2000.0, 3000.0};
  std::size_t feature_bits = 32;
  FeatureEncoding encoding = FeatureEncoding::ip_address;
  bool drop_initial_frame = true;
};

/// One independent trace per layer (seed derived from (sim.seed, layer)), sampled
/// every sim.sample_interval and thresholded at that layer's radius.
MultiplexSequence generate_sequence(const SimConfig& sim, const DatasetOptions& options = {});

// --- persistence -------------------------------------------------------------

inline constexpr std::uint32_t kSequenceFormatVersion = 1;

std::vector<std::uint8_t> serialize_sequence(const MultiplexSequence& sequence);
/// Throws FormatError on truncation, corruption, bad magic or unsupported version.
MultiplexSequence deserialize_sequence(const std::vector<std::uint8_t>& bytes);
void save_sequence(const MultiplexSequence& sequence, const std::string& path);
MultiplexSequence load_sequence(const std::string& path);

/// Text export: "# multiflock-edges 1 N r T" header, then one "t l i j" line per link (i < j).
std::string format_edge_list(const MultiplexSequence& sequence);

}  // namespace multiflock
