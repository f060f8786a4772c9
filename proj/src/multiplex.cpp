#include "multiflock/multiplex.hpp"

#include <algorithm>
#include <stdexcept>

#include "multiflock/binary_io.hpp"
#include "multiflock/errors.hpp"
#include "multiflock/rng.hpp"

namespace multiflock {

namespace {

constexpr char kSequenceMagic[4] = {'M', 'F', 'S', 'Q'};
constexpr std::uint64_t kIpBase = 0x0A000000ULL;  // 10.0.0.0

std::size_t packed_bytes(std::size_t bits) { return (bits + 7) / 8; }

}  // namespace

// --- Adjacency -------------------------------------------------------------

Adjacency::Adjacency(std::size_t num_nodes) : m_(Matrix::Zero(num_nodes, num_nodes)) {}

Adjacency Adjacency::from_matrix(Matrix m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("adjacency must be square, got " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m(i, i) != 0.0) throw std::invalid_argument("adjacency diagonal must be zero");
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (v != 0.0 && v != 1.0) throw std::invalid_argument("adjacency entries must be 0 or 1");
      if (v != m(j, i)) throw std::invalid_argument("adjacency must be symmetric");
    }
  }
  Adjacency a;
  a.m_ = std::move(m);
  return a;
}

void Adjacency::set_link(std::size_t i, std::size_t j, bool on) {
  if (i == j) throw std::invalid_argument("self-links are not allowed");
  m_(i, j) = m_(j, i) = on ? 1.0 : 0.0;
}

std::size_t Adjacency::edge_count() const {
  return static_cast<std::size_t>(m_.sum() / 2.0 + 0.5);
}

std::vector<std::pair<std::size_t, std::size_t>> Adjacency::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t n = num_nodes();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (m_(i, j) != 0.0) out.emplace_back(i, j);
  return out;
}

bool operator==(const Adjacency& a, const Adjacency& b) { return same_matrix(a.m_, b.m_); }

// --- MultiplexSequence -----------------------------------------------------

MultiplexSequence::MultiplexSequence(std::vector<MultiplexSnapshot> snapshots, Matrix features,
                                     std::vector<double> layer_radii, SequenceMetadata metadata)
    : snapshots_(std::move(snapshots)),
      features_(std::move(features)),
      layer_radii_(std::move(layer_radii)),
      metadata_(std::move(metadata)) {
  if (snapshots_.empty()) throw std::invalid_argument("sequence needs at least one snapshot");
  if (layer_radii_.empty()) throw std::invalid_argument("sequence needs at least one layer");
  const auto n = static_cast<std::size_t>(features_.rows());
  for (std::size_t t = 0; t < snapshots_.size(); ++t) {
    if (snapshots_[t].size() != layer_radii_.size())
      throw std::invalid_argument("snapshot " + std::to_string(t) + " has " +
                                  std::to_string(snapshots_[t].size()) + " layers, expected " +
                                  std::to_string(layer_radii_.size()));
    for (const auto& a : snapshots_[t])
      if (a.num_nodes() != n)
        throw std::invalid_argument("snapshot " + std::to_string(t) + " has " +
                                    std::to_string(a.num_nodes()) + " nodes, features have " +
                                    std::to_string(n));
  }
}

bool operator==(const MultiplexSequence& a, const MultiplexSequence& b) {
  return a.snapshots_ == b.snapshots_ && same_matrix(a.features_, b.features_) &&
         a.layer_radii_ == b.layer_radii_ && a.metadata_ == b.metadata_;
}

// --- WindowSample ----------------------------------------------------------

WindowSample::WindowSample(const MultiplexSequence& sequence, std::size_t first,
                           std::size_t window_length)
    : seq_(&sequence), first_(first), length_(window_length) {
  if (window_length < 2) throw ConfigError("window length must be at least 2");
  if (first + window_length > sequence.num_steps())
    throw ConfigError("window [" + std::to_string(first) + ", " +
                      std::to_string(first + window_length) + ") exceeds " +
                      std::to_string(sequence.num_steps()) + " snapshots");
}

const MultiplexSnapshot& WindowSample::input(std::size_t k) const {
  if (k >= num_inputs()) throw std::out_of_range("window input index out of range");
  return seq_->snapshot(first_ + k);
}

ModelInput WindowSample::model_input() const {
  ModelInput in;
  in.features = &seq_->features();
  for (std::size_t k = 0; k < num_inputs(); ++k) in.steps.push_back(&input(k));
  return in;
}

// --- construction ----------------------------------------------------------

Adjacency build_snapshot(const PositionFrame& frame, double radius) {
  if (!(radius > 0)) throw ConfigError("communication radius must be positive");
  const std::size_t n = frame.positions.size();
  Adjacency a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (distance(frame.positions[i], frame.positions[j]) <= radius) a.set_link(i, j);
  return a;
}

MultiplexSequence build_sequence(const std::vector<std::vector<PositionFrame>>& frames_per_layer,
                                 const std::vector<double>& layer_radii, Matrix features,
                                 SequenceMetadata metadata) {
  if (frames_per_layer.size() != layer_radii.size())
    throw ConfigError("got frames for " + std::to_string(frames_per_layer.size()) +
                      " layers but " + std::to_string(layer_radii.size()) + " radii");
  if (frames_per_layer.empty()) throw ConfigError("at least one layer is required");
  const std::size_t steps = frames_per_layer.front().size();
  const auto n = static_cast<std::size_t>(features.rows());
  for (std::size_t l = 0; l < frames_per_layer.size(); ++l) {
    if (frames_per_layer[l].size() != steps)
      throw ConfigError("layer " + std::to_string(l) + " has " +
                        std::to_string(frames_per_layer[l].size()) + " frames, layer 0 has " +
                        std::to_string(steps));
    for (const auto& f : frames_per_layer[l])
      if (f.positions.size() != n)
        throw ConfigError("layer " + std::to_string(l) + " frame has " +
                          std::to_string(f.positions.size()) + " nodes, expected " +
                          std::to_string(n));
  }
  std::vector<MultiplexSnapshot> snapshots(steps);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t l = 0; l < layer_radii.size(); ++l)
      snapshots[t].push_back(build_snapshot(frames_per_layer[l][t], layer_radii[l]));
  return MultiplexSequence(std::move(snapshots), std::move(features), layer_radii, std::move(metadata));
}

Matrix node_features(std::size_t num_nodes, std::size_t bits, FeatureEncoding encoding) {
  if (bits == 0) throw ConfigError("feature width must be positive");
  if (bits < 64 && (std::uint64_t{1} << bits) < num_nodes)
    throw ConfigError(std::to_string(bits) + "-bit addresses cannot distinguish " +
                      std::to_string(num_nodes) + " nodes");
  const std::uint64_t base = encoding == FeatureEncoding::ip_address ? kIpBase : 0;
  Matrix x = Matrix::Zero(num_nodes, bits);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    const std::uint64_t address = base + i;
    for (std::size_t c = 0; c < bits; ++c) {
      const std::size_t shift = bits - 1 - c;
      if (shift < 64) x(i, c) = static_cast<double>((address >> shift) & 1U);
    }
  }
  return x;
}

std::vector<WindowSample> sliding_windows(const MultiplexSequence& sequence, std::size_t window_length) {
  if (window_length < 2) throw ConfigError("window length must be at least 2");
  if (window_length > sequence.num_steps())
    throw ConfigError("window length " + std::to_string(window_length) + " exceeds " +
                      std::to_string(sequence.num_steps()) + " snapshots");
  std::vector<WindowSample> out;
  for (std::size_t first = 0; first + window_length <= sequence.num_steps(); ++first)
    out.emplace_back(sequence, first, window_length);
  return out;
}

std::pair<std::vector<WindowSample>, std::vector<WindowSample>> split(
    const std::vector<WindowSample>& samples, std::size_t train_count) {
  if (train_count == 0 || train_count >= samples.size())
    throw ConfigError("train count " + std::to_string(train_count) + " must lie in [1, " +
                      std::to_string(samples.size()) + ")");
  const auto mid = samples.begin() + static_cast<std::ptrdiff_t>(train_count);
  return {std::vector<WindowSample>(samples.begin(), mid), std::vector<WindowSample>(mid, samples.end())};
}

SequenceStats stats(const MultiplexSequence& sequence) {
  const std::size_t n = sequence.num_nodes();
  const double pairs = n > 1 ? static_cast<double>(n) * static_cast<double>(n - 1) / 2.0 : 0.0;
  auto finish = [&](EdgeStats& s, double total, std::size_t count) {
    s.avg_edges = count ? total / static_cast<double>(count) : 0.0;
    s.avg_density = pairs > 0 ? s.avg_edges / pairs : 0.0;
  };
  SequenceStats out;
  double pooled_total = 0.0;
  bool pooled_seen = false;
  for (std::size_t l = 0; l < sequence.num_layers(); ++l) {
    EdgeStats s;
    double total = 0.0;
    for (std::size_t t = 0; t < sequence.num_steps(); ++t) {
      const std::size_t e = sequence.adjacency(t, l).edge_count();
      if (t == 0) s.min_edges = s.max_edges = e;
      s.min_edges = std::min(s.min_edges, e);
      s.max_edges = std::max(s.max_edges, e);
      total += static_cast<double>(e);
      if (!pooled_seen) {
        out.pooled.min_edges = out.pooled.max_edges = e;
        pooled_seen = true;
      }
      out.pooled.min_edges = std::min(out.pooled.min_edges, e);
      out.pooled.max_edges = std::max(out.pooled.max_edges, e);
    }
    finish(s, total, sequence.num_steps());
    pooled_total += total;
    out.per_layer.push_back(s);
  }
  finish(out.pooled, pooled_total, sequence.num_steps() * sequence.num_layers());
  return out;
}

MultiplexSequence generate_sequence(const SimConfig& sim, const DatasetOptions& options) {
  sim.validate();
  if (options.layer_radii.empty()) throw ConfigError("at least one layer radius is required");
  std::vector<std::vector<PositionFrame>> frames;
  for (std::size_t l = 0; l < options.layer_radii.size(); ++l) {
    SimConfig layer_sim = sim;
    layer_sim.seed = derive_seed(sim.seed, {l});
    auto layer_frames = sample_positions(generate_trace(layer_sim), sim.sample_interval);
    if (options.drop_initial_frame) layer_frames.erase(layer_frames.begin());
    frames.push_back(std::move(layer_frames));
  }
  SequenceMetadata meta{std::string(to_string(sim.model)), sim.seed, sim.sample_interval};
  return build_sequence(frames, options.layer_radii,
                        node_features(static_cast<std::size_t>(sim.num_nodes), options.feature_bits,
                                      options.encoding),
                        std::move(meta));
}

// --- persistence -----------------------------------------------------------

std::vector<std::uint8_t> serialize_sequence(const MultiplexSequence& seq) {
  binary::Writer w;
  w.bytes(kSequenceMagic, 4);
  w.u32(kSequenceFormatVersion);
  const std::size_t n = seq.num_nodes();
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(seq.num_layers()));
  w.u32(static_cast<std::uint32_t>(seq.num_steps()));
  w.u32(static_cast<std::uint32_t>(seq.feature_dim()));
  for (double r : seq.layer_radii()) w.f64(r);
  w.str(seq.metadata().mobility_model);
  w.u64(seq.metadata().seed);
  w.f64(seq.metadata().sample_interval);

  auto pack = [&](auto&& bit_at, std::size_t count) {
    std::vector<std::uint8_t> bytes(packed_bytes(count), 0);
    for (std::size_t k = 0; k < count; ++k)
      if (bit_at(k)) bytes[k / 8] |= static_cast<std::uint8_t>(0x80U >> (k % 8));
    w.bytes(bytes.data(), bytes.size());
  };
  const std::size_t d = seq.feature_dim();
  for (std::size_t i = 0; i < n; ++i)
    pack([&](std::size_t c) { return seq.features()(i, c) != 0.0; }, d);
  std::vector<std::pair<std::size_t, std::size_t>> upper;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) upper.emplace_back(i, j);
  for (std::size_t t = 0; t < seq.num_steps(); ++t)
    for (std::size_t l = 0; l < seq.num_layers(); ++l) {
      const Adjacency& a = seq.adjacency(t, l);
      pack([&](std::size_t k) { return a.linked(upper[k].first, upper[k].second); }, upper.size());
    }
  w.seal();
  return w.data();
}

MultiplexSequence deserialize_sequence(const std::vector<std::uint8_t>& bytes) {
  binary::Reader r(bytes, "dataset");
  const auto* magic = r.take(4);
  if (!std::equal(magic, magic + 4, kSequenceMagic)) throw FormatError("dataset: bad magic at offset 0");
  const std::uint32_t version = r.u32();
  if (version != kSequenceFormatVersion)
    throw FormatError("dataset: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kSequenceFormatVersion) + ")");
  const std::size_t n = r.u32();
  const std::size_t layers = r.u32();
  const std::size_t steps = r.u32();
  const std::size_t d = r.u32();
  if (n == 0 || layers == 0 || steps == 0 || d == 0)
    throw FormatError("dataset: zero dimension in header at offset 8");
  if (n > (1U << 16) || layers > 1024 || d > 4096)
    throw FormatError("dataset: implausible dimensions in header at offset 8");
  std::vector<double> radii(layers);
  for (auto& v : radii) v = r.f64();
  SequenceMetadata meta;
  meta.mobility_model = r.str(256);
  meta.seed = r.u64();
  meta.sample_interval = r.f64();

  const std::size_t pairs = n * (n - 1) / 2;
  r.need(n * packed_bytes(d) + steps * layers * packed_bytes(pairs) + 8);
  auto bit = [](const std::uint8_t* p, std::size_t k) { return (p[k / 8] >> (7 - k % 8)) & 1U; };
  Matrix features = Matrix::Zero(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = r.take(packed_bytes(d));
    for (std::size_t c = 0; c < d; ++c) features(i, c) = bit(p, c);
  }
  std::vector<MultiplexSnapshot> snapshots(steps);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t l = 0; l < layers; ++l) {
      const auto* p = r.take(packed_bytes(pairs));
      Adjacency a(n);
      std::size_t k = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j, ++k)
          if (bit(p, k)) a.set_link(i, j);
      snapshots[t].push_back(std::move(a));
    }
  r.expect_seal();
  return MultiplexSequence(std::move(snapshots), std::move(features), std::move(radii), std::move(meta));
}

void save_sequence(const MultiplexSequence& sequence, const std::string& path) {
  binary::write_file(path, serialize_sequence(sequence));
}

MultiplexSequence load_sequence(const std::string& path) {
  return deserialize_sequence(binary::read_file(path));
}

std::string format_edge_list(const MultiplexSequence& seq) {
  std::string out = "# multiflock-edges 1 " + std::to_string(seq.num_nodes()) + " " +
                    std::to_string(seq.num_layers()) + " " + std::to_string(seq.num_steps()) + "\n";
  for (std::size_t t = 0; t < seq.num_steps(); ++t)
    for (std::size_t l = 0; l < seq.num_layers(); ++l)
      for (const auto& [i, j] : seq.adjacency(t, l).edges())
        out += std::to_string(t) + " " + std::to_string(l) + " " + std::to_string(i) + " " +
               std::to_string(j) + "\n";
  return out;
}

}  // namespace multiflock
