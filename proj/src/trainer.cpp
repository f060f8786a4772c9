#include "multiflock/trainer.hpp"

#include <chrono>
#include <cmath>

#include "multiflock/binary_io.hpp"
#include "multiflock/errors.hpp"

namespace multiflock {

namespace {

constexpr char kMagic[4] = {'M', 'F', 'C', 'K'};

void write_matrix(binary::Writer& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}

Matrix read_matrix(binary::Reader& r, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  const std::size_t at = r.offset();
  const auto got_rows = r.u32();
  const auto got_cols = r.u32();
  if (got_rows != rows || got_cols != cols)
    throw FormatError(r.what() + ": block " + name + " at offset " + std::to_string(at) + " is " +
                      std::to_string(got_rows) + "x" + std::to_string(got_cols) + ", expected " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
  return m;
}

// Stage names for the non-finite diagnostic.
template <typename F>
auto guarded(const char* term, std::size_t epoch, std::size_t sample, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", sample " +
                       std::to_string(sample) + ": " + term + " is not finite (" + e.what() + ")");
  }
}

void check_finite(double v, const char* term, std::size_t epoch, std::size_t sample) {
  if (!std::isfinite(v))
    throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", sample " +
                       std::to_string(sample) + ": " + term + " is not finite");
}

}  // namespace

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("train.lr must be >= 0, got " + std::to_string(learning_rate));
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip must be >= 0 (0 disables clipping)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (window < 2) throw ConfigError("train.window must be >= 2, got " + std::to_string(window));
  optimizer.validate();
  loss.validate();
}

bool operator==(const OptimizerState& a, const OptimizerState& b) {
  if (a.step != b.step || a.m.size() != b.m.size() || a.v.size() != b.v.size()) return false;
  for (std::size_t k = 0; k < a.m.size(); ++k)
    if (!same_matrix(a.m[k], b.m[k])) return false;
  for (std::size_t k = 0; k < a.v.size(); ++k)
    if (!same_matrix(a.v[k], b.v[k])) return false;
  return true;
}

OptimizerState make_optimizer_state(const ModelParams& params, const OptimizerConfig& cfg) {
  OptimizerState s;
  if (cfg.kind == OptimizerKind::adam)
    for (const auto& p : params.named_parameters()) {
      s.m.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
      s.v.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  return s;
}

double optimizer_step(const ModelParams& params, OptimizerState& state, const OptimizerConfig& cfg) {
  auto named = params.named_parameters();
  double sq = 0.0;
  for (const auto& p : named) sq += p.tensor.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  const double scale = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;
  ++state.step;
  if (cfg.kind == OptimizerKind::sgd) {
    for (auto& p : named) p.tensor.mutable_value() -= (cfg.learning_rate * scale) * p.tensor.grad();
    return norm;
  }
  if (state.m.size() != named.size() || state.v.size() != named.size())
    throw std::logic_error("optimizer state does not match the parameter list");
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < named.size(); ++k) {
    const Matrix g = scale * named[k].tensor.grad();
    Matrix& m = state.m[k];
    Matrix& v = state.v[k];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    named[k].tensor.mutable_value().array() -=
        cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  }
  return norm;
}

// --- checkpoints -------------------------------------------------------------

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  binary::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointFormatVersion);
  const ModelDims& d = ckpt.params.dims;
  for (std::size_t v : {d.num_nodes, d.num_layers, d.feature_dim, d.embed_dim, d.hidden_dim, d.decoder_dim})
    w.u32(static_cast<std::uint32_t>(v));
  w.u8(d.inter_layer ? 1 : 0);
  const auto named = ckpt.params.named_parameters();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& p : named) {
    w.str(p.name);
    write_matrix(w, p.tensor.value());
  }
  w.u8(ckpt.optimizer == OptimizerKind::sgd ? 0 : 1);
  w.u64(ckpt.state.step);
  w.u64(ckpt.epochs_completed);
  w.u8(ckpt.state.m.empty() ? 0 : 1);
  if (!ckpt.state.m.empty()) {
    if (ckpt.state.m.size() != named.size() || ckpt.state.v.size() != named.size())
      throw std::logic_error("optimizer state does not match the parameter list");
    for (const auto& m : ckpt.state.m) write_matrix(w, m);
    for (const auto& v : ckpt.state.v) write_matrix(w, v);
  }
  w.seal();
  return w.data();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  binary::Reader r(bytes, "checkpoint");
  const auto* magic = r.take(4);
  if (std::string(reinterpret_cast<const char*>(magic), 4) != std::string(kMagic, 4))
    throw FormatError("checkpoint: bad magic at offset 0 (not a multiflock checkpoint)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointFormatVersion)
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kCheckpointFormatVersion) + ")");
  ModelDims d;
  std::size_t* fields[] = {&d.num_nodes, &d.num_layers, &d.feature_dim, &d.embed_dim, &d.hidden_dim, &d.decoder_dim};
  for (std::size_t* f : fields) {
    *f = r.u32();
    if (*f == 0 || *f > 65536) throw FormatError("checkpoint: implausible dimension " + std::to_string(*f));
  }
  d.inter_layer = r.u8() != 0;
  if (d.num_layers > 1024) throw FormatError("checkpoint: implausible layer count " + std::to_string(d.num_layers));
  Checkpoint ckpt;
  ckpt.params = ModelParams::initialize(d, 0);
  auto named = ckpt.params.named_parameters();
  const std::uint32_t count = r.u32();
  if (count != named.size())
    throw FormatError("checkpoint: " + std::to_string(count) + " parameter blocks, expected " +
                      std::to_string(named.size()) + " for " + d.describe());
  for (auto& p : named) {
    const std::string name = r.str(256);
    if (name != p.name) throw FormatError("checkpoint: block '" + name + "' where '" + p.name + "' was expected");
    p.tensor.mutable_value() = read_matrix(r, p.tensor.rows(), p.tensor.cols(), p.name);
  }
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw FormatError("checkpoint: unknown optimizer code " + std::to_string(kind));
  ckpt.optimizer = kind == 0 ? OptimizerKind::sgd : OptimizerKind::adam;
  ckpt.state.step = r.u64();
  ckpt.epochs_completed = r.u64();
  if (r.u8() != 0) {
    for (auto* moments : {&ckpt.state.m, &ckpt.state.v})
      for (const auto& p : named) moments->push_back(read_matrix(r, p.tensor.rows(), p.tensor.cols(), p.name));
  }
  r.expect_seal();
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  binary::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(binary::read_file(path)); }

Checkpoint load_checkpoint(const std::string& path, const ModelDims& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (!(ckpt.params.dims == expected))
    throw ConfigError("checkpoint " + path + " has dims " + ckpt.params.dims.describe() + ", expected " +
                      expected.describe());
  return ckpt;
}

// --- training ----------------------------------------------------------------

LossTerms loss_and_gradients(const ModelParams& params, const WindowSample& sample, const LossWeights& w) {
  params.set_requires_grad(true);
  params.zero_grad();
  Tape tape;
  TapeScope scope(tape);
  const ModelInput input = sample.model_input();
  const ForwardResult result = forward(params, input);
  LossTerms terms = compute_loss(result, input, sample.target(), w);
  backward(terms.total);
  return terms;
}

TrainResult train(const std::vector<WindowSample>& samples, const Checkpoint& start,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (samples.empty()) throw ConfigError("training needs at least one sample");
  for (const auto& s : samples)
    if (s.window_length() != cfg.window)
      throw ConfigError("sample window " + std::to_string(s.window_length()) + " differs from train.window " +
                        std::to_string(cfg.window));
  TrainResult out;
  out.checkpoint.params = start.params.clone();
  out.checkpoint.optimizer = cfg.optimizer.kind;
  out.checkpoint.epochs_completed = start.epochs_completed;
  const bool resumable = start.optimizer == cfg.optimizer.kind &&
                         (cfg.optimizer.kind == OptimizerKind::sgd || !start.state.m.empty());
  out.checkpoint.state = resumable ? start.state : make_optimizer_state(out.checkpoint.params, cfg.optimizer);
  const ModelParams& params = out.checkpoint.params;
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t epoch = start.epochs_completed + 1; epoch <= cfg.epochs; ++epoch) {
    for (const WindowSample& sample : samples) {
      const std::size_t n = sample.target_index();
      params.set_requires_grad(true);
      params.zero_grad();
      LossTerms terms;
      {
        Tape tape;
        TapeScope scope(tape);
        const ModelInput input = sample.model_input();
        const ForwardResult result =
            guarded("forward pass", epoch, n, [&] { return forward(params, input); });
        const Tensor rec = guarded("reconstruction loss", epoch, n, [&] {
          return reconstruction_loss(result.scores, sample.target(), cfg.loss.epsilon);
        });
        const Tensor intra = guarded("intra-layer loss", epoch, n,
                                     [&] { return intra_consistency_loss(result.fused, input.steps); });
        const Tensor inter =
            guarded("inter-layer loss", epoch, n, [&] { return inter_consistency_loss(result.fused); });
        terms = guarded("total loss", epoch, n, [&] { return total_loss(rec, intra, inter, cfg.loss); });
        check_finite(terms.total.item(), "total loss", epoch, n);
        guarded("gradient", epoch, n, [&] {
          backward(terms.total);
          return 0;
        });
      }
      const double norm = optimizer_step(params, out.checkpoint.state, cfg.optimizer);
      check_finite(norm, "gradient norm", epoch, n);
      TrainLogRow row;
      row.epoch = epoch;
      row.sample = n;
      row.loss = terms.values();
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.log.push_back(row);
      if (hooks.on_step) hooks.on_step(row);
    }
    out.checkpoint.epochs_completed = epoch;
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(out.checkpoint);
  }
  params.set_requires_grad(false);
  return out;
}

TrainResult train(const std::vector<WindowSample>& samples, const ModelDims& dims, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  Checkpoint start;
  start.params = ModelParams::initialize(dims, cfg.seed);
  start.optimizer = cfg.optimizer.kind;
  start.state = make_optimizer_state(start.params, cfg.optimizer);
  return train(samples, start, cfg, hooks);
}

}  // namespace multiflock
