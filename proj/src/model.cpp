#include "multiflock/model.hpp"

#include <cmath>
#include <stdexcept>

#include "multiflock/binary_io.hpp"
#include "multiflock/errors.hpp"
#include "multiflock/rng.hpp"

namespace multiflock {

namespace {

Tensor glorot(std::uint64_t seed, const std::string& name, std::size_t rows, std::size_t cols,
              std::size_t fan_in, std::size_t fan_out) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(name.data());
  Rng rng = Rng::substream(seed, {binary::fnv1a(p, name.size())});
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-s, s);
  return Tensor(std::move(m));
}

Tensor glorot(std::uint64_t seed, const std::string& name, std::size_t rows, std::size_t cols) {
  return glorot(seed, name, rows, cols, cols, rows);
}

Tensor zeros(std::size_t rows, std::size_t cols) {
  return Tensor::zeros(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

std::string idx(const std::string& prefix, std::size_t i) { return prefix + "." + std::to_string(i); }

void check_dims(const ModelDims& d) {
  if (d.num_nodes == 0 || d.num_layers == 0 || d.feature_dim == 0 || d.embed_dim == 0 ||
      d.hidden_dim == 0 || d.decoder_dim == 0)
    throw ConfigError("model dimensions must be positive: " + d.describe());
}

// LeakyReLU(a_src . h_i + a_dst . h_j) for every ordered pair, h = X W^T.
Tensor attention_logits(const Tensor& h, const Tensor& attention) {
  const Eigen::Index d = h.cols();
  if (attention.rows() != 1 || attention.cols() != 2 * d)
    throw ShapeError("gat attention vector must be 1x" + std::to_string(2 * d) + ", got " + attention.shape());
  const Tensor src = matmul_nt(h, slice_cols(attention, 0, d));
  const Tensor dst = matmul_nt(h, slice_cols(attention, d, d));
  return activation(outer_sum(src, dst), Activation::leaky_relu(0.2));
}

}  // namespace

std::string ModelDims::describe() const {
  return "N=" + std::to_string(num_nodes) + " r=" + std::to_string(num_layers) +
         " d_x=" + std::to_string(feature_dim) + " d_z=" + std::to_string(embed_dim) +
         " d_h=" + std::to_string(hidden_dim) + " d_dec=" + std::to_string(decoder_dim) +
         " inter_layer=" + (inter_layer ? "1" : "0");
}

ModelParams ModelParams::initialize(const ModelDims& dims, std::uint64_t seed) {
  check_dims(dims);
  ModelParams p;
  p.dims = dims;
  const std::size_t n = dims.num_nodes, dz = dims.embed_dim, dh = dims.hidden_dim;
  for (std::size_t l = 0; l < dims.num_layers; ++l) {
    std::array<GatStage, 2> stages;
    for (std::size_t s = 0; s < 2; ++s) {
      const std::string base = idx(idx("gat", l), s);
      const std::size_t d_in = s == 0 ? dims.feature_dim : dz;
      stages[s].weight = glorot(seed, base + ".weight", dz, d_in);
      stages[s].attention = glorot(seed, base + ".attention", 1, 2 * dz);
    }
    p.gat.push_back(stages);
  }
  if (dims.inter_layer)
    for (std::size_t l = 0; l < dims.num_layers; ++l)
      p.claf.push_back(glorot(seed, idx("claf", l) + ".cross", n, n));
  const std::size_t lstm_count = dims.inter_layer ? 1 : dims.num_layers;
  for (std::size_t k = 0; k < lstm_count; ++k) {
    const std::string base = idx("lstm", k);
    LstmParams m;
    m.w_forget = glorot(seed, base + ".w_forget", dh, dh + dz);
    m.w_input = glorot(seed, base + ".w_input", dh, dh + dz);
    m.w_cell = glorot(seed, base + ".w_cell", dh, dh + dz);
    m.w_output = glorot(seed, base + ".w_output", dh, dh + dz);
    m.b_forget = zeros(1, dh);
    m.b_input = zeros(1, dh);
    m.b_cell = zeros(1, dh);
    m.b_output = zeros(1, dh);
    p.lstm.push_back(m);
  }
  for (std::size_t l = 0; l < dims.num_layers; ++l) {
    const std::string base = idx("decoder", l);
    DecoderParams d;
    d.w1 = glorot(seed, base + ".w1", dims.decoder_dim, 2 * dh);
    d.b1 = zeros(1, dims.decoder_dim);
    d.w2 = glorot(seed, base + ".w2", 1, dims.decoder_dim);
    d.b2 = zeros(1, 1);
    p.decoder.push_back(d);
  }
  return p;
}

std::vector<NamedTensor> ModelParams::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < gat.size(); ++l)
    for (std::size_t s = 0; s < 2; ++s) {
      const std::string base = idx(idx("gat", l), s);
      out.push_back({base + ".weight", gat[l][s].weight});
      out.push_back({base + ".attention", gat[l][s].attention});
    }
  for (std::size_t l = 0; l < claf.size(); ++l) out.push_back({idx("claf", l) + ".cross", claf[l]});
  for (std::size_t k = 0; k < lstm.size(); ++k) {
    const std::string base = idx("lstm", k);
    const LstmParams& m = lstm[k];
    out.push_back({base + ".w_forget", m.w_forget});
    out.push_back({base + ".w_input", m.w_input});
    out.push_back({base + ".w_cell", m.w_cell});
    out.push_back({base + ".w_output", m.w_output});
    out.push_back({base + ".b_forget", m.b_forget});
    out.push_back({base + ".b_input", m.b_input});
    out.push_back({base + ".b_cell", m.b_cell});
    out.push_back({base + ".b_output", m.b_output});
  }
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const std::string base = idx("decoder", l);
    out.push_back({base + ".w1", decoder[l].w1});
    out.push_back({base + ".b1", decoder[l].b1});
    out.push_back({base + ".w2", decoder[l].w2});
    out.push_back({base + ".b2", decoder[l].b2});
  }
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : named_parameters()) total += static_cast<std::size_t>(p.tensor.value().size());
  return total;
}

void ModelParams::set_requires_grad(bool on) const {
  for (auto& p : named_parameters()) p.tensor.set_requires_grad(on);
}

void ModelParams::zero_grad() const {
  for (auto& p : named_parameters()) p.tensor.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams c = *this;
  auto fresh = [](Tensor& t) { t = Tensor(t.value(), t.requires_grad()); };
  for (auto& stages : c.gat)
    for (auto& s : stages) {
      fresh(s.weight);
      fresh(s.attention);
    }
  for (auto& w : c.claf) fresh(w);
  for (auto& m : c.lstm)
    for (Tensor* t : {&m.w_forget, &m.w_input, &m.w_cell, &m.w_output, &m.b_forget, &m.b_input,
                      &m.b_cell, &m.b_output})
      fresh(*t);
  for (auto& d : c.decoder)
    for (Tensor* t : {&d.w1, &d.b1, &d.w2, &d.b2}) fresh(*t);
  return c;
}

// --- blocks ------------------------------------------------------------------

Tensor gat_attention_logits(const Tensor& x, const GatStage& stage) {
  return attention_logits(matmul_nt(x, stage.weight), stage.attention);
}

GatOutput gat_layer(const Tensor& x, const Adjacency& adjacency, const GatStage& stage) {
  if (static_cast<Eigen::Index>(adjacency.num_nodes()) != x.rows())
    throw ShapeError("gat_layer: adjacency has " + std::to_string(adjacency.num_nodes()) +
                     " nodes, features " + x.shape());
  const Tensor h = matmul_nt(x, stage.weight);
  const Tensor logits = attention_logits(h, stage.attention);
  Matrix mask = adjacency.matrix();
  mask.diagonal().setOnes();
  GatOutput out;
  out.attention = masked_softmax(logits, mask);
  out.embedding = activation(matmul(out.attention, h), Activation::elu(1.0));
  return out;
}

std::vector<Tensor> structural_forward(const MultiplexSnapshot& snapshot, const Tensor& features,
                                       const ModelParams& params) {
  if (snapshot.size() != params.gat.size())
    throw ShapeError("structural_forward: snapshot has " + std::to_string(snapshot.size()) +
                     " layers, model expects " + std::to_string(params.gat.size()));
  std::vector<Tensor> z;
  z.reserve(snapshot.size());
  for (std::size_t l = 0; l < snapshot.size(); ++l) {
    const Tensor first = gat_layer(features, snapshot[l], params.gat[l][0]).embedding;
    z.push_back(gat_layer(first, snapshot[l], params.gat[l][1]).embedding);
  }
  return z;
}

Tensor claf_coefficients(const Tensor& z_source, const Tensor& w_cross) {
  if (w_cross.rows() != w_cross.cols() || w_cross.cols() != z_source.rows())
    throw ShapeError("claf_coefficients: W_cross " + w_cross.shape() + " does not fit Z " + z_source.shape());
  return activation(matmul(w_cross, z_source), Activation::sigmoid());
}

std::vector<Tensor> claf_fuse(const std::vector<Tensor>& z, const ModelParams& params) {
  if (z.empty()) throw std::invalid_argument("claf_fuse needs at least one layer");
  std::vector<Tensor> out;
  out.reserve(z.size());
  for (std::size_t l = 0; l < z.size(); ++l) {
    Tensor acc = z[l];
    if (params.dims.inter_layer) {
      for (std::size_t src = 0; src < z.size(); ++src) {
        if (src == l) continue;
        acc = add(acc, hadamard(claf_coefficients(z[src], params.claf.at(l)), z[src]));
      }
    }
    out.push_back(activation(acc, Activation::elu(1.0)));
  }
  return out;
}

namespace {

// The four gate projections stacked as one (4 d_h) x (d_h + d_z) weight so a
// step needs a single matrix product. Order: forget, input, cell, output.
struct FusedGates {
  Tensor weight;
  Tensor bias;
};

FusedGates fuse_gates(const LstmParams& lstm) {
  const Tensor w[] = {lstm.w_forget, lstm.w_input, lstm.w_cell, lstm.w_output};
  const Tensor b = concat_cols(concat_cols(lstm.b_forget, lstm.b_input), concat_cols(lstm.b_cell, lstm.b_output));
  return {concat_rows(w), b};
}

LstmState fused_step(const Tensor& input, const LstmState& previous, const FusedGates& gates) {
  const Eigen::Index dh = previous.hidden.cols();
  if (gates.weight.rows() != 4 * dh)
    throw ShapeError("lstm_step: gate weights " + gates.weight.shape() + " do not fit hidden state " +
                     previous.hidden.shape());
  const Tensor x = concat_cols(previous.hidden, input);
  const Tensor pre = add(matmul_nt(x, gates.weight), gates.bias);
  const Tensor f = activation(slice_cols(pre, 0, dh), Activation::sigmoid());
  const Tensor i = activation(slice_cols(pre, dh, dh), Activation::sigmoid());
  const Tensor candidate = activation(slice_cols(pre, 2 * dh, dh), Activation::tanh());
  const Tensor o = activation(slice_cols(pre, 3 * dh, dh), Activation::sigmoid());
  LstmState next;
  next.cell = add(hadamard(f, previous.cell), hadamard(i, candidate));
  next.hidden = hadamard(o, activation(next.cell, Activation::tanh()));
  return next;
}

}  // namespace

LstmState lstm_step(const Tensor& input, const LstmState& previous, const LstmParams& lstm) {
  return fused_step(input, previous, fuse_gates(lstm));
}

std::vector<Tensor> temporal_forward(const std::vector<std::vector<Tensor>>& fused,
                                     const ModelParams& params) {
  if (fused.empty()) throw std::invalid_argument("temporal_forward needs at least one input step");
  const std::size_t layers = fused.front().size();
  const Eigen::Index n = fused.front().front().rows();
  const auto dh = static_cast<Eigen::Index>(params.dims.hidden_dim);
  std::vector<Tensor> out;
  out.reserve(layers);
  std::vector<FusedGates> units;
  for (const LstmParams& p : params.lstm) units.push_back(fuse_gates(p));
  for (std::size_t l = 0; l < layers; ++l) {
    const FusedGates& unit = units.size() == 1 ? units[0] : units.at(l);
    LstmState state{Tensor::zeros(n, dh), Tensor::zeros(n, dh)};
    for (const auto& step : fused) state = fused_step(step.at(l), state, unit);
    out.push_back(state.hidden);
  }
  return out;
}

Tensor decode(const Tensor& hidden, const DecoderParams& decoder) {
  const Eigen::Index dh = hidden.cols();
  if (decoder.w1.cols() != 2 * dh)
    throw ShapeError("decode: W1 " + decoder.w1.shape() + " does not fit hidden " + hidden.shape());
  const Tensor left = matmul_nt(hidden, slice_cols(decoder.w1, 0, dh));
  const Tensor right = matmul_nt(hidden, slice_cols(decoder.w1, dh, dh));
  return activation(pairwise_mlp(left, right, decoder.b1, decoder.w2, decoder.b2), Activation::sigmoid());
}

Tensor symmetrize(const Tensor& scores) {
  if (scores.rows() != scores.cols()) throw ShapeError("symmetrize needs a square matrix, got " + scores.shape());
  Matrix off = Matrix::Constant(scores.rows(), scores.cols(), 0.5);
  off.diagonal().setZero();
  return hadamard(add(scores, transpose(scores)), Tensor(std::move(off)));
}

ForwardResult forward(const ModelParams& params, const ModelInput& input) {
  if (input.steps.empty() || input.features == nullptr)
    throw std::invalid_argument("forward needs at least one input snapshot and the feature matrix");
  const auto& d = params.dims;
  if (static_cast<std::size_t>(input.features->rows()) != d.num_nodes ||
      static_cast<std::size_t>(input.features->cols()) != d.feature_dim)
    throw ShapeError("forward: features are " + std::to_string(input.features->rows()) + "x" +
                     std::to_string(input.features->cols()) + ", model expects " + d.describe());
  const Tensor features(*input.features);
  ForwardResult result;
  result.fused.reserve(input.steps.size());
  for (const MultiplexSnapshot* snapshot : input.steps)
    result.fused.push_back(claf_fuse(structural_forward(*snapshot, features, params), params));
  result.hidden = temporal_forward(result.fused, params);
  for (std::size_t l = 0; l < d.num_layers; ++l)
    result.scores.push_back(symmetrize(decode(result.hidden[l], params.decoder[l])));
  return result;
}

}  // namespace multiflock
