#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "multiflock/multiplex.hpp"
#include "multiflock/tensor.hpp"

namespace multiflock {

struct ModelDims {
  std::size_t num_nodes = 100;
  std::size_t num_layers = 3;
  std::size_t feature_dim = 32;    // d_x
  std::size_t embed_dim = 128;     // d_z
  std::size_t hidden_dim = 128;    // d_h
  std::size_t decoder_dim = 128;   // d_dec
  /// false selects the No-Inter-Layer variant: no cross-layer fusion and one
  /// LSTM per layer instead of a shared one.
  bool inter_layer = true;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
  std::string describe() const;
};

/// One attention stage: weight is d_out x d_in, attention is 1 x 2*d_out.
struct GatStage {
  Tensor weight;
  Tensor attention;
};

struct LstmParams {
  Tensor w_forget, w_input, w_cell, w_output;  // d_h x (d_h + d_z)
  Tensor b_forget, b_input, b_cell, b_output;  // 1 x d_h
};

struct DecoderParams {
  Tensor w1;  // d_dec x 2*d_h
  Tensor b1;  // 1 x d_dec
  Tensor w2;  // 1 x d_dec
  Tensor b2;  // 1 x 1
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ModelParams {
  ModelDims dims;
  std::vector<std::array<GatStage, 2>> gat;  // per network layer, two stacked stages
  std::vector<Tensor> claf;                  // per target layer, N x N
  std::vector<LstmParams> lstm;              // 1 shared, or one per layer in the variant
  std::vector<DecoderParams> decoder;        // per layer

  /// Glorot-uniform weights, zero biases. Each tensor draws from a substream
  /// keyed by its name, so adding or removing blocks leaves the others intact.
  static ModelParams initialize(const ModelDims& dims, std::uint64_t seed);

  /// Every learnable tensor in a fixed order (the checkpoint order).
  std::vector<NamedTensor> named_parameters() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on) const;
  void zero_grad() const;
  /// Deep copy: the result shares no storage with *this.
  ModelParams clone() const;
};

// --- blocks ------------------------------------------------------------------

/// e(i, j) = LeakyReLU(a . [W x_i || W x_j]) for every ordered pair; callers mask.
Tensor gat_attention_logits(const Tensor& x, const GatStage& stage);

struct GatOutput {
  Tensor embedding;  // N x d_out
  Tensor attention;  // N x N, rows sum to 1 over N(i) and i itself
};

/// Single-head attention over each node's neighbours plus itself, ELU output.
GatOutput gat_layer(const Tensor& x, const Adjacency& adjacency, const GatStage& stage);

/// Two stacked GAT stages per layer on the same adjacency. Returns Z per layer.
std::vector<Tensor> structural_forward(const MultiplexSnapshot& snapshot, const Tensor& features,
                                       const ModelParams& params);

/// sigmoid(W_cross * Z_src): N x d_z gate for one source layer.
Tensor claf_coefficients(const Tensor& z_source, const Tensor& w_cross);

/// Z_cross(l) = ELU(Z(l) + sum_{l' != l} claf_coefficients(Z(l'), W_cross(l)) .* Z(l')).
/// In the No-Inter-Layer variant the sum is dropped: Z_cross(l) = ELU(Z(l)).
std::vector<Tensor> claf_fuse(const std::vector<Tensor>& z, const ModelParams& params);

struct LstmState {
  Tensor hidden;  // N x d_h
  Tensor cell;    // N x d_h
};

LstmState lstm_step(const Tensor& input, const LstmState& previous, const LstmParams& lstm);

/// One pass per layer from a zero state. fused[step][layer]; returns h per layer.
std::vector<Tensor> temporal_forward(const std::vector<std::vector<Tensor>>& fused,
                                     const ModelParams& params);

/// sigmoid(W2 * ReLU(W1 [h_i || h_j] + b1) + b2) for every ordered pair; not symmetric.
Tensor decode(const Tensor& hidden, const DecoderParams& decoder);

/// (S + S^T) / 2 with the diagonal zeroed.
Tensor symmetrize(const Tensor& scores);

struct ForwardResult {
  std::vector<Tensor> scores;               // per layer, N x N, symmetric, zero diagonal
  std::vector<std::vector<Tensor>> fused;   // [step][layer] Z_cross
  std::vector<Tensor> hidden;               // per layer final hidden state
};

/// Encodes the L-1 input snapshots and decodes next-step link scores. The
/// target snapshot is not part of ModelInput and is never read here.
ForwardResult forward(const ModelParams& params, const ModelInput& input);

}  // namespace multiflock
