#pragma once

#include <vector>

#include "multiflock/model.hpp"
#include "multiflock/multiplex.hpp"
#include "multiflock/tensor.hpp"

namespace multiflock {

struct LossWeights {
  double epsilon = 5.0;  // weight on linked entries of the reconstruction error
  double alpha = 0.1;    // intra-layer consistency
  double beta = 0.1;     // inter-layer consistency

  /// Throws ConfigError unless epsilon > 1 and alpha, beta >= 0.
  void validate() const;
};

struct LossBreakdown {
  double rec = 0.0;
  double intra = 0.0;
  double inter = 0.0;
  double total = 0.0;
};

/// sum_l sum_{i,j} w_ij (S_ij - A_ij)^2 over ordered pairs, w = epsilon on links, 1 elsewhere.
Tensor reconstruction_loss(const std::vector<Tensor>& scores, const MultiplexSnapshot& target,
                           double epsilon);

/// sum_t sum_l sum_{(i,j) linked, i<j} |z_i - z_j|^2. embeddings[t][l] pairs with inputs[t][l].
Tensor intra_consistency_loss(const std::vector<std::vector<Tensor>>& embeddings,
                              const std::vector<const MultiplexSnapshot*>& inputs);

/// sum_t sum_{l1<l2} sum_i |z_i(l1) - z_i(l2)|^2; zero for a single layer.
Tensor inter_consistency_loss(const std::vector<std::vector<Tensor>>& embeddings);

struct LossTerms {
  Tensor rec;
  Tensor intra;
  Tensor inter;
  Tensor total;

  LossBreakdown values() const { return {rec.item(), intra.item(), inter.item(), total.item()}; }
};

/// rec + alpha * intra + beta * inter.
LossTerms total_loss(const Tensor& rec, const Tensor& intra, const Tensor& inter, const LossWeights& w);

/// All three terms for one forward pass. Consistency terms use the fused embeddings.
LossTerms compute_loss(const ForwardResult& result, const ModelInput& input,
                       const MultiplexSnapshot& target, const LossWeights& w);

}  // namespace multiflock
