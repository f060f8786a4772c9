#include "multiflock/objective.hpp"

#include <cmath>

#include "multiflock/errors.hpp"

namespace multiflock {

namespace {

Tensor zero_scalar() { return Tensor::scalar(0.0); }

Tensor accumulate_sum(Tensor acc, const Tensor& term) {
  return acc.defined() ? add(acc, term) : term;
}

}  // namespace

void LossWeights::validate() const {
  if (!(epsilon > 1.0)) throw ConfigError("loss.epsilon must be > 1, got " + std::to_string(epsilon));
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw ConfigError("loss.alpha must be >= 0, got " + std::to_string(alpha));
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw ConfigError("loss.beta must be >= 0, got " + std::to_string(beta));
}

Tensor reconstruction_loss(const std::vector<Tensor>& scores, const MultiplexSnapshot& target,
                           double epsilon) {
  if (scores.size() != target.size())
    throw ShapeError("reconstruction_loss: " + std::to_string(scores.size()) + " score layers vs " +
                     std::to_string(target.size()) + " target layers");
  Tensor acc;
  for (std::size_t l = 0; l < scores.size(); ++l) {
    const Matrix& a = target[l].matrix();
    if (scores[l].rows() != a.rows() || scores[l].cols() != a.cols())
      throw ShapeError("reconstruction_loss: scores " + scores[l].shape() + " vs target " +
                       std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    Matrix weight = (a.array() * (epsilon - 1.0) + 1.0).matrix();
    const Tensor err = square(sub(scores[l], Tensor(a)));
    acc = accumulate_sum(acc, sum(hadamard(err, Tensor(std::move(weight)))));
  }
  return acc.defined() ? acc : zero_scalar();
}

Tensor intra_consistency_loss(const std::vector<std::vector<Tensor>>& embeddings,
                              const std::vector<const MultiplexSnapshot*>& inputs) {
  if (embeddings.size() != inputs.size())
    throw ShapeError("intra_consistency_loss: " + std::to_string(embeddings.size()) +
                     " embedding steps vs " + std::to_string(inputs.size()) + " input snapshots");
  Tensor acc;
  for (std::size_t t = 0; t < embeddings.size(); ++t) {
    const MultiplexSnapshot& snap = *inputs[t];
    if (snap.size() != embeddings[t].size())
      throw ShapeError("intra_consistency_loss: layer count mismatch at step " + std::to_string(t));
    for (std::size_t l = 0; l < snap.size(); ++l) {
      const auto edges = snap[l].edges();
      if (edges.empty()) continue;
      std::vector<Eigen::Index> from, to;
      from.reserve(edges.size());
      to.reserve(edges.size());
      for (const auto& [i, j] : edges) {
        from.push_back(static_cast<Eigen::Index>(i));
        to.push_back(static_cast<Eigen::Index>(j));
      }
      const Tensor& z = embeddings[t][l];
      acc = accumulate_sum(acc, sum(square(sub(row_select(z, from), row_select(z, to)))));
    }
  }
  return acc.defined() ? acc : zero_scalar();
}

Tensor inter_consistency_loss(const std::vector<std::vector<Tensor>>& embeddings) {
  Tensor acc;
  for (const auto& step : embeddings)
    for (std::size_t l1 = 0; l1 < step.size(); ++l1)
      for (std::size_t l2 = l1 + 1; l2 < step.size(); ++l2)
        acc = accumulate_sum(acc, sum(square(sub(step[l1], step[l2]))));
  return acc.defined() ? acc : zero_scalar();
}

LossTerms total_loss(const Tensor& rec, const Tensor& intra, const Tensor& inter, const LossWeights& w) {
  LossTerms terms{rec, intra, inter, {}};
  terms.total = add(add(rec, scalar_mul(intra, w.alpha)), scalar_mul(inter, w.beta));
  return terms;
}

LossTerms compute_loss(const ForwardResult& result, const ModelInput& input,
                       const MultiplexSnapshot& target, const LossWeights& w) {
  return total_loss(reconstruction_loss(result.scores, target, w.epsilon),
                    intra_consistency_loss(result.fused, input.steps),
                    inter_consistency_loss(result.fused), w);
}

}  // namespace multiflock
