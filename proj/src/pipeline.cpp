#include "multiflock/pipeline.hpp"

#include <cctype>
#include <cstdio>
#include <sstream>

#include "multiflock/errors.hpp"

namespace multiflock {

Dataset prepare_dataset(std::shared_ptr<const MultiplexSequence> sequence, std::size_t window,
                        std::size_t train_count) {
  Dataset ds;
  ds.sequence = std::move(sequence);
  const auto windows = sliding_windows(*ds.sequence, window);
  if (windows.size() <= train_count)
    throw ConfigError("dataset has " + std::to_string(windows.size()) + " windows of length " +
                      std::to_string(window) + "; need more than data.train_count = " +
                      std::to_string(train_count));
  auto [train, test] = split(windows, train_count);
  ds.train = std::move(train);
  ds.test = std::move(test);
  return ds;
}

Dataset generate_dataset(const RunConfig& cfg) {
  auto seq = std::make_shared<const MultiplexSequence>(generate_sequence(cfg.sim, cfg.data));
  return prepare_dataset(std::move(seq), cfg.train.window, cfg.train_count);
}

MultiplexSequence sequence_from_traces(const std::vector<MobilityTrace>& traces, const RunConfig& cfg) {
  const std::size_t layers = cfg.data.layer_radii.size();
  if (traces.size() != 1 && traces.size() != layers)
    throw ConfigError("got " + std::to_string(traces.size()) + " traces for " + std::to_string(layers) +
                      " layers (pass one trace per layer or a single shared trace)");
  std::vector<std::vector<PositionFrame>> frames;
  for (std::size_t l = 0; l < layers; ++l) {
    auto layer_frames = sample_positions(traces[traces.size() == 1 ? 0 : l], cfg.sim.sample_interval);
    if (cfg.data.drop_initial_frame) layer_frames.erase(layer_frames.begin());
    frames.push_back(std::move(layer_frames));
  }
  const std::size_t n = traces.front().num_nodes();
  for (const auto& t : traces)
    if (t.num_nodes() != n) throw ConfigError("traces disagree on the node count");
  SequenceMetadata meta{"trace", cfg.seed, cfg.sim.sample_interval};
  return build_sequence(frames, cfg.data.layer_radii, node_features(n, cfg.data.feature_bits, cfg.data.encoding),
                        std::move(meta));
}

std::string dataset_label(const MultiplexSequence& seq) {
  std::string s = seq.metadata().mobility_model;
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s.empty() ? "dataset" : s;
}

LegResult run_leg(const RunConfig& cfg, const Dataset& ds, const TrainHooks& hooks) {
  LegResult out;
  const ModelDims dims = model_dims(cfg, *ds.sequence);
  out.training = train(ds.train, dims, cfg.train, hooks);
  const std::string label = dataset_label(*ds.sequence);
  out.model = evaluate(out.training.checkpoint.params, ds.test,
                       dims.inter_layer ? "CLF-ULP" : "No Inter-Layer");
  out.model.dataset = label;
  out.model.fingerprint = cfg.fingerprint();
  if (cfg.baseline) {
    out.baseline = evaluate(persistence_baseline, ds.test, "Persistence");
    out.baseline->dataset = label;
    out.baseline->fingerprint = cfg.fingerprint();
  }
  return out;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,sample,rec,intra,inter,total,seconds\n";
  for (const auto& r : log)
    out << r.epoch << ',' << r.sample << ',' << r.loss.rec << ',' << r.loss.intra << ',' << r.loss.inter << ','
        << r.loss.total << ',' << r.seconds << '\n';
  return out.str();
}

std::string embeddings_csv(const ForwardResult& result, std::size_t step) {
  if (step >= result.fused.size())
    throw std::out_of_range("embedding step " + std::to_string(step) + " out of range (window has " +
                            std::to_string(result.fused.size()) + " input steps)");
  const auto& layers = result.fused[step];
  std::ostringstream out;
  out.precision(17);
  const Eigen::Index d = layers.front().cols();
  out << "node_id,layer";
  for (Eigen::Index k = 0; k < d; ++k) out << ",z" << k;
  out << '\n';
  for (Eigen::Index i = 0; i < layers.front().rows(); ++i)
    for (std::size_t l = 0; l < layers.size(); ++l) {
      out << i << ',' << l;
      for (Eigen::Index k = 0; k < d; ++k) out << ',' << layers[l].value()(i, k);
      out << '\n';
    }
  return out.str();
}

std::string stats_text(const MultiplexSequence& seq) {
  const SequenceStats s = stats(seq);
  std::ostringstream out;
  out << "nodes " << seq.num_nodes() << ", layers " << seq.num_layers() << ", snapshots " << seq.num_steps()
      << ", model " << seq.metadata().mobility_model << ", seed " << seq.metadata().seed << ", interval "
      << format_double(seq.metadata().sample_interval) << "\n";
  auto line = [&](const std::string& name, const EdgeStats& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s min_edges %6zu  max_edges %6zu  avg_edges %10.2f  avg_density %.4f\n",
                  name.c_str(), e.min_edges, e.max_edges, e.avg_edges, e.avg_density);
    out << buf;
  };
  for (std::size_t l = 0; l < s.per_layer.size(); ++l)
    line("layer" + std::to_string(l) + " (r=" + format_double(seq.layer_radii()[l]) + ")", s.per_layer[l]);
  line("pooled", s.pooled);
  return out.str();
}

}  // namespace multiflock
