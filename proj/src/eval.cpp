#include "multiflock/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace multiflock {

namespace {

void check_lengths(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("scores and labels differ in length (" + std::to_string(scores.size()) +
                                " vs " + std::to_string(labels.size()) + ")");
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t k = 0; k < n;) {
    std::size_t end = k;
    while (end < n && scores[order[end]] == scores[order[k]]) ++end;
    const double midrank = 0.5 * static_cast<double>(k + 1 + end);  // mean of ranks k+1..end
    for (std::size_t q = k; q < end; ++q)
      if (labels[order[q]]) {
        positive_rank_sum += midrank;
        ++positives;
      }
    k = end;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0)
    throw std::domain_error("undefined AUC: need at least one positive and one negative label");
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto positives = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                                [](std::uint8_t v) { return v != 0; }));
  if (positives == 0) throw std::domain_error("undefined average precision: no positive labels");
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!labels[order[k]]) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return ap / static_cast<double>(positives);
}

std::vector<Matrix> persistence_baseline(const ModelInput& input) {
  if (input.steps.empty()) throw std::invalid_argument("persistence baseline needs an input snapshot");
  std::vector<Matrix> out;
  for (const Adjacency& a : *input.steps.back()) {
    Matrix s = (a.matrix().array() * 0.5 + 0.25).matrix();
    s.diagonal().setZero();
    out.push_back(std::move(s));
  }
  return out;
}

EvalReport evaluate(const Scorer& scorer, const std::vector<WindowSample>& samples, const std::string& method) {
  EvalReport report;
  report.method = method;
  if (samples.empty()) throw std::invalid_argument("evaluate needs at least one test sample");
  const std::size_t layers = samples.front().sequence().num_layers();
  const std::size_t n = samples.front().sequence().num_nodes();
  const std::size_t pairs = n * (n - 1) / 2;
  std::vector<double> layer_auc_sum(layers, 0.0), layer_ap_sum(layers, 0.0);
  std::vector<std::size_t> layer_count(layers, 0);
  double auc_sum = 0.0, ap_sum = 0.0;
  std::size_t sample_count = 0;
  std::vector<double> scores(pairs);
  std::vector<std::uint8_t> labels(pairs);
  for (const WindowSample& sample : samples) {
    const std::vector<Matrix> predicted = scorer(sample.model_input());
    if (predicted.size() != layers)
      throw std::invalid_argument(method + ": scorer returned " + std::to_string(predicted.size()) +
                                  " layers, expected " + std::to_string(layers));
    std::vector<LayerMetrics> row;
    double s_auc = 0.0, s_ap = 0.0;
    std::size_t usable = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      const Matrix& s = predicted[l];
      const Adjacency& target = sample.target()[l];
      std::size_t k = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j, ++k) {
          scores[k] = s(i, j);
          labels[k] = target.linked(i, j) ? 1 : 0;
        }
      LayerMetrics m;
      m.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
      m.negatives = pairs - m.positives;
      m.no_positives = m.positives == 0;
      m.no_negatives = m.negatives == 0;
      m.all_tied = std::all_of(scores.begin(), scores.end(), [&](double v) { return v == scores.front(); });
      if (m.usable()) {
        try {
          m.auc = m.all_tied ? 0.5 : auc(scores, labels);
          m.ap = average_precision(scores, labels);
        } catch (const std::exception& e) {
          throw std::runtime_error(method + ": sample " + std::to_string(sample.target_index()) + ", layer " +
                                   std::to_string(l) + ": " + e.what());
        }
        if (m.all_tied) ++report.tied_cells;
        s_auc += m.auc;
        s_ap += m.ap;
        layer_auc_sum[l] += m.auc;
        layer_ap_sum[l] += m.ap;
        ++layer_count[l];
        ++usable;
      } else {
        ++report.skipped_cells;
      }
      row.push_back(m);
    }
    if (usable > 0) {
      auc_sum += s_auc / static_cast<double>(usable);
      ap_sum += s_ap / static_cast<double>(usable);
      ++sample_count;
    }
    report.cells.push_back(std::move(row));
    report.sample_targets.push_back(sample.target_index());
  }
  for (std::size_t l = 0; l < layers; ++l) {
    const double c = static_cast<double>(std::max<std::size_t>(layer_count[l], 1));
    report.layer_auc.push_back(layer_auc_sum[l] / c);
    report.layer_ap.push_back(layer_ap_sum[l] / c);
  }
  if (sample_count > 0) {
    report.mean_auc = auc_sum / static_cast<double>(sample_count);
    report.mean_ap = ap_sum / static_cast<double>(sample_count);
  }
  return report;
}

EvalReport evaluate(const ModelParams& params, const std::vector<WindowSample>& samples, const std::string& method) {
  params.set_requires_grad(false);
  return evaluate(
      [&params](const ModelInput& input) {
        std::vector<Matrix> out;
        for (const Tensor& s : forward(params, input).scores) out.push_back(s.value());
        return out;
      },
      samples, method);
}

AblationResult run_ablation(const std::vector<WindowSample>& train_samples,
                            const std::vector<WindowSample>& test_samples, const ModelDims& dims,
                            const TrainConfig& cfg) {
  AblationResult result;
  result.seed = cfg.seed;
  ModelDims full_dims = dims;
  full_dims.inter_layer = true;
  ModelDims variant_dims = dims;
  variant_dims.inter_layer = false;
  TrainConfig variant_cfg = cfg;
  variant_cfg.loss.beta = 0.0;

  const TrainResult full = train(train_samples, full_dims, cfg);
  result.full = evaluate(full.checkpoint.params, test_samples, "CLF-ULP");
  result.full_parameters = full.checkpoint.params.parameter_count();
  const TrainResult variant = train(train_samples, variant_dims, variant_cfg);
  result.variant = evaluate(variant.checkpoint.params, test_samples, "No Inter-Layer");
  result.variant_parameters = variant.checkpoint.params.parameter_count();
  return result;
}

// --- report formats ------------------------------------------------------------

std::string reports_csv(const std::vector<EvalReport>& reports) {
  std::size_t layers = 0;
  for (const auto& r : reports) layers = std::max(layers, r.layer_auc.size());
  std::ostringstream out;
  out << "dataset,method,auc,ap";
  for (std::size_t l = 0; l < layers; ++l) out << ",auc_layer" << l << ",ap_layer" << l;
  out << ",samples,tied_cells,skipped_cells,fingerprint\n";
  for (const auto& r : reports) {
    out << r.dataset << ',' << r.method << ',' << exact(r.mean_auc) << ',' << exact(r.mean_ap);
    for (std::size_t l = 0; l < layers; ++l) {
      if (l < r.layer_auc.size())
        out << ',' << exact(r.layer_auc[l]) << ',' << exact(r.layer_ap[l]);
      else
        out << ",,";
    }
    out << ',' << r.cells.size() << ',' << r.tied_cells << ',' << r.skipped_cells << ',' << r.fingerprint << '\n';
  }
  return out.str();
}

std::string reports_json(const std::vector<EvalReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["dataset"] = r.dataset;
    j["method"] = r.method;
    j["auc"] = r.mean_auc;
    j["ap"] = r.mean_ap;
    j["layer_auc"] = r.layer_auc;
    j["layer_ap"] = r.layer_ap;
    j["samples"] = r.cells.size();
    j["tied_cells"] = r.tied_cells;
    j["skipped_cells"] = r.skipped_cells;
    j["fingerprint"] = r.fingerprint;
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < r.cells.size(); ++s)
      for (std::size_t l = 0; l < r.cells[s].size(); ++l) {
        const LayerMetrics& m = r.cells[s][l];
        cells.push_back({{"target", r.sample_targets[s]},
                         {"layer", l},
                         {"auc", m.auc},
                         {"ap", m.ap},
                         {"positives", m.positives},
                         {"negatives", m.negatives},
                         {"all_tied", m.all_tied},
                         {"usable", m.usable()}});
      }
    j["cells"] = std::move(cells);
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string reports_table(const std::vector<EvalReport>& reports) {
  std::size_t w_dataset = 7, w_method = 6;
  for (const auto& r : reports) {
    w_dataset = std::max(w_dataset, r.dataset.size());
    w_method = std::max(w_method, r.method.size());
  }
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  std::ostringstream out;
  out << pad("Dataset", w_dataset) << "  " << pad("Method", w_method) << "  AUC     AP\n";
  out << std::string(w_dataset + w_method + 18, '-') << '\n';
  for (const auto& r : reports) {
    out << pad(r.dataset, w_dataset) << "  " << pad(r.method, w_method) << "  " << fixed(r.mean_auc) << "  "
        << fixed(r.mean_ap);
    if (r.tied_cells > 0) out << "  (" << r.tied_cells << " all-tie cells scored 0.5)";
    if (r.skipped_cells > 0) out << "  (" << r.skipped_cells << " single-class cells skipped)";
    out << '\n';
  }
  return out.str();
}

}  // namespace multiflock
