#include "multiflock/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <map>

#include "multiflock/binary_io.hpp"
#include "multiflock/errors.hpp"

namespace multiflock {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                    expected + ")");
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::vector<double> to_list(std::string_view key, std::string_view v) {
  std::vector<double> out;
  while (true) {
    const auto comma = v.find(',');
    out.push_back(to_double(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string list_text(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? "," : "") + format_double(xs[k]);
  return s;
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(T RunConfig::*outer, std::size_t T::*inner) {
  return {[=](RunConfig& c, std::string_view k, std::string_view v) {
            c.*outer.*inner = static_cast<std::size_t>(to_u64(k, v));
          },
          [=](const RunConfig& c) { return std::to_string(c.*outer.*inner); }};
}

template <typename T>
Field double_field(T RunConfig::*outer, double T::*inner) {
  return {[=](RunConfig& c, std::string_view k, std::string_view v) { c.*outer.*inner = to_double(k, v); },
          [=](const RunConfig& c) { return format_double(c.*outer.*inner); }};
}

// Ordered list of (key, field); the order is the serialization order.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.push_back({"seed", {[](RunConfig& c, std::string_view k, std::string_view v) { c.seed = to_u64(k, v); },
                          [](const RunConfig& c) { return std::to_string(c.seed); }}});
    t.push_back({"sim.model",
                 {[](RunConfig& c, std::string_view, std::string_view v) { c.sim.model = parse_mobility_model(v); },
                  [](const RunConfig& c) { return std::string(to_string(c.sim.model)); }}});
    t.push_back({"sim.nodes", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                 const auto n = to_u64(k, v);
                                 if (n > 1000000) bad_value(k, v, "a node count <= 1000000");
                                 c.sim.num_nodes = static_cast<int>(n);
                               },
                               [](const RunConfig& c) { return std::to_string(c.sim.num_nodes); }}});
    t.push_back({"sim.area", double_field(&RunConfig::sim, &SimConfig::area_side)});
    t.push_back({"sim.speed_min", double_field(&RunConfig::sim, &SimConfig::speed_min)});
    t.push_back({"sim.speed_max", double_field(&RunConfig::sim, &SimConfig::speed_max)});
    t.push_back({"sim.duration", double_field(&RunConfig::sim, &SimConfig::duration)});
    t.push_back({"sim.interval", double_field(&RunConfig::sim, &SimConfig::sample_interval)});
    t.push_back({"sim.rw.leg", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                  c.sim.params.random_walk.leg_duration = to_double(k, v);
                                },
                                [](const RunConfig& c) { return format_double(c.sim.params.random_walk.leg_duration); }}});
    t.push_back({"sim.gm.memory", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                     c.sim.params.gauss_markov.memory = to_double(k, v);
                                   },
                                   [](const RunConfig& c) { return format_double(c.sim.params.gauss_markov.memory); }}});
    t.push_back({"sim.gm.update", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                     c.sim.params.gauss_markov.update_interval = to_double(k, v);
                                   },
                                   [](const RunConfig& c) {
                                     return format_double(c.sim.params.gauss_markov.update_interval);
                                   }}});
    t.push_back({"sim.rpg.groups", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                      const auto g = to_u64(k, v);
                                      if (g > 100000) bad_value(k, v, "a group count <= 100000");
                                      c.sim.params.reference_point_group.groups = static_cast<int>(g);
                                    },
                                    [](const RunConfig& c) {
                                      return std::to_string(c.sim.params.reference_point_group.groups);
                                    }}});
    t.push_back({"sim.rpg.radius", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                      c.sim.params.reference_point_group.group_radius = to_double(k, v);
                                    },
                                    [](const RunConfig& c) {
                                      return format_double(c.sim.params.reference_point_group.group_radius);
                                    }}});
    t.push_back({"sim.mg.spacing", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                      c.sim.params.manhattan_grid.grid_spacing = to_double(k, v);
                                    },
                                    [](const RunConfig& c) {
                                      return format_double(c.sim.params.manhattan_grid.grid_spacing);
                                    }}});
    t.push_back({"sim.mg.turn", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                   c.sim.params.manhattan_grid.turn_probability = to_double(k, v);
                                 },
                                 [](const RunConfig& c) {
                                   return format_double(c.sim.params.manhattan_grid.turn_probability);
                                 }}});
    t.push_back({"data.radii", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                  c.data.layer_radii = to_list(k, v);
                                },
                                [](const RunConfig& c) { return list_text(c.data.layer_radii); }}});
    t.push_back({"data.feature_bits", size_field(&RunConfig::data, &DatasetOptions::feature_bits)});
    t.push_back({"data.window", size_field(&RunConfig::train, &TrainConfig::window)});
    t.push_back({"data.train_count", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                        c.train_count = static_cast<std::size_t>(to_u64(k, v));
                                      },
                                      [](const RunConfig& c) { return std::to_string(c.train_count); }}});
    t.push_back({"model.embed", size_field(&RunConfig::model, &ModelDims::embed_dim)});
    t.push_back({"model.hidden", size_field(&RunConfig::model, &ModelDims::hidden_dim)});
    t.push_back({"model.decoder", size_field(&RunConfig::model, &ModelDims::decoder_dim)});
    t.push_back({"model.inter_layer", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                         c.model.inter_layer = to_bool(k, v);
                                       },
                                       [](const RunConfig& c) { return std::string(c.model.inter_layer ? "true" : "false"); }}});
    t.push_back({"train.epochs", size_field(&RunConfig::train, &TrainConfig::epochs)});
    t.push_back({"train.optimizer", {[](RunConfig& c, std::string_view, std::string_view v) {
                                       c.train.optimizer.kind = parse_optimizer_kind(v);
                                     },
                                     [](const RunConfig& c) { return std::string(to_string(c.train.optimizer.kind)); }}});
    t.push_back({"train.lr", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                c.train.optimizer.learning_rate = to_double(k, v);
                              },
                              [](const RunConfig& c) { return format_double(c.train.optimizer.learning_rate); }}});
    t.push_back({"train.beta1", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                   c.train.optimizer.beta1 = to_double(k, v);
                                 },
                                 [](const RunConfig& c) { return format_double(c.train.optimizer.beta1); }}});
    t.push_back({"train.beta2", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                   c.train.optimizer.beta2 = to_double(k, v);
                                 },
                                 [](const RunConfig& c) { return format_double(c.train.optimizer.beta2); }}});
    t.push_back({"train.adam_eps", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                      c.train.optimizer.epsilon = to_double(k, v);
                                    },
                                    [](const RunConfig& c) { return format_double(c.train.optimizer.epsilon); }}});
    t.push_back({"train.clip", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                  c.train.optimizer.clip_norm = to_double(k, v);
                                },
                                [](const RunConfig& c) { return format_double(c.train.optimizer.clip_norm); }}});
    t.push_back({"train.checkpoint_every", size_field(&RunConfig::train, &TrainConfig::checkpoint_every)});
    t.push_back({"loss.epsilon", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                    c.train.loss.epsilon = to_double(k, v);
                                  },
                                  [](const RunConfig& c) { return format_double(c.train.loss.epsilon); }}});
    t.push_back({"loss.alpha", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                  c.train.loss.alpha = to_double(k, v);
                                },
                                [](const RunConfig& c) { return format_double(c.train.loss.alpha); }}});
    t.push_back({"loss.beta", {[](RunConfig& c, std::string_view k, std::string_view v) {
                                 c.train.loss.beta = to_double(k, v);
                               },
                               [](const RunConfig& c) { return format_double(c.train.loss.beta); }}});
    t.push_back({"eval.baseline", {[](RunConfig& c, std::string_view k, std::string_view v) { c.baseline = to_bool(k, v); },
                                   [](const RunConfig& c) { return std::string(c.baseline ? "true" : "false"); }}});
    t.push_back({"out", {[](RunConfig& c, std::string_view, std::string_view v) { c.output_dir = std::string(v); },
                         [](const RunConfig& c) { return c.output_dir; }}});
    return t;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& [name, f] : fields())
    if (name == key) return f;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void RunConfig::set(std::string_view key, std::string_view value) { field(key).set(*this, key, trim(value)); }

std::string RunConfig::get(std::string_view key) const { return field(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [name, f] : fields()) out.push_back(name);
  return out;
}

void RunConfig::finalize() {
  sim.seed = seed;
  train.seed = seed;
  validate();
}

void RunConfig::validate() const {
  sim.validate();
  train.validate();
  if (data.layer_radii.empty()) throw ConfigError("data.radii needs at least one radius");
  for (double r : data.layer_radii)
    if (!(r > 0.0)) throw ConfigError("data.radii entries must be positive, got " + format_double(r));
  if (data.feature_bits == 0 || data.feature_bits > 64) throw ConfigError("data.feature_bits must be in [1, 64]");
  if (model.embed_dim == 0 || model.hidden_dim == 0 || model.decoder_dim == 0)
    throw ConfigError("model widths must be positive");
  if (train_count == 0) throw ConfigError("data.train_count must be >= 1");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::fingerprint() const {
  std::string text;
  for (const auto& [name, f] : fields())
    if (name != "out") text += name + " = " + f.get(*this) + "\n";
  const auto h = binary::fnv1a(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::size_t key_col = line.find_first_not_of(" \t") + 1;
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no, key_col);
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("missing key before '='", line_no, eq + 1);
    try {
      cfg.set(key, value);
    } catch (const std::invalid_argument& e) {
      const auto known = RunConfig::keys();
      const bool key_ok = std::find(known.begin(), known.end(), std::string(key)) != known.end();
      const std::size_t value_at = line.find_first_not_of(" \t", eq + 1);
      const std::size_t col = !key_ok ? key_col : value_at == std::string_view::npos ? line.size() + 1 : value_at + 1;
      throw ParseError(e.what(), line_no, col);
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  const auto bytes = binary::read_file(path);
  apply_config_text(cfg, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

ModelDims model_dims(const RunConfig& cfg, const MultiplexSequence& seq) {
  ModelDims d = cfg.model;
  d.num_nodes = seq.num_nodes();
  d.num_layers = seq.num_layers();
  d.feature_dim = seq.feature_dim();
  return d;
}

}  // namespace multiflock
