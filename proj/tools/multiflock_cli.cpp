// multiflock: dataset generation, training, evaluation, sweeps and ablation.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdlib>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "multiflock/binary_io.hpp"
#include "multiflock/config.hpp"
#include "multiflock/errors.hpp"
#include "multiflock/eval.hpp"
#include "multiflock/pipeline.hpp"

namespace fs = std::filesystem;
using namespace multiflock;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

// Marks errors that belong to the command line rather than to the run.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;  // key=value
  std::vector<std::pair<std::string, std::string>> flags;
  bool quiet = false;
};

// Registers a flag that maps onto a RunConfig key.
void key_option(CLI::App* app, Common& common, const std::string& flag, const std::string& key,
                const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&common, key](const std::string& v) { common.flags.emplace_back(key, v); }, help + " [" + key + "]")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

void add_common(CLI::App* app, Common& common) {
  app->add_option("-c,--config", common.config_file, "Flat key = value config file");
  app->add_option("--set", common.overrides, "Override any config key: --set train.lr=0.01")->take_all();
  key_option(app, common, "--seed", "seed", "Root seed (falls back to $MULTIFLOCK_SEED)");
  key_option(app, common, "-o,--out", "out", "Output directory");
  app->add_flag("-q,--quiet", common.quiet, "Suppress progress output");
}

void add_sim_flags(CLI::App* app, Common& common) {
  key_option(app, common, "--model", "sim.model", "Mobility model: rw, gm, rpg, mg");
  key_option(app, common, "--nodes", "sim.nodes", "Number of UAVs");
  key_option(app, common, "--area", "sim.area", "Side of the square area (m)");
  key_option(app, common, "--speed-min", "sim.speed_min", "Minimum speed (m/s)");
  key_option(app, common, "--speed-max", "sim.speed_max", "Maximum speed (m/s)");
  key_option(app, common, "--duration", "sim.duration", "Simulated time (s)");
  key_option(app, common, "--interval", "sim.interval", "Sampling interval (s)");
  key_option(app, common, "--radii", "data.radii", "Per-layer communication radii, comma separated");
}

void add_train_flags(CLI::App* app, Common& common) {
  key_option(app, common, "--epochs", "train.epochs", "Training epochs");
  key_option(app, common, "--lr", "train.lr", "Learning rate");
  key_option(app, common, "--optimizer", "train.optimizer", "sgd or adam");
  key_option(app, common, "--clip", "train.clip", "Global gradient-norm clip (0 disables)");
  key_option(app, common, "--epsilon", "loss.epsilon", "Link-error weight");
  key_option(app, common, "--alpha", "loss.alpha", "Intra-layer consistency weight");
  key_option(app, common, "--beta", "loss.beta", "Inter-layer consistency weight");
  key_option(app, common, "--window", "data.window", "Window length L (L-1 inputs + 1 target)");
  key_option(app, common, "--train-count", "data.train_count", "Number of training windows");
  key_option(app, common, "--embed", "model.embed", "Embedding width d_z");
  key_option(app, common, "--hidden", "model.hidden", "LSTM hidden width d_h");
  key_option(app, common, "--decoder", "model.decoder", "Decoder hidden width");
}

// defaults < $MULTIFLOCK_SEED < config file < --set < dedicated flags
RunConfig resolve(const Common& common) {
  RunConfig cfg;
  try {
    if (const char* env = std::getenv("MULTIFLOCK_SEED"); env != nullptr && *env != '\0') cfg.set("seed", env);
    if (!common.config_file.empty()) apply_config_file(cfg, common.config_file);
    for (const std::string& kv : common.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [key, value] : common.flags) cfg.set(key, value);
    cfg.finalize();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

fs::path prepare_output(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_text(dir / "config.txt", "# fingerprint " + cfg.fingerprint() + "\n" + cfg.to_text());
  return dir;
}

std::shared_ptr<const MultiplexSequence> load_or_generate(const RunConfig& cfg, const std::string& data_path) {
  if (data_path.empty()) return std::make_shared<const MultiplexSequence>(generate_sequence(cfg.sim, cfg.data));
  if (!fs::exists(data_path)) throw std::runtime_error("dataset '" + data_path + "' does not exist");
  return std::make_shared<const MultiplexSequence>(load_sequence(data_path));
}

void write_reports(const fs::path& dir, const std::string& stem, const std::vector<EvalReport>& reports) {
  write_text(dir / (stem + ".csv"), reports_csv(reports));
  write_text(dir / (stem + ".json"), reports_json(reports));
  write_text(dir / (stem + ".txt"), reports_table(reports));
}

TrainHooks progress_hooks(const Common& common, const RunConfig& cfg, const fs::path& dir) {
  TrainHooks hooks;
  if (!common.quiet) {
    hooks.on_step = [&cfg, last_epoch = std::size_t{0}](const TrainLogRow& row) mutable {
      if (row.epoch == last_epoch) return;
      last_epoch = row.epoch;
      if (row.epoch == 1 || row.epoch % 10 == 0 || row.epoch == cfg.train.epochs)
        std::cerr << "epoch " << row.epoch << "/" << cfg.train.epochs << "  first-sample loss "
                  << format_double(row.loss.total) << "  (" << format_double(row.seconds) << " s)\n";
    };
  }
  hooks.on_checkpoint = [dir](const Checkpoint& ckpt) {
    save_checkpoint(ckpt, (dir / ("checkpoint_epoch" + std::to_string(ckpt.epochs_completed) + ".mfck")).string());
  };
  return hooks;
}

// --- commands ------------------------------------------------------------------

int cmd_generate(const Common& common, const std::vector<std::string>& traces) {
  const RunConfig cfg = resolve(common);
  MultiplexSequence seq = [&] {
    if (traces.empty()) return generate_sequence(cfg.sim, cfg.data);
    std::vector<MobilityTrace> parsed;
    for (const auto& path : traces) {
      const auto bytes = binary::read_file(path);
      try {
        parsed.push_back(parse_waypoint_trace(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                              cfg.sim.area_side));
      } catch (const ParseError& e) {
        throw std::runtime_error(path + ": " + e.what());
      }
    }
    return sequence_from_traces(parsed, cfg);
  }();
  const fs::path dir = prepare_output(cfg);
  save_sequence(seq, (dir / "dataset.mfsq").string());
  write_text(dir / "edges.txt", format_edge_list(seq));
  const std::string stats = stats_text(seq);
  write_text(dir / "stats.txt", stats);
  if (!common.quiet) std::cout << stats;
  return 0;
}

int cmd_stats(const Common& common, const std::string& data_path) {
  const RunConfig cfg = resolve(common);
  std::cout << stats_text(*load_or_generate(cfg, data_path));
  return 0;
}

int cmd_train(const Common& common, const std::string& data_path, const std::string& resume) {
  const RunConfig cfg = resolve(common);
  const Dataset ds = prepare_dataset(load_or_generate(cfg, data_path), cfg.train.window, cfg.train_count);
  const fs::path dir = prepare_output(cfg);
  const ModelDims dims = model_dims(cfg, *ds.sequence);
  const TrainHooks hooks = progress_hooks(common, cfg, dir);
  TrainResult result;
  if (!resume.empty()) {
    result = train(ds.train, load_checkpoint(resume, dims), cfg.train, hooks);
  } else {
    result = train(ds.train, dims, cfg.train, hooks);
  }
  save_checkpoint(result.checkpoint, (dir / "checkpoint.mfck").string());
  write_text(dir / "train_log.csv", train_log_csv(result.log));
  if (!common.quiet)
    std::cout << "trained " << result.checkpoint.params.parameter_count() << " parameters for "
              << result.checkpoint.epochs_completed << " epochs; checkpoint in " << (dir / "checkpoint.mfck").string()
              << "\n";
  return 0;
}

int cmd_eval(const Common& common, const std::string& data_path, const std::string& checkpoint) {
  const RunConfig cfg = resolve(common);
  const Dataset ds = prepare_dataset(load_or_generate(cfg, data_path), cfg.train.window, cfg.train_count);
  const ModelDims dims = model_dims(cfg, *ds.sequence);
  Checkpoint ckpt = load_checkpoint(checkpoint);
  if (ckpt.params.dims.num_nodes != dims.num_nodes || ckpt.params.dims.num_layers != dims.num_layers ||
      ckpt.params.dims.feature_dim != dims.feature_dim)
    throw std::runtime_error("checkpoint dims " + ckpt.params.dims.describe() + " do not match the dataset (N=" +
                             std::to_string(dims.num_nodes) + " r=" + std::to_string(dims.num_layers) +
                             " d_x=" + std::to_string(dims.feature_dim) + ")");
  const fs::path dir = prepare_output(cfg);
  const std::string label = dataset_label(*ds.sequence);
  std::vector<EvalReport> reports;
  if (cfg.baseline) {
    reports.push_back(evaluate(persistence_baseline, ds.test, "Persistence"));
    reports.back().dataset = label;
    reports.back().fingerprint = cfg.fingerprint();
  }
  reports.push_back(evaluate(ckpt.params, ds.test, ckpt.params.dims.inter_layer ? "CLF-ULP" : "No Inter-Layer"));
  reports.back().dataset = label;
  reports.back().fingerprint = cfg.fingerprint();
  write_reports(dir, "report", reports);
  if (!common.quiet) std::cout << reports_table(reports);
  return 0;
}

struct SweepSetting {
  std::string label;
  std::vector<std::pair<std::string, std::string>> keys;
};

int cmd_sweep(const Common& common, const std::vector<double>& intervals, const std::vector<std::string>& speeds,
              const std::vector<std::uint64_t>& seeds_in, double snapshots) {
  const RunConfig base = resolve(common);
  if (intervals.empty() == speeds.empty()) throw UsageError("sweep needs exactly one of --intervals or --speeds");
  std::vector<SweepSetting> settings;
  std::string kind;
  if (!intervals.empty()) {
    kind = "interval";
    for (double iv : intervals)
      settings.push_back({format_double(iv),
                          {{"sim.interval", format_double(iv)}, {"sim.duration", format_double(iv * snapshots)}}});
  } else {
    kind = "speed";
    for (const std::string& range : speeds) {
      const auto dash = range.find('-');
      if (dash == std::string::npos || dash == 0) throw UsageError("speed range must look like 25-35, got '" + range + "'");
      settings.push_back({range, {{"sim.speed_min", range.substr(0, dash)}, {"sim.speed_max", range.substr(dash + 1)}}});
    }
  }
  const std::vector<std::uint64_t> seeds = seeds_in.empty() ? std::vector<std::uint64_t>{base.seed} : seeds_in;
  const fs::path dir = prepare_output(base);
  std::string csv = "setting_kind,setting,seed,dataset,method,metric,value,status\n";
  int failures = 0;
  for (const SweepSetting& s : settings) {
    for (std::uint64_t seed : seeds) {
      RunConfig cfg = base;
      try {
        for (const auto& [k, v] : s.keys) cfg.set(k, v);
        cfg.seed = seed;
        cfg.finalize();
        if (!common.quiet) std::cerr << "sweep " << kind << "=" << s.label << " seed=" << seed << "\n";
        const Dataset ds = generate_dataset(cfg);
        const LegResult leg = run_leg(cfg, ds);
        std::vector<const EvalReport*> reports{&leg.model};
        if (leg.baseline) reports.push_back(&*leg.baseline);
        for (const EvalReport* r : reports)
          for (const auto& [metric, value] : {std::pair{"AUC", r->mean_auc}, std::pair{"AP", r->mean_ap}})
            csv += kind + "," + s.label + "," + std::to_string(seed) + "," + r->dataset + "," + r->method + "," +
                   metric + "," + format_double(value) + ",ok\n";
      } catch (const std::exception& e) {
        ++failures;
        std::cerr << "sweep leg " << kind << "=" << s.label << " seed=" << seed << " failed: " << e.what() << "\n";
        std::string msg = e.what();
        for (char& c : msg)
          if (c == ',' || c == '\n') c = ' ';
        csv += kind + "," + s.label + "," + std::to_string(seed) + ",,,,,failed: " + msg + "\n";
      }
    }
  }
  write_text(dir / "sweep.csv", csv);
  if (!common.quiet) std::cout << csv;
  return failures == 0 ? 0 : kRuntimeFailure;
}

int cmd_ablate(const Common& common, const std::string& data_path, const std::vector<std::uint64_t>& seeds_in) {
  const RunConfig base = resolve(common);
  const std::vector<std::uint64_t> seeds = seeds_in.empty() ? std::vector<std::uint64_t>{base.seed} : seeds_in;
  const fs::path dir = prepare_output(base);
  std::vector<EvalReport> all;
  double full_auc = 0, full_ap = 0, var_auc = 0, var_ap = 0;
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    cfg.finalize();
    const Dataset ds = prepare_dataset(load_or_generate(cfg, data_path), cfg.train.window, cfg.train_count);
    if (ds.sequence->num_layers() < 2)
      std::cerr << "warning: the dataset has a single layer, so the ablation is vacuous (both variants coincide)\n";
    if (!common.quiet) std::cerr << "ablation seed " << seed << "\n";
    AblationResult r = run_ablation(ds.train, ds.test, model_dims(cfg, *ds.sequence), cfg.train);
    for (EvalReport* rep : {&r.variant, &r.full}) {
      rep->dataset = dataset_label(*ds.sequence) + " seed " + std::to_string(seed);
      rep->fingerprint = cfg.fingerprint();
    }
    full_auc += r.full.mean_auc;
    full_ap += r.full.mean_ap;
    var_auc += r.variant.mean_auc;
    var_ap += r.variant.mean_ap;
    all.push_back(r.variant);
    all.push_back(r.full);
  }
  write_reports(dir, "ablation_runs", all);
  const double k = static_cast<double>(seeds.size());
  std::string table = "method,AUC,AP\n";
  table += "No Inter-Layer," + format_double(var_auc / k) + "," + format_double(var_ap / k) + "\n";
  table += "CLF-ULP," + format_double(full_auc / k) + "," + format_double(full_ap / k) + "\n";
  write_text(dir / "ablation.csv", table);
  if (!common.quiet) std::cout << reports_table(all) << "\nmean over " << seeds.size() << " seed(s)\n" << table;
  return 0;
}

int cmd_dump_embeddings(const Common& common, const std::string& data_path, const std::string& checkpoint,
                        std::size_t snapshot) {
  const RunConfig cfg = resolve(common);
  const auto seq = load_or_generate(cfg, data_path);
  const Checkpoint ckpt = load_checkpoint(checkpoint, model_dims(cfg, *seq));
  const std::size_t inputs = cfg.train.window - 1;
  if (snapshot + 1 < inputs || snapshot >= seq->num_steps())
    throw std::out_of_range("snapshot " + std::to_string(snapshot) + " out of range: needs " +
                            std::to_string(inputs) + " input steps ending there, valid range [" +
                            std::to_string(inputs - 1) + ", " + std::to_string(seq->num_steps() - 1) + "]");
  ModelInput input;
  input.features = &seq->features();
  for (std::size_t t = snapshot + 1 - inputs; t <= snapshot; ++t) input.steps.push_back(&seq->snapshot(t));
  const ForwardResult result = forward(ckpt.params, input);
  const fs::path dir = prepare_output(cfg);
  const fs::path out = dir / ("embeddings_t" + std::to_string(snapshot) + ".csv");
  write_text(out, embeddings_csv(result, inputs - 1));
  if (!common.quiet) std::cout << "wrote " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees many large temporaries; keep them in the heap
  // instead of mapping and unmapping pages on every step.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"multiflock: multiplex UAV link prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "multiflock 1.0");

  Common common;
  std::string data_path, checkpoint, resume;
  std::vector<std::string> traces, speeds;
  std::vector<double> intervals;
  std::vector<std::uint64_t> seeds;
  double snapshots = 80;
  std::size_t snapshot = 0;

  CLI::App* gen = app.add_subcommand("generate", "Simulate mobility and write a multiplex dataset");
  add_common(gen, common);
  add_sim_flags(gen, common);
  gen->add_option("--trace", traces, "Waypoint trace file(s) instead of simulation: one per layer or one shared");

  CLI::App* st = app.add_subcommand("stats", "Print edge statistics of a dataset");
  add_common(st, common);
  add_sim_flags(st, common);
  st->add_option("--data", data_path, "Dataset file (default: generate from config)");

  CLI::App* tr = app.add_subcommand("train", "Train on the chronological training split");
  add_common(tr, common);
  add_sim_flags(tr, common);
  add_train_flags(tr, common);
  tr->add_option("--data", data_path, "Dataset file (default: generate from config)");
  tr->add_option("--resume", resume, "Continue from this checkpoint");
  key_option(tr, common, "--checkpoint-every", "train.checkpoint_every", "Also save a checkpoint every N epochs");

  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(ev, common);
  add_sim_flags(ev, common);
  add_train_flags(ev, common);
  ev->add_option("--data", data_path, "Dataset file (default: generate from config)");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_flag_callback("--baseline", [&common] { common.flags.emplace_back("eval.baseline", "true"); },
                        "Add the persistence baseline row");

  CLI::App* sw = app.add_subcommand("sweep", "Regenerate, train and evaluate per setting");
  add_common(sw, common);
  add_sim_flags(sw, common);
  add_train_flags(sw, common);
  sw->add_option("--intervals", intervals, "Sampling intervals, e.g. 2,4,6,8")->delimiter(',');
  sw->add_option("--speeds", speeds, "Speed ranges, e.g. 15-25,25-35,35-45")->delimiter(',');
  sw->add_option("--seeds", seeds, "Seeds to repeat each setting with")->delimiter(',');
  sw->add_option("--snapshots", snapshots, "Snapshots per dataset; duration = interval x snapshots");
  sw->add_flag_callback("--baseline", [&common] { common.flags.emplace_back("eval.baseline", "true"); },
                        "Add the persistence baseline rows");

  CLI::App* ab = app.add_subcommand("ablate", "Full model vs the No-Inter-Layer variant");
  add_common(ab, common);
  add_sim_flags(ab, common);
  add_train_flags(ab, common);
  ab->add_option("--data", data_path, "Dataset file (default: generate per seed)");
  ab->add_option("--seeds", seeds, "Seeds, e.g. 1,2,3")->delimiter(',');

  CLI::App* de = app.add_subcommand("dump-embeddings", "Write fused embeddings for one snapshot");
  add_common(de, common);
  add_sim_flags(de, common);
  add_train_flags(de, common);
  de->add_option("--data", data_path, "Dataset file (default: generate from config)");
  de->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  de->add_option("--snapshot", snapshot, "Last input snapshot of the window")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen) return cmd_generate(common, traces);
    if (*st) return cmd_stats(common, data_path);
    if (*tr) return cmd_train(common, data_path, resume);
    if (*ev) return cmd_eval(common, data_path, checkpoint);
    if (*sw) return cmd_sweep(common, intervals, speeds, seeds, snapshots);
    if (*ab) return cmd_ablate(common, data_path, seeds);
    if (*de) return cmd_dump_embeddings(common, data_path, checkpoint, snapshot);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUsageError;
}
