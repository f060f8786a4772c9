// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on stderr.
//
//   multiflock_acceptance [--only 1,2,...] [--work DIR]
//
// Criteria 5-7 train full-size models (about twelve runs) and dominate the runtime.
// Trained runs are cached by configuration, so the RW seed 1-3 runs are shared.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "multiflock/config.hpp"
#include "multiflock/eval.hpp"
#include "multiflock/model.hpp"
#include "multiflock/objective.hpp"
#include "multiflock/pipeline.hpp"
#include "support/oracles.hpp"

#ifndef MULTIFLOCK_CLI_PATH
#error "MULTIFLOCK_CLI_PATH must point at the multiflock executable"
#endif

namespace fs = std::filesystem;
using namespace multiflock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

void progress(const std::string& msg) {
  static const auto start = std::chrono::steady_clock::now();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cerr << "[" << fmt(s / 60.0, 1) << " min] " << msg << std::endl;
}

void randomize(const ModelParams& p, Rng& rng, double scale) {
  for (auto& nt : p.named_parameters()) {
    Tensor t = nt.tensor;
    t.mutable_value() = oracle::random_matrix(rng, t.rows(), t.cols(), scale);
  }
}

double max_abs(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

std::vector<Matrix> values(const std::vector<Tensor>& ts) {
  std::vector<Matrix> out;
  for (const Tensor& t : ts) out.push_back(t.value());
  return out;
}

// --- trained runs, cached by fingerprint -----------------------------------------

struct Run {
  double auc = 0.0;
  double ap = 0.0;
};

class RunCache {
public:
  Run get(const RunConfig& cfg, const std::string& label) {
    const std::string key = cfg.fingerprint();
    if (auto it = runs_.find(key); it != runs_.end()) return it->second;
    progress("training " + label + " (" + std::to_string(cfg.train.epochs) + " epochs)");
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset ds = generate_dataset(cfg);
    const LegResult leg = run_leg(cfg, ds);
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    const Run r{leg.model.mean_auc, leg.model.mean_ap};
    progress(label + ": AUC " + fmt(r.auc) + " AP " + fmt(r.ap) + " in " + fmt(minutes, 1) + " min");
    runs_.emplace(key, r);
    return r;
  }

private:
  std::map<std::string, Run> runs_;
};

RunConfig defaults(const std::string& model, std::uint64_t seed) {
  RunConfig cfg;
  cfg.set("sim.model", model);
  cfg.seed = seed;
  cfg.finalize();
  return cfg;
}

RunConfig variant(RunConfig cfg) {
  cfg.set("model.inter_layer", "false");
  cfg.set("loss.beta", "0");
  cfg.finalize();
  return cfg;
}

RunConfig with_interval(RunConfig cfg, double interval) {
  cfg.set("sim.interval", format_double(interval));
  cfg.set("sim.duration", format_double(interval * 80));
  cfg.finalize();
  return cfg;
}

// --- criteria ----------------------------------------------------------------------

// 1. Every parameter gradient of the total loss on the toy instance against central differences.
Outcome gradient_exactness() {
  const MultiplexSequence seq = oracle::random_sequence(101, 5, 2, 3, 4, 0.4);
  const WindowSample sample(seq, 0, 3);
  const ModelInput in = sample.model_input();
  double worst = 0.0;
  std::size_t checked = 0;
  bool pass = true;
  for (bool inter : {true, false}) {
    ModelDims dims{5, 2, 4, 6, 6, 6, inter};
    const ModelParams p = ModelParams::initialize(dims, 7);
    Rng rng(8);
    randomize(p, rng, 0.5);
    std::vector<Tensor> inputs;
    for (auto& nt : p.named_parameters()) inputs.push_back(nt.tensor);
    LossWeights w;
    w.alpha = 0.1;
    w.beta = inter ? 0.1 : 0.0;
    auto f = [&] { return compute_loss(forward(p, in), in, sample.target(), w).total; };
    const GradCheckReport r = grad_check(f, inputs, 1e-5, 1e-4);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    pass = pass && r.passed;
  }
  return {pass, std::to_string(checked) + " entries (full model and variant), max relative error " + sci(worst) +
                    " (limit 1e-4)"};
}

// 2. Blocks and losses against straight-line re-implementations on 100 random instances.
Outcome sub_block_oracles() {
  std::map<std::string, double> worst;
  for (const char* name : {"gat_layer", "claf_fuse", "lstm_step", "decode", "reconstruction", "intra", "inter"})
    worst[name] = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    Rng rng(1000 + k);
    const auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); };
    const std::size_t n = pick(2, 9), r = pick(1, 3), d_x = pick(1, 6), d_z = pick(1, 6), d_h = pick(1, 6),
                      d_dec = pick(1, 6), steps = pick(1, 4);
    const bool inter = k % 4 != 3;
    const ModelParams p = ModelParams::initialize({n, r, d_x, d_z, d_h, d_dec, inter}, k);
    randomize(p, rng, 1.0);
    const MultiplexSequence seq = oracle::random_sequence(2000 + k, n, r, steps + 1, d_x, rng.uniform(0.0, 1.0));

    const Matrix x = oracle::random_matrix(rng, n, d_x);
    const Adjacency& adj = seq.adjacency(0, 0);
    const GatStage& st = p.gat[0][0];
    worst["gat_layer"] = std::max(worst["gat_layer"],
                                  max_abs(gat_layer(Tensor(x), adj, st).embedding.value(),
                                          oracle::gat_layer(x, adj.matrix(), st.weight.value(), st.attention.value())));

    std::vector<Tensor> z;
    for (std::size_t l = 0; l < r; ++l) z.emplace_back(oracle::random_matrix(rng, n, d_z));
    const auto fused = claf_fuse(z, p);
    const auto expect = oracle::claf_fuse(values(z), inter ? values(p.claf) : std::vector<Matrix>{});
    for (std::size_t l = 0; l < r; ++l)
      worst["claf_fuse"] = std::max(worst["claf_fuse"], max_abs(fused[l].value(), expect[l]));

    const LstmParams& m = p.lstm[0];
    const Matrix zi = oracle::random_matrix(rng, n, d_z), h = oracle::random_matrix(rng, n, d_h),
                 c = oracle::random_matrix(rng, n, d_h);
    const LstmState s = lstm_step(Tensor(zi), {Tensor(h), Tensor(c)}, m);
    const auto [h2, c2] = oracle::lstm_step(zi, h, c,
                                            {m.w_forget.value(), m.w_input.value(), m.w_cell.value(),
                                             m.w_output.value(), m.b_forget.value(), m.b_input.value(),
                                             m.b_cell.value(), m.b_output.value()});
    worst["lstm_step"] =
        std::max({worst["lstm_step"], max_abs(s.hidden.value(), h2), max_abs(s.cell.value(), c2)});

    const DecoderParams& dec = p.decoder[0];
    worst["decode"] = std::max(worst["decode"], max_abs(decode(Tensor(h), dec).value(),
                                                        oracle::decode(h, dec.w1.value(), dec.b1.value(),
                                                                       dec.w2.value(), dec.b2.value())));

    std::vector<Tensor> scores;
    std::vector<Matrix> target;
    for (std::size_t l = 0; l < r; ++l) {
      Matrix sm(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sm(i, j) = rng.uniform(0.0, 1.0);
      scores.emplace_back(sm);
      target.push_back(seq.adjacency(steps, l).matrix());
    }
    const double eps = rng.uniform(1.0, 10.0);
    worst["reconstruction"] =
        std::max(worst["reconstruction"], std::abs(reconstruction_loss(scores, seq.snapshot(steps), eps).item() -
                                                    oracle::reconstruction_loss(values(scores), target, eps)));

    std::vector<std::vector<Tensor>> zs(steps);
    std::vector<std::vector<Matrix>> zm(steps), am(steps);
    std::vector<const MultiplexSnapshot*> inputs;
    for (std::size_t t = 0; t < steps; ++t) {
      inputs.push_back(&seq.snapshot(t));
      for (std::size_t l = 0; l < r; ++l) {
        zm[t].push_back(oracle::random_matrix(rng, n, d_z));
        zs[t].emplace_back(zm[t].back());
        am[t].push_back(seq.adjacency(t, l).matrix());
      }
    }
    worst["intra"] = std::max(worst["intra"], std::abs(intra_consistency_loss(zs, inputs).item() -
                                                       oracle::intra_loss(zm, am)));
    worst["inter"] =
        std::max(worst["inter"], std::abs(inter_consistency_loss(zs).item() - oracle::inter_loss(zm)));
  }
  bool pass = true;
  std::string detail = "max abs error:";
  for (const auto& [name, e] : worst) {
    pass = pass && e < 1e-10;
    detail += " " + name + " " + sci(e);
  }
  return {pass, detail + " (limit 1e-10)"};
}

// 3. auc and average_precision against brute force on random instances of up to 200 scores.
Outcome metric_oracles() {
  double worst_auc = 0.0, worst_ap = 0.0;
  int trials = 0;
  for (std::uint64_t k = 0; k < 2000; ++k) {
    Rng rng(5000 + k);
    const std::size_t n = 2 + rng.below(199);
    // Coarse levels on odd trials produce many ties.
    const int levels = k % 2 ? 1 + static_cast<int>(rng.below(6)) : 0;
    const double prevalence = rng.uniform(0.02, 0.98);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = levels ? static_cast<double>(rng.below(levels)) : rng.uniform(-3.0, 3.0);
      y[i] = rng.uniform(0.0, 1.0) < prevalence ? 1 : 0;
    }
    y[0] = 1;
    y[n - 1] = 0;
    worst_auc = std::max(worst_auc, std::abs(auc(s, y) - oracle::auc(s, y)));
    worst_ap = std::max(worst_ap, std::abs(average_precision(s, y) - oracle::average_precision(s, y)));
    ++trials;
  }
  return {worst_auc <= 1e-12 && worst_ap <= 1e-12, std::to_string(trials) + " instances, max |AUC diff| " +
                                                       sci(worst_auc) + ", max |AP diff| " + sci(worst_ap) +
                                                       " (limit 1e-12)"};
}

// 4. Default RW sequences: density band, snapshot and window counts.
Outcome dataset_statistics() {
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const RunConfig cfg = defaults("rw", seed);
    const Dataset ds = generate_dataset(cfg);
    const double d = stats(*ds.sequence).pooled.avg_density;
    const std::size_t windows = ds.train.size() + ds.test.size();
    pass = pass && d >= 0.05 && d <= 0.15 && ds.sequence->num_steps() == 80 && windows == 70 &&
           ds.train.size() == 50 && ds.test.size() == 20;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": density " + fmt(d) +
              ", " + std::to_string(ds.sequence->num_steps()) + " snapshots, " + std::to_string(windows) + "/" +
              std::to_string(ds.train.size()) + "/" + std::to_string(ds.test.size()) + " windows";
  }
  return {pass, detail + " (band [0.05, 0.15], 80, 70/50/20)"};
}

// 5. Headline numbers with default settings, seed 1, per mobility model.
Outcome end_to_end(RunCache& cache) {
  bool pass = true;
  std::string detail;
  for (const char* model : {"rw", "gm", "mg", "rpg"}) {
    const Run r = cache.get(defaults(model, 1), std::string(model) + " seed 1");
    const bool rpg = std::string(model) == "rpg";
    const bool ok = rpg ? r.auc >= 0.85 : r.auc >= 0.93 && r.ap >= 0.55;
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + std::string(model) + " AUC " + fmt(r.auc) + " AP " + fmt(r.ap) +
              (ok ? "" : " (below threshold)");
  }
  return {pass, detail + " (need AUC>=0.93 and AP>=0.55; RPG AUC>=0.85)"};
}

// 6. Full model vs the No-Inter-Layer variant on RW, seeds 1-3.
Outcome ablation_direction(RunCache& cache) {
  double full_auc = 0, full_ap = 0, var_auc = 0, var_ap = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const Run f = cache.get(defaults("rw", seed), "rw seed " + std::to_string(seed));
    const Run v = cache.get(variant(defaults("rw", seed)), "rw variant seed " + std::to_string(seed));
    full_auc += f.auc / 3;
    full_ap += f.ap / 3;
    var_auc += v.auc / 3;
    var_ap += v.ap / 3;
  }
  const bool pass = full_ap > var_ap && full_auc >= var_auc - 0.01;
  return {pass, "mean AP full " + fmt(full_ap) + " vs variant " + fmt(var_ap) + ", mean AUC full " + fmt(full_auc) +
                    " vs variant " + fmt(var_auc) + " (need AP higher, AUC within 0.01)"};
}

// 7. AUC at a 2 s sampling interval vs 8 s on RW, seeds 1-3.
Outcome sweep_trend(RunCache& cache) {
  int holds = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const Run a = cache.get(defaults("rw", seed), "rw seed " + std::to_string(seed));
    const Run b = cache.get(with_interval(defaults("rw", seed), 8), "rw interval 8 seed " + std::to_string(seed));
    holds += a.auc >= b.auc;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": " + fmt(a.auc) +
              " at 2 s, " + fmt(b.auc) + " at 8 s";
  }
  return {holds >= 2, detail + " (" + std::to_string(holds) + "/3 non-increasing, need a majority)"};
}

// 8. Every command run twice with identical configuration yields identical artifacts.
class CliRunner {
public:
  explicit CliRunner(fs::path work) : work_(std::move(work)) {}

  int run(const std::string& args) const {
    const std::string cmd = std::string(MULTIFLOCK_CLI_PATH) + " " + args + " > " + (work_ / "stdout").string() +
                            " 2> " + (work_ / "stderr").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  const fs::path& work() const { return work_; }

private:
  fs::path work_;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The training log's last column is wall time; everything before it must match.
std::string strip_seconds(const std::string& csv) {
  std::string out;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Outcome determinism(const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  const CliRunner cli(work);
  const std::string small = " -q --nodes 16 --area 4000 --radii 700,1400 --embed 6 --hidden 6 --decoder 6"
                            " --window 4 --train-count 8 --epochs 2";
  struct Step {
    std::string name;
    std::string args;  // {out} is replaced by the run directory
  };
  const std::vector<Step> steps{
      {"generate", "generate -q -o {out}"},
      {"train", "train" + small + " -o {out}"},
      {"eval", "eval" + small + " --baseline --checkpoint {out}/checkpoint.mfck -o {out}"},
      {"dump-embeddings", "dump-embeddings" + small + " --checkpoint {out}/checkpoint.mfck --snapshot 6 -o {out}"},
      {"ablate", "ablate" + small + " --seeds 1,2 -o {out}/ablate"},
      {"sweep", "sweep" + small + " --intervals 2,4 --snapshots 24 -o {out}/sweep"},
      {"train default", "train -q --epochs 1 -o {out}/full"},
      {"eval default", "eval -q --baseline --checkpoint {out}/full/checkpoint.mfck -o {out}/full"},
  };
  for (const char* rep : {"a", "b"}) {
    for (const Step& s : steps) {
      std::string args = s.args;
      for (std::size_t at; (at = args.find("{out}")) != std::string::npos;)
        args.replace(at, 5, (work / rep).string());
      progress("determinism run " + std::string(rep) + ": " + s.name);
      if (const int code = cli.run(args); code != 0)
        return {false, s.name + " exited with " + std::to_string(code) + ": " + read_file(work / "stderr")};
    }
  }
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(work / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), work / "a");
    const fs::path other = work / "b" / rel;
    if (!fs::exists(other)) return {false, rel.string() + " missing from the second run"};
    std::string x = read_file(entry.path()), y = read_file(other);
    if (rel.filename() == "train_log.csv") {
      x = strip_seconds(x);
      y = strip_seconds(y);
    }
    if (rel.filename() == "config.txt") {
      x = x.substr(0, x.find("\nout = "));
      y = y.substr(0, y.find("\nout = "));
    }
    if (x != y) return {false, rel.string() + " differs between runs"};
    ++compared;
  }
  fs::remove_all(work);
  return {compared > 0, std::to_string(compared) +
                            " files byte-identical across two runs of generate, train, eval, dump-embeddings,"
                            " ablate, sweep and a full-size train/eval (training-log wall time excluded)"};
}

// 9. Corrupting the target snapshot leaves the forward scores untouched.
Outcome leakage_guard() {
  const RunConfig cfg = defaults("rw", 1);
  const MultiplexSequence seq = generate_sequence(cfg.sim, cfg.data);
  const ModelParams params = ModelParams::initialize(model_dims(cfg, seq), 1);

  std::vector<MultiplexSnapshot> snaps;
  for (std::size_t t = 0; t < seq.num_steps(); ++t) snaps.push_back(seq.snapshot(t));
  const std::vector<std::size_t> targets{10, 45, 79};
  Rng rng(99);
  for (std::size_t t : targets)
    for (auto& layer : snaps[t]) layer = Adjacency::from_matrix(oracle::random_adjacency(rng, seq.num_nodes(), 0.5));
  const MultiplexSequence corrupted(snaps, seq.features(), seq.layer_radii(), seq.metadata());

  double worst = 0.0;
  std::vector<WindowSample> clean_windows, dirty_windows;
  for (std::size_t t : targets) {
    clean_windows.emplace_back(seq, t - 10, 11);
    dirty_windows.emplace_back(corrupted, t - 10, 11);
    const ForwardResult a = forward(params, clean_windows.back().model_input());
    const ForwardResult b = forward(params, dirty_windows.back().model_input());
    for (std::size_t l = 0; l < a.scores.size(); ++l)
      worst = std::max(worst, max_abs(a.scores[l].value(), b.scores[l].value()));
  }
  // The corruption must matter to the metrics, or the check above proves nothing.
  const double clean_ap = evaluate(params, clean_windows).mean_ap;
  const double dirty_ap = evaluate(params, dirty_windows).mean_ap;
  const bool pass = worst == 0.0 && clean_ap != dirty_ap;
  return {pass, "max score change " + sci(worst) + " over " + std::to_string(targets.size()) +
                    " windows with randomized targets (AP " + fmt(clean_ap) + " clean vs " + fmt(dirty_ap) +
                    " corrupted)"};
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees many large temporaries; keep them in the heap
  // instead of mapping and unmapping pages on every step.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  std::set<int> only;
  fs::path work = fs::temp_directory_path() / "multiflock_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string item; std::getline(ss, item, ',');) only.insert(std::stoi(item));
    } else if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: " << argv[0] << " [--only 1,2,...] [--work DIR]\n";
      return 2;
    }
  }

  RunCache cache;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient exactness", gradient_exactness},
      {"sub-block oracle equivalence", sub_block_oracles},
      {"metric oracles", metric_oracles},
      {"dataset statistics", dataset_statistics},
      {"end-to-end headline", [&] { return end_to_end(cache); }},
      {"ablation direction", [&] { return ablation_direction(cache); }},
      {"sweep trend", [&] { return sweep_trend(cache); }},
      {"determinism", [&] { return determinism(work / "determinism"); }},
      {"leakage guard", leakage_guard},
  };

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    progress("criterion " + std::to_string(id) + ": " + criteria[k].first);
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[k].first << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
