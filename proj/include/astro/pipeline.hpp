#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "astro/errors.hpp"
#include "astro/evaluation.hpp"
#include "astro/ingest.hpp"
#include "astro/log.hpp"
#include "astro/model.hpp"
#include "astro/score_set.hpp"
#include "astro/synth.hpp"
#include "astro/threshold.hpp"
#include "astro/topology.hpp"
#include "astro/version.hpp"

// Operator-facing orchestration: one function per CLI subcommand, all driven
// by a single JSON run configuration. Every command is idempotent given
// identical inputs and seeds and drops a manifest (config hash, seeds,
// version) next to its outputs, so any reported number traces back to a
// config.
namespace astro {

struct RunConfig {
  // paths
  std::string data_csv;
  std::string plant_spec;
  std::string checkpoint;  // empty = <out_dir>/checkpoint.astro
  std::string out_dir = ".";
  // csv schema
  std::string timestamp_column;  // empty = first column
  std::string label_column = "Normal/Attack";
  std::map<std::string, int> label_mapping = {{"Normal", 0}, {"Attack", 1}};
  std::string missing_policy = "reject";  // or "forward_fill"
  // windows
  size_t stride = 1;
  std::string window_label_rule = "final";  // or "any"
  // split
  SplitRatios ratios;
  uint64_t split_seed = 3;
  // model (n_nodes is derived from the plant spec at command time)
  AstroConfig model;
  // tuner
  TunerConfig tuner;
  uint64_t tuner_seed = 4;
  // synth generator (for `gen`)
  SynthConfig synth;
  // latency protocol
  size_t latency_trials = 1000;
  size_t latency_warmup = 50;

  MissingPolicy missing() const {
    if (missing_policy == "reject") return MissingPolicy::Reject;
    if (missing_policy == "forward_fill") return MissingPolicy::ForwardFill;
    throw ValidationError("config: missing_policy must be 'reject' or 'forward_fill'");
  }
  WindowLabelRule label_rule() const {
    return window_label_rule_from_string(window_label_rule);
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["data_csv"] = c.data_csv;
  j["plant_spec"] = c.plant_spec;
  j["checkpoint"] = c.checkpoint;
  j["out_dir"] = c.out_dir;
  j["csv"] = {{"timestamp_column", c.timestamp_column},
              {"label_column", c.label_column},
              {"label_mapping", c.label_mapping},
              {"missing_policy", c.missing_policy}};
  j["window"] = {{"length", c.model.window},
                 {"stride", c.stride},
                 {"label_rule", c.window_label_rule}};
  j["split"] = {{"ratios", {c.ratios.train, c.ratios.val, c.ratios.test}},
                {"seed", c.split_seed}};
  j["model"] = to_json(c.model);
  j["tuner"] = {{"tau0", c.tuner.tau0},
                {"episodes", c.tuner.episodes},
                {"steps_per_episode", c.tuner.steps_per_episode},
                {"step_size", c.tuner.step_size},
                {"gamma", c.tuner.gamma},
                {"qnet_lr", c.tuner.qnet_lr},
                {"qnet_hidden", c.tuner.qnet_hidden},
                {"replay_capacity", c.tuner.replay_capacity},
                {"replay_batch", c.tuner.replay_batch},
                {"epsilon_start", c.tuner.epsilon_start},
                {"epsilon_min", c.tuner.epsilon_min},
                {"epsilon_decay", c.tuner.epsilon_decay},
                {"seed", c.tuner_seed}};
  std::vector<std::string> types;
  for (auto a : c.synth.attack_types) types.push_back(to_string(a));
  j["synth"] = {{"n_subsystems", c.synth.n_subsystems},
                {"nodes_per_subsystem", c.synth.nodes_per_subsystem},
                {"series_length", c.synth.series_length},
                {"attack_fraction", c.synth.attack_fraction},
                {"attack_types", types},
                {"noise_std", c.synth.noise_std},
                {"coupling_strength", c.synth.coupling_strength},
                {"seed", c.synth.seed}};
  j["latency"] = {{"trials", c.latency_trials}, {"warmup", c.latency_warmup}};
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.data_csv = j.value("data_csv", c.data_csv);
    c.plant_spec = j.value("plant_spec", c.plant_spec);
    c.checkpoint = j.value("checkpoint", c.checkpoint);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("csv")) {
      const auto& v = j["csv"];
      c.timestamp_column = v.value("timestamp_column", c.timestamp_column);
      c.label_column = v.value("label_column", c.label_column);
      if (v.contains("label_mapping"))
        c.label_mapping = v["label_mapping"].get<std::map<std::string, int>>();
      c.missing_policy = v.value("missing_policy", c.missing_policy);
    }
    if (j.contains("window")) {
      const auto& v = j["window"];
      c.model.window = v.value("length", c.model.window);
      c.stride = v.value("stride", c.stride);
      c.window_label_rule = v.value("label_rule", c.window_label_rule);
    }
    if (j.contains("split")) {
      const auto& v = j["split"];
      if (v.contains("ratios")) {
        auto r = v["ratios"].get<std::vector<double>>();
        if (r.size() != 3) throw ValidationError("config: split.ratios must have 3 entries");
        c.ratios = {r[0], r[1], r[2]};
      }
      c.split_seed = v.value("seed", c.split_seed);
    }
    if (j.contains("model")) {
      const size_t window = c.model.window;
      c.model = astro_config_from_json(j["model"]);
      if (!j["model"].contains("window")) c.model.window = window;
    }
    if (j.contains("tuner")) {
      const auto& v = j["tuner"];
      c.tuner.tau0 = v.value("tau0", c.tuner.tau0);
      c.tuner.episodes = v.value("episodes", c.tuner.episodes);
      c.tuner.steps_per_episode = v.value("steps_per_episode", c.tuner.steps_per_episode);
      c.tuner.step_size = v.value("step_size", c.tuner.step_size);
      c.tuner.gamma = v.value("gamma", c.tuner.gamma);
      c.tuner.qnet_lr = v.value("qnet_lr", c.tuner.qnet_lr);
      c.tuner.qnet_hidden = v.value("qnet_hidden", c.tuner.qnet_hidden);
      c.tuner.replay_capacity = v.value("replay_capacity", c.tuner.replay_capacity);
      c.tuner.replay_batch = v.value("replay_batch", c.tuner.replay_batch);
      c.tuner.epsilon_start = v.value("epsilon_start", c.tuner.epsilon_start);
      c.tuner.epsilon_min = v.value("epsilon_min", c.tuner.epsilon_min);
      c.tuner.epsilon_decay = v.value("epsilon_decay", c.tuner.epsilon_decay);
      c.tuner_seed = v.value("seed", c.tuner_seed);
    }
    if (j.contains("synth")) {
      const auto& v = j["synth"];
      c.synth.n_subsystems = v.value("n_subsystems", c.synth.n_subsystems);
      c.synth.nodes_per_subsystem = v.value("nodes_per_subsystem", c.synth.nodes_per_subsystem);
      c.synth.series_length = v.value("series_length", c.synth.series_length);
      c.synth.attack_fraction = v.value("attack_fraction", c.synth.attack_fraction);
      if (v.contains("attack_types")) {
        c.synth.attack_types.clear();
        for (const auto& s : v["attack_types"])
          c.synth.attack_types.push_back(attack_type_from_string(s.get<std::string>()));
      }
      c.synth.noise_std = v.value("noise_std", c.synth.noise_std);
      c.synth.coupling_strength = v.value("coupling_strength", c.synth.coupling_strength);
      c.synth.seed = v.value("seed", c.synth.seed);
    }
    if (j.contains("latency")) {
      c.latency_trials = j["latency"].value("trials", c.latency_trials);
      c.latency_warmup = j["latency"].value("warmup", c.latency_warmup);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: malformed document: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config: parse error in '" + path + "': " + e.what());
  }
  return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Manifests

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string config_hash(const RunConfig& cfg) {
  std::ostringstream os;
  os << std::hex << fnv1a64(to_json(cfg).dump());
  return os.str();
}

inline void write_manifest(const RunConfig& cfg, const std::string& command,
                           const std::vector<std::string>& outputs) {
  nlohmann::json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["config_hash"] = config_hash(cfg);
  m["config"] = to_json(cfg);
  m["seeds"] = {{"model", cfg.model.seed},
                {"split", cfg.split_seed},
                {"tuner", cfg.tuner_seed},
                {"synth", cfg.synth.seed}};
  m["inputs"] = {{"data_csv", cfg.data_csv}, {"plant_spec", cfg.plant_spec}};
  m["outputs"] = outputs;
  const auto path = std::filesystem::path(cfg.out_dir) / ("manifest_" + command + ".json");
  std::ofstream out(path);
  if (!out) throw ValidationError("manifest: cannot write '" + path.string() + "'");
  out << m.dump(2) << '\n';
}

inline void require_file(const std::string& path, const char* what) {
  if (path.empty())
    throw ValidationError(std::string("config: no ") + what + " path configured");
  if (!std::filesystem::exists(path))
    throw ValidationError(std::string(what) + " not found: '" + path + "'");
}

inline std::string resolve_checkpoint(const RunConfig& cfg) {
  return cfg.checkpoint.empty()
             ? (std::filesystem::path(cfg.out_dir) / "checkpoint.astro").string()
             : cfg.checkpoint;
}

// Reads the standardizer persisted next to the model weights.
inline Standardizer scaler_from_checkpoint(const Checkpoint& chk) {
  const Tensor* mean = chk.find("scaler.mean");
  const Tensor* std = chk.find("scaler.std");
  if (!mean || !std) throw ValidationError("checkpoint: standardizer tensors missing");
  Standardizer s;
  s.means = mean->data;
  s.stds = std->data;
  return s;
}

// ---------------------------------------------------------------------------
// Dataset assembly shared by train/tune/eval/latency

// Window labels derivable without standardizing; used to decide the split
// before the standardizer exists.
inline std::vector<int> window_labels(const SeriesTable& t, size_t window_len, size_t stride,
                                      WindowLabelRule rule) {
  if (t.rows() < window_len)
    throw ValidationError("window_labels: table shorter than the window length");
  std::vector<int> labels;
  for (size_t start = 0; start + window_len <= t.rows(); start += stride) {
    int label = 0;
    if (rule == WindowLabelRule::FinalStep) {
      label = t.labels[start + window_len - 1];
    } else {
      for (size_t k = 0; k < window_len; ++k) label |= t.labels[start + k];
    }
    labels.push_back(label);
  }
  return labels;
}

// Reorders CSV columns into plant node order so column index == node index.
inline SeriesTable align_to_plant(const SeriesTable& t, const PlantSpec& plant) {
  const auto wanted = plant.node_names();
  std::vector<size_t> src(wanted.size());
  for (size_t i = 0; i < wanted.size(); ++i) {
    bool found = false;
    for (size_t c = 0; c < t.column_names.size(); ++c)
      if (t.column_names[c] == wanted[i]) {
        src[i] = c;
        found = true;
        break;
      }
    if (!found)
      throw ValidationError("dataset: plant node '" + wanted[i] +
                            "' has no matching CSV column");
  }
  SeriesTable out;
  out.timestamps = t.timestamps;
  out.labels = t.labels;
  out.filled_cells = t.filled_cells;
  out.column_names = wanted;
  out.values.assign(t.rows() * wanted.size(), 0.0);
  for (size_t r = 0; r < t.rows(); ++r)
    for (size_t c = 0; c < wanted.size(); ++c)
      out.values[r * wanted.size() + c] = t.value(r, src[c]);
  return out;
}

struct Dataset {
  PlantSpec plant;
  TopologyGraph graph;
  SeriesTable table;       // columns aligned to plant node order
  SplitIndices split;
  Standardizer scaler;
  std::optional<WindowStream> windows;
};

// Loads everything up to the split. The standardizer is either fitted on the
// rows covered by training windows (training) or supplied from a checkpoint
// (tune/eval), never from validation or test rows.
inline Dataset load_dataset(const RunConfig& cfg, const Standardizer* preset_scaler) {
  require_file(cfg.data_csv, "data CSV");
  require_file(cfg.plant_spec, "plant spec");
  Dataset d;
  d.plant = load_plant_spec(cfg.plant_spec);
  d.graph = build_topology(d.plant);

  CsvOptions opt;
  opt.label_column = cfg.label_column;
  opt.label_mapping = cfg.label_mapping;
  opt.timestamp_column = cfg.timestamp_column;
  opt.missing = cfg.missing();
  d.table = align_to_plant(load_csv(cfg.data_csv, opt), d.plant);

  const auto labels = window_labels(d.table, cfg.model.window, cfg.stride, cfg.label_rule());
  d.split = balanced_split(labels, cfg.ratios, cfg.split_seed);

  if (preset_scaler) {
    d.scaler = *preset_scaler;
  } else {
    std::vector<char> mark(d.table.rows(), 0);
    for (size_t w : d.split.train)
      for (size_t k = 0; k < cfg.model.window; ++k) mark[w * cfg.stride + k] = 1;
    std::vector<size_t> rows;
    for (size_t r = 0; r < d.table.rows(); ++r)
      if (mark[r]) rows.push_back(r);
    d.scaler = fit_standardizer(d.table, rows);
  }
  d.windows.emplace(make_windows(d.table, d.scaler, cfg.model.window, cfg.stride,
                                 cfg.label_rule()));
  return d;
}

inline AstroConfig resolve_model_config(const RunConfig& cfg, const Dataset& d) {
  AstroConfig mc = cfg.model;
  mc.n_nodes = d.graph.n_nodes;
  mc.validate();
  return mc;
}

// ---------------------------------------------------------------------------
// Commands

struct GenOutputs {
  std::string csv_path, plant_path;
};

inline GenOutputs run_gen(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  SynthResult synth = generate(cfg.synth);
  GenOutputs out;
  out.csv_path = (std::filesystem::path(cfg.out_dir) / "synth.csv").string();
  out.plant_path = (std::filesystem::path(cfg.out_dir) / "plant.json").string();
  save_series_csv(synth.table, out.csv_path, "Normal/Attack");
  save_plant_spec(synth.plant, out.plant_path);
  write_manifest(cfg, "gen", {out.csv_path, out.plant_path});
  log_info("gen: wrote " + out.csv_path + " (" + std::to_string(synth.table.rows()) +
           " rows) and " + out.plant_path);
  return out;
}

struct TrainOutputs {
  std::string checkpoint_path;
  TrainResult result;
  AstroConfig model_config;
};

inline TrainOutputs run_train(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  Dataset d = load_dataset(cfg, nullptr);
  const AstroConfig mc = resolve_model_config(cfg, d);

  AstroModel model(mc, d.graph);
  model.init_params(mc.seed);
  TrainOutputs out;
  out.model_config = mc;
  out.result = train(model, *d.windows, d.split.train, d.split.val);

  // persist the best-validation snapshot plus the fitted standardizer
  restore_params(model.params(), out.result.best_values);
  Tensor mean({d.scaler.means.size()}), std({d.scaler.stds.size()});
  mean.data = d.scaler.means;
  std.data = d.scaler.stds;
  out.checkpoint_path = resolve_checkpoint(cfg);
  save_checkpoint(out.checkpoint_path, mc, model.params(),
                  {{"scaler.mean", mean}, {"scaler.std", std}});

  const auto log_path = std::filesystem::path(cfg.out_dir) / "training_log.csv";
  {
    std::ofstream log(log_path);
    if (!log) throw ValidationError("train: cannot write '" + log_path.string() + "'");
    log << "epoch,train_loss,val_f1\n" << std::setprecision(17);
    for (const auto& e : out.result.log)
      log << e.epoch << ',' << e.train_loss << ',' << e.val_f1 << '\n';
  }
  write_manifest(cfg, "train", {out.checkpoint_path, log_path.string()});
  log_info("train: best val F1 " + std::to_string(out.result.best_val_f1) + " at epoch " +
           std::to_string(out.result.best_epoch));
  return out;
}

struct TuneOutputs {
  TuneResult tune;
  GridResult oracle;
};

namespace detail {

inline TuneOutputs tune_and_write(const RunConfig& cfg, const ScoreSet& scores) {
  TuneOutputs out;
  out.tune = tune(scores, cfg.tuner, cfg.tuner_seed);
  out.oracle = grid_oracle(scores);

  nlohmann::json j;
  j["tau_star"] = out.tune.tau_star;
  j["best_f1"] = out.tune.best_f1;
  j["oracle_tau"] = out.oracle.tau_best;
  j["oracle_f1"] = out.oracle.f1_best;
  j["f1_gap"] = out.oracle.f1_best - out.tune.best_f1;
  j["seeds"] = {{"tuner", cfg.tuner_seed}};
  const auto tune_path = std::filesystem::path(cfg.out_dir) / "tune.json";
  std::ofstream tj(tune_path);
  if (!tj) throw ValidationError("tune: cannot write '" + tune_path.string() + "'");
  tj << j.dump(2) << '\n';

  const auto trace_path = std::filesystem::path(cfg.out_dir) / "tune_trace.csv";
  std::ofstream tr(trace_path);
  if (!tr) throw ValidationError("tune: cannot write '" + trace_path.string() + "'");
  tr << "step,episode,tau,action,reward\n" << std::setprecision(17);
  for (size_t i = 0; i < out.tune.trace.size(); ++i) {
    const auto& s = out.tune.trace[i];
    tr << i << ',' << s.episode << ',' << s.tau << ',' << s.action << ',' << s.reward << '\n';
  }
  write_manifest(cfg, "tune", {tune_path.string(), trace_path.string()});
  log_info("tune: tau* = " + std::to_string(out.tune.tau_star) + " (F1 " +
           std::to_string(out.tune.best_f1) + "), oracle tau = " +
           std::to_string(out.oracle.tau_best) + " (F1 " +
           std::to_string(out.oracle.f1_best) + ")");
  return out;
}

}  // namespace detail

// Tune on the validation split scored by the checkpointed model.
inline TuneOutputs run_tune(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const std::string chk_path = resolve_checkpoint(cfg);
  require_file(chk_path, "checkpoint");
  Checkpoint chk = load_checkpoint(chk_path);
  Standardizer scaler = scaler_from_checkpoint(chk);
  Dataset d = load_dataset(cfg, &scaler);
  AstroConfig expected = resolve_model_config(cfg, d);
  AstroModel model = model_from_checkpoint(chk, d.graph, &expected);
  ScoreSet val_scores = model.score_windows(*d.windows, d.split.val);
  save_score_set(val_scores,
                 (std::filesystem::path(cfg.out_dir) / "val_scores.csv").string());
  return detail::tune_and_write(cfg, val_scores);
}

// Standalone tuner over an external (score, label) file.
inline TuneOutputs run_tune_scores(const RunConfig& cfg, const std::string& scores_path) {
  std::filesystem::create_directories(cfg.out_dir);
  require_file(scores_path, "score set");
  return detail::tune_and_write(cfg, load_score_set(scores_path));
}

struct EvalOutputs {
  EvalResult eval;
  double tau = 0.5;
  std::string metrics_path;
};

namespace detail {

inline EvalOutputs eval_and_write(const RunConfig& cfg, EvalResult eval, double tau) {
  EvalOutputs out;
  out.eval = std::move(eval);
  out.tau = tau;

  nlohmann::json j;
  j["metrics"] = to_json(out.eval.report);
  j["confusion"] = to_json(out.eval.counts);
  j["tau"] = tau;
  j["seeds"] = {{"model", cfg.model.seed}, {"split", cfg.split_seed}};
  const auto metrics_path = std::filesystem::path(cfg.out_dir) / "metrics.json";
  std::ofstream mj(metrics_path);
  if (!mj) throw ValidationError("eval: cannot write '" + metrics_path.string() + "'");
  mj << j.dump(2) << '\n';
  out.metrics_path = metrics_path.string();

  const auto csv_path = std::filesystem::path(cfg.out_dir) / "metrics.csv";
  std::ofstream mc(csv_path);
  if (!mc) throw ValidationError("eval: cannot write '" + csv_path.string() + "'");
  mc << metrics_csv(out.eval.report);

  const auto pred_path = std::filesystem::path(cfg.out_dir) / "predictions.csv";
  save_predictions(pred_path.string(), out.eval.scores, out.eval.predictions);

  write_manifest(cfg, "eval",
                 {metrics_path.string(), csv_path.string(), pred_path.string()});
  return out;
}

}  // namespace detail

// Threshold source for eval: explicit tau wins, otherwise tune.json in
// out_dir, otherwise 0.5.
inline double resolve_tau(const RunConfig& cfg, std::optional<double> tau_flag) {
  if (tau_flag) return *tau_flag;
  const auto tune_path = std::filesystem::path(cfg.out_dir) / "tune.json";
  if (std::filesystem::exists(tune_path)) {
    std::ifstream in(tune_path);
    nlohmann::json j;
    in >> j;
    return j.at("tau_star").get<double>();
  }
  return 0.5;
}

inline EvalOutputs run_eval(const RunConfig& cfg, std::optional<double> tau_flag = {}) {
  std::filesystem::create_directories(cfg.out_dir);
  const std::string chk_path = resolve_checkpoint(cfg);
  require_file(chk_path, "checkpoint");
  Checkpoint chk = load_checkpoint(chk_path);
  Standardizer scaler = scaler_from_checkpoint(chk);
  Dataset d = load_dataset(cfg, &scaler);
  AstroConfig expected = resolve_model_config(cfg, d);
  AstroModel model = model_from_checkpoint(chk, d.graph, &expected);
  const double tau = resolve_tau(cfg, tau_flag);
  EvalResult r = evaluate(model, *d.windows, d.split.test, tau);
  return detail::eval_and_write(cfg, std::move(r), tau);
}

// Pre-scored mode: metrics for an external ScoreSet at a fixed threshold.
inline EvalOutputs run_eval_scores(const RunConfig& cfg, const std::string& scores_path,
                                   double tau) {
  std::filesystem::create_directories(cfg.out_dir);
  require_file(scores_path, "score set");
  EvalResult r = evaluate_scores(load_score_set(scores_path), tau);
  return detail::eval_and_write(cfg, std::move(r), tau);
}

inline LatencyReport run_latency(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const std::string chk_path = resolve_checkpoint(cfg);
  require_file(chk_path, "checkpoint");
  Checkpoint chk = load_checkpoint(chk_path);
  Standardizer scaler = scaler_from_checkpoint(chk);
  Dataset d = load_dataset(cfg, &scaler);
  AstroConfig expected = resolve_model_config(cfg, d);
  AstroModel model = model_from_checkpoint(chk, d.graph, &expected);
  LatencyReport r = measure_latency(model, *d.windows, cfg.latency_trials, cfg.latency_warmup);

  nlohmann::json j{{"p50_ms", r.p50_ms}, {"p95_ms", r.p95_ms},   {"mean_ms", r.mean_ms},
                   {"trials", r.trials}, {"warmup", r.warmup}};
  const auto path = std::filesystem::path(cfg.out_dir) / "latency.json";
  std::ofstream out(path);
  if (!out) throw ValidationError("latency: cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  write_manifest(cfg, "latency", {path.string()});
  log_info("latency: p50 " + std::to_string(r.p50_ms) + " ms, p95 " +
           std::to_string(r.p95_ms) + " ms over " + std::to_string(r.trials) + " passes");
  return r;
}

// ---------------------------------------------------------------------------
// Aggregation across runs

struct ReportOutputs {
  std::string table;  // human-readable aggregate
  std::string report_csv_path, histogram_csv_path;
};

inline ReportOutputs run_report(const std::vector<std::string>& run_dirs,
                                const std::string& out_dir) {
  if (run_dirs.empty()) throw ValidationError("report: no run directories given");
  std::filesystem::create_directories(out_dir);

  const std::vector<std::string> keys = {"accuracy", "precision", "recall", "f1"};
  std::map<std::string, std::vector<double>> values;
  std::vector<double> all_scores;
  std::vector<int> all_preds;

  for (const auto& dir : run_dirs) {
    const auto mpath = std::filesystem::path(dir) / "metrics.json";
    require_file(mpath.string(), "metrics.json");
    std::ifstream in(mpath);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("report: bad metrics.json in '" + dir + "': " + e.what());
    }
    for (const auto& k : keys) values[k].push_back(j.at("metrics").at(k).get<double>());

    const auto ppath = std::filesystem::path(dir) / "predictions.csv";
    if (std::filesystem::exists(ppath)) {
      std::ifstream pin(ppath);
      std::string line;
      std::getline(pin, line);  // header
      while (std::getline(pin, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 3) continue;
        all_scores.push_back(std::stod(cells[1]));
        all_preds.push_back(std::stoi(cells[2]));
      }
    }
  }

  ReportOutputs out;
  std::ostringstream table;
  table << "metric,mean,std\n";
  std::ostringstream csv;
  csv << std::setprecision(17) << "metric,mean,std\n";
  for (const auto& k : keys) {
    const auto& v = values[k];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double std_dev = std::sqrt(var / static_cast<double>(v.size()));
    csv << k << ',' << mean << ',' << std_dev << '\n';
    table << k << ',' << mean << ',' << std_dev << '\n';
  }
  out.table = table.str();

  const auto rpath = std::filesystem::path(out_dir) / "report.csv";
  std::ofstream rout(rpath);
  if (!rout) throw ValidationError("report: cannot write '" + rpath.string() + "'");
  rout << csv.str();
  out.report_csv_path = rpath.string();

  // score histogram plot data, 50 bins over [0,1]
  const size_t n_bins = 50;
  std::vector<size_t> count(n_bins, 0), count_attack(n_bins, 0);
  for (size_t i = 0; i < all_scores.size(); ++i) {
    size_t bin = static_cast<size_t>(all_scores[i] * static_cast<double>(n_bins));
    if (bin >= n_bins) bin = n_bins - 1;
    ++count[bin];
    if (all_preds[i]) ++count_attack[bin];
  }
  const auto hpath = std::filesystem::path(out_dir) / "histogram.csv";
  std::ofstream hout(hpath);
  if (!hout) throw ValidationError("report: cannot write '" + hpath.string() + "'");
  hout << "bin_lo,bin_hi,count,count_pred_attack\n" << std::setprecision(17);
  for (size_t b = 0; b < n_bins; ++b) {
    hout << static_cast<double>(b) / n_bins << ',' << static_cast<double>(b + 1) / n_bins
         << ',' << count[b] << ',' << count_attack[b] << '\n';
  }
  out.histogram_csv_path = hpath.string();
  return out;
}

}  // namespace astro
