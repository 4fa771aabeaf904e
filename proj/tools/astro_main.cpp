// astro command-line pipeline: generate data, train, tune the decision
// threshold, evaluate, aggregate runs. Exit codes: 0 success, 2 validation
// error (bad input or config), 3 runtime failure.

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "astro/pipeline.hpp"
#include "astro/version.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_dir;
};

astro::RunConfig load_config(const CommonOpts& opts) {
  astro::RunConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = astro::load_run_config(opts.config_path);
  }
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "run configuration JSON");
  if (config_required) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "override the command's primary seed");
  cmd->add_option("--out", opts.out_dir, "override the output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"astro: anomaly detection pipeline for cyber-physical sensor networks"};
  app.set_version_flag("--version", astro::kVersion);
  app.require_subcommand(1);

  CommonOpts gen_o, train_o, tune_o, eval_o, latency_o;
  std::string tune_scores, eval_scores;
  std::optional<double> eval_tau;
  std::vector<std::string> report_dirs;
  std::string report_out = ".";

  auto* gen = app.add_subcommand("gen", "generate a synthetic labeled dataset + plant spec");
  add_common(gen, gen_o);

  auto* train = app.add_subcommand("train", "train the detector, write a checkpoint");
  add_common(train, train_o);

  auto* tune = app.add_subcommand("tune", "optimize the decision threshold on the validation split");
  add_common(tune, tune_o);
  tune->add_option("--scores", tune_scores,
                   "tune on an external score,label CSV instead of the model");

  auto* eval = app.add_subcommand("eval", "evaluate on the held-out test split");
  add_common(eval, eval_o);
  eval->add_option("--scores", eval_scores,
                   "evaluate an external score,label CSV instead of the model");
  eval->add_option("--tau", eval_tau, "decision threshold (default: tune.json, else 0.5)");

  auto* report = app.add_subcommand("report", "aggregate metrics across run directories");
  report->add_option("dirs", report_dirs, "run directories with metrics.json")->required();
  report->add_option("--out", report_out, "output directory for report.csv / histogram.csv");

  auto* latency = app.add_subcommand("latency", "single-window inference latency protocol");
  add_common(latency, latency_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      astro::RunConfig cfg = load_config(gen_o);
      if (gen_o.seed) cfg.synth.seed = *gen_o.seed;
      astro::run_gen(cfg);
    } else if (train->parsed()) {
      astro::RunConfig cfg = load_config(train_o);
      if (train_o.seed) cfg.model.seed = *train_o.seed;
      auto out = astro::run_train(cfg);
      std::cout << "checkpoint: " << out.checkpoint_path << "\n"
                << "best_val_f1: " << out.result.best_val_f1 << " (epoch "
                << out.result.best_epoch << ")\n";
    } else if (tune->parsed()) {
      astro::RunConfig cfg = load_config(tune_o);
      if (tune_o.seed) cfg.tuner_seed = *tune_o.seed;
      auto out = tune_scores.empty() ? astro::run_tune(cfg)
                                     : astro::run_tune_scores(cfg, tune_scores);
      std::cout << "tau_star: " << out.tune.tau_star << "\n"
                << "best_f1: " << out.tune.best_f1 << "\n"
                << "oracle_tau: " << out.oracle.tau_best << "\n"
                << "oracle_f1: " << out.oracle.f1_best << "\n";
    } else if (eval->parsed()) {
      astro::RunConfig cfg = load_config(eval_o);
      auto out = eval_scores.empty()
                     ? astro::run_eval(cfg, eval_tau)
                     : astro::run_eval_scores(cfg, eval_scores, eval_tau.value_or(0.5));
      const auto& r = out.eval.report;
      std::cout << "tau: " << out.tau << "\n"
                << "accuracy: " << r.accuracy << "\n"
                << "precision: " << r.precision << "\n"
                << "recall: " << r.recall << "\n"
                << "f1: " << r.f1 << "\n";
    } else if (report->parsed()) {
      auto out = astro::run_report(report_dirs, report_out);
      std::cout << out.table;
    } else if (latency->parsed()) {
      astro::RunConfig cfg = load_config(latency_o);
      auto r = astro::run_latency(cfg);
      std::cout << "latency_p50_ms: " << r.p50_ms << "\n"
                << "latency_p95_ms: " << r.p95_ms << "\n";
    }
  } catch (const astro::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
