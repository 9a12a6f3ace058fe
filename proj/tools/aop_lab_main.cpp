// aop-lab: train/evaluate small classifiers, run the pruning + averaging
// pipeline, score OOD detection and emit the theory/landscape tables.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "aoplab/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* c = cmd->add_option("--config", args.config_path, "experiment config (JSON)");
  if (config_required) c->required();
  cmd->add_option("--out", args.out_dir, "output directory override");
  cmd->add_option("--seed", [&args](const CLI::results_t& res) {
    args.seed = std::stoull(res[0]);
    return true;
  }, "seed override");
}

aoplab::RunOptions options_from(const CommonArgs& args) {
  aoplab::RunOptions opts;
  if (!args.out_dir.empty()) opts.output_dir_override = args.out_dir;
  opts.seed_override = args.seed;
  return opts;
}

std::string resolve_out(const CommonArgs& args,
                        const aoplab::ExperimentConfig& cfg) {
  return args.out_dir.empty() ? cfg.output_dir : args.out_dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"average-of-pruning laboratory"};
  app.require_subcommand(1);

  CommonArgs train_args, imp_args, eval_args, theory_args, land_args,
      width_args, report_args;

  auto* train = app.add_subcommand("train", "dense training run (no pruning)");
  add_common(train, train_args);
  bool train_resume = false;
  train->add_flag("--resume", train_resume, "resume from persisted artifacts");

  auto* imp = app.add_subcommand("imp", "iterative magnitude pruning pipeline");
  add_common(imp, imp_args);
  bool imp_resume = false;
  imp->add_flag("--resume", imp_resume, "resume from persisted artifacts");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on test/OOD data");
  add_common(eval, eval_args);
  std::string eval_ckpt, eval_scorer = "msp";
  bool eval_ema = false;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--scorer", eval_scorer,
                   "msp|maxlogit|energy|odin|maha|knn|react");
  eval->add_flag("--use-ema", eval_ema, "score the averaged weights");

  auto* theory = app.add_subcommand("theory", "closed-form risk tables");
  add_common(theory, theory_args, /*config_required=*/false);
  bool theory_plots = false;
  theory->add_flag("--plots", theory_plots, "also write SVG plots");

  auto* landscape = app.add_subcommand("landscape", "weight-perturbation scan");
  add_common(landscape, land_args);
  std::string land_ckpt;
  bool land_ema = false;
  landscape->add_option("--ckpt", land_ckpt, "checkpoint path")->required();
  landscape->add_flag("--use-ema", land_ema, "scan the averaged weights");

  auto* width = app.add_subcommand("width-sweep", "one run per hidden width");
  add_common(width, width_args);

  auto* report = app.add_subcommand("report", "metrics.csv from score CSVs");
  report->add_option("--scores", report_args.config_path, "directory of scores_*.csv")
      ->required();
  report->add_option("--out", report_args.out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      aoplab::ExperimentConfig cfg =
          aoplab::load_config_file(train_args.config_path);
      cfg.imp.reset();  // the train subcommand never prunes
      auto opts = options_from(train_args);
      opts.resume = train_resume;
      aoplab::run_aop(cfg, opts);
    } else if (imp->parsed()) {
      aoplab::ExperimentConfig cfg =
          aoplab::load_config_file(imp_args.config_path);
      if (!cfg.imp.has_value())
        throw std::runtime_error("config has no enabled imp section");
      auto opts = options_from(imp_args);
      opts.resume = imp_resume;
      aoplab::run_aop(cfg, opts);
    } else if (eval->parsed()) {
      aoplab::ExperimentConfig cfg =
          aoplab::load_config_file(eval_args.config_path);
      aoplab::run_eval(cfg, eval_ckpt, aoplab::scorer_from_name(eval_scorer),
                       eval_ema, resolve_out(eval_args, cfg));
    } else if (theory->parsed()) {
      aoplab::ExperimentConfig cfg;
      if (!theory_args.config_path.empty())
        cfg = aoplab::load_config_file(theory_args.config_path);
      aoplab::run_theory_tables(cfg, resolve_out(theory_args, cfg), theory_plots);
    } else if (landscape->parsed()) {
      aoplab::ExperimentConfig cfg =
          aoplab::load_config_file(land_args.config_path);
      aoplab::run_landscape(cfg, land_ckpt, land_ema, resolve_out(land_args, cfg));
    } else if (width->parsed()) {
      aoplab::ExperimentConfig cfg =
          aoplab::load_config_file(width_args.config_path);
      if (cfg.sweep_widths.empty())
        throw std::runtime_error("config has no sweep_widths list");
      aoplab::width_sweep(cfg, cfg.sweep_widths, options_from(width_args));
    } else if (report->parsed()) {
      aoplab::run_report(report_args.config_path, report_args.out_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
