#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aoplab/config.hpp"
#include "aoplab/metrics.hpp"

namespace aoplab {

/// One evaluation point. Rows are ordered by (round, epoch); sparsity is the
/// pruned fraction of the round's mask. scorer_metrics holds six values per
/// configured scorer: auroc/aupr/fpr95 for the online weights, then the same
/// three for the averaged weights.
struct RunLogRow {
  std::size_t round = 0;
  std::size_t epoch = 0;
  double sparsity = 0.0;
  double train_err = 0.0;
  double test_err_online = 0.0;
  double test_err_ma = 0.0;
  std::vector<double> scorer_metrics;
};

/// Final-checkpoint summary per scorer (averaged weights when averaging is
/// enabled, online otherwise). aurc/e_aurc are reported as fractions here;
/// the CSV multiplies them by 1e3.
struct ScorerSummary {
  std::string scorer;
  double auroc = 0.0;
  double aupr = 0.0;
  double fpr95 = 0.0;
  double aurc = 0.0;
  double e_aurc = 0.0;
  double aupr_err = 0.0;
  bool aupr_err_defined = true;
  double acc = 0.0;
};

struct RunLog {
  std::vector<std::string> scorers;
  std::vector<RunLogRow> rows;
  std::vector<ScorerSummary> final_summary;

  std::string to_csv() const;
  static RunLog from_csv(const std::string& csv_text);
};

struct RunOptions {
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> output_dir_override;
  /// Resume from artifacts already present in the output directory.
  bool resume = false;
  /// Stop after this IMP round completes (used by the resume tests).
  std::size_t stop_after_round = static_cast<std::size_t>(-1);
};

/// The three-step pipeline: train (optionally with iterative magnitude
/// pruning), maintain the averaged model during each round, score and
/// evaluate at every eval point, and persist checkpoints plus the RunLog.
RunLog run_aop(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct WidthSweepRow {
  std::size_t width = 0;
  double test_acc = 0.0;
  double final_auroc = 0.0;  // first configured scorer
};

/// One full run per width (every hidden layer set to the width). Workers run
/// in parallel up to the AOP_LAB_THREADS cap, each in its own output
/// subdirectory. Emits width_sweep.csv and width_sweep.svg.
std::vector<WidthSweepRow> width_sweep(const ExperimentConfig& cfg,
                                       const std::vector<std::size_t>& widths,
                                       const RunOptions& opts = {});

/// |mean ID feature - mean OOD feature| per coordinate, one 1 x F matrix per
/// model. Warns to stderr when a batch holds fewer than 8 samples.
std::pair<Tensor2, Tensor2> feature_diff_report(const MlpSpec& spec,
                                                const ParamSet& params_dense,
                                                const ParamSet& params_sparse,
                                                const Tensor2& id_batch,
                                                const Tensor2& ood_batch);

/// Writes curves.csv, metrics.csv and the SVG plots (epoch vs AUROC,
/// sparsity vs AUROC) for a run log. Byte output depends only on the log.
void emit_report(const RunLog& log, const std::string& out_dir);

/// Materializes the configured datasets (generator or CSV).
struct ExperimentData {
  LabeledDataset train;
  LabeledDataset test;
  LabeledDataset ood;
};
ExperimentData build_datasets(const ExperimentConfig& cfg);

/// Scores a checkpoint with one scorer over test + OOD data; writes
/// scores_<scorer>.csv (sample_id,provenance,score) and predictions.csv
/// (sample_id,label,pred,correct) to out_dir.
void run_eval(const ExperimentConfig& cfg, const std::string& ckpt_path,
              ScorerKind scorer, bool use_ema, const std::string& out_dir);

/// Consumes scores_*.csv (+ predictions.csv) from scores_dir and writes
/// metrics.csv with header
/// scorer,auroc,aupr,fpr95,aurc_e3,e_aurc_e3,aupr_err,acc.
void run_report(const std::string& scores_dir, const std::string& out_dir);

/// Emits fig4a.csv (d,delta,r_id,r_ood) and fig4b.csv (lambda,r_id,r_ood)
/// from the config's theory block, plus SVG plots when with_plots is set.
void run_theory_tables(const ExperimentConfig& cfg, const std::string& out_dir,
                       bool with_plots);

/// Scans num_directions seeded directions around a checkpoint and writes
/// landscape.csv (direction_seed,alpha,auroc,fpr95,acc).
void run_landscape(const ExperimentConfig& cfg, const std::string& ckpt_path,
                   bool use_ema, const std::string& out_dir);

}  // namespace aoplab
