#include "aoplab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>

#include "aoplab/averaging.hpp"
#include "aoplab/checkpoint.hpp"
#include "aoplab/csv.hpp"
#include "aoplab/rng.hpp"
#include "aoplab/svg.hpp"

namespace fs = std::filesystem;

namespace aoplab {

namespace {

std::vector<ScorerKind> scorer_kinds(const ExperimentConfig& cfg) {
  std::vector<ScorerKind> kinds;
  kinds.reserve(cfg.scorers.size());
  for (const auto& name : cfg.scorers) kinds.push_back(scorer_from_name(name));
  return kinds;
}

bool needs_bank(ScorerKind k) {
  return k == ScorerKind::maha || k == ScorerKind::knn || k == ScorerKind::react;
}

// Evaluates one parameter set against the experiment's test and OOD splits.
class Evaluator {
 public:
  Evaluator(const ExperimentConfig& cfg, const ExperimentData& data)
      : cfg_(cfg), data_(data), kinds_(scorer_kinds(cfg)) {}

  struct Point {
    double test_err = 0.0;
    std::vector<double> per_scorer;  // auroc, aupr, fpr95 per scorer
  };

  Point evaluate(const ParamSet& params) const {
    Point pt;
    const ForwardTrace test_trace = forward(cfg_.net, params, data_.test.inputs);
    const ForwardTrace ood_trace = forward(cfg_.net, params, data_.ood.inputs);
    pt.test_err = classification_error(test_trace.logits, data_.test.labels);

    const std::optional<FeatureBank> bank = fitted_bank(params);
    for (ScorerKind kind : kinds_) {
      const LabeledScores s =
          scores_for(kind, params, test_trace, ood_trace,
                     bank.has_value() ? &*bank : nullptr);
      pt.per_scorer.push_back(auroc(s));
      pt.per_scorer.push_back(aupr(s));
      pt.per_scorer.push_back(fpr_at_tpr(s, 0.95));
    }
    return pt;
  }

  double train_error(const ParamSet& params) const {
    const ForwardTrace t = forward(cfg_.net, params, data_.train.inputs);
    return classification_error(t.logits, data_.train.labels);
  }

  std::vector<ScorerSummary> summarize(const ParamSet& params) const {
    std::vector<ScorerSummary> out;
    const ForwardTrace test_trace = forward(cfg_.net, params, data_.test.inputs);
    const ForwardTrace ood_trace = forward(cfg_.net, params, data_.ood.inputs);
    std::vector<bool> correct(data_.test.labels.size());
    for (std::size_t i = 0; i < correct.size(); ++i) {
      const double* z = test_trace.logits.row(i);
      const auto best = static_cast<int>(
          std::max_element(z, z + test_trace.logits.cols) - z);
      correct[i] = best == data_.test.labels[i];
    }
    const double acc =
        1.0 - classification_error(test_trace.logits, data_.test.labels);

    const std::optional<FeatureBank> bank = fitted_bank(params);
    for (std::size_t k = 0; k < kinds_.size(); ++k) {
      const LabeledScores s =
          scores_for(kinds_[k], params, test_trace, ood_trace,
                     bank.has_value() ? &*bank : nullptr);
      ScorerSummary sum;
      sum.scorer = cfg_.scorers[k];
      sum.auroc = auroc(s);
      sum.aupr = aupr(s);
      sum.fpr95 = fpr_at_tpr(s, 0.95);
      ConfidenceOutcomes co{s.id_scores, correct};
      sum.aurc = aurc(co);
      sum.e_aurc = e_aurc(co);
      try {
        sum.aupr_err = aupr_err(co);
      } catch (const std::invalid_argument&) {
        sum.aupr_err_defined = false;
        sum.aupr_err = std::numeric_limits<double>::quiet_NaN();
      }
      sum.acc = acc;
      out.push_back(std::move(sum));
    }
    return out;
  }

 private:
  LabeledScores scores_for(ScorerKind kind, const ParamSet& params,
                           const ForwardTrace& test_trace,
                           const ForwardTrace& ood_trace,
                           const FeatureBank* bank) const {
    LabeledScores s;
    switch (kind) {
      case ScorerKind::msp:
        s.id_scores = score_msp(test_trace);
        s.ood_scores = score_msp(ood_trace);
        break;
      case ScorerKind::maxlogit:
        s.id_scores = score_maxlogit(test_trace);
        s.ood_scores = score_maxlogit(ood_trace);
        break;
      case ScorerKind::energy:
        s.id_scores = score_energy(test_trace, cfg_.scorer_cfg.energy_temperature);
        s.ood_scores = score_energy(ood_trace, cfg_.scorer_cfg.energy_temperature);
        break;
      default:
        s.id_scores = run_scorer(kind, cfg_.net, params, data_.test.inputs,
                                 bank, cfg_.scorer_cfg);
        s.ood_scores = run_scorer(kind, cfg_.net, params, data_.ood.inputs,
                                  bank, cfg_.scorer_cfg);
        break;
    }
    return s;
  }

  std::optional<FeatureBank> fitted_bank(const ParamSet& params) const {
    if (!std::any_of(kinds_.begin(), kinds_.end(), needs_bank))
      return std::nullopt;
    return fit_feature_bank(cfg_.net, params, data_.train, cfg_.scorer_cfg);
  }

  const ExperimentConfig& cfg_;
  const ExperimentData& data_;
  std::vector<ScorerKind> kinds_;
};

std::string row_header(const std::vector<std::string>& scorers) {
  std::string h = "round,epoch,sparsity,train_err,test_err_online,test_err_ma";
  for (const auto& s : scorers) {
    for (const char* variant : {"online", "ma"}) {
      h += "," + s + "_auroc_" + variant;
      h += "," + s + "_aupr_" + variant;
      h += "," + s + "_fpr95_" + variant;
    }
  }
  return h;
}

std::string row_to_csv(const RunLogRow& r) {
  std::string line = std::to_string(r.round) + "," + std::to_string(r.epoch) +
                     "," + format_double(r.sparsity) + "," +
                     format_double(r.train_err) + "," +
                     format_double(r.test_err_online) + "," +
                     format_double(r.test_err_ma);
  for (double v : r.scorer_metrics) line += "," + format_double(v);
  return line;
}

Tensor2 make_oe_pool(const ExperimentConfig& cfg, std::size_t rows) {
  Rng rng(mix_seed(cfg.seed, 0x0E0E));
  Tensor2 pool(rows, cfg.net.input_dim);
  for (double& v : pool.data) v = cfg.oe.sigma * rng.normal();
  return pool;
}

}  // namespace

ExperimentData build_datasets(const ExperimentConfig& cfg) {
  ExperimentData data;
  if (cfg.data.kind == "blob") {
    BlobTask task =
        make_blob_task(cfg.data.blob, cfg.data.n_train, cfg.data.n_test,
                       cfg.data.n_ood);
    data.train = std::move(task.train);
    data.test = std::move(task.test);
    data.ood = std::move(task.ood);
  } else if (cfg.data.kind == "gaussian_model") {
    GaussianModelParams train_p = cfg.data.gaussian;
    data.train = sample_id(train_p, cfg.data.n_train);
    GaussianModelParams test_p = cfg.data.gaussian;
    test_p.seed = mix_seed(cfg.data.gaussian.seed, 0x7357);
    data.test = sample_id(test_p, cfg.data.n_test);
    data.test.provenance = Provenance::id_test;
    data.ood = sample_ood(cfg.data.gaussian, cfg.data.n_ood);
  } else if (cfg.data.kind == "csv") {
    data.train = load_csv(cfg.data.train_csv, cfg.data.csv_header);
    data.test = load_csv(cfg.data.test_csv, cfg.data.csv_header);
    data.test.provenance = Provenance::id_test;
    data.ood = load_csv(cfg.data.ood_csv, cfg.data.csv_header);
    if (data.ood.provenance != Provenance::ood)
      throw std::invalid_argument("ood_csv must contain only label -1 rows");
    if (data.train.labels.empty() || data.test.labels.empty())
      throw std::invalid_argument("train/test CSVs must carry class labels");
  } else {
    throw std::invalid_argument("unknown data.kind '" + cfg.data.kind + "'");
  }
  if (data.train.inputs.cols != cfg.net.input_dim) {
    throw std::invalid_argument(
        "dataset width " + std::to_string(data.train.inputs.cols) +
        " does not match net.input_dim " + std::to_string(cfg.net.input_dim));
  }
  return data;
}

std::string RunLog::to_csv() const {
  std::string out = row_header(scorers) + "\n";
  for (const auto& r : rows) out += row_to_csv(r) + "\n";
  return out;
}

RunLog RunLog::from_csv(const std::string& csv_text) {
  RunLog log;
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < csv_text.size()) {
    std::size_t nl = csv_text.find('\n', start);
    if (nl == std::string::npos) nl = csv_text.size();
    if (nl > start) lines.emplace_back(csv_text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.empty()) throw std::runtime_error("RunLog CSV: missing header");

  const auto header = split_csv_line(lines[0]);
  if (header.size() < 6 || (header.size() - 6) % 6 != 0)
    throw std::runtime_error("RunLog CSV: malformed header");
  for (std::size_t i = 6; i < header.size(); i += 6) {
    std::string col(header[i]);  // <scorer>_auroc_online
    const std::string suffix = "_auroc_online";
    if (col.size() <= suffix.size() ||
        col.substr(col.size() - suffix.size()) != suffix)
      throw std::runtime_error("RunLog CSV: unexpected column '" + col + "'");
    log.scorers.push_back(col.substr(0, col.size() - suffix.size()));
  }

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = split_csv_line(lines[li]);
    if (f.size() != header.size())
      throw std::runtime_error("RunLog CSV: ragged row " + std::to_string(li));
    RunLogRow r;
    const std::string where = "curves.csv line " + std::to_string(li + 1);
    r.round = static_cast<std::size_t>(parse_double(f[0], where));
    r.epoch = static_cast<std::size_t>(parse_double(f[1], where));
    r.sparsity = parse_double(f[2], where);
    r.train_err = parse_double(f[3], where);
    r.test_err_online = parse_double(f[4], where);
    r.test_err_ma = parse_double(f[5], where);
    for (std::size_t i = 6; i < f.size(); ++i)
      r.scorer_metrics.push_back(parse_double(f[i], where));
    log.rows.push_back(std::move(r));
  }
  return log;
}

RunLog run_aop(const ExperimentConfig& cfg_in, const RunOptions& opts) {
  ExperimentConfig cfg = cfg_in;
  if (opts.seed_override.has_value()) cfg.seed = *opts.seed_override;
  if (opts.output_dir_override.has_value())
    cfg.output_dir = *opts.output_dir_override;
  cfg.validate();

  const ExperimentData data = build_datasets(cfg);
  const Evaluator evaluator(cfg, data);
  fs::create_directories(cfg.output_dir);
  write_file(cfg.output_dir + "/config.json", serialize_config(cfg));

  const std::size_t t0 =
      cfg.averaging.enabled ? cfg.averaging_t0() : cfg.epochs + 1;
  Tensor2 oe_pool;
  if (cfg.oe.enabled) oe_pool = make_oe_pool(cfg, std::max<std::size_t>(cfg.data.n_train, 64));

  RunLog log;
  log.scorers = cfg.scorers;

  const double total_weights = [&] {
    const ParamSet probe = init_params(cfg.net, cfg.seed);
    return static_cast<double>(probe.weight_count());
  }();

  // Shared per-epoch observer: absorb into the averager, then evaluate both
  // the online and the averaged weights.
  ModelAverager averager(t0, cfg.averaging.mode, cfg.averaging.tau);
  std::vector<RunLogRow> round_rows;
  double current_sparsity = 0.0;
  std::size_t current_round = 0;

  const auto observe_epoch = [&](std::size_t round, std::size_t epoch,
                                 const ParamSet& online) {
    averager.absorb(epoch, online);
    if (epoch % cfg.eval_every != 0 && epoch != cfg.epochs) return;
    RunLogRow row;
    row.round = round;
    row.epoch = epoch;
    row.sparsity = current_sparsity;
    // The three evaluations are read-only on disjoint outputs, so they can
    // run side by side without touching the result bytes.
    Evaluator::Point on, ma;
    double train_err = 0.0;
    {
      std::thread t_on([&] { on = evaluator.evaluate(online); });
      std::thread t_ma([&] { ma = evaluator.evaluate(averager.snapshot()); });
      train_err = evaluator.train_error(online);
      t_on.join();
      t_ma.join();
    }
    row.train_err = train_err;
    row.test_err_online = on.test_err;
    row.test_err_ma = ma.test_err;
    for (std::size_t s = 0; s < cfg.scorers.size(); ++s) {
      for (std::size_t i = 0; i < 3; ++i)
        row.scorer_metrics.push_back(on.per_scorer[s * 3 + i]);
      for (std::size_t i = 0; i < 3; ++i)
        row.scorer_metrics.push_back(ma.per_scorer[s * 3 + i]);
    }
    round_rows.push_back(std::move(row));
  };

  const auto flush_round_rows = [&](std::size_t round) {
    std::string csv = row_header(cfg.scorers) + "\n";
    for (const auto& r : round_rows) csv += row_to_csv(r) + "\n";
    write_file(cfg.output_dir + "/curves_round_" + std::to_string(round) + ".csv",
               csv);
    for (auto& r : round_rows) log.rows.push_back(std::move(r));
    round_rows.clear();
  };

  ParamSet final_online;
  std::optional<SparsityMask> final_mask;
  ParamSet dense_online;

  if (cfg.imp.has_value()) {
    ImpConfig ic = *cfg.imp;
    ic.train_epochs = cfg.epochs;
    ic.validate();

    ImpData imp_data{data.train, data.test, data.ood};
    ImpHooks hooks;
    hooks.stop_after_round = opts.stop_after_round;
    if (opts.resume) {
      std::size_t done = 0;
      while (done <= ic.rounds &&
             fs::exists(cfg.output_dir + "/round_" + std::to_string(done) +
                        ".ckpt") &&
             fs::exists(cfg.output_dir + "/curves_round_" +
                        std::to_string(done) + ".csv")) {
        ++done;
      }
      hooks.resume_from_round = done;
      // Reload persisted rows for the completed rounds.
      for (std::size_t r = 0; r < done; ++r) {
        const auto lines = read_lines(cfg.output_dir + "/curves_round_" +
                                      std::to_string(r) + ".csv");
        std::string text;
        for (const auto& l : lines) text += l + "\n";
        RunLog part = RunLog::from_csv(text);
        for (auto& row : part.rows) log.rows.push_back(std::move(row));
      }
    }

    hooks.on_round_start = [&](std::size_t round, const SparsityMask& mask,
                               const ParamSet&) {
      averager = ModelAverager(t0, cfg.averaging.mode, cfg.averaging.tau);
      round_rows.clear();
      current_round = round;
      current_sparsity =
          1.0 - static_cast<double>(mask.kept_count()) / total_weights;
    };
    hooks.on_epoch_end = [&](std::size_t round, std::size_t epoch,
                             const ParamSet& online) {
      observe_epoch(round, epoch, online);
      if (epoch == cfg.epochs) flush_round_rows(round);
    };

    const std::vector<ImpRoundResult> results =
        imp_run(cfg.net, cfg.seed, cfg.sgd, ic, imp_data, cfg.batch_size,
                cfg.output_dir, &hooks);

    final_online = results.back().trained;
    final_mask = results.back().mask;
    dense_online = results.front().trained;

    // Feature-difference report: dense round vs final sparse round.
    const auto diff = feature_diff_report(cfg.net, dense_online, final_online,
                                          data.test.inputs, data.ood.inputs);
    std::string fd = "model,coord,abs_diff\n";
    for (std::size_t i = 0; i < diff.first.cols; ++i)
      fd += "dense," + std::to_string(i) + "," +
            format_double(diff.first.at(0, i)) + "\n";
    for (std::size_t i = 0; i < diff.second.cols; ++i)
      fd += "sparse," + std::to_string(i) + "," +
            format_double(diff.second.at(0, i)) + "\n";
    write_file(cfg.output_dir + "/feature_diff.csv", fd);
  } else {
    const ParamSet theta0 = init_params(cfg.net, cfg.seed);
    averager = ModelAverager(t0, cfg.averaging.mode, cfg.averaging.tau);
    current_sparsity = 0.0;
    current_round = 0;

    TrainOptions topts;
    topts.epochs = cfg.epochs;
    topts.batch_size = cfg.batch_size;
    topts.seed = cfg.seed;
    if (cfg.oe.enabled) {
      topts.oe_inputs = &oe_pool;
      topts.oe_weight = cfg.oe.weight;
    }
    topts.on_epoch_end = [&](std::size_t epoch, const ParamSet& p) {
      observe_epoch(0, epoch, p);
    };
    TrainResult res = train_classifier(cfg.net, theta0, data.train.inputs,
                                       data.train.labels, cfg.sgd, topts);
    final_online = std::move(res.params);
    flush_round_rows(0);
  }

  // Final checkpoint: online weights, mask when pruning ran, averaged
  // weights when averaging is on.
  Checkpoint final_ckpt;
  final_ckpt.spec = cfg.net;
  final_ckpt.seed = cfg.seed;
  final_ckpt.epoch = cfg.epochs;
  final_ckpt.params = final_online;
  final_ckpt.mask = final_mask;
  if (cfg.averaging.enabled) final_ckpt.ema = averager.snapshot();
  save_checkpoint(final_ckpt, cfg.output_dir + "/final.ckpt");

  const ParamSet& final_eval_params =
      cfg.averaging.enabled ? averager.snapshot() : final_online;
  log.final_summary = evaluator.summarize(final_eval_params);

  emit_report(log, cfg.output_dir);
  return log;
}

std::pair<Tensor2, Tensor2> feature_diff_report(const MlpSpec& spec,
                                                const ParamSet& params_dense,
                                                const ParamSet& params_sparse,
                                                const Tensor2& id_batch,
                                                const Tensor2& ood_batch) {
  if (id_batch.rows < 8 || ood_batch.rows < 8) {
    std::cerr << "feature_diff_report: batches smaller than 8 samples give "
                 "noisy mean-feature estimates\n";
  }
  const auto diff_for = [&](const ParamSet& params) {
    const ForwardTrace id_trace = forward(spec, params, id_batch);
    const ForwardTrace ood_trace = forward(spec, params, ood_batch);
    const std::size_t dim = id_trace.features.cols;
    Tensor2 out(1, dim);
    for (std::size_t i = 0; i < dim; ++i) {
      double id_mean = 0.0, ood_mean = 0.0;
      for (std::size_t s = 0; s < id_trace.features.rows; ++s)
        id_mean += id_trace.features.at(s, i);
      for (std::size_t s = 0; s < ood_trace.features.rows; ++s)
        ood_mean += ood_trace.features.at(s, i);
      id_mean /= static_cast<double>(id_trace.features.rows);
      ood_mean /= static_cast<double>(ood_trace.features.rows);
      out.at(0, i) = std::fabs(id_mean - ood_mean);
    }
    return out;
  };
  return {diff_for(params_dense), diff_for(params_sparse)};
}

void emit_report(const RunLog& log, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_file(out_dir + "/curves.csv", log.to_csv());

  std::string metrics = "scorer,auroc,aupr,fpr95,aurc_e3,e_aurc_e3,aupr_err,acc\n";
  for (const auto& s : log.final_summary) {
    metrics += s.scorer + "," + format_double(s.auroc) + "," +
               format_double(s.aupr) + "," + format_double(s.fpr95) + "," +
               format_double(s.aurc * 1e3) + "," +
               format_double(s.e_aurc * 1e3) + "," +
               (s.aupr_err_defined ? format_double(s.aupr_err) : "nan") + "," +
               format_double(s.acc) + "\n";
  }
  write_file(out_dir + "/metrics.csv", metrics);

  // Epoch-vs-AUROC plot for the last round, first scorer.
  std::vector<SvgSeries> series;
  if (!log.rows.empty() && !log.scorers.empty()) {
    const std::size_t last_round = log.rows.back().round;
    SvgSeries online{log.scorers[0] + " online", {}, {}};
    SvgSeries ma{log.scorers[0] + " averaged", {}, {}};
    for (const auto& r : log.rows) {
      if (r.round != last_round) continue;
      online.x.push_back(static_cast<double>(r.epoch));
      online.y.push_back(r.scorer_metrics[0]);
      ma.x.push_back(static_cast<double>(r.epoch));
      ma.y.push_back(r.scorer_metrics[3]);
    }
    series = {online, ma};
  }
  write_file(out_dir + "/curves_auroc.svg",
             render_line_plot("AUROC during training", "epoch", "AUROC", series));

  // Sparsity-vs-final-AUROC over rounds (only meaningful when pruning ran).
  std::vector<SvgSeries> sp_series;
  if (!log.rows.empty() && !log.scorers.empty()) {
    SvgSeries online{"final AUROC online", {}, {}};
    SvgSeries ma{"final AUROC averaged", {}, {}};
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
      const auto& r = log.rows[i];
      const bool last_of_round =
          i + 1 == log.rows.size() || log.rows[i + 1].round != r.round;
      if (!last_of_round) continue;
      online.x.push_back(r.sparsity);
      online.y.push_back(r.scorer_metrics[0]);
      ma.x.push_back(r.sparsity);
      ma.y.push_back(r.scorer_metrics[3]);
    }
    sp_series = {online, ma};
  }
  write_file(out_dir + "/sparsity_auroc.svg",
             render_line_plot("AUROC vs sparsity", "sparsity", "AUROC",
                              sp_series));
}

std::vector<WidthSweepRow> width_sweep(const ExperimentConfig& cfg,
                                       const std::vector<std::size_t>& widths,
                                       const RunOptions& opts) {
  if (widths.empty()) throw std::invalid_argument("width_sweep: empty width list");
  ExperimentConfig base = cfg;
  if (opts.seed_override.has_value()) base.seed = *opts.seed_override;
  if (opts.output_dir_override.has_value())
    base.output_dir = *opts.output_dir_override;

  std::size_t max_threads = std::thread::hardware_concurrency();
  if (const char* env = std::getenv("AOP_LAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) max_threads = static_cast<std::size_t>(v);
  }
  max_threads = std::max<std::size_t>(1, std::min(max_threads, widths.size()));

  std::vector<WidthSweepRow> rows(widths.size());
  std::vector<std::string> errors(widths.size());
  std::size_t next = 0;
  std::mutex mu;
  const auto worker = [&]() {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= widths.size()) return;
        i = next++;
      }
      try {
        ExperimentConfig wc = base;
        for (auto& h : wc.net.hidden_widths) h = widths[i];
        if (wc.net.hidden_widths.empty())
          wc.net.hidden_widths.push_back(widths[i]);
        wc.output_dir = base.output_dir + "/width_" + std::to_string(widths[i]);
        const RunLog log = run_aop(wc);
        rows[i].width = widths[i];
        rows[i].test_acc = log.final_summary.empty() ? 0.0
                                                      : log.final_summary[0].acc;
        rows[i].final_auroc =
            log.final_summary.empty() ? 0.0 : log.final_summary[0].auroc;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < max_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty())
      throw std::runtime_error("width " + std::to_string(widths[i]) +
                               " failed: " + errors[i]);
  }

  fs::create_directories(base.output_dir);
  std::string csv = "width,test_acc,final_auroc\n";
  SvgSeries acc_series{"test accuracy", {}, {}};
  SvgSeries auroc_series{"final AUROC", {}, {}};
  std::size_t argmax = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv += std::to_string(rows[i].width) + "," + format_double(rows[i].test_acc) +
           "," + format_double(rows[i].final_auroc) + "\n";
    acc_series.x.push_back(static_cast<double>(rows[i].width));
    acc_series.y.push_back(rows[i].test_acc);
    auroc_series.x.push_back(static_cast<double>(rows[i].width));
    auroc_series.y.push_back(rows[i].final_auroc);
    if (rows[i].final_auroc > rows[argmax].final_auroc) argmax = i;
  }
  csv += "# auroc argmax width: " + std::to_string(rows[argmax].width) + "\n";
  write_file(base.output_dir + "/width_sweep.csv", csv);
  write_file(base.output_dir + "/width_sweep.svg",
             render_line_plot("Width sweep", "width", "metric",
                              {acc_series, auroc_series}));
  return rows;
}

void run_eval(const ExperimentConfig& cfg, const std::string& ckpt_path,
              ScorerKind scorer, bool use_ema, const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (use_ema && !ckpt.ema.has_value())
    throw std::runtime_error("checkpoint has no averaged weights");
  const ParamSet& params = use_ema ? *ckpt.ema : ckpt.params;

  ExperimentConfig data_cfg = cfg;
  data_cfg.net = ckpt.spec;
  const ExperimentData data = build_datasets(data_cfg);

  FeatureBank bank;
  const FeatureBank* bank_ptr = nullptr;
  if (needs_bank(scorer)) {
    bank = fit_feature_bank(ckpt.spec, params, data.train, cfg.scorer_cfg);
    bank_ptr = &bank;
  }
  const std::vector<double> id_scores =
      run_scorer(scorer, ckpt.spec, params, data.test.inputs, bank_ptr,
                 cfg.scorer_cfg);
  const std::vector<double> ood_scores =
      run_scorer(scorer, ckpt.spec, params, data.ood.inputs, bank_ptr,
                 cfg.scorer_cfg);

  fs::create_directories(out_dir);
  std::string csv = "sample_id,provenance,score\n";
  for (std::size_t i = 0; i < id_scores.size(); ++i) {
    csv += std::to_string(i) + ",id_test," + format_double(id_scores[i]) + "\n";
  }
  for (std::size_t i = 0; i < ood_scores.size(); ++i) {
    csv += std::to_string(id_scores.size() + i) + ",ood," +
           format_double(ood_scores[i]) + "\n";
  }
  write_file(out_dir + "/scores_" + scorer_name(scorer) + ".csv", csv);

  const ForwardTrace test_trace = forward(ckpt.spec, params, data.test.inputs);
  std::string preds = "sample_id,label,pred,correct\n";
  for (std::size_t i = 0; i < data.test.labels.size(); ++i) {
    const double* z = test_trace.logits.row(i);
    const auto pred = static_cast<int>(
        std::max_element(z, z + test_trace.logits.cols) - z);
    preds += std::to_string(i) + "," + std::to_string(data.test.labels[i]) +
             "," + std::to_string(pred) + "," +
             (pred == data.test.labels[i] ? "1" : "0") + "\n";
  }
  write_file(out_dir + "/predictions.csv", preds);
}

void run_report(const std::string& scores_dir, const std::string& out_dir) {
  // Optional correctness table for the misclassification metrics.
  std::map<std::size_t, bool> correct;
  const std::string pred_path = scores_dir + "/predictions.csv";
  if (fs::exists(pred_path)) {
    const auto lines = read_lines(pred_path);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto f = split_csv_line(lines[i]);
      if (f.size() != 4)
        throw std::runtime_error("predictions.csv: ragged row " + std::to_string(i));
      correct[static_cast<std::size_t>(
          parse_double(f[0], "predictions.csv"))] = f[3] == "1";
    }
  }

  std::vector<std::string> score_files;
  for (const auto& entry : fs::directory_iterator(scores_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("scores_", 0) == 0 && name.size() > 11 &&
        name.substr(name.size() - 4) == ".csv")
      score_files.push_back(entry.path().string());
  }
  std::sort(score_files.begin(), score_files.end());
  if (score_files.empty())
    throw std::runtime_error("no scores_*.csv files in " + scores_dir);

  std::string out = "scorer,auroc,aupr,fpr95,aurc_e3,e_aurc_e3,aupr_err,acc\n";
  for (const auto& path : score_files) {
    const std::string fname = fs::path(path).filename().string();
    const std::string scorer = fname.substr(7, fname.size() - 11);

    LabeledScores s;
    std::vector<std::pair<std::size_t, double>> id_rows;
    const auto lines = read_lines(path);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto f = split_csv_line(lines[i]);
      if (f.size() != 3)
        throw std::runtime_error(fname + ": ragged row " + std::to_string(i));
      const double v = parse_double(f[2], fname);
      if (f[1] == "ood") {
        s.ood_scores.push_back(v);
      } else {
        const auto sid = static_cast<std::size_t>(parse_double(f[0], fname));
        id_rows.emplace_back(sid, v);
        s.id_scores.push_back(v);
      }
    }

    const double roc = auroc(s), pr = aupr(s), fpr = fpr_at_tpr(s, 0.95);
    std::string aurc_s = "nan", e_aurc_s = "nan", aupr_err_s = "nan",
                acc_s = "nan";
    if (!correct.empty()) {
      ConfidenceOutcomes co;
      std::size_t right = 0;
      for (const auto& [sid, score] : id_rows) {
        const auto it = correct.find(sid);
        if (it == correct.end())
          throw std::runtime_error("predictions.csv lacks sample " +
                                   std::to_string(sid));
        co.confidence.push_back(score);
        co.correct.push_back(it->second);
        if (it->second) ++right;
      }
      aurc_s = format_double(aurc(co) * 1e3);
      e_aurc_s = format_double(e_aurc(co) * 1e3);
      try {
        aupr_err_s = format_double(aupr_err(co));
      } catch (const std::invalid_argument&) {
        aupr_err_s = "nan";
      }
      acc_s = format_double(static_cast<double>(right) /
                            static_cast<double>(co.correct.size()));
    }
    out += scorer + "," + format_double(roc) + "," + format_double(pr) + "," +
           format_double(fpr) + "," + aurc_s + "," + e_aurc_s + "," +
           aupr_err_s + "," + acc_s + "\n";
  }
  fs::create_directories(out_dir);
  write_file(out_dir + "/metrics.csv", out);
}

void run_theory_tables(const ExperimentConfig& cfg, const std::string& out_dir,
                       bool with_plots) {
  TheoryConfig tc = cfg.theory;
  if (tc.d_values.empty()) {
    tc.d_values = {0,    100,   200,   500,   1000,  2000,
                   5000, 10000, 20000, 50000, 100000};
  }
  if (tc.lambda_values.empty()) {
    for (int i = 0; i <= 20; ++i) tc.lambda_values.push_back(0.001 * i);
    for (double v : {0.05, 0.1, 0.2, 0.5, 0.9}) tc.lambda_values.push_back(v);
  }

  TheoryParams tmpl;
  tmpl.eta = tc.eta;
  tmpl.sigma = tc.sigma;

  const auto d_rows = sweep_d(tmpl, tc.d_values, tc.delta_values);
  std::string fig4a = "d,delta,r_id,r_ood\n";
  for (const auto& r : d_rows) {
    fig4a += std::to_string(r.d) + "," + format_double(r.delta) + "," +
             format_double(r.r_id) + "," + format_double(r.r_ood) + "\n";
  }

  TheoryParams ltmpl = tmpl;
  ltmpl.d = tc.d_for_lambda;
  ltmpl.delta = tc.delta_for_lambda;
  const auto l_rows = sweep_lambda(ltmpl, tc.lambda_values);
  std::string fig4b = "lambda,r_id,r_ood\n";
  for (const auto& r : l_rows) {
    fig4b += format_double(r.lambda) + "," + format_double(r.r_id) + "," +
             format_double(r.r_ood) + "\n";
  }

  fs::create_directories(out_dir);
  write_file(out_dir + "/fig4a.csv", fig4a);
  write_file(out_dir + "/fig4b.csv", fig4b);

  if (with_plots) {
    std::vector<SvgSeries> a_series;
    for (double delta : tc.delta_values) {
      SvgSeries rid{"r_id", {}, {}};
      SvgSeries rood{"r_ood (delta=" + format_double(delta) + ")", {}, {}};
      for (const auto& r : d_rows) {
        if (r.delta != delta) continue;
        rid.x.push_back(static_cast<double>(r.d));
        rid.y.push_back(r.r_id);
        rood.x.push_back(static_cast<double>(r.d));
        rood.y.push_back(r.r_ood);
      }
      if (a_series.empty()) a_series.push_back(rid);  // identical across deltas
      a_series.push_back(rood);
    }
    write_file(out_dir + "/fig4a.svg",
               render_line_plot("Risks vs common-feature count", "d", "risk",
                                a_series));
    SvgSeries rid{"r_id", {}, {}};
    SvgSeries rood{"r_ood", {}, {}};
    for (const auto& r : l_rows) {
      rid.x.push_back(r.lambda);
      rid.y.push_back(r.r_id);
      rood.x.push_back(r.lambda);
      rood.y.push_back(r.r_ood);
    }
    write_file(out_dir + "/fig4b.svg",
               render_line_plot("Risks vs lasso penalty", "lambda", "risk",
                                {rid, rood}));
  }
}

void run_landscape(const ExperimentConfig& cfg, const std::string& ckpt_path,
                   bool use_ema, const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (use_ema && !ckpt.ema.has_value())
    throw std::runtime_error("checkpoint has no averaged weights");
  const ParamSet& params = use_ema ? *ckpt.ema : ckpt.params;

  ExperimentConfig data_cfg = cfg;
  data_cfg.net = ckpt.spec;
  const ExperimentData data = build_datasets(data_cfg);
  const ScorerKind scorer = scorer_from_name(cfg.landscape.scorer);
  const std::vector<double> alphas = cfg.landscape.alphas();

  std::string csv = "direction_seed,alpha,auroc,fpr95,acc\n";
  for (std::uint64_t seed = 0; seed < cfg.landscape.num_directions; ++seed) {
    DirectionSpec dspec{seed, cfg.landscape.normalization};
    const ParamSet dir = make_direction(params, dspec);
    const auto rows = landscape_scan(ckpt.spec, params, dir, alphas, data.test,
                                     data.ood, scorer, cfg.scorer_cfg, seed);
    for (const auto& r : rows) {
      csv += std::to_string(r.direction_seed) + "," + format_double(r.alpha) +
             ",";
      if (r.finite) {
        csv += format_double(r.auroc) + "," + format_double(r.fpr95) + "," +
               format_double(r.acc) + "\n";
      } else {
        csv += "nan,nan,nan\n";
      }
    }
  }
  fs::create_directories(out_dir);
  write_file(out_dir + "/landscape.csv", csv);
}

}  // namespace aoplab
