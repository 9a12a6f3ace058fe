#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aoplab/checkpoint.hpp"
#include "aoplab/csv.hpp"
#include "aoplab/experiment.hpp"

using namespace aoplab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

ExperimentConfig small_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.seed = 5;
  cfg.epochs = 8;
  cfg.eval_every = 2;
  cfg.batch_size = 16;
  cfg.output_dir = out_dir;
  cfg.net = MlpSpec{6, {10}, 3};
  cfg.sgd.learning_rate = 0.05;
  cfg.averaging.enabled = true;
  cfg.averaging.t0 = 4;
  cfg.scorers = {"msp", "energy"};
  cfg.data.kind = "blob";
  cfg.data.blob.num_classes = 3;
  cfg.data.blob.special_dims = 2;
  cfg.data.blob.common_dims = 4;
  cfg.data.blob.class_separation = 3.0;
  cfg.data.blob.noise_sigma = 0.8;
  cfg.data.blob.seed = 9;
  cfg.data.n_train = 96;
  cfg.data.n_test = 96;
  cfg.data.n_ood = 96;
  return cfg;
}

}  // namespace

TEST_CASE("config: serialize/parse round-trips losslessly") {
  ExperimentConfig cfg = small_config("x");
  cfg.imp = ImpConfig{1, 8, 2, 0.25, ImpVariant::random};
  cfg.sgd.lr_schedule = {{4, 0.1}, {6, 0.5}};
  cfg.scorer_cfg.odin_epsilon = 0.007;
  cfg.sweep_widths = {4, 8};
  const std::string a = serialize_config(cfg);
  const ExperimentConfig back = parse_config(a);
  CHECK(serialize_config(back) == a);
  CHECK(back.imp->prune_fraction == 0.25);
  CHECK(back.sgd.lr_schedule.size() == 2);
}

TEST_CASE("config: unknown keys are rejected with their path") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"sede": 3})"),
                       doctest::Contains("$.sede"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config(R"({"net": {"input_dmi": 4}})"),
                       doctest::Contains("$.net.input_dmi"),
                       std::invalid_argument);
  CHECK_THROWS_AS(parse_config(R"({"version": 2})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("not json"), std::invalid_argument);
}

TEST_CASE("checkpoint: save/load round-trips bitwise, mask and EMA included") {
  MlpSpec spec{5, {7, 4}, 3};
  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.seed = 1234567890123ULL;
  ckpt.epoch = 42;
  ckpt.params = init_params(spec, 3);
  SparsityMask mask = SparsityMask::full(ckpt.params);
  for (std::size_t i = 0; i < mask.layer_bits[0].size(); i += 2)
    mask.layer_bits[0][i] = 0;
  mask.layer_bits[1][3] = 0;
  ckpt.mask = mask;
  ckpt.ema = init_params(spec, 4);

  const std::string path = fresh_dir("aoplab_ckpt_test") + "/a.ckpt";
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.spec.input_dim == spec.input_dim);
  CHECK(back.spec.hidden_widths == spec.hidden_widths);
  CHECK(back.seed == ckpt.seed);
  CHECK(back.epoch == ckpt.epoch);
  CHECK(back.params.to_flat() == ckpt.params.to_flat());
  CHECK(back.mask->layer_bits == mask.layer_bits);
  CHECK(back.ema->to_flat() == ckpt.ema->to_flat());

  // Re-saving the loaded checkpoint reproduces the file bytes.
  const std::string path2 = fresh_dir("aoplab_ckpt_test2") + "/b.ckpt";
  save_checkpoint(back, path2);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("run_aop dense path matches a direct training loop bitwise") {
  const std::string out = fresh_dir("aoplab_run_direct");
  ExperimentConfig cfg = small_config(out);
  cfg.averaging.enabled = false;
  const RunLog log = run_aop(cfg);

  // Direct loop with the same ingredients.
  const ExperimentData data = build_datasets(cfg);
  TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.batch_size = cfg.batch_size;
  opts.seed = cfg.seed;
  const auto direct =
      train_classifier(cfg.net, init_params(cfg.net, cfg.seed),
                       data.train.inputs, data.train.labels, cfg.sgd, opts);
  const Checkpoint final = load_checkpoint(out + "/final.ckpt");
  CHECK(final.params.to_flat() == direct.params.to_flat());
  CHECK(!final.ema.has_value());
  CHECK(!log.rows.empty());
  // With averaging off the MA columns mirror the online ones.
  for (const auto& r : log.rows) {
    CHECK(r.test_err_ma == r.test_err_online);
    CHECK(r.scorer_metrics[0] == r.scorer_metrics[3]);
  }
}

TEST_CASE("run_aop: identical config and seed give byte-identical outputs") {
  const std::string out1 = fresh_dir("aoplab_det_1");
  const std::string out2 = fresh_dir("aoplab_det_2");
  ExperimentConfig cfg = small_config(out1);
  cfg.imp = ImpConfig{1, cfg.epochs, 2, 0.3, ImpVariant::rewind};
  run_aop(cfg);
  RunOptions opts;
  opts.output_dir_override = out2;
  run_aop(cfg, opts);
  CHECK(slurp(out1 + "/curves.csv") == slurp(out2 + "/curves.csv"));
  CHECK(slurp(out1 + "/metrics.csv") == slurp(out2 + "/metrics.csv"));
  CHECK(slurp(out1 + "/final.ckpt") == slurp(out2 + "/final.ckpt"));
  CHECK(slurp(out1 + "/feature_diff.csv") == slurp(out2 + "/feature_diff.csv"));
}

TEST_CASE("run_aop: every row carries online and averaged metrics") {
  const std::string out = fresh_dir("aoplab_ma_rows");
  ExperimentConfig cfg = small_config(out);
  const RunLog log = run_aop(cfg);
  REQUIRE(!log.rows.empty());
  for (const auto& r : log.rows) {
    CHECK(r.scorer_metrics.size() == cfg.scorers.size() * 6);
    if (r.epoch <= *cfg.averaging.t0) {
      // Before t0 the averager mirrors the online model exactly.
      CHECK(r.test_err_ma == r.test_err_online);
    }
  }
  // Epochs are monotone within each round.
  for (std::size_t i = 1; i < log.rows.size(); ++i) {
    if (log.rows[i].round == log.rows[i - 1].round)
      CHECK(log.rows[i].epoch > log.rows[i - 1].epoch);
  }
}

TEST_CASE("run_aop: interrupted run resumes to identical artifacts") {
  const std::string out_full = fresh_dir("aoplab_resume_full");
  const std::string out_part = fresh_dir("aoplab_resume_part");
  ExperimentConfig cfg = small_config(out_full);
  cfg.imp = ImpConfig{1, cfg.epochs, 3, 0.3, ImpVariant::rewind};
  run_aop(cfg);

  ExperimentConfig cfg2 = cfg;
  cfg2.output_dir = out_part;
  RunOptions stop;
  stop.stop_after_round = 1;
  run_aop(cfg2, stop);
  CHECK(!fs::exists(out_part + "/round_3.ckpt"));
  RunOptions resume;
  resume.resume = true;
  run_aop(cfg2, resume);

  for (int r = 0; r <= 3; ++r) {
    const std::string name = "/round_" + std::to_string(r) + ".ckpt";
    CHECK(slurp(out_full + name) == slurp(out_part + name));
  }
  CHECK(slurp(out_full + "/curves.csv") == slurp(out_part + "/curves.csv"));
  CHECK(slurp(out_full + "/final.ckpt") == slurp(out_part + "/final.ckpt"));
}

TEST_CASE("RunLog CSV round-trips") {
  const std::string out = fresh_dir("aoplab_runlog_rt");
  ExperimentConfig cfg = small_config(out);
  const RunLog log = run_aop(cfg);
  const RunLog back = RunLog::from_csv(log.to_csv());
  CHECK(back.scorers == log.scorers);
  REQUIRE(back.rows.size() == log.rows.size());
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    CHECK(back.rows[i].epoch == log.rows[i].epoch);
    CHECK(back.rows[i].train_err == log.rows[i].train_err);
    CHECK(back.rows[i].scorer_metrics == log.rows[i].scorer_metrics);
  }
}

TEST_CASE("emit_report: empty log produces header-only CSVs and valid SVGs") {
  const std::string out = fresh_dir("aoplab_empty_report");
  RunLog log;
  log.scorers = {"msp"};
  emit_report(log, out);
  CHECK(slurp(out + "/curves.csv") ==
        "round,epoch,sparsity,train_err,test_err_online,test_err_ma,"
        "msp_auroc_online,msp_aupr_online,msp_fpr95_online,"
        "msp_auroc_ma,msp_aupr_ma,msp_fpr95_ma\n");
  CHECK(slurp(out + "/metrics.csv") ==
        "scorer,auroc,aupr,fpr95,aurc_e3,e_aurc_e3,aupr_err,acc\n");
  const std::string svg = slurp(out + "/curves_auroc.svg");
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("feature_diff_report: identical batches give the zero matrix") {
  MlpSpec spec{4, {6}, 2};
  const ParamSet a = init_params(spec, 1);
  const ParamSet b = init_params(spec, 2);
  Tensor2 batch(10, 4);
  for (std::size_t i = 0; i < batch.data.size(); ++i)
    batch.data[i] = static_cast<double>(i % 7) - 3.0;
  const auto [dense, sparse] = feature_diff_report(spec, a, b, batch, batch);
  CHECK(dense.rows == 1);
  CHECK(dense.cols == 6);
  CHECK(sparse.rows == 1);
  for (double v : dense.data) CHECK(v == 0.0);
  for (double v : sparse.data) CHECK(v == 0.0);
}

TEST_CASE("run_eval and run_report: score CSVs to metrics.csv") {
  const std::string out = fresh_dir("aoplab_evalreport");
  ExperimentConfig cfg = small_config(out);
  run_aop(cfg);

  run_eval(cfg, out + "/final.ckpt", ScorerKind::msp, /*use_ema=*/true, out);
  run_eval(cfg, out + "/final.ckpt", ScorerKind::energy, true, out);
  CHECK(fs::exists(out + "/scores_msp.csv"));
  CHECK(fs::exists(out + "/predictions.csv"));

  const auto lines = read_lines(out + "/scores_msp.csv");
  CHECK(lines[0] == "sample_id,provenance,score");
  CHECK(lines.size() == 1 + cfg.data.n_test + cfg.data.n_ood);

  run_report(out, out);
  const auto metrics = read_lines(out + "/metrics.csv");
  REQUIRE(metrics.size() == 3);  // header + energy + msp
  CHECK(metrics[0] == "scorer,auroc,aupr,fpr95,aurc_e3,e_aurc_e3,aupr_err,acc");
  const auto fields = split_csv_line(metrics[2]);
  CHECK(fields[0] == "msp");
  const double roc = parse_double(fields[1], "metrics");
  CHECK(roc >= 0.0);
  CHECK(roc <= 1.0);
  const double acc = parse_double(fields[7], "metrics");
  CHECK(acc > 0.5);
}

TEST_CASE("width_sweep: width 1 underfits wider nets") {
  const std::string out = fresh_dir("aoplab_width");
  ExperimentConfig cfg = small_config(out);
  cfg.scorers = {"msp"};
  cfg.epochs = 6;
  const auto rows = width_sweep(cfg, {1, 24});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].width == 1);
  CHECK(rows[0].test_acc < rows[1].test_acc);
  CHECK(fs::exists(out + "/width_sweep.csv"));
  CHECK(fs::exists(out + "/width_sweep.svg"));
  const auto lines = read_lines(out + "/width_sweep.csv");
  CHECK(lines[0] == "width,test_acc,final_auroc");
}

TEST_CASE("outlier exposure: enabled run trains and logs finite values") {
  const std::string out = fresh_dir("aoplab_oe");
  ExperimentConfig cfg = small_config(out);
  cfg.oe.enabled = true;
  cfg.oe.weight = 0.5;
  const RunLog log = run_aop(cfg);
  for (const auto& r : log.rows) {
    CHECK(std::isfinite(r.train_err));
    CHECK(std::isfinite(r.scorer_metrics[0]));
  }
}
