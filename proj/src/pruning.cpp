#include "aoplab/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "aoplab/checkpoint.hpp"
#include "aoplab/csv.hpp"
#include "aoplab/metrics.hpp"
#include "aoplab/rng.hpp"
#include "aoplab/scoring.hpp"

namespace aoplab {

void ImpConfig::validate() const {
  if (train_epochs < 1) throw std::invalid_argument("train_epochs must be >= 1");
  if (rewind_epoch >= train_epochs)
    throw std::invalid_argument("rewind_epoch must be < train_epochs");
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (prune_fraction <= 0.0 || prune_fraction >= 1.0)
    throw std::invalid_argument("prune_fraction must be in (0, 1)");
}

namespace {

struct FlatRef {
  double magnitude;
  std::size_t flat_index;  // global, layer order then row-major
};

std::size_t prune_count(std::size_t kept, double fraction) {
  return static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(kept)));
}

}  // namespace

SparsityMask global_magnitude_prune(const ParamSet& params,
                                    const SparsityMask& mask, double fraction) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw std::invalid_argument("prune fraction must be in (0, 1)");
  if (!mask.aligned_with(params))
    throw std::invalid_argument("global_magnitude_prune: mask misaligned");
  const std::size_t kept = mask.kept_count();
  if (kept < 2)
    throw std::invalid_argument("global_magnitude_prune: fewer than 2 surviving weights");
  const std::size_t to_prune = prune_count(kept, fraction);
  if (to_prune >= kept)
    throw std::invalid_argument("global_magnitude_prune: request would prune everything");
  if (to_prune == 0) return mask;

  // Collect survivors only; rank globally by |theta|, then by flat index so
  // boundary ties resolve identically on every platform.
  std::vector<FlatRef> survivors;
  survivors.reserve(kept);
  std::size_t base = 0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& w = params.layers[l].weight.data;
    const auto& bits = mask.layer_bits[l];
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (bits[i]) survivors.push_back({std::fabs(w[i]), base + i});
    }
    base += w.size();
  }
  std::nth_element(survivors.begin(), survivors.begin() + (to_prune - 1),
                   survivors.end(), [](const FlatRef& a, const FlatRef& b) {
                     if (a.magnitude != b.magnitude)
                       return a.magnitude < b.magnitude;
                     return a.flat_index < b.flat_index;
                   });
  std::vector<std::size_t> drop(to_prune);
  for (std::size_t i = 0; i < to_prune; ++i) drop[i] = survivors[i].flat_index;
  std::sort(drop.begin(), drop.end());

  SparsityMask out = mask;
  base = 0;
  std::size_t di = 0;
  for (std::size_t l = 0; l < out.layer_bits.size() && di < drop.size(); ++l) {
    auto& bits = out.layer_bits[l];
    const std::size_t end = base + bits.size();
    while (di < drop.size() && drop[di] < end) {
      bits[drop[di] - base] = 0;
      ++di;
    }
    base = end;
  }
  return out;
}

SparsityMask random_prune(const SparsityMask& mask, double fraction,
                          std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw std::invalid_argument("prune fraction must be in (0, 1)");
  const std::size_t kept = mask.kept_count();
  if (kept < 2)
    throw std::invalid_argument("random_prune: fewer than 2 surviving weights");
  const std::size_t to_prune = prune_count(kept, fraction);
  if (to_prune >= kept)
    throw std::invalid_argument("random_prune: request would prune everything");

  std::vector<std::size_t> survivor_flat;
  survivor_flat.reserve(kept);
  std::size_t base = 0;
  for (const auto& bits : mask.layer_bits) {
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i]) survivor_flat.push_back(base + i);
    }
    base += bits.size();
  }
  Rng rng(mix_seed(seed, 0x52D));
  rng.shuffle(survivor_flat);
  survivor_flat.resize(to_prune);
  std::sort(survivor_flat.begin(), survivor_flat.end());

  SparsityMask out = mask;
  base = 0;
  std::size_t di = 0;
  for (std::size_t l = 0; l < out.layer_bits.size() && di < survivor_flat.size(); ++l) {
    auto& bits = out.layer_bits[l];
    const std::size_t end = base + bits.size();
    while (di < survivor_flat.size() && survivor_flat[di] < end) {
      bits[survivor_flat[di] - base] = 0;
      ++di;
    }
    base = end;
  }
  return out;
}

ParamSet apply_mask(const ParamSet& params, const SparsityMask& mask) {
  if (!mask.aligned_with(params))
    throw std::invalid_argument("apply_mask: mask misaligned with params");
  ParamSet out = params;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    auto& w = out.layers[l].weight.data;
    const auto& bits = mask.layer_bits[l];
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!bits[i]) w[i] = 0.0;
    }
  }
  return out;
}

namespace {

void eval_round(const MlpSpec& spec, const ParamSet& params, const ImpData& data,
                ImpRoundResult& r) {
  const ForwardTrace test_trace = forward(spec, params, data.test.inputs);
  r.test_error = classification_error(test_trace.logits, data.test.labels);
  LabeledScores s;
  s.id_scores = score_msp(test_trace);
  s.ood_scores = score_msp(forward(spec, params, data.ood.inputs));
  r.auroc = auroc(s);
  r.fpr95 = fpr_at_tpr(s, 0.95);
}

void persist_round(const std::string& dir, const MlpSpec& spec,
                   std::uint64_t seed, const ImpConfig& cfg,
                   const ImpRoundResult& r) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.seed = seed;
  ckpt.epoch = cfg.train_epochs;
  ckpt.params = r.trained;
  ckpt.mask = r.mask;
  save_checkpoint(ckpt, dir + "/round_" + std::to_string(r.round) + ".ckpt");
}

}  // namespace

std::vector<ImpRoundResult> imp_run(const MlpSpec& spec, std::uint64_t init_seed,
                                    const SgdConfig& sgd, const ImpConfig& cfg,
                                    const ImpData& data, std::size_t batch_size,
                                    const std::string& artifact_dir,
                                    const ImpHooks* hooks) {
  cfg.validate();
  sgd.validate();
  if (data.train.labels.empty() || data.test.labels.empty())
    throw std::invalid_argument("imp_run: train/test splits with labels required");

  const bool persist = !artifact_dir.empty();
  const std::string k_path =
      persist ? artifact_dir + "/k_snapshot.ckpt" : std::string();

  std::vector<ImpRoundResult> results;
  ParamSet theta0 = init_params(spec, init_seed);
  SparsityMask mask = SparsityMask::full(theta0);
  ParamSet theta_k;  // weights after rewind_epoch epochs of round 0
  ParamSet prev_trained;

  const std::size_t resume_from = hooks != nullptr ? hooks->resume_from_round : 0;
  const std::size_t stop_after =
      hooks != nullptr ? hooks->stop_after_round : static_cast<std::size_t>(-1);

  for (std::size_t round = 0; round <= cfg.rounds; ++round) {
    ImpRoundResult r;
    r.round = round;

    if (round < resume_from) {
      // Reload a completed round instead of recomputing it.
      if (!persist)
        throw std::invalid_argument("imp_run: resume requires an artifact dir");
      const Checkpoint ckpt = load_checkpoint(
          artifact_dir + "/round_" + std::to_string(round) + ".ckpt");
      if (!ckpt.mask.has_value())
        throw std::runtime_error("imp_run: persisted round lacks a mask");
      r.mask = *ckpt.mask;
      r.trained = ckpt.params;
      r.round_start = ckpt.params;  // not retained for reloaded rounds
      if (round == 0) {
        const Checkpoint ksnap = load_checkpoint(k_path);
        theta_k = ksnap.params;
      }
      mask = r.mask;
      prev_trained = r.trained;
      r.kept_count = mask.kept_count();
      eval_round(spec, r.trained, data, r);
      results.push_back(std::move(r));
      continue;
    }

    ParamSet start;
    if (round == 0) {
      start = theta0;
    } else {
      switch (cfg.variant) {
        case ImpVariant::rewind:
          mask = global_magnitude_prune(prev_trained, mask, cfg.prune_fraction);
          start = apply_mask(theta_k, mask);
          break;
        case ImpVariant::finetune:
          mask = global_magnitude_prune(prev_trained, mask, cfg.prune_fraction);
          start = apply_mask(prev_trained, mask);
          break;
        case ImpVariant::random:
          mask = random_prune(mask, cfg.prune_fraction,
                              mix_seed(init_seed, 0xF00D + round));
          start = apply_mask(theta_k, mask);
          break;
      }
      if (cfg.variant != ImpVariant::finetune && theta_k.layers.empty()) {
        throw std::runtime_error(
            "imp_run: rewind snapshot theta_k missing; run round 0 with "
            "k-snapshotting enabled");
      }
    }

    r.mask = mask;
    r.round_start = start;
    if (hooks != nullptr && hooks->on_round_start)
      hooks->on_round_start(round, mask, start);

    TrainOptions opts;
    opts.epochs = cfg.train_epochs;
    opts.batch_size = batch_size;
    opts.seed = mix_seed(init_seed, 0x1000 + round);
    opts.mask = &mask;
    if (round == 0) opts.snapshot_epoch = cfg.rewind_epoch;
    if (hooks != nullptr && hooks->on_epoch_end) {
      opts.on_epoch_end = [&, round](std::size_t epoch, const ParamSet& p) {
        hooks->on_epoch_end(round, epoch, p);
      };
    }

    TrainResult trained = train_classifier(spec, start, data.train.inputs,
                                           data.train.labels, sgd, opts);
    if (round == 0) {
      theta_k = *trained.snapshot;
      if (persist) {
        std::filesystem::create_directories(artifact_dir);
        Checkpoint ksnap;
        ksnap.spec = spec;
        ksnap.seed = init_seed;
        ksnap.epoch = cfg.rewind_epoch;
        ksnap.params = theta_k;
        save_checkpoint(ksnap, k_path);
      }
    }

    r.trained = std::move(trained.params);
    r.kept_count = mask.kept_count();
    eval_round(spec, r.trained, data, r);
    if (persist) persist_round(artifact_dir, spec, init_seed, cfg, r);
    prev_trained = r.trained;
    results.push_back(std::move(r));
    if (round >= stop_after) break;
  }

  if (persist) {
    std::string csv = "round,kept_count,sparsity,test_error,auroc,fpr95\n";
    const auto total = static_cast<double>(theta0.weight_count());
    for (const auto& r : results) {
      csv += std::to_string(r.round) + "," + std::to_string(r.kept_count) + "," +
             format_double(1.0 - static_cast<double>(r.kept_count) / total) + "," +
             format_double(r.test_error) + "," + format_double(r.auroc) + "," +
             format_double(r.fpr95) + "\n";
    }
    write_file(artifact_dir + "/imp_metrics.csv", csv);
  }
  return results;
}

}  // namespace aoplab
