#include "aoplab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace aoplab {

using nlohmann::json;

std::vector<double> LandscapeConfig::alphas() const {
  std::vector<double> out;
  const std::size_t n = alpha_points < 3 ? 3 : alpha_points | 1;  // odd >= 3
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    out.push_back(alpha_scale * (2.0 * t - 1.0));
  }
  out[(n - 1) / 2] = 0.0;  // exact zero at the center
  return out;
}

void ExperimentConfig::validate() const {
  if (version != 1) throw std::invalid_argument("config: unsupported version");
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("config: eval_every must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  net.validate();
  sgd.validate();
  scorer_cfg.validate();
  if (imp.has_value()) {
    ImpConfig c = *imp;
    c.train_epochs = epochs;
    c.validate();
  }
  for (const auto& name : scorers) scorer_from_name(name);
  if (data.kind != "blob" && data.kind != "gaussian_model" && data.kind != "csv")
    throw std::invalid_argument("config: data.kind must be blob, gaussian_model or csv");
  if (averaging.mode == AveragingMode::fixed_ema &&
      (averaging.tau < 0.0 || averaging.tau >= 1.0))
    throw std::invalid_argument("config: averaging.tau must be in [0, 1)");
  if (oe.enabled && oe.weight < 0)
    throw std::invalid_argument("config: oe.weight must be >= 0");
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw std::invalid_argument("config " + path + ": " + msg);
}

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& path) {
  for (const auto& [key, value] : obj.items()) {
    if (known.find(key) == known.end()) fail(path + "." + key, "unknown key");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

AveragingMode mode_from_name(const std::string& name) {
  if (name == "running_mean") return AveragingMode::running_mean;
  if (name == "fixed_ema") return AveragingMode::fixed_ema;
  throw std::invalid_argument("config: unknown averaging mode '" + name + "'");
}

std::string mode_name(AveragingMode m) {
  return m == AveragingMode::running_mean ? "running_mean" : "fixed_ema";
}

ImpVariant variant_from_name(const std::string& name) {
  if (name == "rewind") return ImpVariant::rewind;
  if (name == "finetune") return ImpVariant::finetune;
  if (name == "random") return ImpVariant::random;
  throw std::invalid_argument("config: unknown imp variant '" + name + "'");
}

std::string variant_name(ImpVariant v) {
  switch (v) {
    case ImpVariant::rewind: return "rewind";
    case ImpVariant::finetune: return "finetune";
    case ImpVariant::random: return "random";
  }
  return "?";
}

DirectionNorm norm_from_name(const std::string& name) {
  if (name == "per_unit_filterwise") return DirectionNorm::per_unit_filterwise;
  if (name == "global_norm") return DirectionNorm::global_norm;
  if (name == "none") return DirectionNorm::none;
  throw std::invalid_argument("config: unknown direction normalization '" + name + "'");
}

std::string norm_name(DirectionNorm n) {
  switch (n) {
    case DirectionNorm::per_unit_filterwise: return "per_unit_filterwise";
    case DirectionNorm::global_norm: return "global_norm";
    case DirectionNorm::none: return "none";
  }
  return "?";
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

  reject_unknown(j, {"version", "seed", "epochs", "eval_every", "batch_size",
                     "output_dir", "net", "sgd", "averaging", "imp", "scorers",
                     "scorer_config", "data", "oe", "landscape", "theory",
                     "sweep_widths"},
                 "$");

  ExperimentConfig cfg;
  read(j, "version", cfg.version);
  read(j, "seed", cfg.seed);
  read(j, "epochs", cfg.epochs);
  read(j, "eval_every", cfg.eval_every);
  read(j, "batch_size", cfg.batch_size);
  read(j, "output_dir", cfg.output_dir);

  if (j.contains("net")) {
    const json& n = j.at("net");
    reject_unknown(n, {"input_dim", "hidden_widths", "num_classes", "activation"},
                   "$.net");
    read(n, "input_dim", cfg.net.input_dim);
    read(n, "hidden_widths", cfg.net.hidden_widths);
    read(n, "num_classes", cfg.net.num_classes);
    if (n.contains("activation") && n.at("activation").get<std::string>() != "relu")
      fail("$.net.activation", "only relu is supported");
  }

  if (j.contains("sgd")) {
    const json& s = j.at("sgd");
    reject_unknown(s, {"learning_rate", "momentum", "weight_decay", "lr_schedule"},
                   "$.sgd");
    read(s, "learning_rate", cfg.sgd.learning_rate);
    read(s, "momentum", cfg.sgd.momentum);
    read(s, "weight_decay", cfg.sgd.weight_decay);
    if (s.contains("lr_schedule")) {
      cfg.sgd.lr_schedule.clear();
      for (const auto& pair : s.at("lr_schedule")) {
        if (!pair.is_array() || pair.size() != 2)
          fail("$.sgd.lr_schedule", "entries must be [epoch, multiplier]");
        cfg.sgd.lr_schedule.emplace_back(pair[0].get<std::size_t>(),
                                         pair[1].get<double>());
      }
    }
  }

  if (j.contains("averaging")) {
    const json& a = j.at("averaging");
    reject_unknown(a, {"enabled", "t0", "mode", "tau"}, "$.averaging");
    read(a, "enabled", cfg.averaging.enabled);
    if (a.contains("t0")) cfg.averaging.t0 = a.at("t0").get<std::size_t>();
    if (a.contains("mode"))
      cfg.averaging.mode = mode_from_name(a.at("mode").get<std::string>());
    read(a, "tau", cfg.averaging.tau);
  }

  if (j.contains("imp")) {
    const json& im = j.at("imp");
    reject_unknown(im, {"enabled", "rewind_epoch", "rounds", "prune_fraction",
                        "variant"},
                   "$.imp");
    bool enabled = true;
    read(im, "enabled", enabled);
    if (enabled) {
      ImpConfig ic;
      read(im, "rewind_epoch", ic.rewind_epoch);
      read(im, "rounds", ic.rounds);
      read(im, "prune_fraction", ic.prune_fraction);
      if (im.contains("variant"))
        ic.variant = variant_from_name(im.at("variant").get<std::string>());
      cfg.imp = ic;
    }
  }

  read(j, "scorers", cfg.scorers);

  if (j.contains("scorer_config")) {
    const json& sc = j.at("scorer_config");
    reject_unknown(sc, {"odin_temperature", "odin_epsilon", "energy_temperature",
                        "knn_k", "react_percentile", "maha_epsilon"},
                   "$.scorer_config");
    read(sc, "odin_temperature", cfg.scorer_cfg.odin_temperature);
    read(sc, "odin_epsilon", cfg.scorer_cfg.odin_epsilon);
    read(sc, "energy_temperature", cfg.scorer_cfg.energy_temperature);
    read(sc, "knn_k", cfg.scorer_cfg.knn_k);
    read(sc, "react_percentile", cfg.scorer_cfg.react_percentile);
    read(sc, "maha_epsilon", cfg.scorer_cfg.maha_epsilon);
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, {"kind", "blob", "gaussian_model", "train_csv", "test_csv",
                       "ood_csv", "csv_header", "n_train", "n_test", "n_ood"},
                   "$.data");
    read(d, "kind", cfg.data.kind);
    read(d, "n_train", cfg.data.n_train);
    read(d, "n_test", cfg.data.n_test);
    read(d, "n_ood", cfg.data.n_ood);
    read(d, "csv_header", cfg.data.csv_header);
    read(d, "train_csv", cfg.data.train_csv);
    read(d, "test_csv", cfg.data.test_csv);
    read(d, "ood_csv", cfg.data.ood_csv);
    if (d.contains("blob")) {
      const json& b = d.at("blob");
      reject_unknown(b, {"num_classes", "special_dims", "common_dims",
                         "class_separation", "common_mean", "noise_sigma", "seed"},
                     "$.data.blob");
      read(b, "num_classes", cfg.data.blob.num_classes);
      read(b, "special_dims", cfg.data.blob.special_dims);
      read(b, "common_dims", cfg.data.blob.common_dims);
      read(b, "class_separation", cfg.data.blob.class_separation);
      read(b, "common_mean", cfg.data.blob.common_mean);
      read(b, "noise_sigma", cfg.data.blob.noise_sigma);
      read(b, "seed", cfg.data.blob.seed);
    }
    if (d.contains("gaussian_model")) {
      const json& g = d.at("gaussian_model");
      reject_unknown(g, {"d", "eta", "sigma", "seed"}, "$.data.gaussian_model");
      read(g, "d", cfg.data.gaussian.d);
      read(g, "eta", cfg.data.gaussian.eta);
      read(g, "sigma", cfg.data.gaussian.sigma);
      read(g, "seed", cfg.data.gaussian.seed);
    }
  }

  if (j.contains("oe")) {
    const json& o = j.at("oe");
    reject_unknown(o, {"enabled", "weight", "sigma"}, "$.oe");
    read(o, "enabled", cfg.oe.enabled);
    read(o, "weight", cfg.oe.weight);
    read(o, "sigma", cfg.oe.sigma);
  }

  if (j.contains("landscape")) {
    const json& l = j.at("landscape");
    reject_unknown(l, {"normalization", "num_directions", "alpha_points",
                       "alpha_scale", "scorer"},
                   "$.landscape");
    if (l.contains("normalization"))
      cfg.landscape.normalization =
          norm_from_name(l.at("normalization").get<std::string>());
    read(l, "num_directions", cfg.landscape.num_directions);
    read(l, "alpha_points", cfg.landscape.alpha_points);
    read(l, "alpha_scale", cfg.landscape.alpha_scale);
    read(l, "scorer", cfg.landscape.scorer);
  }

  if (j.contains("theory")) {
    const json& t = j.at("theory");
    reject_unknown(t, {"eta", "sigma", "d_values", "delta_values",
                       "lambda_values", "d_for_lambda", "delta_for_lambda"},
                   "$.theory");
    read(t, "eta", cfg.theory.eta);
    read(t, "sigma", cfg.theory.sigma);
    read(t, "d_values", cfg.theory.d_values);
    read(t, "delta_values", cfg.theory.delta_values);
    read(t, "lambda_values", cfg.theory.lambda_values);
    read(t, "d_for_lambda", cfg.theory.d_for_lambda);
    read(t, "delta_for_lambda", cfg.theory.delta_for_lambda);
  }

  read(j, "sweep_widths", cfg.sweep_widths);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json j;
  j["version"] = cfg.version;
  j["seed"] = cfg.seed;
  j["epochs"] = cfg.epochs;
  j["eval_every"] = cfg.eval_every;
  j["batch_size"] = cfg.batch_size;
  j["output_dir"] = cfg.output_dir;
  j["net"] = {{"input_dim", cfg.net.input_dim},
              {"hidden_widths", cfg.net.hidden_widths},
              {"num_classes", cfg.net.num_classes},
              {"activation", "relu"}};
  json sched = json::array();
  for (const auto& [e, m] : cfg.sgd.lr_schedule) sched.push_back({e, m});
  j["sgd"] = {{"learning_rate", cfg.sgd.learning_rate},
              {"momentum", cfg.sgd.momentum},
              {"weight_decay", cfg.sgd.weight_decay},
              {"lr_schedule", sched}};
  j["averaging"] = {{"enabled", cfg.averaging.enabled},
                    {"mode", mode_name(cfg.averaging.mode)},
                    {"tau", cfg.averaging.tau}};
  if (cfg.averaging.t0.has_value()) j["averaging"]["t0"] = *cfg.averaging.t0;
  if (cfg.imp.has_value()) {
    j["imp"] = {{"enabled", true},
                {"rewind_epoch", cfg.imp->rewind_epoch},
                {"rounds", cfg.imp->rounds},
                {"prune_fraction", cfg.imp->prune_fraction},
                {"variant", variant_name(cfg.imp->variant)}};
  }
  j["scorers"] = cfg.scorers;
  j["scorer_config"] = {{"odin_temperature", cfg.scorer_cfg.odin_temperature},
                        {"odin_epsilon", cfg.scorer_cfg.odin_epsilon},
                        {"energy_temperature", cfg.scorer_cfg.energy_temperature},
                        {"knn_k", cfg.scorer_cfg.knn_k},
                        {"react_percentile", cfg.scorer_cfg.react_percentile},
                        {"maha_epsilon", cfg.scorer_cfg.maha_epsilon}};
  j["data"] = {{"kind", cfg.data.kind},
               {"n_train", cfg.data.n_train},
               {"n_test", cfg.data.n_test},
               {"n_ood", cfg.data.n_ood},
               {"csv_header", cfg.data.csv_header},
               {"train_csv", cfg.data.train_csv},
               {"test_csv", cfg.data.test_csv},
               {"ood_csv", cfg.data.ood_csv},
               {"blob",
                {{"num_classes", cfg.data.blob.num_classes},
                 {"special_dims", cfg.data.blob.special_dims},
                 {"common_dims", cfg.data.blob.common_dims},
                 {"class_separation", cfg.data.blob.class_separation},
                 {"common_mean", cfg.data.blob.common_mean},
                 {"noise_sigma", cfg.data.blob.noise_sigma},
                 {"seed", cfg.data.blob.seed}}},
               {"gaussian_model",
                {{"d", cfg.data.gaussian.d},
                 {"eta", cfg.data.gaussian.eta},
                 {"sigma", cfg.data.gaussian.sigma},
                 {"seed", cfg.data.gaussian.seed}}}};
  j["oe"] = {{"enabled", cfg.oe.enabled},
             {"weight", cfg.oe.weight},
             {"sigma", cfg.oe.sigma}};
  j["landscape"] = {{"normalization", norm_name(cfg.landscape.normalization)},
                    {"num_directions", cfg.landscape.num_directions},
                    {"alpha_points", cfg.landscape.alpha_points},
                    {"alpha_scale", cfg.landscape.alpha_scale},
                    {"scorer", cfg.landscape.scorer}};
  j["theory"] = {{"eta", cfg.theory.eta},
                 {"sigma", cfg.theory.sigma},
                 {"d_values", cfg.theory.d_values},
                 {"delta_values", cfg.theory.delta_values},
                 {"lambda_values", cfg.theory.lambda_values},
                 {"d_for_lambda", cfg.theory.d_for_lambda},
                 {"delta_for_lambda", cfg.theory.delta_for_lambda}};
  j["sweep_widths"] = cfg.sweep_widths;
  return j.dump(2) + "\n";
}

}  // namespace aoplab
