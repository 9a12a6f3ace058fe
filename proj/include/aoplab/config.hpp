#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aoplab/averaging.hpp"
#include "aoplab/datagen.hpp"
#include "aoplab/landscape.hpp"
#include "aoplab/net.hpp"
#include "aoplab/pruning.hpp"
#include "aoplab/scoring.hpp"
#include "aoplab/theory.hpp"

namespace aoplab {

struct DataConfig {
  std::string kind = "blob";  // blob | gaussian_model | csv
  BlobTaskSpec blob;
  GaussianModelParams gaussian;
  std::string train_csv, test_csv, ood_csv;
  bool csv_header = false;
  std::size_t n_train = 512;
  std::size_t n_test = 512;
  std::size_t n_ood = 512;
};

struct AveragingConfig {
  bool enabled = true;
  /// Absent = half of the epoch budget (the 100-of-200 default, scaled).
  std::optional<std::size_t> t0;
  AveragingMode mode = AveragingMode::running_mean;
  double tau = 0.99;  // only used by fixed_ema
};

struct OeConfig {
  bool enabled = false;
  double weight = 0.5;
  double sigma = 4.0;  // auxiliary outliers are N(0, sigma^2 I) in input space
};

struct LandscapeConfig {
  DirectionNorm normalization = DirectionNorm::per_unit_filterwise;
  std::size_t num_directions = 10;
  std::size_t alpha_points = 21;  // odd, so alpha = 0 is on the grid
  double alpha_scale = 1.0;       // grid spans [-scale, scale]
  std::string scorer = "msp";

  std::vector<double> alphas() const;
};

struct TheoryConfig {
  double eta = 0.01;
  double sigma = 1.0;
  std::vector<std::size_t> d_values;
  std::vector<double> delta_values = {1.0, 2.0, 3.0};
  std::vector<double> lambda_values;
  std::size_t d_for_lambda = 50000;
  double delta_for_lambda = 2.0;
};

/// Full, serializable description of one run. parse/serialize round-trip
/// losslessly and unknown keys are rejected with their JSON path.
struct ExperimentConfig {
  int version = 1;
  std::uint64_t seed = 1;
  std::size_t epochs = 100;
  std::size_t eval_every = 1;
  std::size_t batch_size = 64;
  std::string output_dir = "out";
  MlpSpec net;
  SgdConfig sgd;
  AveragingConfig averaging;
  std::optional<ImpConfig> imp;
  std::vector<std::string> scorers = {"msp"};
  ScorerConfig scorer_cfg;
  DataConfig data;
  OeConfig oe;
  LandscapeConfig landscape;
  TheoryConfig theory;
  std::vector<std::size_t> sweep_widths;

  std::size_t averaging_t0() const {
    return averaging.t0.has_value() ? *averaging.t0 : epochs / 2;
  }
  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace aoplab
