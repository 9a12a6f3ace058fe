#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aoplab/tensor.hpp"

namespace aoplab {

/// Parameters of the two-population Gaussian data model: d common features
/// with mean eta shared by both populations, plus one special feature whose
/// mean is 1 for in-distribution data and 0 for out-of-distribution data.
struct GaussianModelParams {
  std::size_t d = 0;     // number of common features (total dim is d+1)
  double eta = 0.01;     // common-feature mean
  double sigma = 1.0;    // shared isotropic noise scale, > 0
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Provenance { id_train, id_test, ood };

struct LabeledDataset {
  Tensor2 inputs;
  std::vector<int> labels;  // empty iff provenance == ood
  Provenance provenance = Provenance::id_train;
};

/// n rows of y*mu_ID + sigma*eps with y uniform over {-1,+1}; labels map
/// y=-1 -> 0, y=+1 -> 1.
LabeledDataset sample_id(const GaussianModelParams& params, std::size_t n);

/// n rows of q*mu_OOD + sigma*eps, q uniform over {-1,+1}; unlabeled.
LabeledDataset sample_ood(const GaussianModelParams& params, std::size_t n);

/// Multi-class blob task: classes are separated on the special dims, the
/// common dims carry an identical nuisance distribution for ID and OOD
/// points, and OOD clusters sit at special-dim locations unseen in training.
struct BlobTaskSpec {
  std::size_t num_classes = 4;
  std::size_t special_dims = 4;
  std::size_t common_dims = 0;
  double class_separation = 3.0;
  double common_mean = 0.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return special_dims + common_dims; }
  void validate() const;

  /// Special-dim mean of ID class c.
  std::vector<double> id_class_mean(std::size_t c) const;
  /// Special-dim mean of OOD cluster q (midpoints between ID class means).
  std::vector<double> ood_cluster_mean(std::size_t q) const;
};

struct BlobTask {
  LabeledDataset train;
  LabeledDataset test;
  LabeledDataset ood;
};

BlobTask make_blob_task(const BlobTaskSpec& spec, std::size_t n_train,
                        std::size_t n_test, std::size_t n_ood);

/// Numeric CSV loader; last column is the class label, with -1 marking OOD
/// rows. A header row is skipped when has_header is true. Ragged rows and
/// non-numeric cells produce a parse error naming line and column.
LabeledDataset load_csv(const std::string& path, bool has_header = false);

/// Exporter matching load_csv (f0,...,fk,label with -1 for OOD).
void save_csv(const LabeledDataset& data, const std::string& path);

}  // namespace aoplab
