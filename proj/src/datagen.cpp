#include "aoplab/datagen.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "aoplab/csv.hpp"
#include "aoplab/rng.hpp"

namespace aoplab {

void GaussianModelParams::validate() const {
  if (sigma <= 0) throw std::invalid_argument("sigma must be > 0");
  if (eta < 0) throw std::invalid_argument("eta must be >= 0");
}

namespace {

LabeledDataset sample_gaussian_model(const GaussianModelParams& p,
                                     std::size_t n, double special_mean,
                                     bool labeled, std::uint64_t tag) {
  p.validate();
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  Rng rng(mix_seed(p.seed, tag));
  const std::size_t dim = p.d + 1;

  LabeledDataset out;
  out.inputs = Tensor2(n, dim);
  if (labeled) out.labels.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double sign = (rng.next_u64() & 1) ? 1.0 : -1.0;
    double* row = out.inputs.row(s);
    row[0] = sign * special_mean + p.sigma * rng.normal();
    for (std::size_t i = 1; i < dim; ++i) {
      row[i] = sign * p.eta + p.sigma * rng.normal();
    }
    if (labeled) out.labels.push_back(sign > 0 ? 1 : 0);
  }
  return out;
}

}  // namespace

LabeledDataset sample_id(const GaussianModelParams& params, std::size_t n) {
  LabeledDataset d =
      sample_gaussian_model(params, n, /*special_mean=*/1.0, true, 0xA11CE);
  d.provenance = Provenance::id_train;
  return d;
}

LabeledDataset sample_ood(const GaussianModelParams& params, std::size_t n) {
  LabeledDataset d =
      sample_gaussian_model(params, n, /*special_mean=*/0.0, false, 0xB0B);
  d.provenance = Provenance::ood;
  return d;
}

void BlobTaskSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (special_dims < 1) throw std::invalid_argument("special_dims must be >= 1");
  if (noise_sigma < 0) throw std::invalid_argument("noise_sigma must be >= 0");
}

std::vector<double> BlobTaskSpec::id_class_mean(std::size_t c) const {
  // Axis-aligned placements: +e_axis for the first special_dims classes,
  // then -e_axis, then the same pattern pushed one ring further out.
  std::vector<double> mean(special_dims, 0.0);
  const std::size_t axis = c % special_dims;
  const std::size_t wrap = c / special_dims;
  const double sign = (wrap % 2 == 0) ? 1.0 : -1.0;
  const double ring = 1.0 + static_cast<double>(wrap / 2);
  mean[axis] = sign * ring * class_separation;
  return mean;
}

std::vector<double> BlobTaskSpec::ood_cluster_mean(std::size_t q) const {
  // Midpoints of consecutive ID class means: locations between the training
  // clusters that no ID sample is centered on.
  const auto a = id_class_mean(q % num_classes);
  const auto b = id_class_mean((q + 1) % num_classes);
  std::vector<double> mean(special_dims);
  for (std::size_t i = 0; i < special_dims; ++i) mean[i] = 0.5 * (a[i] + b[i]);
  return mean;
}

namespace {

LabeledDataset sample_blob(const BlobTaskSpec& spec, std::size_t n,
                           bool is_ood, std::uint64_t tag) {
  Rng rng(mix_seed(spec.seed, tag));
  LabeledDataset out;
  out.inputs = Tensor2(n, spec.input_dim());
  if (!is_ood) out.labels.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t cluster = s % spec.num_classes;  // class-balanced
    const auto mean = is_ood ? spec.ood_cluster_mean(cluster)
                             : spec.id_class_mean(cluster);
    double* row = out.inputs.row(s);
    for (std::size_t i = 0; i < spec.special_dims; ++i) {
      row[i] = mean[i] + spec.noise_sigma * rng.normal();
    }
    for (std::size_t i = spec.special_dims; i < spec.input_dim(); ++i) {
      row[i] = spec.common_mean + spec.noise_sigma * rng.normal();
    }
    if (!is_ood) out.labels.push_back(static_cast<int>(cluster));
  }
  return out;
}

}  // namespace

BlobTask make_blob_task(const BlobTaskSpec& spec, std::size_t n_train,
                        std::size_t n_test, std::size_t n_ood) {
  spec.validate();
  if (n_train < spec.num_classes || n_test < spec.num_classes ||
      n_ood < spec.num_classes) {
    throw std::invalid_argument("sample counts must be >= num_classes");
  }
  BlobTask task;
  task.train = sample_blob(spec, n_train, false, 0x7e51);
  task.train.provenance = Provenance::id_train;
  task.test = sample_blob(spec, n_test, false, 0x7e52);
  task.test.provenance = Provenance::id_test;
  task.ood = sample_blob(spec, n_ood, true, 0x7e53);
  task.ood.provenance = Provenance::ood;
  return task;
}

LabeledDataset load_csv(const std::string& path, bool has_header) {
  const auto lines = read_lines(path);
  std::size_t first = has_header ? 1 : 0;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  for (std::size_t li = first; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto fields = split_csv_line(lines[li]);
    if (width == 0) {
      width = fields.size();
      if (width < 2) {
        throw std::runtime_error(path + ":" + std::to_string(li + 1) +
                                 ": need at least one feature and a label");
      }
    } else if (fields.size() != width) {
      throw std::runtime_error(path + ":" + std::to_string(li + 1) +
                               ": ragged row (expected " +
                               std::to_string(width) + " fields, got " +
                               std::to_string(fields.size()) + ")");
    }
    std::vector<double> row;
    row.reserve(width);
    for (std::size_t f = 0; f < width; ++f) {
      row.push_back(parse_double(
          fields[f], path + ":" + std::to_string(li + 1) + ", column " +
                         std::to_string(f + 1)));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": empty dataset");

  LabeledDataset out;
  const std::size_t dim = width - 1;
  out.inputs = Tensor2(rows.size(), dim);
  bool any_id = false, any_ood = false;
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (std::size_t i = 0; i < dim; ++i) out.inputs.at(s, i) = rows[s][i];
    const double lab = rows[s][dim];
    if (lab == -1.0) {
      any_ood = true;
    } else {
      if (lab < 0 || lab != std::floor(lab)) {
        throw std::runtime_error(path + ": label must be a class index or -1, got " +
                                 format_double(lab));
      }
      any_id = true;
      out.labels.push_back(static_cast<int>(lab));
    }
  }
  if (any_id && any_ood) {
    throw std::runtime_error(path + ": mixed ID and OOD rows in one file");
  }
  out.provenance = any_ood ? Provenance::ood : Provenance::id_train;
  return out;
}

void save_csv(const LabeledDataset& data, const std::string& path) {
  std::string buf;
  for (std::size_t s = 0; s < data.inputs.rows; ++s) {
    for (std::size_t i = 0; i < data.inputs.cols; ++i) {
      buf += format_double(data.inputs.at(s, i));
      buf += ',';
    }
    if (data.provenance == Provenance::ood) {
      buf += "-1";
    } else {
      buf += std::to_string(data.labels[s]);
    }
    buf += '\n';
  }
  write_file(path, buf);
}

}  // namespace aoplab
