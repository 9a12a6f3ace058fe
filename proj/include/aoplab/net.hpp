#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "aoplab/tensor.hpp"

namespace aoplab {

/// Width-parameterized ReLU MLP. hidden_widths may be empty (linear model).
struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;
  std::size_t num_classes = 2;

  std::size_t num_layers() const { return hidden_widths.size() + 1; }
  std::size_t layer_in(std::size_t l) const {
    return l == 0 ? input_dim : hidden_widths[l - 1];
  }
  std::size_t layer_out(std::size_t l) const {
    return l == hidden_widths.size() ? num_classes : hidden_widths[l];
  }
  void validate() const;
};

/// One dense layer. weight is out x in so that row j holds everything
/// feeding output unit j.
struct DenseLayer {
  Tensor2 weight;
  std::vector<double> bias;
};

struct ParamSet {
  std::vector<DenseLayer> layers;

  std::size_t total_count() const;   // weights + biases
  std::size_t weight_count() const;  // weights only (the prunable set)

  /// Flattened copy, layer order, weights row-major then bias per layer.
  std::vector<double> to_flat() const;
  void from_flat(const std::vector<double>& flat);

  void fill(double v);
  /// this += alpha * other (shapes must agree).
  void axpy(double alpha, const ParamSet& other);
  bool same_shape(const ParamSet& other) const;
};

/// Per-weight keep/drop bits, aligned flat-row-major with each weight
/// tensor. Biases are never masked.
struct SparsityMask {
  std::vector<std::vector<std::uint8_t>> layer_bits;

  std::size_t kept_count() const;
  std::size_t total_bits() const;
  bool aligned_with(const ParamSet& params) const;

  static SparsityMask full(const ParamSet& params);
};

struct ForwardTrace {
  std::vector<Tensor2> pre_activations;  // one per layer, batch x out
  std::vector<Tensor2> activations;      // post-ReLU, one per hidden layer
  Tensor2 logits;                        // batch x num_classes
  Tensor2 features;  // post-activation output of the last hidden layer;
                     // equals the input batch for a model with no hidden layer
};

struct SgdConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  /// (epoch, multiplier) pairs, epochs strictly increasing; the multiplier
  /// applies from that epoch on (cumulative, like step decay).
  std::vector<std::pair<std::size_t, double>> lr_schedule;

  void validate() const;
};

/// Effective learning rate at a 1-based epoch under the step schedule.
double lr_at_epoch(const SgdConfig& cfg, std::size_t epoch);

/// He-style fan-in scaled Gaussian weights, zero biases. The seed is all
/// that is needed to re-materialize the exact initialization.
ParamSet init_params(const MlpSpec& spec, std::uint64_t seed);

ForwardTrace forward(const MlpSpec& spec, const ParamSet& params,
                     const Tensor2& batch);

/// Row-wise softmax of a logits matrix (max-shifted).
Tensor2 softmax_rows(const Tensor2& logits);

struct BackwardResult {
  double loss = 0.0;       // mean softmax cross-entropy over the batch
  ParamSet grads;          // masked weight coordinates are exactly 0
  Tensor2 input_grads;     // batch-shaped d(loss)/d(input)
};

/// Mean softmax cross-entropy and its exact gradients. `temperature`
/// rescales logits before the softmax (1 = plain cross-entropy); the
/// perturbation-based scorers rely on the temperature-scaled path.
BackwardResult backward(const MlpSpec& spec, const ParamSet& params,
                        const Tensor2& batch, const std::vector<int>& labels,
                        const SparsityMask* mask = nullptr,
                        double temperature = 1.0);

/// Like backward() but against the uniform target distribution
/// (cross-entropy to uniform; the outlier-exposure term). No input grads.
BackwardResult backward_uniform_target(const MlpSpec& spec,
                                       const ParamSet& params,
                                       const Tensor2& batch,
                                       const SparsityMask* mask = nullptr);

/// Backpropagate an arbitrary gradient w.r.t. the penultimate features down
/// to the input batch (used by feature-space perturbation scorers).
Tensor2 input_grads_from_feature_grads(const MlpSpec& spec,
                                       const ParamSet& params,
                                       const ForwardTrace& trace,
                                       const Tensor2& feature_grads);

/// v <- momentum*v + (grad + weight_decay*theta); theta <- theta - lr*v.
/// Biases are not weight-decayed. Masked weights (and their velocity)
/// stay exactly 0.
void sgd_step(ParamSet& params, const ParamSet& grads, ParamSet& velocity,
              const SgdConfig& cfg, double lr,
              const SparsityMask* mask = nullptr);

/// Fraction of argmax predictions that disagree with labels.
double classification_error(const Tensor2& logits,
                            const std::vector<int>& labels);

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;  // drives the per-epoch shuffle
  const SparsityMask* mask = nullptr;
  /// Optional outlier-exposure pool: each minibatch adds
  /// oe_weight * (cross-entropy to uniform) on a same-sized outlier slice.
  const Tensor2* oe_inputs = nullptr;
  double oe_weight = 0.0;
  /// Copy of the weights right after this epoch finishes (0 = the untrained
  /// start). Used for rewinding.
  std::size_t snapshot_epoch = static_cast<std::size_t>(-1);
  /// Called after every epoch with (epoch, params); epochs are 1-based.
  std::function<void(std::size_t, const ParamSet&)> on_epoch_end;
};

struct TrainResult {
  ParamSet params;
  std::optional<ParamSet> snapshot;
  double final_loss = 0.0;
};

/// Single-threaded minibatch SGD loop. The epoch order, the seeded shuffle
/// and the update arithmetic are all deterministic, so identical
/// (start, cfg, options) reproduce bitwise-identical weights.
TrainResult train_classifier(const MlpSpec& spec, const ParamSet& start,
                             const Tensor2& inputs,
                             const std::vector<int>& labels,
                             const SgdConfig& cfg,
                             const TrainOptions& options);

}  // namespace aoplab
