#include "aoplab/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "aoplab/rng.hpp"

namespace aoplab {

namespace {

// out[b,:] += W * in[b,:] with W out x in; row-major friendly loop order.
void affine_forward(const Tensor2& w, const std::vector<double>& b,
                    const Tensor2& in, Tensor2& out) {
  const std::size_t batch = in.rows, nin = w.cols, nout = w.rows;
  for (std::size_t s = 0; s < batch; ++s) {
    const double* x = in.row(s);
    double* z = out.row(s);
    for (std::size_t j = 0; j < nout; ++j) {
      const double* wr = w.row(j);
      double acc = b[j];
      for (std::size_t i = 0; i < nin; ++i) acc += wr[i] * x[i];
      z[j] = acc;
    }
  }
}

void check_params_match(const MlpSpec& spec, const ParamSet& params) {
  if (params.layers.size() != spec.num_layers()) {
    throw std::invalid_argument("params: expected " +
                                std::to_string(spec.num_layers()) +
                                " layers, got " +
                                std::to_string(params.layers.size()));
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    require_shape(params.layers[l].weight, spec.layer_out(l), spec.layer_in(l),
                  "layer " + std::to_string(l) + " weight");
    if (params.layers[l].bias.size() != spec.layer_out(l)) {
      throw std::invalid_argument("layer " + std::to_string(l) +
                                  " bias: wrong length");
    }
  }
}

}  // namespace

void MlpSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  for (std::size_t w : hidden_widths) {
    if (w < 1) throw std::invalid_argument("hidden widths must be >= 1");
  }
}

std::size_t ParamSet::total_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::size_t ParamSet::weight_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size();
  return n;
}

std::vector<double> ParamSet::to_flat() const {
  std::vector<double> flat;
  flat.reserve(total_count());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.data.begin(), l.weight.data.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void ParamSet::from_flat(const std::vector<double>& flat) {
  if (flat.size() != total_count()) {
    throw std::invalid_argument("from_flat: length mismatch");
  }
  std::size_t p = 0;
  for (auto& l : layers) {
    std::copy_n(flat.begin() + p, l.weight.size(), l.weight.data.begin());
    p += l.weight.size();
    std::copy_n(flat.begin() + p, l.bias.size(), l.bias.begin());
    p += l.bias.size();
  }
}

void ParamSet::fill(double v) {
  for (auto& l : layers) {
    std::fill(l.weight.data.begin(), l.weight.data.end(), v);
    std::fill(l.bias.begin(), l.bias.end(), v);
  }
}

void ParamSet::axpy(double alpha, const ParamSet& other) {
  if (!same_shape(other)) throw std::invalid_argument("axpy: shape mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& w = layers[l].weight.data;
    const auto& ow = other.layers[l].weight.data;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += alpha * ow[i];
    auto& b = layers[l].bias;
    const auto& ob = other.layers[l].bias;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += alpha * ob[i];
  }
}

bool ParamSet::same_shape(const ParamSet& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weight.rows != other.layers[l].weight.rows ||
        layers[l].weight.cols != other.layers[l].weight.cols ||
        layers[l].bias.size() != other.layers[l].bias.size())
      return false;
  }
  return true;
}

std::size_t SparsityMask::kept_count() const {
  std::size_t n = 0;
  for (const auto& bits : layer_bits)
    for (std::uint8_t b : bits) n += b;
  return n;
}

std::size_t SparsityMask::total_bits() const {
  std::size_t n = 0;
  for (const auto& bits : layer_bits) n += bits.size();
  return n;
}

bool SparsityMask::aligned_with(const ParamSet& params) const {
  if (layer_bits.size() != params.layers.size()) return false;
  for (std::size_t l = 0; l < layer_bits.size(); ++l) {
    if (layer_bits[l].size() != params.layers[l].weight.size()) return false;
  }
  return true;
}

SparsityMask SparsityMask::full(const ParamSet& params) {
  SparsityMask m;
  m.layer_bits.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    m.layer_bits.emplace_back(l.weight.size(), std::uint8_t{1});
  }
  return m;
}

void SgdConfig::validate() const {
  if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be > 0");
  if (momentum < 0 || momentum >= 1)
    throw std::invalid_argument("momentum must be in [0, 1)");
  if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
  for (std::size_t i = 1; i < lr_schedule.size(); ++i) {
    if (lr_schedule[i].first <= lr_schedule[i - 1].first)
      throw std::invalid_argument("lr_schedule epochs must be strictly increasing");
  }
}

double lr_at_epoch(const SgdConfig& cfg, std::size_t epoch) {
  double lr = cfg.learning_rate;
  for (const auto& [e, mult] : cfg.lr_schedule) {
    if (epoch >= e) lr *= mult;
  }
  return lr;
}

ParamSet init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(mix_seed(seed, /*tag=*/0x1717));
  ParamSet p;
  p.layers.resize(spec.num_layers());
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t nin = spec.layer_in(l), nout = spec.layer_out(l);
    auto& layer = p.layers[l];
    layer.weight = Tensor2(nout, nin);
    layer.bias.assign(nout, 0.0);
    const double scale = std::sqrt(2.0 / static_cast<double>(nin));
    for (double& w : layer.weight.data) w = scale * rng.normal();
  }
  return p;
}

ForwardTrace forward(const MlpSpec& spec, const ParamSet& params,
                     const Tensor2& batch) {
  spec.validate();
  check_params_match(spec, params);
  if (batch.cols != spec.input_dim) {
    throw std::invalid_argument("batch: expected " +
                                std::to_string(spec.input_dim) +
                                " input columns, got " +
                                std::to_string(batch.cols));
  }

  ForwardTrace trace;
  const std::size_t L = spec.num_layers();
  trace.pre_activations.reserve(L);
  trace.activations.reserve(spec.hidden_widths.size());

  const Tensor2* cur = &batch;
  for (std::size_t l = 0; l < L; ++l) {
    Tensor2 z(batch.rows, spec.layer_out(l));
    affine_forward(params.layers[l].weight, params.layers[l].bias, *cur, z);
    trace.pre_activations.push_back(std::move(z));
    if (l + 1 < L) {
      Tensor2 a = trace.pre_activations.back();
      for (double& v : a.data) v = v > 0.0 ? v : 0.0;
      trace.activations.push_back(std::move(a));
      cur = &trace.activations.back();
    }
  }
  trace.logits = trace.pre_activations.back();
  trace.features = trace.activations.empty() ? batch : trace.activations.back();
  return trace;
}

Tensor2 softmax_rows(const Tensor2& logits) {
  Tensor2 out(logits.rows, logits.cols);
  for (std::size_t s = 0; s < logits.rows; ++s) {
    const double* z = logits.row(s);
    double* p = out.row(s);
    double m = z[0];
    for (std::size_t c = 1; c < logits.cols; ++c) m = std::max(m, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) {
      p[c] = std::exp(z[c] - m);
      sum += p[c];
    }
    for (std::size_t c = 0; c < logits.cols; ++c) p[c] /= sum;
  }
  return out;
}

namespace {

ParamSet zeros_like(const ParamSet& params) {
  ParamSet g = params;
  g.fill(0.0);
  return g;
}

// Shared backprop: takes d(loss)/d(logits) rows and pushes through the net.
BackwardResult backprop_from_logit_grads(const MlpSpec& spec,
                                         const ParamSet& params,
                                         const Tensor2& batch,
                                         const ForwardTrace& trace,
                                         Tensor2 dlogits,
                                         const SparsityMask* mask,
                                         bool want_input_grads) {
  BackwardResult res;
  res.grads = zeros_like(params);
  const std::size_t L = spec.num_layers();
  const std::size_t batch_n = batch.rows;

  Tensor2 delta = std::move(dlogits);  // batch x layer_out(l)
  for (std::size_t li = L; li-- > 0;) {
    const Tensor2& input_act =
        li == 0 ? batch : trace.activations[li - 1];
    auto& gw = res.grads.layers[li].weight;
    auto& gb = res.grads.layers[li].bias;
    const std::size_t nout = gw.rows, nin = gw.cols;

    for (std::size_t s = 0; s < batch_n; ++s) {
      const double* d = delta.row(s);
      const double* a = input_act.row(s);
      for (std::size_t j = 0; j < nout; ++j) {
        const double dj = d[j];
        if (dj == 0.0) continue;
        double* gwr = gw.row(j);
        for (std::size_t i = 0; i < nin; ++i) gwr[i] += dj * a[i];
        gb[j] += dj;
      }
    }

    if (li > 0 || want_input_grads) {
      // delta_prev = W^T delta, gated by ReLU' when not the input layer.
      const Tensor2& w = params.layers[li].weight;
      Tensor2 prev(batch_n, nin);
      for (std::size_t s = 0; s < batch_n; ++s) {
        const double* d = delta.row(s);
        double* dp = prev.row(s);
        for (std::size_t j = 0; j < nout; ++j) {
          const double dj = d[j];
          if (dj == 0.0) continue;
          const double* wr = w.row(j);
          for (std::size_t i = 0; i < nin; ++i) dp[i] += dj * wr[i];
        }
      }
      if (li > 0) {
        const Tensor2& pre = trace.pre_activations[li - 1];
        for (std::size_t i = 0; i < prev.data.size(); ++i) {
          if (pre.data[i] <= 0.0) prev.data[i] = 0.0;
        }
      }
      if (li == 0) {
        res.input_grads = std::move(prev);
      } else {
        delta = std::move(prev);
      }
    }
  }

  if (mask != nullptr) {
    if (!mask->aligned_with(params))
      throw std::invalid_argument("mask not aligned with params");
    for (std::size_t l = 0; l < res.grads.layers.size(); ++l) {
      auto& w = res.grads.layers[l].weight.data;
      const auto& bits = mask->layer_bits[l];
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!bits[i]) w[i] = 0.0;
      }
    }
  }
  if (!want_input_grads) res.input_grads = Tensor2(0, 0);
  return res;
}

}  // namespace

BackwardResult backward(const MlpSpec& spec, const ParamSet& params,
                        const Tensor2& batch, const std::vector<int>& labels,
                        const SparsityMask* mask, double temperature) {
  if (labels.size() != batch.rows)
    throw std::invalid_argument("labels: one per batch row required");
  if (temperature <= 0.0)
    throw std::invalid_argument("temperature must be > 0");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes)
      throw std::invalid_argument("label out of [0, num_classes)");
  }

  ForwardTrace trace = forward(spec, params, batch);
  const std::size_t n = batch.rows, C = spec.num_classes;

  Tensor2 scaled = trace.logits;
  if (temperature != 1.0) {
    for (double& v : scaled.data) v /= temperature;
  }
  Tensor2 probs = softmax_rows(scaled);

  double loss = 0.0;
  Tensor2 dlogits(n, C);
  for (std::size_t s = 0; s < n; ++s) {
    const double* z = scaled.row(s);
    const double* p = probs.row(s);
    double m = z[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
    double lse = 0.0;
    for (std::size_t c = 0; c < C; ++c) lse += std::exp(z[c] - m);
    lse = m + std::log(lse);
    loss += lse - z[static_cast<std::size_t>(labels[s])];
    double* d = dlogits.row(s);
    const double inv = 1.0 / (static_cast<double>(n) * temperature);
    for (std::size_t c = 0; c < C; ++c) d[c] = p[c] * inv;
    d[static_cast<std::size_t>(labels[s])] -= inv;
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) {
    throw std::runtime_error("non-finite training loss encountered");
  }

  BackwardResult res = backprop_from_logit_grads(
      spec, params, batch, trace, std::move(dlogits), mask,
      /*want_input_grads=*/true);
  res.loss = loss;
  return res;
}

BackwardResult backward_uniform_target(const MlpSpec& spec,
                                       const ParamSet& params,
                                       const Tensor2& batch,
                                       const SparsityMask* mask) {
  ForwardTrace trace = forward(spec, params, batch);
  const std::size_t n = batch.rows, C = spec.num_classes;
  Tensor2 probs = softmax_rows(trace.logits);

  double loss = 0.0;
  Tensor2 dlogits(n, C);
  const double u = 1.0 / static_cast<double>(C);
  for (std::size_t s = 0; s < n; ++s) {
    const double* z = trace.logits.row(s);
    const double* p = probs.row(s);
    double m = z[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, z[c]);
    double lse = 0.0;
    for (std::size_t c = 0; c < C; ++c) lse += std::exp(z[c] - m);
    lse = m + std::log(lse);
    double mean_logit = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean_logit += z[c];
    mean_logit *= u;
    loss += lse - mean_logit;
    double* d = dlogits.row(s);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t c = 0; c < C; ++c) d[c] = (p[c] - u) * inv;
  }
  loss /= static_cast<double>(n);

  BackwardResult res = backprop_from_logit_grads(
      spec, params, batch, trace, std::move(dlogits), mask,
      /*want_input_grads=*/false);
  res.loss = loss;
  return res;
}

Tensor2 input_grads_from_feature_grads(const MlpSpec& spec,
                                       const ParamSet& params,
                                       const ForwardTrace& trace,
                                       const Tensor2& feature_grads) {
  if (spec.hidden_widths.empty()) {
    // Features are the raw inputs; the gradient passes through unchanged.
    return feature_grads;
  }
  const std::size_t H = spec.hidden_widths.size();
  const std::size_t n = feature_grads.rows;
  require_shape(feature_grads, n, spec.hidden_widths.back(), "feature_grads");

  Tensor2 delta = feature_grads;
  // Gate by the last hidden ReLU first, then walk the hidden stack down.
  for (std::size_t li = H; li-- > 0;) {
    const Tensor2& pre = trace.pre_activations[li];
    for (std::size_t i = 0; i < delta.data.size(); ++i) {
      if (pre.data[i] <= 0.0) delta.data[i] = 0.0;
    }
    const Tensor2& w = params.layers[li].weight;
    Tensor2 prev(n, w.cols);
    for (std::size_t s = 0; s < n; ++s) {
      const double* d = delta.row(s);
      double* dp = prev.row(s);
      for (std::size_t j = 0; j < w.rows; ++j) {
        const double dj = d[j];
        if (dj == 0.0) continue;
        const double* wr = w.row(j);
        for (std::size_t i = 0; i < w.cols; ++i) dp[i] += dj * wr[i];
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

void sgd_step(ParamSet& params, const ParamSet& grads, ParamSet& velocity,
              const SgdConfig& cfg, double lr, const SparsityMask* mask) {
  if (!params.same_shape(grads) || !params.same_shape(velocity))
    throw std::invalid_argument("sgd_step: shape mismatch");
  if (mask != nullptr && !mask->aligned_with(params))
    throw std::invalid_argument("sgd_step: mask not aligned");

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& w = params.layers[l].weight.data;
    auto& vw = velocity.layers[l].weight.data;
    const auto& gw = grads.layers[l].weight.data;
    const std::uint8_t* bits =
        mask != nullptr ? mask->layer_bits[l].data() : nullptr;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (bits != nullptr && !bits[i]) {
        w[i] = 0.0;
        vw[i] = 0.0;
        continue;
      }
      vw[i] = cfg.momentum * vw[i] + (gw[i] + cfg.weight_decay * w[i]);
      w[i] -= lr * vw[i];
    }
    // Biases: momentum SGD without weight decay.
    auto& b = params.layers[l].bias;
    auto& vb = velocity.layers[l].bias;
    const auto& gb = grads.layers[l].bias;
    for (std::size_t i = 0; i < b.size(); ++i) {
      vb[i] = cfg.momentum * vb[i] + gb[i];
      b[i] -= lr * vb[i];
    }
  }
}

TrainResult train_classifier(const MlpSpec& spec, const ParamSet& start,
                             const Tensor2& inputs,
                             const std::vector<int>& labels,
                             const SgdConfig& cfg,
                             const TrainOptions& options) {
  cfg.validate();
  if (inputs.rows == 0) throw std::invalid_argument("train: empty dataset");
  if (options.batch_size == 0)
    throw std::invalid_argument("train: batch_size must be >= 1");
  if (options.oe_inputs != nullptr && options.oe_weight < 0)
    throw std::invalid_argument("train: OE weight must be >= 0");

  TrainResult result;
  result.params = start;
  if (options.mask != nullptr) {
    if (!options.mask->aligned_with(start))
      throw std::invalid_argument("train: mask not aligned with start weights");
    for (std::size_t l = 0; l < result.params.layers.size(); ++l) {
      auto& w = result.params.layers[l].weight.data;
      const auto& bits = options.mask->layer_bits[l];
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!bits[i]) w[i] = 0.0;
      }
    }
  }
  ParamSet velocity = result.params;
  velocity.fill(0.0);

  if (options.snapshot_epoch == 0) result.snapshot = result.params;

  std::vector<std::size_t> order(inputs.rows);
  std::size_t oe_cursor = 0;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(options.seed, 0x50000 + epoch));
    shuffle_rng.shuffle(order);

    for (std::size_t pos = 0; pos < order.size(); pos += options.batch_size) {
      const std::size_t bs = std::min(options.batch_size, order.size() - pos);
      Tensor2 batch(bs, inputs.cols);
      std::vector<int> batch_labels(bs);
      for (std::size_t b = 0; b < bs; ++b) {
        const std::size_t src = order[pos + b];
        std::copy_n(inputs.row(src), inputs.cols, batch.row(b));
        batch_labels[b] = labels[src];
      }

      BackwardResult back;
      try {
        back = backward(spec, result.params, batch, batch_labels, options.mask);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string(e.what()) + " (epoch " +
                                 std::to_string(epoch) + ", batch index " +
                                 std::to_string(pos / options.batch_size) + ")");
      }

      if (options.oe_inputs != nullptr && options.oe_weight > 0.0) {
        const Tensor2& pool = *options.oe_inputs;
        Tensor2 oe_batch(bs, pool.cols);
        for (std::size_t b = 0; b < bs; ++b) {
          std::copy_n(pool.row(oe_cursor), pool.cols, oe_batch.row(b));
          oe_cursor = (oe_cursor + 1) % pool.rows;
        }
        BackwardResult oe = backward_uniform_target(spec, result.params,
                                                    oe_batch, options.mask);
        back.grads.axpy(options.oe_weight, oe.grads);
        back.loss += options.oe_weight * oe.loss;
      }

      sgd_step(result.params, back.grads, velocity, cfg, lr, options.mask);
      result.final_loss = back.loss;
    }

    if (epoch == options.snapshot_epoch) result.snapshot = result.params;
    if (options.on_epoch_end) options.on_epoch_end(epoch, result.params);
  }
  return result;
}

double classification_error(const Tensor2& logits,
                            const std::vector<int>& labels) {
  if (labels.size() != logits.rows)
    throw std::invalid_argument("classification_error: label count mismatch");
  std::size_t wrong = 0;
  for (std::size_t s = 0; s < logits.rows; ++s) {
    const double* z = logits.row(s);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols; ++c) {
      if (z[c] > z[best]) best = c;
    }
    if (best != static_cast<std::size_t>(labels[s])) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(logits.rows);
}

}  // namespace aoplab
