#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rttd/data.hpp"
#include "rttd/rng.hpp"

namespace rttd::nn {

enum class Activation { relu, tanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

/// Fully connected softmax classifier. Parameters are laid out layer-major:
/// for each layer, the (out x in) row-major weight matrix followed by the bias.
struct ModelArch {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 2;
  Activation activation = Activation::relu;

  void validate() const;
  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden_dims[l - 1]; }
  std::size_t layer_out(std::size_t l) const {
    return l + 1 == num_layers() ? num_classes : hidden_dims[l];
  }
  std::size_t weight_offset(std::size_t l) const;
  std::size_t bias_offset(std::size_t l) const { return weight_offset(l) + layer_in(l) * layer_out(l); }
  std::size_t param_count() const { return weight_offset(num_layers()); }
  std::string describe() const;

  friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

/// Immutable parameter vector bound to an architecture.
class ModelWeights {
 public:
  ModelWeights() = default;
  /// Throws DimensionError on length mismatch, PreconditionError on non-finite values.
  ModelWeights(ModelArch arch, std::vector<double> values);

  static ModelWeights zeros(const ModelArch& arch);

  const ModelArch& arch() const { return arch_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  /// Same architecture, new values.
  ModelWeights with_values(std::vector<double> values) const { return {arch_, std::move(values)}; }

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;

 private:
  ModelArch arch_;
  std::vector<double> values_;
};

struct SubRunSpec {
  std::size_t steps = 1;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t start_step = 0;
  double augment_noise_std = 0.01;

  void validate(std::size_t dataset_size) const;
  friend bool operator==(const SubRunSpec&, const SubRunSpec&) = default;
};

ModelWeights init_weights(const ModelArch& arch, const RngKey& key);

std::vector<double> forward(const ModelWeights& w, std::span<const double> input);
std::vector<double> forward_hidden(const ModelWeights& w, std::span<const double> input);
std::vector<double> softmax(std::span<const double> logits);
/// Index of the largest logit; ties go to the lowest index.
std::size_t argmax(std::span<const double> logits);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean softmax cross-entropy over the batch and its gradient.
LossGrad loss_and_grad(const ModelWeights& w, const LabeledDataset& batch);

/// Adds d(objective)/d(params) to `grad` for one input, given the
/// objective's gradient with respect to the logits.
void accumulate_logit_grad(const ModelWeights& w, std::span<const double> input,
                           std::span<const double> dlogits, std::span<double> grad);

/// Batched forms over `count` inputs stacked row-major (count x input_dim).
/// They agree with forward / accumulate_logit_grad up to summation order.
std::vector<double> forward_rows(const ModelWeights& w, std::span<const double> inputs, std::size_t count);
/// Gradient of an objective over all rows. `dlogits` maps the logits
/// (count x num_classes, row-major) in place to the objective's gradient
/// with respect to them.
std::vector<double> rows_logit_grad(const ModelWeights& w, std::span<const double> inputs, std::size_t count,
                                    const std::function<void(std::vector<double>&)>& dlogits);

/// In-place `values -= lr * grad`.
void sgd_step(std::vector<double>& values, std::span<const double> grad, double lr);

/// Deterministic minibatch source shared by benign and malicious training:
/// key-seeded reshuffle at every epoch, drop-last batching, and per-feature
/// Gaussian jitter drawn from the augment stream.
class MinibatchStream {
 public:
  MinibatchStream(const LabeledDataset& data, const SubRunSpec& spec, const RngKey& key);
  LabeledDataset next();
  std::size_t batches_per_epoch() const { return data_->size() / spec_.batch_size; }

 private:
  const LabeledDataset* data_;
  SubRunSpec spec_;
  Rng shuffle_rng_;
  Rng augment_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Exactly `spec.steps` plain SGD updates starting from `w`.
ModelWeights train_subrun(const ModelWeights& w, const LabeledDataset& data, const SubRunSpec& spec,
                          const RngKey& key);

double evaluate_accuracy(const ModelWeights& w, const LabeledDataset& data);

}  // namespace rttd::nn
