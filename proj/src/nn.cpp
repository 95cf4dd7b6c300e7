#include "rttd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "rttd/error.hpp"

namespace rttd::nn {

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw PreconditionError("unknown activation '" + std::string(s) + "'");
}

void ModelArch::validate() const {
  if (input_dim < 1) throw PreconditionError("arch: input_dim must be >= 1");
  if (num_classes < 2) throw PreconditionError("arch: num_classes must be >= 2");
  for (auto h : hidden_dims)
    if (h < 1) throw PreconditionError("arch: hidden widths must be >= 1");
}

std::size_t ModelArch::weight_offset(std::size_t l) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < l; ++i) off += layer_out(i) * (layer_in(i) + 1);
  return off;
}

std::string ModelArch::describe() const {
  std::ostringstream os;
  os << input_dim;
  for (auto h : hidden_dims) os << '-' << h;
  os << '-' << num_classes << ' ' << to_string(activation);
  return os.str();
}

ModelWeights::ModelWeights(ModelArch arch, std::vector<double> values)
    : arch_(std::move(arch)), values_(std::move(values)) {
  arch_.validate();
  if (values_.size() != arch_.param_count())
    throw DimensionError("weights: expected " + std::to_string(arch_.param_count()) + " values, got " +
                         std::to_string(values_.size()));
  for (double v : values_)
    if (!std::isfinite(v)) throw PreconditionError("weights: non-finite parameter value");
}

ModelWeights ModelWeights::zeros(const ModelArch& arch) {
  arch.validate();
  return {arch, std::vector<double>(arch.param_count(), 0.0)};
}

void SubRunSpec::validate(std::size_t dataset_size) const {
  if (steps < 1) throw PreconditionError("sub-run: steps must be >= 1");
  // lr = 0 is allowed as a no-op sub-run; scenarios still require eta > 0
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw PreconditionError("sub-run: learning_rate must be >= 0");
  if (batch_size < 1) throw PreconditionError("sub-run: batch_size must be >= 1");
  if (batch_size > dataset_size) throw PreconditionError("sub-run: batch_size exceeds dataset size");
  if (!(augment_noise_std >= 0.0)) throw PreconditionError("sub-run: augment_noise_std must be >= 0");
}

ModelWeights init_weights(const ModelArch& arch, const RngKey& key) {
  arch.validate();
  Rng rng(key);
  std::vector<double> values(arch.param_count(), 0.0);
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const std::size_t fan_in = arch.layer_in(l);
    const std::size_t fan_out = arch.layer_out(l);
    const double scale = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    const std::size_t w0 = arch.weight_offset(l);
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) values[w0 + i] = rng.uniform(-scale, scale);
    // biases start at zero
  }
  return {arch, std::move(values)};
}

namespace {

void check_input(const ModelArch& arch, std::span<const double> input) {
  if (input.size() != arch.input_dim)
    throw DimensionError("input has " + std::to_string(input.size()) + " features, model expects " +
                         std::to_string(arch.input_dim));
}

double activate(Activation a, double z) { return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z); }

// Derivative expressed through the activation output.
double activate_grad(Activation a, double z, double out) {
  return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

// Pre-activations and activations of every layer for one input.
struct Trace {
  std::vector<std::vector<double>> pre;   // per layer z
  std::vector<std::vector<double>> post;  // per layer output (logits for the last)
};

void affine(std::span<const double> params, const ModelArch& arch, std::size_t l,
            std::span<const double> in, std::vector<double>& out) {
  const std::size_t n_in = arch.layer_in(l);
  const std::size_t n_out = arch.layer_out(l);
  const double* w = params.data() + arch.weight_offset(l);
  const double* b = params.data() + arch.bias_offset(l);
  out.assign(n_out, 0.0);
  for (std::size_t o = 0; o < n_out; ++o) {
    double acc = b[o];
    const double* row = w + o * n_in;
    for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

Trace run(const ModelWeights& w, std::span<const double> input, std::size_t layers) {
  const auto& arch = w.arch();
  Trace t;
  t.pre.resize(layers);
  t.post.resize(layers);
  std::span<const double> cur = input;
  for (std::size_t l = 0; l < layers; ++l) {
    affine(w.values(), arch, l, cur, t.pre[l]);
    if (l + 1 == arch.num_layers()) {
      t.post[l] = t.pre[l];
    } else {
      t.post[l].resize(t.pre[l].size());
      for (std::size_t i = 0; i < t.pre[l].size(); ++i) t.post[l][i] = activate(arch.activation, t.pre[l][i]);
    }
    cur = t.post[l];
  }
  return t;
}

void backprop(const ModelWeights& w, std::span<const double> input, const Trace& t,
              std::span<const double> dlogits, std::span<double> grad) {
  const auto& arch = w.arch();
  const auto params = w.values();
  std::vector<double> delta(dlogits.begin(), dlogits.end());
  std::vector<double> prev;
  for (std::size_t l = arch.num_layers(); l-- > 0;) {
    const std::size_t n_in = arch.layer_in(l);
    const std::size_t n_out = arch.layer_out(l);
    std::span<const double> a_in = l == 0 ? input : std::span<const double>(t.post[l - 1]);
    double* gw = grad.data() + arch.weight_offset(l);
    double* gb = grad.data() + arch.bias_offset(l);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = delta[o];
      double* grow = gw + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) grow[i] += d * a_in[i];
      gb[o] += d;
    }
    if (l == 0) break;
    const double* wmat = params.data() + arch.weight_offset(l);
    prev.assign(n_in, 0.0);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = delta[o];
      const double* row = wmat + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) prev[i] += row[i] * d;
    }
    for (std::size_t i = 0; i < n_in; ++i)
      prev[i] *= activate_grad(arch.activation, t.pre[l - 1][i], t.post[l - 1][i]);
    delta.swap(prev);
  }
}

}  // namespace

std::vector<double> forward(const ModelWeights& w, std::span<const double> input) {
  check_input(w.arch(), input);
  auto t = run(w, input, w.arch().num_layers());
  return std::move(t.post.back());
}

std::vector<double> forward_hidden(const ModelWeights& w, std::span<const double> input) {
  const auto& arch = w.arch();
  if (arch.hidden_dims.empty()) throw PreconditionError("forward_hidden: model has no hidden layer");
  check_input(arch, input);
  auto t = run(w, input, arch.num_layers() - 1);
  return std::move(t.post.back());
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::size_t argmax(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

LossGrad loss_and_grad(const ModelWeights& w, const LabeledDataset& batch) {
  const auto& arch = w.arch();
  if (batch.empty()) throw PreconditionError("loss_and_grad: empty batch");
  if (batch.dim != arch.input_dim) throw DimensionError("loss_and_grad: batch feature dim mismatch");
  LossGrad out;
  out.grad.assign(w.size(), 0.0);
  std::vector<double> dlogits(arch.num_classes);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const int y = batch.labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= arch.num_classes)
      throw PreconditionError("loss_and_grad: label " + std::to_string(y) + " out of range");
    const auto x = batch.row(n);
    const auto t = run(w, x, arch.num_layers());
    const auto& z = t.post.back();
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    out.loss += lse - z[static_cast<std::size_t>(y)];
    for (std::size_t c = 0; c < z.size(); ++c) dlogits[c] = std::exp(z[c] - lse);
    dlogits[static_cast<std::size_t>(y)] -= 1.0;
    backprop(w, x, t, dlogits, out.grad);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (auto& g : out.grad) g *= inv;
  return out;
}

void accumulate_logit_grad(const ModelWeights& w, std::span<const double> input,
                           std::span<const double> dlogits, std::span<double> grad) {
  check_input(w.arch(), input);
  if (dlogits.size() != w.arch().num_classes || grad.size() != w.size())
    throw DimensionError("accumulate_logit_grad: size mismatch");
  const auto t = run(w, input, w.arch().num_layers());
  backprop(w, input, t, dlogits, grad);
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

struct RowsTrace {
  std::vector<RowMatrix> pre;
  std::vector<RowMatrix> post;  // post.back() holds the logits
};

RowsTrace run_rows(const ModelWeights& w, std::span<const double> inputs, std::size_t count) {
  const auto& arch = w.arch();
  if (inputs.size() != count * arch.input_dim) throw DimensionError("batched forward: input matrix size");
  RowsTrace t;
  ConstMap x(inputs.data(), static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(arch.input_dim));
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const auto n_in = static_cast<Eigen::Index>(arch.layer_in(l));
    const auto n_out = static_cast<Eigen::Index>(arch.layer_out(l));
    ConstMap wl(w.values().data() + arch.weight_offset(l), n_out, n_in);
    Eigen::Map<const Eigen::RowVectorXd> bl(w.values().data() + arch.bias_offset(l), n_out);
    RowMatrix z = (l == 0 ? RowMatrix(x * wl.transpose()) : RowMatrix(t.post.back() * wl.transpose()));
    z.rowwise() += bl;
    RowMatrix a = z;
    if (l + 1 < arch.num_layers())
      a = arch.activation == Activation::relu ? RowMatrix(z.cwiseMax(0.0)) : RowMatrix(z.array().tanh().matrix());
    t.pre.push_back(std::move(z));
    t.post.push_back(std::move(a));
  }
  return t;
}

}  // namespace

std::vector<double> forward_rows(const ModelWeights& w, std::span<const double> inputs, std::size_t count) {
  const auto t = run_rows(w, inputs, count);
  return {t.post.back().data(), t.post.back().data() + t.post.back().size()};
}

std::vector<double> rows_logit_grad(const ModelWeights& w, std::span<const double> inputs, std::size_t count,
                                    const std::function<void(std::vector<double>&)>& dlogits) {
  const auto& arch = w.arch();
  const auto t = run_rows(w, inputs, count);
  std::vector<double> d(t.post.back().data(), t.post.back().data() + t.post.back().size());
  dlogits(d);
  if (d.size() != count * arch.num_classes) throw DimensionError("batched gradient: dlogits size changed");
  RowMatrix delta = Eigen::Map<const RowMatrix>(d.data(), static_cast<Eigen::Index>(count),
                                                static_cast<Eigen::Index>(arch.num_classes));
  std::vector<double> grad(w.size(), 0.0);
  ConstMap x(inputs.data(), static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(arch.input_dim));
  for (std::size_t l = arch.num_layers(); l-- > 0;) {
    const auto n_in = static_cast<Eigen::Index>(arch.layer_in(l));
    const auto n_out = static_cast<Eigen::Index>(arch.layer_out(l));
    Eigen::Map<RowMatrix> gw(grad.data() + arch.weight_offset(l), n_out, n_in);
    Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + arch.bias_offset(l), n_out);
    if (l == 0)
      gw.noalias() = delta.transpose() * x;
    else
      gw.noalias() = delta.transpose() * t.post[l - 1];
    gb = delta.colwise().sum();
    if (l == 0) break;
    ConstMap wl(w.values().data() + arch.weight_offset(l), n_out, n_in);
    RowMatrix back = delta * wl;
    if (arch.activation == Activation::relu)
      back = back.cwiseProduct(RowMatrix((t.pre[l - 1].array() > 0.0).cast<double>().matrix()));
    else
      back = back.cwiseProduct(RowMatrix((1.0 - t.post[l - 1].array().square()).matrix()));
    delta.swap(back);
  }
  return grad;
}

void sgd_step(std::vector<double>& values, std::span<const double> grad, double lr) {
  if (values.size() != grad.size()) throw DimensionError("sgd_step: gradient length mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
}

MinibatchStream::MinibatchStream(const LabeledDataset& data, const SubRunSpec& spec, const RngKey& key)
    : data_(&data),
      spec_(spec),
      shuffle_rng_(key.with_stream(Stream::shuffle)),
      augment_rng_(key.with_stream(Stream::augment)),
      order_(data.size()) {
  if (data.empty()) throw PreconditionError("training: empty dataset");
  spec_.validate(data.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  cursor_ = order_.size();  // forces a shuffle on the first batch
}

LabeledDataset MinibatchStream::next() {
  if (cursor_ + spec_.batch_size > order_.size()) {
    shuffle_rng_.shuffle(std::span<std::size_t>(order_));
    cursor_ = 0;
  }
  LabeledDataset batch = data_->subset(std::span<const std::size_t>(order_).subspan(cursor_, spec_.batch_size));
  cursor_ += spec_.batch_size;
  if (spec_.augment_noise_std > 0.0)
    for (auto& v : batch.features) v += spec_.augment_noise_std * augment_rng_.normal();
  return batch;
}

ModelWeights train_subrun(const ModelWeights& w, const LabeledDataset& data, const SubRunSpec& spec,
                          const RngKey& key) {
  if (data.dim != w.arch().input_dim) throw DimensionError("train_subrun: dataset dim does not match model");
  MinibatchStream batches(data, spec, key);
  std::vector<double> values(w.values().begin(), w.values().end());
  for (std::size_t s = 0; s < spec.steps; ++s) {
    const auto lg = loss_and_grad(w.with_values(values), batches.next());
    sgd_step(values, lg.grad, spec.learning_rate);
  }
  return w.with_values(std::move(values));
}

double evaluate_accuracy(const ModelWeights& w, const LabeledDataset& data) {
  if (data.empty()) throw PreconditionError("evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (static_cast<int>(argmax(forward(w, data.row(i)))) == data.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace rttd::nn
