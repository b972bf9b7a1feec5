#include "dendron/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dendron/error.hpp"

namespace dendron {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string dims(std::size_t got, std::size_t want) {
  return "got " + std::to_string(got) + ", expected " + std::to_string(want);
}

}  // namespace

std::size_t conv_block_output_length(std::size_t input_length, const ConvBlockSpec& spec) {
  require(spec.kernel_size >= 1, "conv kernel_size must be positive");
  require(spec.num_filters >= 1, "conv num_filters must be positive");
  require(spec.pool_size >= 1, "conv pool_size must be positive");
  require(spec.kernel_size <= input_length,
          "conv kernel_size " + std::to_string(spec.kernel_size) +
              " exceeds signal length " + std::to_string(input_length));
  return (input_length - spec.kernel_size + 1) / spec.pool_size;
}

std::vector<std::pair<std::size_t, std::size_t>> FeatureExtractorSpec::signal_shapes() const {
  require(input_channels >= 1, "input_channels must be positive");
  require(window_len >= 1, "window_len must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> shapes{{input_channels, window_len}};
  for (const auto& block : blocks) {
    const std::size_t len = conv_block_output_length(shapes.back().second, block);
    shapes.emplace_back(block.num_filters, len);
  }
  return shapes;
}

std::size_t FeatureExtractorSpec::feature_dim() const {
  const auto last = signal_shapes().back();
  return last.first * last.second;
}

void FeatureExtractorSpec::validate() const {
  if (feature_dim() == 0) {
    throw ShapeError("feature extractor collapses the signal to zero length");
  }
}

std::size_t HeadSpec::num_classes() const {
  require(!layer_widths.empty(), "head has no dense layers");
  return layer_widths.back();
}

void HeadSpec::validate() const {
  require(!layer_widths.empty(), "head has no dense layers");
  for (std::size_t w : layer_widths) require(w >= 1, "head layer width must be positive");
}

// ---------------------------------------------------------------------------

ConvBlockResult conv_block_forward(const Tensor& input, const ConvBlockSpec& spec,
                                   const Tensor& weights, const Tensor& bias, OpCounter* counter) {
  require(input.rank() == 2, "conv input must be channels x length, got " +
                                 shape_string(input.shape()));
  const std::size_t channels = input.dim(0);
  const std::size_t length = input.dim(1);
  const std::size_t kernel = spec.kernel_size;
  const std::size_t filters = spec.num_filters;
  const std::size_t pooled_len = conv_block_output_length(length, spec);
  require(weights.shape() == Shape{filters, channels, kernel},
          "conv weights shape " + shape_string(weights.shape()) + ", expected " +
              shape_string({filters, channels, kernel}));
  require(bias.shape() == Shape{filters}, "conv bias length: " + dims(bias.size(), filters));

  const std::size_t conv_len = length - kernel + 1;
  ConvBlockResult result;
  auto& cache = result.cache;
  cache.input = input;
  cache.pre_activation = Tensor({filters, conv_len});
  cache.pool_argmax.assign(filters * pooled_len, 0);
  result.output = Tensor({filters, pooled_len});

  const auto x = input.data();
  const auto w = weights.data();
  auto pre = cache.pre_activation.data();
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t t = 0; t < conv_len; ++t) {
      double acc = bias[f];
      for (std::size_t c = 0; c < channels; ++c) {
        const double* wrow = &w[(f * channels + c) * kernel];
        const double* xrow = &x[c * length + t];
        for (std::size_t k = 0; k < kernel; ++k) acc += wrow[k] * xrow[k];
      }
      pre[f * conv_len + t] = acc;
    }
  }
  if (counter) counter->macc += static_cast<std::uint64_t>(conv_len) * filters * kernel * channels;

  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t p = 0; p < pooled_len; ++p) {
      std::size_t best = p * spec.pool_size;
      double best_val = std::max(0.0, pre[f * conv_len + best]);
      for (std::size_t t = best + 1; t < (p + 1) * spec.pool_size; ++t) {
        const double v = std::max(0.0, pre[f * conv_len + t]);
        if (v > best_val) {
          best_val = v;
          best = t;
        }
      }
      result.output.at(f, p) = best_val;
      cache.pool_argmax[f * pooled_len + p] = best;
    }
  }
  return result;
}

ConvBlockGrads conv_block_backward(const Tensor& d_output, const ConvBlockSpec& spec,
                                   const Tensor& weights, const ConvBlockCache& cache) {
  if (cache.input.empty() || cache.pre_activation.empty()) {
    throw ShapeError("conv backward called without a forward cache");
  }
  const std::size_t channels = cache.input.dim(0);
  const std::size_t length = cache.input.dim(1);
  const std::size_t filters = spec.num_filters;
  const std::size_t kernel = spec.kernel_size;
  const std::size_t conv_len = cache.pre_activation.dim(1);
  const std::size_t pooled_len = cache.pool_argmax.size() / filters;
  require(d_output.shape() == Shape{filters, pooled_len},
          "conv upstream gradient shape " + shape_string(d_output.shape()) + ", expected " +
              shape_string({filters, pooled_len}));

  Tensor d_pre({filters, conv_len});
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t p = 0; p < pooled_len; ++p) {
      const std::size_t t = cache.pool_argmax[f * pooled_len + p];
      if (cache.pre_activation.at(f, t) > 0.0) d_pre.at(f, t) += d_output.at(f, p);
    }
  }

  ConvBlockGrads g{Tensor({filters, channels, kernel}), Tensor({filters}),
                   Tensor({channels, length})};
  const auto x = cache.input.data();
  const auto w = weights.data();
  auto dw = g.d_weights.data();
  auto dx = g.d_input.data();
  for (std::size_t f = 0; f < filters; ++f) {
    for (std::size_t t = 0; t < conv_len; ++t) {
      const double d = d_pre.at(f, t);
      if (d == 0.0) continue;
      g.d_bias[f] += d;
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t wbase = (f * channels + c) * kernel;
        const std::size_t xbase = c * length + t;
        for (std::size_t k = 0; k < kernel; ++k) {
          dw[wbase + k] += d * x[xbase + k];
          dx[xbase + k] += d * w[wbase + k];
        }
      }
    }
  }
  return g;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     OpCounter* counter) {
  require(weights.rank() == 2, "dense weights must be a matrix, got " +
                                   shape_string(weights.shape()));
  const std::size_t out = weights.dim(0);
  const std::size_t in = weights.dim(1);
  require(input.size() == in, "dense input length: " + dims(input.size(), in));
  require(bias.size() == out, "dense bias length: " + dims(bias.size(), out));
  Tensor result({out});
  for (std::size_t j = 0; j < out; ++j) {
    double acc = bias[j];
    for (std::size_t i = 0; i < in; ++i) acc += weights.at(j, i) * input[i];
    result[j] = acc;
  }
  if (counter) counter->macc += static_cast<std::uint64_t>(in) * out;
  return result;
}

DenseGrads dense_backward(const Tensor& d_output, const Tensor& input, const Tensor& weights) {
  const std::size_t out = weights.dim(0);
  const std::size_t in = weights.dim(1);
  require(d_output.size() == out, "dense upstream gradient length: " + dims(d_output.size(), out));
  require(input.size() == in, "dense cached input length: " + dims(input.size(), in));
  DenseGrads g{Tensor({out, in}), Tensor({out}), Tensor({in})};
  for (std::size_t j = 0; j < out; ++j) {
    const double d = d_output[j];
    g.d_bias[j] = d;
    for (std::size_t i = 0; i < in; ++i) {
      g.d_weights.at(j, i) = d * input[i];
      g.d_input[i] += weights.at(j, i) * d;
    }
  }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data()) v = std::max(0.0, v);
  return y;
}

Tensor softmax(const Tensor& logits) {
  if (logits.empty()) throw ShapeError("softmax of an empty vector");
  if (!logits.all_finite()) throw NumericError("softmax input contains non-finite values");
  const auto z = logits.data();
  const double peak = *std::max_element(z.begin(), z.end());
  Tensor p({logits.size()});
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - peak);
    total += p[i];
  }
  for (double& v : p.data()) v /= total;
  return p;
}

double cross_entropy(const Tensor& probs, std::size_t label) {
  if (label >= probs.size()) {
    throw std::out_of_range("label " + std::to_string(label) + " out of range for " +
                            std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[label], kProbabilityFloor));
}

Tensor softmax_cross_entropy_grad(const Tensor& probs, std::size_t label) {
  if (label >= probs.size()) {
    throw std::out_of_range("label " + std::to_string(label) + " out of range for " +
                            std::to_string(probs.size()) + " classes");
  }
  Tensor g = probs;
  g[label] -= 1.0;
  return g;
}

std::size_t argmax(const Tensor& v) {
  if (v.empty()) throw ShapeError("argmax of an empty vector");
  const auto d = v.data();
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

// ---------------------------------------------------------------------------

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  quantize_to_storage(t);
  return t;
}

FeatureExtractor::FeatureExtractor(FeatureExtractorSpec spec, std::vector<ConvLayer> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {
  spec_.validate();
  require(layers_.size() == spec_.blocks.size(),
          "feature extractor layer count: " + dims(layers_.size(), spec_.blocks.size()));
  const auto shapes = spec_.signal_shapes();
  for (std::size_t b = 0; b < layers_.size(); ++b) {
    const auto& block = spec_.blocks[b];
    require(layers_[b].spec == block, "block " + std::to_string(b) + " spec mismatch");
    const Shape want{block.num_filters, shapes[b].first, block.kernel_size};
    require(layers_[b].weights.shape() == want,
            "block " + std::to_string(b) + " weights " +
                shape_string(layers_[b].weights.shape()) + ", expected " + shape_string(want));
    require(layers_[b].bias.shape() == Shape{block.num_filters},
            "block " + std::to_string(b) + " bias length: " +
                dims(layers_[b].bias.size(), block.num_filters));
  }
}

FeatureExtractor FeatureExtractor::initialize(const FeatureExtractorSpec& spec, Rng& rng) {
  const auto shapes = spec.signal_shapes();
  std::vector<ConvLayer> layers;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& block = spec.blocks[b];
    const std::size_t in_ch = shapes[b].first;
    layers.push_back({block,
                      glorot_uniform({block.num_filters, in_ch, block.kernel_size},
                                     in_ch * block.kernel_size,
                                     block.num_filters * block.kernel_size, rng),
                      Tensor({block.num_filters})});
  }
  return FeatureExtractor(spec, std::move(layers));
}

Tensor FeatureExtractor::forward(const Tensor& window, FeatureExtractorTrace* trace,
                                 OpCounter* counter) const {
  const Shape want{spec_.input_channels, spec_.window_len};
  require(window.shape() == want,
          "window shape " + shape_string(window.shape()) + ", expected " + shape_string(want));
  if (trace) trace->blocks.clear();
  if (counter) ++counter->fe_passes;
  Tensor x = window;
  for (const auto& layer : layers_) {
    auto r = conv_block_forward(x, layer.spec, layer.weights, layer.bias, counter);
    x = std::move(r.output);
    if (trace) trace->blocks.push_back(std::move(r.cache));
  }
  if (trace) trace->output_shape = x.shape();
  return x.reshaped({x.size()});
}

std::vector<Tensor> FeatureExtractor::backward(const FeatureExtractorTrace& trace,
                                               const Tensor& d_feature) const {
  if (trace.blocks.size() != layers_.size() || trace.output_shape.empty()) {
    throw ShapeError("feature extractor backward called without a matching forward trace");
  }
  require(d_feature.size() == shape_size(trace.output_shape),
          "feature gradient length: " + dims(d_feature.size(), shape_size(trace.output_shape)));
  std::vector<Tensor> grads(2 * layers_.size());
  Tensor d = d_feature.reshaped(trace.output_shape);
  for (std::size_t b = layers_.size(); b-- > 0;) {
    auto g = conv_block_backward(d, layers_[b].spec, layers_[b].weights, trace.blocks[b]);
    grads[2 * b] = std::move(g.d_weights);
    grads[2 * b + 1] = std::move(g.d_bias);
    d = std::move(g.d_input);
  }
  return grads;
}

std::vector<ParamRef> FeatureExtractor::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t b = 0; b < layers_.size(); ++b) {
    out.push_back({"fe.block" + std::to_string(b) + ".weights", &layers_[b].weights});
    out.push_back({"fe.block" + std::to_string(b) + ".bias", &layers_[b].bias});
  }
  return out;
}

std::vector<ConstParamRef> FeatureExtractor::parameters() const {
  std::vector<ConstParamRef> out;
  for (std::size_t b = 0; b < layers_.size(); ++b) {
    out.push_back({"fe.block" + std::to_string(b) + ".weights", &layers_[b].weights});
    out.push_back({"fe.block" + std::to_string(b) + ".bias", &layers_[b].bias});
  }
  return out;
}

std::uint64_t FeatureExtractor::weight_count() const {
  std::uint64_t n = 0;
  for (const auto& l : layers_) n += l.weights.size();
  return n;
}

std::uint64_t FeatureExtractor::bias_count() const {
  std::uint64_t n = 0;
  for (const auto& l : layers_) n += l.bias.size();
  return n;
}

// ---------------------------------------------------------------------------

Head::Head(HeadSpec spec, std::size_t input_dim, std::vector<DenseLayer> layers)
    : spec_(std::move(spec)), input_dim_(input_dim), layers_(std::move(layers)) {
  spec_.validate();
  require(input_dim_ >= 1, "head input width must be positive");
  require(layers_.size() == spec_.layer_widths.size(),
          "head layer count: " + dims(layers_.size(), spec_.layer_widths.size()));
  std::size_t in = input_dim_;
  for (std::size_t u = 0; u < layers_.size(); ++u) {
    const std::size_t out = spec_.layer_widths[u];
    require(layers_[u].weights.shape() == Shape{out, in},
            "head layer " + std::to_string(u) + " weights " +
                shape_string(layers_[u].weights.shape()) + ", expected " +
                shape_string({out, in}));
    require(layers_[u].bias.shape() == Shape{out},
            "head layer " + std::to_string(u) + " bias length: " +
                dims(layers_[u].bias.size(), out));
    in = out;
  }
}

Head Head::initialize(const HeadSpec& spec, std::size_t input_dim, Rng& rng) {
  spec.validate();
  std::vector<DenseLayer> layers;
  std::size_t in = input_dim;
  for (std::size_t out : spec.layer_widths) {
    layers.push_back({glorot_uniform({out, in}, in, out, rng), Tensor({out})});
    in = out;
  }
  return Head(spec, input_dim, std::move(layers));
}

Tensor Head::logits(const Tensor& feature, HeadTrace* trace, OpCounter* counter) const {
  require(feature.size() == input_dim_, "head feature length: " + dims(feature.size(), input_dim_));
  if (trace) {
    trace->inputs.clear();
    trace->pre_activations.clear();
  }
  if (counter) ++counter->head_passes;
  Tensor x = feature;
  for (std::size_t u = 0; u < layers_.size(); ++u) {
    Tensor z = dense_forward(x, layers_[u].weights, layers_[u].bias, counter);
    if (trace) {
      trace->inputs.push_back(std::move(x));
      trace->pre_activations.push_back(z);
    }
    x = (u + 1 < layers_.size()) ? relu(z) : std::move(z);
  }
  return x;
}

Tensor Head::predict(const Tensor& feature, OpCounter* counter) const {
  return softmax(logits(feature, nullptr, counter));
}

Head::Gradients Head::backward(const HeadTrace& trace, const Tensor& d_logits) const {
  if (trace.inputs.size() != layers_.size() || trace.pre_activations.size() != layers_.size()) {
    throw ShapeError("head backward called without a matching forward trace");
  }
  Gradients g;
  g.params.resize(2 * layers_.size());
  Tensor d = d_logits;
  for (std::size_t u = layers_.size(); u-- > 0;) {
    auto lg = dense_backward(d, trace.inputs[u], layers_[u].weights);
    g.params[2 * u] = std::move(lg.d_weights);
    g.params[2 * u + 1] = std::move(lg.d_bias);
    d = std::move(lg.d_input);
    if (u > 0) {
      const Tensor& pre = trace.pre_activations[u - 1];
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(pre[i] > 0.0)) d[i] = 0.0;
      }
    }
  }
  g.d_feature = std::move(d);
  return g;
}

std::vector<ParamRef> Head::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t u = 0; u < layers_.size(); ++u) {
    out.push_back({"dense" + std::to_string(u) + ".weights", &layers_[u].weights});
    out.push_back({"dense" + std::to_string(u) + ".bias", &layers_[u].bias});
  }
  return out;
}

std::vector<ConstParamRef> Head::parameters() const {
  std::vector<ConstParamRef> out;
  for (std::size_t u = 0; u < layers_.size(); ++u) {
    out.push_back({"dense" + std::to_string(u) + ".weights", &layers_[u].weights});
    out.push_back({"dense" + std::to_string(u) + ".bias", &layers_[u].bias});
  }
  return out;
}

std::uint64_t Head::weight_count() const {
  std::uint64_t n = 0;
  for (const auto& l : layers_) n += l.weights.size();
  return n;
}

std::uint64_t Head::bias_count() const {
  std::uint64_t n = 0;
  for (const auto& l : layers_) n += l.bias.size();
  return n;
}

// ---------------------------------------------------------------------------

void sgd_step(std::span<const ParamRef> params, std::span<const Tensor> grads, SgdState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].tensor->shape() != grads[i].shape()) {
      throw ShapeError("sgd_step: gradient for " + params[i].name + " has shape " +
                       shape_string(grads[i].shape()) + ", parameter is " +
                       shape_string(params[i].tensor->shape()));
    }
    if (!grads[i].all_finite()) {
      throw NumericError("sgd_step: non-finite gradient for " + params[i].name);
    }
  }
  const double lr = state.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].tensor->data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] = static_cast<double>(static_cast<float>(p[k] - lr * g[k]));
    }
  }
  ++state.step_count;
}

}  // namespace dendron
