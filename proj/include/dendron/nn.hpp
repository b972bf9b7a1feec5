#pragma once

// Minimal deterministic neural-network kernel: 1-D convolution blocks
// (valid conv, stride 1, ReLU, non-overlapping max pool), dense layers,
// softmax and cross-entropy, with forward and backward passes.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dendron/rng.hpp"
#include "dendron/tensor.hpp"

namespace dendron {

struct ConvBlockSpec {
  std::size_t kernel_size = 1;
  std::size_t num_filters = 1;
  std::size_t pool_size = 1;

  friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

/// Output signal length of one block: floor((len - kernel + 1) / pool).
/// Throws ShapeError when the kernel does not fit.
std::size_t conv_block_output_length(std::size_t input_length, const ConvBlockSpec& spec);

struct FeatureExtractorSpec {
  std::size_t input_channels = 1;
  std::size_t window_len = 1;
  std::vector<ConvBlockSpec> blocks;

  /// (channels, length) after each block; element 0 is the input.
  std::vector<std::pair<std::size_t, std::size_t>> signal_shapes() const;
  std::size_t feature_dim() const;
  void validate() const;

  friend bool operator==(const FeatureExtractorSpec&, const FeatureExtractorSpec&) = default;
};

struct HeadSpec {
  std::vector<std::size_t> layer_widths;  // last entry is the class count

  std::size_t num_classes() const;
  void validate() const;

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

/// Counts work done by instrumented forward passes.
struct OpCounter {
  std::uint64_t macc = 0;
  std::size_t fe_passes = 0;
  std::size_t head_passes = 0;
};

// ---------------------------------------------------------------------------
// Primitive ops

struct ConvBlockCache {
  Tensor input;           // C x L
  Tensor pre_activation;  // F x conv_len
  std::vector<std::size_t> pool_argmax;  // F x pooled_len, index into conv axis
};

struct ConvBlockResult {
  Tensor output;  // F x pooled_len
  ConvBlockCache cache;
};

ConvBlockResult conv_block_forward(const Tensor& input, const ConvBlockSpec& spec,
                                   const Tensor& weights, const Tensor& bias,
                                   OpCounter* counter = nullptr);

struct ConvBlockGrads {
  Tensor d_weights;
  Tensor d_bias;
  Tensor d_input;
};

ConvBlockGrads conv_block_backward(const Tensor& d_output, const ConvBlockSpec& spec,
                                   const Tensor& weights, const ConvBlockCache& cache);

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                     OpCounter* counter = nullptr);

struct DenseGrads {
  Tensor d_weights;
  Tensor d_bias;
  Tensor d_input;
};

DenseGrads dense_backward(const Tensor& d_output, const Tensor& input, const Tensor& weights);

Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& logits);

inline constexpr double kProbabilityFloor = 1e-12;

double cross_entropy(const Tensor& probs, std::size_t label);

/// d(cross_entropy(softmax(z), label)) / dz = probs - onehot(label).
Tensor softmax_cross_entropy_grad(const Tensor& probs, std::size_t label);

/// Lowest index wins on ties.
std::size_t argmax(const Tensor& v);

// ---------------------------------------------------------------------------
// Layers and modules

/// A mutable view of one parameter tensor with a stable name for diagnostics.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)), snapped to binary32.
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct ConvLayer {
  ConvBlockSpec spec;
  Tensor weights;  // F x C x K
  Tensor bias;     // F
};

struct DenseLayer {
  Tensor weights;  // out x in
  Tensor bias;     // out
};

struct FeatureExtractorTrace {
  std::vector<ConvBlockCache> blocks;
  Shape output_shape;
};

class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(FeatureExtractorSpec spec, std::vector<ConvLayer> layers);

  static FeatureExtractor initialize(const FeatureExtractorSpec& spec, Rng& rng);

  const FeatureExtractorSpec& spec() const noexcept { return spec_; }
  std::size_t feature_dim() const { return spec_.feature_dim(); }
  const std::vector<ConvLayer>& layers() const noexcept { return layers_; }

  /// Window (C x T) -> flat feature vector of length feature_dim().
  Tensor forward(const Tensor& window, FeatureExtractorTrace* trace = nullptr,
                 OpCounter* counter = nullptr) const;

  /// Returns gradients in parameters() order.
  std::vector<Tensor> backward(const FeatureExtractorTrace& trace, const Tensor& d_feature) const;

  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;

  std::uint64_t weight_count() const;
  std::uint64_t bias_count() const;

 private:
  FeatureExtractorSpec spec_;
  std::vector<ConvLayer> layers_;
};

struct HeadTrace {
  std::vector<Tensor> inputs;          // input of every dense layer
  std::vector<Tensor> pre_activations; // output of every dense layer, pre-ReLU
};

/// Dense stack with ReLU between layers and a softmax output.
class Head {
 public:
  Head() = default;
  Head(HeadSpec spec, std::size_t input_dim, std::vector<DenseLayer> layers);

  static Head initialize(const HeadSpec& spec, std::size_t input_dim, Rng& rng);

  const HeadSpec& spec() const noexcept { return spec_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t num_classes() const { return spec_.num_classes(); }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  Tensor logits(const Tensor& feature, HeadTrace* trace = nullptr,
                OpCounter* counter = nullptr) const;
  Tensor predict(const Tensor& feature, OpCounter* counter = nullptr) const;

  struct Gradients {
    std::vector<Tensor> params;  // parameters() order
    Tensor d_feature;
  };
  Gradients backward(const HeadTrace& trace, const Tensor& d_logits) const;

  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;

  std::uint64_t weight_count() const;
  std::uint64_t bias_count() const;

 private:
  HeadSpec spec_;
  std::size_t input_dim_ = 0;
  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Plain gradient descent

struct SgdState {
  double learning_rate = 0.01;
  std::uint64_t rng_seed = 0;
  std::uint64_t step_count = 0;
};

/// p <- p - lr * g for every pair, rounded to binary32 storage. Every
/// gradient is checked before anything is written, so a NumericError
/// leaves all parameters untouched.
void sgd_step(std::span<const ParamRef> params, std::span<const Tensor> grads, SgdState& state);

}  // namespace dendron
