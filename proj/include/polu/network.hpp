#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "polu/activations.hpp"
#include "polu/tensor.hpp"

namespace polu::net {

enum class LayerKind { Conv2D, Dense, MaxPool2x2, Dropout, Flatten, Activation, Softmax };
enum class Padding { Same, Valid };
enum class Mode { Train, Infer };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::Flatten;
  std::size_t units = 0;   // filters (Conv2D) or output units (Dense)
  std::size_t kernel = 0;  // square kernel side (Conv2D)
  Padding padding = Padding::Valid;
  double drop_rate = 0.0;
  act::ActivationSpec activation;

  static LayerSpec conv(std::size_t filters, std::size_t kernel, Padding padding = Padding::Valid);
  static LayerSpec dense(std::size_t units);
  static LayerSpec max_pool();
  static LayerSpec dropout(double rate);
  static LayerSpec flatten();
  static LayerSpec activation_layer(const act::ActivationSpec& spec);
  static LayerSpec softmax();

  bool has_parameters() const { return kind == LayerKind::Conv2D || kind == LayerKind::Dense; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<LayerSpec> layers;
  double weight_decay = 0.0;

  /// Per-sample output shape of every layer (no batch axis). Throws
  /// Error(ShapeMismatch) naming the first layer that does not chain.
  std::vector<Shape> output_shapes() const;

  /// Per-sample input shape, [height, width, channels].
  Shape input_shape() const { return {height, width, channels}; }

  /// Length of the final output vector.
  std::size_t output_size() const;

  /// Replace the activation of every Activation layer.
  void set_activation(const act::ActivationSpec& spec);

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

std::string describe(const NetworkSpec& spec);

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Parameter tensors in layer order: weight then bias for every Conv2D/Dense
/// layer, named "layer<i>.weight" / "layer<i>.bias". Conv weights are
/// [kernel, kernel, in_channels, filters]; dense weights are [in, out].
template <class T>
struct ParameterSet {
  std::vector<NamedTensor<T>> tensors;

  std::size_t parameter_count() const;
  const Tensor<T>* find(const std::string& name) const;

  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& t : tensors) out.tensors.push_back({t.name, t.value.template cast<U>()});
    return out;
  }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

/// He-style init: N(0, sqrt(2 / fan_in)) weights, zero biases.
template <class T>
ParameterSet<T> init_parameters(const NetworkSpec& spec, std::uint64_t seed);

/// Check that `params` has the names and shapes `spec` requires.
template <class T>
void check_parameters(const NetworkSpec& spec, const ParameterSet<T>& params);

template <class T>
struct ForwardCache {
  Mode mode = Mode::Infer;
  std::size_t batch = 0;
  std::vector<Shape> input_shapes;                 // batched input shape of every layer
  std::vector<Tensor<T>> inputs;                   // kept for Conv2D, Dense and Activation only
  std::vector<std::vector<std::uint32_t>> argmax;  // MaxPool2x2 routing per layer
  std::vector<std::vector<T>> masks;               // Dropout scale per layer
  Tensor<T> logits;                                // input of a trailing Softmax, or the output
  std::vector<double> activation_means;            // mean output of each Activation layer
};

template <class T>
struct ForwardResult {
  Tensor<T> output;  // probabilities when the network ends in Softmax
  ForwardCache<T> cache;
};

template <class T>
ForwardResult<T> forward(const NetworkSpec& spec, const ParameterSet<T>& params,
                         const Tensor<T>& batch, Mode mode, std::uint64_t seed = 0);

/// Inference without keeping a cache; returns the network output.
template <class T>
Tensor<T> predict(const NetworkSpec& spec, const ParameterSet<T>& params, const Tensor<T>& batch);

template <class T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> dlogits;
};

template <class T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::uint32_t> labels);

/// Gradients w.r.t. every parameter, including weight_decay * w on weights.
template <class T>
ParameterSet<T> backward(const NetworkSpec& spec, const ParameterSet<T>& params,
                         const ForwardCache<T>& cache, const Tensor<T>& dlogits);

/// 0.5 * weight_decay * sum of squared weights (biases excluded).
template <class T>
double weight_penalty(const NetworkSpec& spec, const ParameterSet<T>& params);

template <class T>
struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  ParameterSet<T> velocity;  // lazily shaped like the parameters
};

/// v <- momentum v - lr g;  w <- w + v.
template <class T>
void sgd_step(ParameterSet<T>& params, const ParameterSet<T>& grads, OptimizerState<T>& state);

struct GradCheckLayer {
  std::size_t layer = 0;
  std::string name;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckLayer> layers;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  std::size_t batch = 4;
  double step = 1e-5;
  /// Inputs are redrawn until every pre-activation sits at least this far from
  /// an activation kink, so finite differences never straddle one.
  double kink_margin = 1e-3;
  /// 0 checks every parameter; otherwise a seeded sample per tensor.
  std::size_t max_per_tensor = 0;
};

/// Compare analytic gradients (f64) against central finite differences of the
/// total loss (cross-entropy plus weight penalty).
GradCheckReport grad_check(const NetworkSpec& spec, std::uint64_t seed, double tolerance,
                           const GradCheckOptions& options = {});

/// 8x8x1 input, one conv layer, one dense layer.
NetworkSpec tiny_network(const act::ActivationSpec& activation);

}  // namespace polu::net
