#include "polu/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include "polu/random.hpp"

namespace polu::net {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

std::string layer_label(std::size_t index, const LayerSpec& layer) {
  return "layer " + std::to_string(index) + " (" + std::string(to_string(layer.kind)) + ")";
}

struct ConvGeometry {
  std::size_t in_h, in_w, in_c;
  std::size_t out_h, out_w, filters;
  std::size_t kernel;
  std::size_t pad_top, pad_left;

  std::size_t patch() const { return kernel * kernel * in_c; }
  std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Shape& in, const LayerSpec& layer) {
  ConvGeometry g{};
  g.in_h = in[0];
  g.in_w = in[1];
  g.in_c = in[2];
  g.kernel = layer.kernel;
  g.filters = layer.units;
  if (layer.padding == Padding::Same) {
    // Extra padding goes after, matching the usual 'same' convention.
    g.pad_top = (layer.kernel - 1) / 2;
    g.pad_left = (layer.kernel - 1) / 2;
    g.out_h = g.in_h;
    g.out_w = g.in_w;
  } else {
    g.pad_top = 0;
    g.pad_left = 0;
    g.out_h = g.in_h - layer.kernel + 1;
    g.out_w = g.in_w - layer.kernel + 1;
  }
  return g;
}

// Rows are output positions of samples [first, first + count); columns are
// (ky, kx, c) in weight order. Channels are contiguous in both layouts.
template <class T>
void im2col(const T* input, const ConvGeometry& g, std::size_t first, std::size_t count, T* cols) {
  const std::size_t patch = g.patch();
  const std::size_t c = g.in_c;
  for (std::size_t s = 0; s < count; ++s) {
    const T* img = input + (first + s) * g.in_h * g.in_w * c;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        T* row = cols + ((s * g.out_h + oy) * g.out_w + ox) * patch;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          T* dst = row + ky * g.kernel * c;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(dst, dst + g.kernel * c, T(0));
            continue;
          }
          for (std::size_t kx = 0; kx < g.kernel; ++kx) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) {
              std::fill(dst + kx * c, dst + (kx + 1) * c, T(0));
            } else {
              std::memcpy(dst + kx * c, img + (static_cast<std::size_t>(iy) * g.in_w + ix) * c,
                          c * sizeof(T));
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, std::size_t first, std::size_t count,
                T* grad_input) {
  const std::size_t patch = g.patch();
  const std::size_t c = g.in_c;
  for (std::size_t s = 0; s < count; ++s) {
    T* img = grad_input + (first + s) * g.in_h * g.in_w * c;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const T* row = cols + ((s * g.out_h + oy) * g.out_w + ox) * patch;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          for (std::size_t kx = 0; kx < g.kernel; ++kx) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            const T* src = row + (ky * g.kernel + kx) * c;
            T* dst = img + (static_cast<std::size_t>(iy) * g.in_w + ix) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
          }
        }
      }
    }
  }
}

// Small chunks keep the im2col scratch cache-resident; measured faster than
// large GEMMs over a multi-MB patch matrix.
std::size_t conv_chunk(const ConvGeometry& g, std::size_t batch) {
  constexpr std::size_t budget = std::size_t{1} << 16;
  const std::size_t per_sample = std::max<std::size_t>(1, g.positions() * g.patch());
  return std::clamp<std::size_t>(budget / per_sample, 1, std::max<std::size_t>(batch, 1));
}

template <class T>
Tensor<T> conv_forward(const Tensor<T>& x, const ConvGeometry& g, const Tensor<T>& weight,
                       const Tensor<T>& bias) {
  const std::size_t batch = x.dim(0);
  Tensor<T> out({batch, g.out_h, g.out_w, g.filters});
  const std::size_t chunk = conv_chunk(g, batch);
  std::vector<T> cols(chunk * g.positions() * g.patch());
  ConstMatMap<T> w(weight.data(), g.patch(), g.filters);
  Eigen::Map<const RowVec<T>> b(bias.data(), g.filters);
  for (std::size_t first = 0; first < batch; first += chunk) {
    const std::size_t count = std::min(chunk, batch - first);
    const auto rows = static_cast<Eigen::Index>(count * g.positions());
    im2col(x.data(), g, first, count, cols.data());
    ConstMatMap<T> patches(cols.data(), rows, g.patch());
    MatMap<T> y(out.data() + first * g.positions() * g.filters, rows, g.filters);
    y.noalias() = patches * w;
    y.rowwise() += b;
  }
  return out;
}

template <class T>
Tensor<T> conv_backward(const Tensor<T>& x, const ConvGeometry& g, const Tensor<T>& weight,
                        const Tensor<T>& grad_out, Tensor<T>& grad_weight, Tensor<T>& grad_bias,
                        bool need_input_grad) {
  const std::size_t batch = x.dim(0);
  Tensor<T> grad_in;
  if (need_input_grad) grad_in = Tensor<T>(x.shape());
  const std::size_t chunk = conv_chunk(g, batch);
  std::vector<T> cols(chunk * g.positions() * g.patch());
  ConstMatMap<T> w(weight.data(), g.patch(), g.filters);
  MatMap<T> gw(grad_weight.data(), g.patch(), g.filters);
  Eigen::Map<RowVec<T>> gb(grad_bias.data(), g.filters);
  for (std::size_t first = 0; first < batch; first += chunk) {
    const std::size_t count = std::min(chunk, batch - first);
    const auto rows = static_cast<Eigen::Index>(count * g.positions());
    im2col(x.data(), g, first, count, cols.data());
    MatMap<T> patches(cols.data(), rows, g.patch());
    ConstMatMap<T> dy(grad_out.data() + first * g.positions() * g.filters, rows, g.filters);
    gw.noalias() += patches.transpose() * dy;
    gb += dy.colwise().sum();
    if (need_input_grad) {
      patches.noalias() = dy * w.transpose();
      col2im_add(cols.data(), g, first, count, grad_in.data());
    }
  }
  return grad_in;
}

template <class T>
void softmax_rows(const T* logits, T* probs, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits + r * cols;
    T* p = probs + r * cols;
    const T peak = *std::max_element(z, z + cols);
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      p[c] = std::exp(z[c] - peak);
      sum += p[c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[c] /= sum;
  }
}

template <class T>
ForwardResult<T> run_forward(const NetworkSpec& spec, const ParameterSet<T>& params,
                             const Tensor<T>& batch, Mode mode, std::uint64_t seed,
                             bool keep_cache) {
  const auto shapes = spec.output_shapes();
  const Shape input = spec.input_shape();
  if (batch.rank() != 4 || !std::equal(input.begin(), input.end(), batch.shape().begin() + 1))
    fail(ErrorKind::ShapeMismatch, "batch shape " + shape_string(batch.shape()) +
                                       " does not match input " + shape_string(input));
  check_parameters(spec, params);

  const std::size_t n = batch.dim(0);
  const std::size_t layer_count = spec.layers.size();
  ForwardResult<T> result;
  auto& cache = result.cache;
  cache.mode = mode;
  cache.batch = n;
  if (keep_cache) {
    cache.input_shapes.resize(layer_count);
    cache.inputs.resize(layer_count);
    cache.argmax.resize(layer_count);
    cache.masks.resize(layer_count);
  }

  Tensor<T> x = batch;
  Shape in_shape = input;
  std::size_t param_index = 0;
  for (std::size_t i = 0; i < layer_count; ++i) {
    const LayerSpec& layer = spec.layers[i];
    Shape out_shape = shapes[i];
    Shape batched = out_shape;
    batched.insert(batched.begin(), n);
    if (keep_cache) cache.input_shapes[i] = x.shape();
    bool keep_input = false;
    Tensor<T> y;
    switch (layer.kind) {
      case LayerKind::Conv2D: {
        const auto g = conv_geometry(in_shape, layer);
        y = conv_forward(x, g, params.tensors[param_index].value,
                         params.tensors[param_index + 1].value);
        param_index += 2;
        keep_input = true;
        break;
      }
      case LayerKind::Dense: {
        const auto& w = params.tensors[param_index].value;
        const auto& b = params.tensors[param_index + 1].value;
        param_index += 2;
        const std::size_t in_units = in_shape[0];
        y = Tensor<T>(batched);
        ConstMatMap<T> xm(x.data(), n, in_units);
        ConstMatMap<T> wm(w.data(), in_units, layer.units);
        MatMap<T> ym(y.data(), n, layer.units);
        ym.noalias() = xm * wm;
        ym.rowwise() += Eigen::Map<const RowVec<T>>(b.data(), layer.units);
        keep_input = true;
        break;
      }
      case LayerKind::MaxPool2x2: {
        const std::size_t h = in_shape[0], w = in_shape[1], c = in_shape[2];
        const std::size_t oh = out_shape[0], ow = out_shape[1];
        y = Tensor<T>(batched);
        std::vector<std::uint32_t> route(keep_cache ? y.size() : 0);
        std::size_t o = 0;
        for (std::size_t s = 0; s < n; ++s) {
          const std::size_t base = s * h * w * c;
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
              for (std::size_t ch = 0; ch < c; ++ch, ++o) {
                // Row-major window scan with strict '>' keeps the first maximum.
                std::size_t best = base + ((2 * oy) * w + 2 * ox) * c + ch;
                for (std::size_t dy = 0; dy < 2; ++dy)
                  for (std::size_t dx = 0; dx < 2; ++dx) {
                    const std::size_t idx = base + ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    if (x[idx] > x[best]) best = idx;
                  }
                y[o] = x[best];
                if (keep_cache) route[o] = static_cast<std::uint32_t>(best);
              }
        }
        if (keep_cache) cache.argmax[i] = std::move(route);
        break;
      }
      case LayerKind::Dropout: {
        y = std::move(x);
        if (mode == Mode::Train && layer.drop_rate > 0.0) {
          const double keep = 1.0 - layer.drop_rate;
          const T scale = static_cast<T>(1.0 / keep);
          std::mt19937_64 gen(derive_seed(seed, "dropout", i));
          std::uniform_real_distribution<double> unit(0.0, 1.0);
          std::vector<T> mask(y.size());
          for (std::size_t k = 0; k < y.size(); ++k) {
            mask[k] = unit(gen) < keep ? scale : T(0);
            y[k] *= mask[k];
          }
          if (keep_cache) cache.masks[i] = std::move(mask);
        }
        break;
      }
      case LayerKind::Flatten:
        y = std::move(x);
        y.reshape(batched);
        break;
      case LayerKind::Activation: {
        y = Tensor<T>(x.shape());
        act::apply_forward<T>(layer.activation, x.values(), y.values());
        const double sum = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(
                               y.data(), static_cast<Eigen::Index>(y.size()))
                               .template cast<double>()
                               .sum();
        cache.activation_means.push_back(y.empty() ? 0.0 : sum / static_cast<double>(y.size()));
        keep_input = true;
        break;
      }
      case LayerKind::Softmax:
        y = Tensor<T>(x.shape());
        softmax_rows(x.data(), y.data(), n, out_shape[0]);
        cache.logits = std::move(x);
        break;
    }
    if (keep_cache && keep_input) cache.inputs[i] = std::move(x);
    x = std::move(y);
    in_shape = std::move(out_shape);
  }
  if (layer_count == 0 || spec.layers.back().kind != LayerKind::Softmax) {
    if (x.rank() != 2) x.reshape({n, element_count(in_shape)});
    cache.logits = x;
  }
  result.output = std::move(x);
  return result;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](T v) { return std::isfinite(v); });
}

template bool all_finite<float>(const Tensor<float>&);
template bool all_finite<double>(const Tensor<double>&);

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::Dense: return "Dense";
    case LayerKind::MaxPool2x2: return "MaxPool2x2";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Activation: return "Activation";
    case LayerKind::Softmax: return "Softmax";
  }
  return "?";
}

LayerSpec LayerSpec::conv(std::size_t filters, std::size_t kernel, Padding padding) {
  LayerSpec l;
  l.kind = LayerKind::Conv2D;
  l.units = filters;
  l.kernel = kernel;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::dense(std::size_t units) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.units = units;
  return l;
}

LayerSpec LayerSpec::max_pool() {
  LayerSpec l;
  l.kind = LayerKind::MaxPool2x2;
  return l;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec l;
  l.kind = LayerKind::Dropout;
  l.drop_rate = rate;
  return l;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::Flatten;
  return l;
}

LayerSpec LayerSpec::activation_layer(const act::ActivationSpec& spec) {
  LayerSpec l;
  l.kind = LayerKind::Activation;
  l.activation = spec;
  return l;
}

LayerSpec LayerSpec::softmax() {
  LayerSpec l;
  l.kind = LayerKind::Softmax;
  return l;
}

std::vector<Shape> NetworkSpec::output_shapes() const {
  if (height == 0 || width == 0 || channels == 0)
    fail(ErrorKind::ShapeMismatch, "input shape must be positive");
  if (!(weight_decay >= 0.0)) fail(ErrorKind::InvalidArgument, "weight_decay must be >= 0");
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  Shape s = input_shape();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    auto mismatch = [&](const std::string& why) {
      fail(ErrorKind::ShapeMismatch, layer_label(i, l) + ": " + why + " (input " +
                                         shape_string(s) + ")");
    };
    switch (l.kind) {
      case LayerKind::Conv2D:
        if (s.size() != 3) mismatch("expects a [height, width, channels] input");
        if (l.units == 0 || l.kernel == 0) mismatch("filters and kernel must be positive");
        if (l.padding == Padding::Valid) {
          if (s[0] < l.kernel || s[1] < l.kernel) mismatch("kernel larger than input");
          s = {s[0] - l.kernel + 1, s[1] - l.kernel + 1, l.units};
        } else {
          s = {s[0], s[1], l.units};
        }
        break;
      case LayerKind::Dense:
        if (s.size() != 1) mismatch("expects a flat input; add Flatten first");
        if (l.units == 0) mismatch("units must be positive");
        s = {l.units};
        break;
      case LayerKind::MaxPool2x2:
        if (s.size() != 3) mismatch("expects a [height, width, channels] input");
        if (s[0] < 2 || s[1] < 2) mismatch("spatial size below the 2x2 window");
        s = {s[0] / 2, s[1] / 2, s[2]};
        break;
      case LayerKind::Dropout:
        if (!(l.drop_rate >= 0.0 && l.drop_rate < 1.0)) mismatch("drop rate must lie in [0, 1)");
        break;
      case LayerKind::Flatten:
        s = {element_count(s)};
        break;
      case LayerKind::Activation:
        l.activation.validate();
        break;
      case LayerKind::Softmax:
        if (s.size() != 1) mismatch("expects a flat input");
        if (i + 1 != layers.size()) mismatch("softmax must be the last layer");
        break;
    }
    shapes.push_back(s);
  }
  return shapes;
}

std::size_t NetworkSpec::output_size() const {
  const auto shapes = output_shapes();
  return shapes.empty() ? element_count(input_shape()) : element_count(shapes.back());
}

void NetworkSpec::set_activation(const act::ActivationSpec& spec) {
  spec.validate();
  for (auto& l : layers)
    if (l.kind == LayerKind::Activation) l.activation = spec;
}

std::string describe(const NetworkSpec& spec) {
  std::ostringstream os;
  os << "input " << spec.height << "x" << spec.width << "x" << spec.channels;
  for (const auto& l : spec.layers) {
    os << " -> ";
    switch (l.kind) {
      case LayerKind::Conv2D:
        os << "conv" << l.units << "/" << l.kernel << (l.padding == Padding::Same ? "s" : "v");
        break;
      case LayerKind::Dense: os << "dense" << l.units; break;
      case LayerKind::MaxPool2x2: os << "pool"; break;
      case LayerKind::Dropout: os << "dropout" << l.drop_rate; break;
      case LayerKind::Flatten: os << "flatten"; break;
      case LayerKind::Activation: os << l.activation.to_string(); break;
      case LayerKind::Softmax: os << "softmax"; break;
    }
  }
  return os.str();
}

template <class T>
std::size_t ParameterSet<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.value.size();
  return total;
}

template <class T>
const Tensor<T>* ParameterSet<T>::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

namespace {

struct ParamLayout {
  std::size_t layer;
  Shape weight;
  std::size_t fan_in;
  std::size_t units;
};

std::vector<ParamLayout> param_layout(const NetworkSpec& spec) {
  const auto shapes = spec.output_shapes();
  std::vector<ParamLayout> out;
  Shape in = spec.input_shape();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.kind == LayerKind::Conv2D) {
      out.push_back({i, {l.kernel, l.kernel, in[2], l.units}, l.kernel * l.kernel * in[2], l.units});
    } else if (l.kind == LayerKind::Dense) {
      out.push_back({i, {in[0], l.units}, in[0], l.units});
    }
    in = shapes[i];
  }
  return out;
}

}  // namespace

template <class T>
ParameterSet<T> init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
  ParameterSet<T> params;
  std::mt19937_64 gen(derive_seed(seed, "init"));
  for (const auto& p : param_layout(spec)) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(p.fan_in));
    std::normal_distribution<double> normal(0.0, stddev);
    Tensor<T> w(p.weight);
    for (auto& v : w.values()) v = static_cast<T>(normal(gen));
    const std::string prefix = "layer" + std::to_string(p.layer);
    params.tensors.push_back({prefix + ".weight", std::move(w)});
    params.tensors.push_back({prefix + ".bias", Tensor<T>({p.units})});
  }
  return params;
}

template <class T>
void check_parameters(const NetworkSpec& spec, const ParameterSet<T>& params) {
  const auto layout = param_layout(spec);
  if (params.tensors.size() != 2 * layout.size())
    fail(ErrorKind::ShapeMismatch, "expected " + std::to_string(2 * layout.size()) +
                                       " parameter tensors, got " +
                                       std::to_string(params.tensors.size()));
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto& w = params.tensors[2 * k].value;
    const auto& b = params.tensors[2 * k + 1].value;
    if (w.shape() != layout[k].weight || b.shape() != Shape{layout[k].units})
      fail(ErrorKind::ShapeMismatch,
           layer_label(layout[k].layer, spec.layers[layout[k].layer]) + ": parameter shapes " +
               shape_string(w.shape()) + "/" + shape_string(b.shape()) + " do not match expected " +
               shape_string(layout[k].weight));
  }
}

template <class T>
ForwardResult<T> forward(const NetworkSpec& spec, const ParameterSet<T>& params,
                         const Tensor<T>& batch, Mode mode, std::uint64_t seed) {
  return run_forward(spec, params, batch, mode, seed, true);
}

template <class T>
Tensor<T> predict(const NetworkSpec& spec, const ParameterSet<T>& params, const Tensor<T>& batch) {
  return run_forward(spec, params, batch, Mode::Infer, 0, false).output;
}

template <class T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                    std::span<const std::uint32_t> labels) {
  if (logits.rank() != 2) fail(ErrorKind::ShapeMismatch, "logits must be [batch, classes]");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (labels.size() != rows)
    fail(ErrorKind::InvalidArgument, "label count does not match batch size");
  LossResult<T> out;
  out.dlogits = Tensor<T>(logits.shape());
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= cols)
      fail(ErrorKind::InvalidArgument, "label " + std::to_string(labels[r]) + " out of range");
    const T* z = logits.data() + r * cols;
    T* d = out.dlogits.data() + r * cols;
    const double peak = *std::max_element(z, z + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(static_cast<double>(z[c]) - peak);
    const double log_sum = std::log(sum);
    total += log_sum - (static_cast<double>(z[labels[r]]) - peak);
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = std::exp(static_cast<double>(z[c]) - peak - log_sum);
      d[c] = static_cast<T>((p - (c == labels[r] ? 1.0 : 0.0)) * inv);
    }
  }
  out.loss = total * inv;
  return out;
}

template <class T>
ParameterSet<T> backward(const NetworkSpec& spec, const ParameterSet<T>& params,
                         const ForwardCache<T>& cache, const Tensor<T>& dlogits) {
  if (cache.mode != Mode::Train)
    fail(ErrorKind::InvalidState, "backward needs the cache of a train-mode forward pass");
  if (cache.inputs.size() != spec.layers.size() || cache.input_shapes.size() != spec.layers.size())
    fail(ErrorKind::InvalidState, "cache does not belong to this network");
  if (dlogits.shape() != cache.logits.shape())
    fail(ErrorKind::InvalidState, "dlogits shape " + shape_string(dlogits.shape()) +
                                      " does not match logits " +
                                      shape_string(cache.logits.shape()));
  check_parameters(spec, params);

  const auto shapes = spec.output_shapes();
  ParameterSet<T> grads;
  grads.tensors.reserve(params.tensors.size());
  for (const auto& t : params.tensors) grads.tensors.push_back({t.name, Tensor<T>(t.value.shape())});

  std::size_t end = spec.layers.size();
  if (end > 0 && spec.layers.back().kind == LayerKind::Softmax) --end;

  std::size_t param_index = grads.tensors.size();
  Tensor<T> g = dlogits;
  if (end > 0) {
    Shape out = shapes[end - 1];
    out.insert(out.begin(), cache.batch);
    g.reshape(out);
  }

  for (std::size_t i = end; i-- > 0;) {
    const LayerSpec& layer = spec.layers[i];
    const Tensor<T>& x = cache.inputs[i];
    const Shape& x_shape = cache.input_shapes[i];
    const Shape in_shape(x_shape.begin() + 1, x_shape.end());
    const bool need_input_grad = i > 0;
    Tensor<T> gi;
    switch (layer.kind) {
      case LayerKind::Conv2D: {
        param_index -= 2;
        const auto geo = conv_geometry(in_shape, layer);
        gi = conv_backward(x, geo, params.tensors[param_index].value, g,
                           grads.tensors[param_index].value, grads.tensors[param_index + 1].value,
                           need_input_grad);
        break;
      }
      case LayerKind::Dense: {
        param_index -= 2;
        const std::size_t n = cache.batch, in_units = in_shape[0];
        const auto& w = params.tensors[param_index].value;
        ConstMatMap<T> xm(x.data(), n, in_units);
        ConstMatMap<T> wm(w.data(), in_units, layer.units);
        ConstMatMap<T> dy(g.data(), n, layer.units);
        MatMap<T> gw(grads.tensors[param_index].value.data(), in_units, layer.units);
        Eigen::Map<RowVec<T>> gb(grads.tensors[param_index + 1].value.data(), layer.units);
        gw.noalias() = xm.transpose() * dy;
        gb = dy.colwise().sum();
        if (need_input_grad) {
          gi = Tensor<T>(x_shape);
          MatMap<T> dx(gi.data(), n, in_units);
          dx.noalias() = dy * wm.transpose();
        }
        break;
      }
      case LayerKind::MaxPool2x2: {
        gi = Tensor<T>(x_shape);
        const auto& route = cache.argmax[i];
        for (std::size_t k = 0; k < route.size(); ++k) gi[route[k]] += g[k];
        break;
      }
      case LayerKind::Dropout: {
        const auto& mask = cache.masks[i];
        gi = std::move(g);
        if (!mask.empty())
          for (std::size_t k = 0; k < gi.size(); ++k) gi[k] *= mask[k];
        break;
      }
      case LayerKind::Flatten:
        gi = std::move(g);
        gi.reshape(x_shape);
        break;
      case LayerKind::Activation:
        gi = std::move(g);
        act::apply_backward<T>(layer.activation, x.values(), gi.values(), gi.values());
        break;
      case LayerKind::Softmax:
        fail(ErrorKind::InvalidState, "softmax is only supported as the final layer");
    }
    g = std::move(gi);
  }

  if (spec.weight_decay > 0.0) {
    const T wd = static_cast<T>(spec.weight_decay);
    for (std::size_t k = 0; k < grads.tensors.size(); k += 2) {
      auto& gw = grads.tensors[k].value;
      const auto& w = params.tensors[k].value;
      for (std::size_t j = 0; j < gw.size(); ++j) gw[j] += wd * w[j];
    }
  }
  return grads;
}

template <class T>
double weight_penalty(const NetworkSpec& spec, const ParameterSet<T>& params) {
  double sum = 0.0;
  for (std::size_t k = 0; k < params.tensors.size(); k += 2)
    for (T v : params.tensors[k].value.values()) sum += static_cast<double>(v) * v;
  return 0.5 * spec.weight_decay * sum;
}

template <class T>
void sgd_step(ParameterSet<T>& params, const ParameterSet<T>& grads, OptimizerState<T>& state) {
  if (!(state.learning_rate > 0.0)) fail(ErrorKind::InvalidArgument, "learning rate must be > 0");
  if (!(state.momentum >= 0.0 && state.momentum < 1.0))
    fail(ErrorKind::InvalidArgument, "momentum must lie in [0, 1)");
  if (grads.tensors.size() != params.tensors.size())
    fail(ErrorKind::InvalidArgument, "gradient set does not match parameters");
  if (state.velocity.tensors.empty()) {
    for (const auto& t : params.tensors)
      state.velocity.tensors.push_back({t.name, Tensor<T>(t.value.shape())});
  }
  if (state.velocity.tensors.size() != params.tensors.size())
    fail(ErrorKind::InvalidArgument, "velocity set does not match parameters");
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    auto& w = params.tensors[k].value;
    const auto& g = grads.tensors[k].value;
    auto& v = state.velocity.tensors[k].value;
    if (g.shape() != w.shape() || v.shape() != w.shape())
      fail(ErrorKind::InvalidArgument, "shape mismatch for " + params.tensors[k].name);
    const T mu = static_cast<T>(state.momentum);
    const T lr = static_cast<T>(state.learning_rate);
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = mu * v[j] - lr * g[j];
      w[j] += v[j];
    }
  }
}

NetworkSpec tiny_network(const act::ActivationSpec& activation) {
  NetworkSpec spec;
  spec.height = 8;
  spec.width = 8;
  spec.channels = 1;
  spec.weight_decay = 5e-4;
  spec.layers = {LayerSpec::conv(4, 3, Padding::Same), LayerSpec::activation_layer(activation),
                 LayerSpec::flatten(), LayerSpec::dense(10), LayerSpec::softmax()};
  return spec;
}

GradCheckReport grad_check(const NetworkSpec& spec, std::uint64_t seed, double tolerance,
                           const GradCheckOptions& options) {
  const auto shapes = spec.output_shapes();
  auto params = init_parameters<double>(spec, seed);
  const std::size_t classes = spec.output_size();
  const std::size_t batch = std::max<std::size_t>(1, options.batch);

  std::mt19937_64 gen(derive_seed(seed, "gradcheck"));
  std::normal_distribution<double> normal(0.0, 1.0);
  Shape batch_shape = spec.input_shape();
  batch_shape.insert(batch_shape.begin(), batch);
  Tensor<double> inputs(batch_shape);
  std::vector<std::uint32_t> labels(batch);
  const std::uint64_t dropout_seed = derive_seed(seed, "gradcheck-dropout");

  auto min_kink_distance = [&](const Tensor<double>& x) {
    const auto fw = forward(spec, params, x, Mode::Train, dropout_seed);
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
      if (spec.layers[i].kind == LayerKind::Activation)
        for (double v : fw.cache.inputs[i].values()) closest = std::min(closest, std::abs(v));
    return closest;
  };
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (auto& v : inputs.values()) v = normal(gen);
    if (min_kink_distance(inputs) >= options.kink_margin) break;
  }
  for (auto& l : labels) l = static_cast<std::uint32_t>(gen() % classes);

  auto total_loss = [&]() {
    const auto fw = forward(spec, params, inputs, Mode::Train, dropout_seed);
    return softmax_cross_entropy(fw.cache.logits, labels).loss + weight_penalty(spec, params);
  };

  const auto fw = forward(spec, params, inputs, Mode::Train, dropout_seed);
  const auto loss = softmax_cross_entropy(fw.cache.logits, labels);
  const auto analytic = backward(spec, params, fw.cache, loss.dlogits);

  GradCheckReport report;
  report.tolerance = tolerance;
  const double h = options.step;
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    auto& values = params.tensors[k].value;
    std::vector<std::size_t> picks(values.size());
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    if (options.max_per_tensor > 0 && picks.size() > options.max_per_tensor) {
      std::shuffle(picks.begin(), picks.end(), gen);
      picks.resize(options.max_per_tensor);
    }
    const std::string& name = params.tensors[k].name;
    const std::size_t layer = std::stoul(name.substr(5, name.find('.') - 5));
    if (report.layers.empty() || report.layers.back().layer != layer)
      report.layers.push_back({layer, name.substr(0, name.find('.')), 0.0, 0});
    auto& entry = report.layers.back();
    for (std::size_t j : picks) {
      const double saved = values[j];
      values[j] = saved + h;
      const double up = total_loss();
      values[j] = saved - h;
      const double down = total_loss();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic.tensors[k].value[j];
      const double scale = std::max({std::abs(numeric), std::abs(exact), 1e-6});
      entry.max_relative_error = std::max(entry.max_relative_error, std::abs(numeric - exact) / scale);
      ++entry.checked;
    }
  }
  for (const auto& e : report.layers)
    report.max_relative_error = std::max(report.max_relative_error, e.max_relative_error);
  report.passed = report.max_relative_error < tolerance;
  return report;
}

#define POLU_INSTANTIATE(T)                                                                      \
  template struct ParameterSet<T>;                                                               \
  template ParameterSet<T> init_parameters<T>(const NetworkSpec&, std::uint64_t);                \
  template void check_parameters<T>(const NetworkSpec&, const ParameterSet<T>&);                 \
  template ForwardResult<T> forward<T>(const NetworkSpec&, const ParameterSet<T>&,               \
                                       const Tensor<T>&, Mode, std::uint64_t);                   \
  template Tensor<T> predict<T>(const NetworkSpec&, const ParameterSet<T>&, const Tensor<T>&);   \
  template LossResult<T> softmax_cross_entropy<T>(const Tensor<T>&,                              \
                                                  std::span<const std::uint32_t>);               \
  template ParameterSet<T> backward<T>(const NetworkSpec&, const ParameterSet<T>&,               \
                                       const ForwardCache<T>&, const Tensor<T>&);                \
  template double weight_penalty<T>(const NetworkSpec&, const ParameterSet<T>&);                 \
  template void sgd_step<T>(ParameterSet<T>&, const ParameterSet<T>&, OptimizerState<T>&);

POLU_INSTANTIATE(float)
POLU_INSTANTIATE(double)

#undef POLU_INSTANTIATE

}  // namespace polu::net
