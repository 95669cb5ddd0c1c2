#include "polu/activations.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "polu/error.hpp"

namespace polu::act {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) fail(ErrorKind::InvalidArgument, std::string(what) + " must be finite");
}

void require_power(double n) {
  if (!std::isfinite(n) || !(n > 0.0))
    fail(ErrorKind::InvalidArgument, "PoLU power n must be > 0, got " + std::to_string(n));
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

double parse_real(std::string_view text, std::string_view context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    fail(ErrorKind::InvalidArgument,
         "bad number '" + std::string(text) + "' in activation '" + std::string(context) + "'");
  return v;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Element-wise loops compute the negative branch unconditionally on a clamped
// input and then select; a division inside a ternary blocks vectorization.
// The rational forms for n = 1 and n = 2 avoid the cancellation in
// (1 - x)^-n - 1 near zero.
template <class T>
void polu_forward_loop(const T* x, T* y, std::size_t size, T n) {
  if (n == T(1)) {
    for (std::size_t i = 0; i < size; ++i) {
      const T v = x[i];
      const T neg = std::min(v, T(0));
      const T r = neg / (T(1) - neg);
      y[i] = v >= T(0) ? v : r;
    }
  } else if (n == T(2)) {
    for (std::size_t i = 0; i < size; ++i) {
      const T v = x[i];
      const T neg = std::min(v, T(0));
      const T inv = T(1) / (T(1) - neg);
      const T r = (neg * inv) * ((T(2) - neg) * inv);  // each factor bounded, no overflow
      y[i] = v >= T(0) ? v : r;
    }
  } else {
    for (std::size_t i = 0; i < size; ++i)
      y[i] = x[i] >= T(0) ? x[i] : std::expm1(-n * std::log1p(-x[i]));
  }
}

template <class T>
void polu_backward_loop(const T* x, const T* g, T* d, std::size_t size, T n) {
  if (n == T(1)) {
    for (std::size_t i = 0; i < size; ++i) {
      const T u = T(1) - std::min(x[i], T(0));
      const T r = g[i] / (u * u);
      d[i] = x[i] >= T(0) ? g[i] : r;
    }
  } else if (n == T(2)) {
    for (std::size_t i = 0; i < size; ++i) {
      const T u = T(1) - std::min(x[i], T(0));
      const T r = T(2) * g[i] / (u * u * u);
      d[i] = x[i] >= T(0) ? g[i] : r;
    }
  } else {
    for (std::size_t i = 0; i < size; ++i)
      d[i] = x[i] >= T(0) ? g[i] : g[i] * n * std::exp((-n - T(1)) * std::log1p(-x[i]));
  }
}

}  // namespace

ActivationSpec ActivationSpec::polu(double n) {
  ActivationSpec s;
  s.kind = Kind::PoLU;
  s.n = n;
  return s;
}

ActivationSpec ActivationSpec::relu() {
  ActivationSpec s;
  s.kind = Kind::ReLU;
  return s;
}

ActivationSpec ActivationSpec::lrelu(double leak) {
  ActivationSpec s;
  s.kind = Kind::LReLU;
  s.leak = leak;
  return s;
}

ActivationSpec ActivationSpec::elu(double alpha) {
  ActivationSpec s;
  s.kind = Kind::ELU;
  s.alpha = alpha;
  return s;
}

void ActivationSpec::validate() const {
  switch (kind) {
    case Kind::PoLU:
      require_power(n);
      break;
    case Kind::ELU:
      if (!std::isfinite(alpha) || !(alpha > 0.0))
        fail(ErrorKind::InvalidArgument, "ELU alpha must be > 0");
      break;
    case Kind::LReLU:
      if (!std::isfinite(leak) || leak < 0.0 || leak >= 1.0)
        fail(ErrorKind::InvalidArgument, "LReLU leak must lie in [0, 1)");
      break;
    case Kind::ReLU:
      break;
  }
}

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::PoLU: return "polu";
    case Kind::ReLU: return "relu";
    case Kind::LReLU: return "lrelu";
    case Kind::ELU: return "elu";
  }
  return "?";
}

std::string ActivationSpec::to_string() const {
  switch (kind) {
    case Kind::PoLU: return "polu:n=" + short_real(n);
    case Kind::ELU: return "elu:a=" + short_real(alpha);
    case Kind::LReLU: return "lrelu:l=" + short_real(leak);
    case Kind::ReLU: return "relu";
  }
  return "?";
}

ActivationSpec ActivationSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string name = lower(text.substr(0, colon));
  ActivationSpec spec;
  if (name == "polu") {
    spec = polu();
  } else if (name == "relu") {
    spec = relu();
  } else if (name == "lrelu" || name == "leaky_relu") {
    spec = lrelu();
  } else if (name == "elu") {
    spec = elu();
  } else {
    fail(ErrorKind::InvalidArgument, "unknown activation '" + std::string(text) + "'");
  }

  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view item = rest.substr(0, comma);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos)
        fail(ErrorKind::InvalidArgument, "expected key=value in '" + std::string(text) + "'");
      const std::string key = lower(item.substr(0, eq));
      const double value = parse_real(item.substr(eq + 1), text);
      if (spec.kind == Kind::PoLU && key == "n") {
        spec.n = value;
      } else if (spec.kind == Kind::ELU && (key == "a" || key == "alpha")) {
        spec.alpha = value;
      } else if (spec.kind == Kind::LReLU && (key == "l" || key == "leak")) {
        spec.leak = value;
      } else {
        fail(ErrorKind::InvalidArgument,
             "parameter '" + key + "' does not apply to " + std::string(kind_name(spec.kind)));
      }
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  }
  spec.validate();
  return spec;
}

double polu_forward(double x, double n) {
  require_finite(x, "x");
  require_power(n);
  if (x >= 0.0) return x;
  // (1 - x)^-n - 1 == expm1(-n log1p(-x)); underflow yields exactly -1.
  return std::expm1(-n * std::log1p(-x));
}

double polu_derivative(double x, double n) {
  require_finite(x, "x");
  require_power(n);
  if (x >= 0.0) return 1.0;
  return n * std::exp((-n - 1.0) * std::log1p(-x));
}

double reference_forward(const ActivationSpec& spec, double x) {
  spec.validate();
  require_finite(x, "x");
  switch (spec.kind) {
    case Kind::PoLU: return polu_forward(x, spec.n);
    case Kind::ReLU: return std::max(0.0, x);
    case Kind::LReLU: return std::max(x, spec.leak * x);
    case Kind::ELU: return x >= 0.0 ? x : spec.alpha * std::expm1(x);
  }
  return 0.0;
}

double reference_derivative(const ActivationSpec& spec, double x) {
  spec.validate();
  require_finite(x, "x");
  switch (spec.kind) {
    case Kind::PoLU: return polu_derivative(x, spec.n);
    case Kind::ReLU: return x >= 0.0 ? 1.0 : 0.0;
    case Kind::LReLU: return x >= 0.0 ? 1.0 : spec.leak;
    case Kind::ELU: return x >= 0.0 ? 1.0 : spec.alpha * std::exp(x);
  }
  return 0.0;
}

std::optional<double> negative_fixed_point(double n) {
  require_power(n);
  if (n <= 1.0) return std::nullopt;

  // g(x) = f(x) - x is positive at the left end of the bracket and negative
  // at the right end; it has exactly one root in between.
  auto g = [n](double x) { return polu_forward(x, n) - x; };
  double lo = -1.0 + 1e-9;
  double hi = -1e-9;
  double g_lo = g(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g_mid = g(mid);
    if (g_mid == 0.0) return mid;
    if ((g_mid > 0.0) == (g_lo > 0.0)) {
      lo = mid;
      g_lo = g_mid;
    } else {
      hi = mid;
    }
  }
  return std::abs(g(lo)) <= std::abs(g(hi)) ? lo : hi;
}

std::optional<double> saturation_value(const ActivationSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case Kind::PoLU: return -1.0;
    case Kind::ELU: return -spec.alpha;
    case Kind::ReLU:
    case Kind::LReLU: return std::nullopt;
  }
  return std::nullopt;
}

std::vector<CurveSample> sample_curve(const ActivationSpec& spec, double lo, double hi,
                                      std::size_t count) {
  spec.validate();
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
    fail(ErrorKind::InvalidArgument, "curve range requires finite lo < hi");
  if (count < 2) fail(ErrorKind::InvalidArgument, "curve needs at least 2 samples");

  std::vector<CurveSample> out;
  out.reserve(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = (i + 1 == count) ? hi : lo + step * static_cast<double>(i);
    out.push_back({x, reference_forward(spec, x), reference_derivative(spec, x)});
  }
  return out;
}

void write_curve_csv(std::ostream& os, std::span<const CurveSample> samples) {
  os << "x,f,df\n";
  for (const auto& s : samples)
    os << format_real(s.x) << ',' << format_real(s.f) << ',' << format_real(s.df) << '\n';
}

template <class T>
void apply_forward(const ActivationSpec& spec, std::span<const T> in, std::span<T> out) {
  const std::size_t size = in.size();
  const T* x = in.data();
  T* y = out.data();
  switch (spec.kind) {
    case Kind::PoLU:
      polu_forward_loop(x, y, size, static_cast<T>(spec.n));
      break;
    case Kind::ReLU:
      for (std::size_t i = 0; i < size; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
      break;
    case Kind::LReLU: {
      const T leak = static_cast<T>(spec.leak);
      for (std::size_t i = 0; i < size; ++i) {
        const T v = x[i];
        const T l = leak * v;
        y[i] = v >= T(0) ? v : l;
      }
      break;
    }
    case Kind::ELU: {
      const T alpha = static_cast<T>(spec.alpha);
      for (std::size_t i = 0; i < size; ++i)
        y[i] = x[i] >= T(0) ? x[i] : alpha * std::expm1(x[i]);
      break;
    }
  }
}

template <class T>
void apply_backward(const ActivationSpec& spec, std::span<const T> in, std::span<const T> grad_out,
                    std::span<T> grad_in) {
  const std::size_t size = in.size();
  const T* x = in.data();
  const T* g = grad_out.data();
  T* d = grad_in.data();
  switch (spec.kind) {
    case Kind::PoLU:
      polu_backward_loop(x, g, d, size, static_cast<T>(spec.n));
      break;
    case Kind::ReLU:
      for (std::size_t i = 0; i < size; ++i) d[i] = x[i] >= T(0) ? g[i] : T(0);
      break;
    case Kind::LReLU: {
      const T leak = static_cast<T>(spec.leak);
      for (std::size_t i = 0; i < size; ++i) {
        const T l = leak * g[i];
        d[i] = x[i] >= T(0) ? g[i] : l;
      }
      break;
    }
    case Kind::ELU: {
      const T alpha = static_cast<T>(spec.alpha);
      for (std::size_t i = 0; i < size; ++i)
        d[i] = x[i] >= T(0) ? g[i] : g[i] * alpha * std::exp(x[i]);
      break;
    }
  }
}

template void apply_forward<float>(const ActivationSpec&, std::span<const float>, std::span<float>);
template void apply_forward<double>(const ActivationSpec&, std::span<const double>,
                                    std::span<double>);
template void apply_backward<float>(const ActivationSpec&, std::span<const float>,
                                    std::span<const float>, std::span<float>);
template void apply_backward<double>(const ActivationSpec&, std::span<const double>,
                                     std::span<const double>, std::span<double>);

}  // namespace polu::act
