#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polu::act {

enum class Kind { PoLU, ReLU, LReLU, ELU };

/// Tagged activation description. Only the parameter belonging to `kind`
/// is consulted; the others keep their defaults.
struct ActivationSpec {
  Kind kind = Kind::PoLU;
  double n = 2.0;      // PoLU power
  double alpha = 1.0;  // ELU scale
  double leak = 0.01;  // LReLU slope

  static ActivationSpec polu(double n = 2.0);
  static ActivationSpec relu();
  static ActivationSpec lrelu(double leak = 0.01);
  static ActivationSpec elu(double alpha = 1.0);

  /// Throws Error(InvalidArgument) when the parameter for `kind` is out of range.
  void validate() const;

  /// Inverse of parse(): "polu:n=2", "elu:a=1", "relu", "lrelu:l=0.01".
  std::string to_string() const;
  static ActivationSpec parse(std::string_view text);

  friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

std::string_view kind_name(Kind kind);

// Scalar kernels, 64-bit.

/// x for x >= 0, (1 - x)^(-n) - 1 otherwise.
double polu_forward(double x, double n);
/// 1 for x >= 0 (including the kink), n (1 - x)^(-n-1) otherwise.
double polu_derivative(double x, double n);

double reference_forward(const ActivationSpec& spec, double x);
double reference_derivative(const ActivationSpec& spec, double x);

/// The unique x* < 0 with polu_forward(x*, n) == x*; present iff n > 1.
std::optional<double> negative_fixed_point(double n);

/// Horizontal asymptote as x -> -inf; empty for ReLU/LReLU.
std::optional<double> saturation_value(const ActivationSpec& spec);

struct CurveSample {
  double x;
  double f;
  double df;
};

std::vector<CurveSample> sample_curve(const ActivationSpec& spec, double lo, double hi,
                                      std::size_t count);

/// CSV with header `x,f,df`, 17 significant digits.
void write_curve_csv(std::ostream& os, std::span<const CurveSample> samples);

// Element-wise kernels used by the tensor layer.

template <class T>
void apply_forward(const ActivationSpec& spec, std::span<const T> in, std::span<T> out);

/// grad_in = grad_out * f'(in), element-wise.
template <class T>
void apply_backward(const ActivationSpec& spec, std::span<const T> in,
                    std::span<const T> grad_out, std::span<T> grad_in);

}  // namespace polu::act
