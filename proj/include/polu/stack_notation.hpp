#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "polu/network.hpp"

namespace polu::harness {

// Stack notation: "[1x32x3],[1x64x3],[1x128xFC],[1x10xSoftmax]". Each bracket
// is a stack of comma-separated groups count x size x kernel, where the
// kernel is a positive integer (conv), FC (dense) or Softmax (dense +
// softmax output). The multiplication sign may be written as x, X, * or the
// Unicode times sign; stacks may be separated by ',', ';' or '.', and the
// whole list may be wrapped in parentheses.

struct StackGroup {
  std::size_t count = 1;
  std::size_t size = 0;
  enum class Kind { Conv, FC, Softmax } kind = Kind::Conv;
  std::size_t kernel = 0;
};

using Stack = std::vector<StackGroup>;

/// Syntax only. Throws Error(ParseError) naming the byte offset.
std::vector<Stack> parse_stacks(std::string_view text);

struct StackOptions {
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t channels = 1;
  net::Padding padding = net::Padding::Valid;
  act::ActivationSpec activation = act::ActivationSpec::polu(2.0);
  double weight_decay = 0.0;
  /// One flag per stack. When empty: networks with FC stacks pool once after
  /// the last conv stack; all-conv networks pool after every stack except
  /// the last two.
  std::vector<bool> pool_after;
  /// Dropout rate per stack, inserted after the stack's last activation.
  std::vector<double> dropout;
};

/// Expands the notation into layers: Activation after every conv/dense
/// (except the output), Flatten before the first dense, optional dropout and
/// 2x2 pooling per stack. An all-conv network's last conv is the output: it
/// gets no activation and is followed by Flatten and Softmax.
net::NetworkSpec parse_stack_notation(std::string_view text, const StackOptions& options = {});

}  // namespace polu::harness
