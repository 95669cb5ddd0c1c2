#include "polu/stack_notation.hpp"

#include <cctype>

#include "polu/error.hpp"

namespace polu::harness {

namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  std::vector<Stack> parse() {
    std::vector<Stack> stacks;
    skip_space();
    const bool paren = eat('(');
    for (;;) {
      skip_space();
      stacks.push_back(stack());
      skip_space();
      if (eat(',') || eat(';') || eat('.')) continue;
      break;
    }
    skip_space();
    if (paren && !eat(')')) error("expected ')'");
    skip_space();
    if (pos_ != s_.size()) error("unexpected trailing text");
    return stacks;
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorKind::ParseError, "stack notation, position " + std::to_string(pos_) + ": " + what +
                                    " in \"" + std::string(s_) + "\"");
  }

  void skip_space() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void times() {
    skip_space();
    if (s_.substr(pos_, 2) == "\xC3\x97") {  // U+00D7 in UTF-8
      pos_ += 2;
    } else if (s_.substr(pos_, 6) == "\\times") {
      pos_ += 6;
    } else if (pos_ < s_.size() && (s_[pos_] == 'x' || s_[pos_] == 'X' || s_[pos_] == '*')) {
      ++pos_;
    } else {
      error("expected a multiplication sign");
    }
    skip_space();
  }

  std::size_t number(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(s_[pos_] - '0');
      if (v > (std::size_t{1} << 32)) error(std::string(what) + " is too large");
      ++pos_;
    }
    if (pos_ == start) error(std::string("expected ") + what);
    if (v == 0) {
      pos_ = start;
      error(std::string(what) + " must be positive");
    }
    return v;
  }

  StackGroup group() {
    StackGroup g;
    g.count = number("layer count");
    times();
    g.size = number("filter/unit count");
    times();
    const std::size_t start = pos_;
    auto word = [&](std::string_view w) {
      if (s_.size() - pos_ < w.size()) return false;
      for (std::size_t i = 0; i < w.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s_[pos_ + i])) != w[i]) return false;
      pos_ += w.size();
      return true;
    };
    if (word("fc")) {
      g.kind = StackGroup::Kind::FC;
    } else if (word("softmax")) {
      g.kind = StackGroup::Kind::Softmax;
    } else if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      g.kind = StackGroup::Kind::Conv;
      g.kernel = number("kernel size");
    } else {
      pos_ = start;
      error("expected a kernel size, FC or Softmax");
    }
    return g;
  }

  Stack stack() {
    if (!eat('[')) error("expected '['");
    Stack st;
    for (;;) {
      skip_space();
      st.push_back(group());
      skip_space();
      if (eat(',')) continue;
      if (eat(']')) break;
      error("expected ',' or ']'");
    }
    return st;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

bool is_conv_stack(const Stack& st) {
  for (const auto& g : st)
    if (g.kind != StackGroup::Kind::Conv) return false;
  return true;
}

}  // namespace

std::vector<Stack> parse_stacks(std::string_view text) { return Parser(text).parse(); }

net::NetworkSpec parse_stack_notation(std::string_view text, const StackOptions& options) {
  const std::vector<Stack> stacks = parse_stacks(text);
  const std::size_t n = stacks.size();

  bool all_conv = true;
  std::size_t last_conv_stack = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_conv_stack(stacks[i])) last_conv_stack = i;
    else all_conv = false;
  }
  // Dense stacks must follow every conv stack.
  bool seen_dense = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_conv_stack(stacks[i])) seen_dense = true;
    for (const auto& g : stacks[i])
      if (seen_dense && g.kind == StackGroup::Kind::Conv)
        fail(ErrorKind::ParseError, "stack notation: convolution after a dense layer in stack " +
                                        std::to_string(i + 1));
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < stacks[i].size(); ++j)
      if (stacks[i][j].kind == StackGroup::Kind::Softmax &&
          (i + 1 != n || j + 1 != stacks[i].size() || stacks[i][j].count != 1))
        fail(ErrorKind::ParseError, "stack notation: Softmax must be the single final layer");

  std::vector<bool> pool = options.pool_after;
  if (pool.empty()) {
    pool.assign(n, false);
    if (all_conv) {
      for (std::size_t i = 0; i + 2 < n; ++i) pool[i] = true;
    } else if (last_conv_stack < n) {
      pool[last_conv_stack] = true;
    }
  }
  if (pool.size() != n)
    fail(ErrorKind::InvalidArgument, "pool_after lists " + std::to_string(pool.size()) +
                                         " flags for " + std::to_string(n) + " stacks");
  if (!options.dropout.empty() && options.dropout.size() != n)
    fail(ErrorKind::InvalidArgument, "dropout lists " + std::to_string(options.dropout.size()) +
                                         " rates for " + std::to_string(n) + " stacks");

  net::NetworkSpec spec;
  spec.height = options.height;
  spec.width = options.width;
  spec.channels = options.channels;
  spec.weight_decay = options.weight_decay;
  auto& L = spec.layers;
  bool flat = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < stacks[i].size(); ++j) {
      const StackGroup& g = stacks[i][j];
      for (std::size_t r = 0; r < g.count; ++r) {
        const bool output = i + 1 == n && j + 1 == stacks[i].size() && r + 1 == g.count;
        switch (g.kind) {
          case StackGroup::Kind::Conv:
            L.push_back(net::LayerSpec::conv(g.size, g.kernel, options.padding));
            if (output) {
              L.push_back(net::LayerSpec::flatten());
              L.push_back(net::LayerSpec::softmax());
            } else {
              L.push_back(net::LayerSpec::activation_layer(options.activation));
            }
            break;
          case StackGroup::Kind::FC:
          case StackGroup::Kind::Softmax:
            if (!flat) {
              L.push_back(net::LayerSpec::flatten());
              flat = true;
            }
            L.push_back(net::LayerSpec::dense(g.size));
            // A trailing FC group is the classifier, same as an explicit Softmax.
            if (output) L.push_back(net::LayerSpec::softmax());
            else L.push_back(net::LayerSpec::activation_layer(options.activation));
            break;
        }
      }
    }
    if (!options.dropout.empty() && options.dropout[i] > 0.0) {
      if (i + 1 == n) fail(ErrorKind::InvalidArgument, "dropout after the output stack");
      L.push_back(net::LayerSpec::dropout(options.dropout[i]));
    }
    if (pool[i]) {
      if (flat) fail(ErrorKind::InvalidArgument, "cannot pool after dense stack " + std::to_string(i + 1));
      L.push_back(net::LayerSpec::max_pool());
    }
  }
  spec.output_shapes();  // shape errors surface here with the layer index
  return spec;
}

}  // namespace polu::harness
