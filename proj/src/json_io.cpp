#include "polu/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "polu/error.hpp"

namespace polu {

namespace {

void write_value(std::string& out, const json& v, int digits, int indent, int depth) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (v.type()) {
    case json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        write_value(out, it.value(), digits, indent, depth + 1);
      }
      newline(depth);
      out += '}';
      return;
    }
    case json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        newline(depth + 1);
        write_value(out, v[i], digits, indent, depth + 1);
      }
      newline(depth);
      out += ']';
      return;
    }
    case json::value_t::number_float: {
      const double d = v.get<double>();
      // JSON has no spelling for non-finite numbers.
      out += std::isfinite(d) ? format_real(d, digits) : "null";
      return;
    }
    default:
      out += v.dump();
  }
}

}  // namespace

std::string format_real(double value, int significant_digits) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
  return buf;
}

std::string dump_json(const json& value, int significant_digits, int indent) {
  std::string out;
  write_value(out, value, significant_digits, indent, 0);
  return out;
}

void write_json_file(const std::filesystem::path& path, const json& value, int significant_digits) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  os << dump_json(value, significant_digits) << '\n';
  if (!os) fail(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace polu
