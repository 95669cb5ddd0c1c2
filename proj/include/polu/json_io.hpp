#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace polu {

using json = nlohmann::json;

/// Serialize with a fixed number of significant digits for floating-point
/// values (nlohmann's own dump prints the shortest round-trip form instead).
std::string dump_json(const json& value, int significant_digits = 17, int indent = 2);

/// Writes dump_json(value) plus a trailing newline. Throws Error(IoError).
void write_json_file(const std::filesystem::path& path, const json& value,
                     int significant_digits = 17);

/// Throws Error(IoError) when unreadable, Error(ParseError) when malformed.
json read_json_file(const std::filesystem::path& path);

/// "%.{digits}g" with non-finite values spelled nan/inf/-inf.
std::string format_real(double value, int significant_digits);

}  // namespace polu
