#pragma once

#include <filesystem>
#include <iosfwd>

#include "polu/network.hpp"

namespace polu::net {

// PLNET1 container: the 6-byte magic "PLNET1", then one record per tensor
// until end of file. Record: name length (u64 LE), name bytes, rank (u64 LE),
// dims (u64 LE each), payload as little-endian f32.

void write_parameters(std::ostream& os, const ParameterSet<float>& params);
ParameterSet<float> read_parameters(std::istream& is);

/// Throws Error(IoError) when the file cannot be written.
void save_parameters(const std::filesystem::path& path, const ParameterSet<float>& params);
/// Throws Error(IoError) for a missing file, Error(FormatError) for bad content.
ParameterSet<float> load_parameters(const std::filesystem::path& path);

}  // namespace polu::net
