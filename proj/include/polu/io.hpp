#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace polu::io {

/// Whole-file read. If `path` is missing but `path.gz` exists, the gzip file
/// is inflated instead. Throws Error(NotFound) or Error(IoError).
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Inflates a gzip (or zlib) buffer. Throws Error(FormatError).
std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> data);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);

/// Lower-case hex digests; `algorithm` is "sha256" or "md5".
std::string digest_hex(std::span<const std::uint8_t> data, const std::string& algorithm);
std::string file_digest_hex(const std::filesystem::path& path, const std::string& algorithm);

}  // namespace polu::io
