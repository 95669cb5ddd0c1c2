#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "polu/json_io.hpp"

namespace polu::fetch {

/// $POLU_DATA_DIR, else $HOME/.cache/polu.
std::filesystem::path data_root();

struct FileEntry {
  std::string name;               // file name inside the dataset directory
  std::vector<std::string> urls;  // mirrors, tried in order; file:// works too
  std::string algorithm;          // "sha256" or "md5"; empty = unverified
  std::string digest;
  std::string unpack;             // "", "gzip" or "tar.gz"
  bool digest_of_content = false; // digest covers the inflated bytes (gzip only)
};

struct DatasetEntry {
  std::string name;
  std::string dir;  // relative to the data root
  std::vector<FileEntry> files;
};

struct Manifest {
  std::vector<DatasetEntry> datasets;
  const DatasetEntry& find(const std::string& name) const;
};

Manifest parse_manifest(const json& j);
Manifest load_manifest(const std::filesystem::path& path);
/// Built-in manifest for mnist, cifar10 and cifar100.
Manifest default_manifest();

struct FetchResult {
  std::filesystem::path dir;
  std::vector<std::string> downloaded;
  std::vector<std::string> already_present;
};

/// Downloads, verifies and unpacks every file of `name` below `root`. Files
/// already present with a matching digest are not downloaded again.
FetchResult fetch_dataset(const Manifest& manifest, const std::string& name,
                          const std::filesystem::path& root, std::ostream* log = nullptr);

/// GET via libcurl. Throws Error(IoError) on any transfer failure.
std::vector<std::uint8_t> download(const std::string& url);

/// Extracts regular files from a POSIX ustar archive below `dest`.
std::vector<std::filesystem::path> extract_tar(std::span<const std::uint8_t> archive,
                                               const std::filesystem::path& dest);

}  // namespace polu::fetch
