#include "polu/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace polu::net {

namespace {

constexpr std::array<char, 6> kMagic{'P', 'L', 'N', 'E', 'T', '1'};
// Sanity limits so a corrupt length cannot trigger a huge allocation.
constexpr std::uint64_t kMaxName = 4096;
constexpr std::uint64_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

static_assert(std::endian::native == std::endian::little, "PLNET1 I/O assumes a little-endian host");

void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t get_u64(std::istream& is, const char* what, std::streamoff record_start) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    fail(ErrorKind::FormatError, std::string("truncated ") + what + " in record at offset " +
                                     std::to_string(record_start));
  return v;
}

}  // namespace

void write_parameters(std::ostream& os, const ParameterSet<float>& params) {
  os.write(kMagic.data(), kMagic.size());
  for (const auto& t : params.tensors) {
    put_u64(os, t.name.size());
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u64(os, t.value.rank());
    for (std::size_t d : t.value.shape()) put_u64(os, d);
    os.write(reinterpret_cast<const char*>(t.value.data()),
             static_cast<std::streamsize>(t.value.size() * sizeof(float)));
  }
  if (!os) fail(ErrorKind::IoError, "failed writing parameter stream");
}

ParameterSet<float> read_parameters(std::istream& is) {
  std::array<char, 6> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    fail(ErrorKind::FormatError, "missing PLNET1 header at offset 0");

  ParameterSet<float> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const std::streamoff start = is.tellg();
    const std::uint64_t name_len = get_u64(is, "name length", start);
    if (name_len == 0 || name_len > kMaxName)
      fail(ErrorKind::FormatError,
           "bad name length " + std::to_string(name_len) + " at offset " + std::to_string(start));
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
      fail(ErrorKind::FormatError, "truncated name at offset " + std::to_string(start));

    const std::uint64_t rank = get_u64(is, "rank", start);
    if (rank > kMaxRank)
      fail(ErrorKind::FormatError, "rank " + std::to_string(rank) + " too large for '" + name + "'");
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
      const std::uint64_t d = get_u64(is, "dimension", start);
      if (d == 0 || d > kMaxElements || count * d > kMaxElements)
        fail(ErrorKind::FormatError, "bad dimension in '" + name + "'");
      count *= d;
      shape.push_back(static_cast<std::size_t>(d));
    }

    std::vector<float> values(count);
    if (!is.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(count * sizeof(float))))
      fail(ErrorKind::FormatError, "truncated payload for '" + name + "' (record at offset " +
                                       std::to_string(start) + ")");
    out.tensors.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(values))});
  }
  return out;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet<float>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  write_parameters(os, params);
  os.flush();
  if (!os) fail(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

ParameterSet<float> load_parameters(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  return read_parameters(is);
}

}  // namespace polu::net
