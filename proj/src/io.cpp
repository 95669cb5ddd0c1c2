#include "polu/io.hpp"

#include <fstream>
#include <memory>

#include <openssl/evp.h>
#include <zlib.h>

#include "polu/error.hpp"

namespace polu::io {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  is.seekg(0, std::ios::end);
  const std::streamoff size = is.tellg();
  is.seekg(0);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(size));
  if (size > 0 && !is.read(reinterpret_cast<char*>(out.data()), size))
    fail(ErrorKind::IoError, "short read from '" + path.string() + "'");
  return out;
}

const EVP_MD* md_for(const std::string& algorithm) {
  if (algorithm == "sha256") return EVP_sha256();
  if (algorithm == "md5") return EVP_md5();
  fail(ErrorKind::InvalidArgument, "unsupported digest '" + algorithm + "'");
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) return slurp(path);
  std::filesystem::path gz = path;
  gz += ".gz";
  if (std::filesystem::exists(gz)) return gunzip(slurp(gz));
  fail(ErrorKind::NotFound, "file '" + path.string() + "' not found");
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> data) {
  z_stream zs{};
  // 15 + 32: accept both gzip and zlib headers.
  if (inflateInit2(&zs, 15 + 32) != Z_OK) fail(ErrorKind::IoError, "inflateInit2 failed");
  std::unique_ptr<z_stream, int (*)(z_stream*)> guard(&zs, inflateEnd);
  zs.next_in = const_cast<Bytef*>(data.data());
  zs.avail_in = static_cast<uInt>(data.size());

  std::vector<std::uint8_t> out;
  std::size_t chunk = std::max<std::size_t>(1 << 16, data.size() * 4);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    const std::size_t have = out.size();
    out.resize(have + chunk);
    zs.next_out = out.data() + have;
    zs.avail_out = static_cast<uInt>(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    out.resize(have + (chunk - zs.avail_out));
    if (rc == Z_STREAM_END) {
      // Concatenated gzip members are legal; continue with the next one.
      if (zs.avail_in > 0) {
        inflateReset(&zs);
        rc = Z_OK;
      }
      continue;
    }
    if (rc != Z_OK && rc != Z_BUF_ERROR)
      fail(ErrorKind::FormatError, std::string("corrupt compressed data: ") +
                                       (zs.msg ? zs.msg : "inflate error") + " at input offset " +
                                       std::to_string(zs.total_in));
    if (rc == Z_BUF_ERROR && zs.avail_in == 0)
      fail(ErrorKind::FormatError, "truncated compressed data at input offset " +
                                       std::to_string(zs.total_in));
  }
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!os) fail(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

std::string digest_hex(std::span<const std::uint8_t> data, const std::string& algorithm) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, md_for(algorithm), nullptr) != 1)
    fail(ErrorKind::IoError, "digest computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string file_digest_hex(const std::filesystem::path& path, const std::string& algorithm) {
  return digest_hex(slurp(path), algorithm);
}

}  // namespace polu::io
