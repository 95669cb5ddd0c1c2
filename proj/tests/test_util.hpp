#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <zlib.h>

#include "polu/tensor.hpp"

namespace testutil {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path = fs::temp_directory_path() /
           ("polu_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Pixel (i, r, c) = (i + r + c) % 256, label i % 10.
inline void write_idx_pair(const fs::path& images, const fs::path& labels, std::size_t count) {
  std::vector<std::uint8_t> im, lb;
  put_be32(im, 0x803);
  put_be32(im, static_cast<std::uint32_t>(count));
  put_be32(im, 28);
  put_be32(im, 28);
  for (std::size_t i = 0; i < count; ++i)
    for (int r = 0; r < 28; ++r)
      for (int c = 0; c < 28; ++c) im.push_back(static_cast<std::uint8_t>((i + r + c) % 256));
  put_be32(lb, 0x801);
  put_be32(lb, static_cast<std::uint32_t>(count));
  for (std::size_t i = 0; i < count; ++i) lb.push_back(static_cast<std::uint8_t>(i % 10));
  write_bytes(images, im);
  write_bytes(labels, lb);
}

inline void write_mnist(const fs::path& dir, std::size_t train, std::size_t test, int = 0) {
  write_idx_pair(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", train);
  write_idx_pair(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", test);
}

inline void write_gzip(const fs::path& p, const std::vector<std::uint8_t>& raw) {
  gzFile f = gzopen(p.c_str(), "wb");
  gzwrite(f, raw.data(), static_cast<unsigned>(raw.size()));
  gzclose(f);
}

inline std::vector<std::uint8_t> cifar_records(std::size_t count, bool hundred, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (hundred) {
      out.push_back(static_cast<std::uint8_t>(gen() % 20));
      out.push_back(static_cast<std::uint8_t>(gen() % 100));
    } else {
      out.push_back(static_cast<std::uint8_t>(gen() % 10));
    }
    for (int k = 0; k < 3072; ++k) out.push_back(static_cast<std::uint8_t>(gen()));
  }
  return out;
}

inline void write_cifar10(const fs::path& dir, std::size_t per_batch, std::size_t test) {
  for (int b = 1; b <= 5; ++b)
    write_bytes(dir / ("data_batch_" + std::to_string(b) + ".bin"), cifar_records(per_batch, false, b));
  write_bytes(dir / "test_batch.bin", cifar_records(test, false, 99));
}

inline void write_cifar100(const fs::path& dir, std::size_t train, std::size_t test) {
  write_bytes(dir / "train.bin", cifar_records(train, true, 1));
  write_bytes(dir / "test.bin", cifar_records(test, true, 2));
}

// Images with strongly correlated pixels: a few shared latent factors plus noise.
inline polu::net::Tensor<float> correlated_images(std::size_t m, std::size_t h, std::size_t w,
                                                  std::size_t c, std::uint32_t seed) {
  const std::size_t dim = h * w * c, factors = 6;
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd mix(dim, factors);
  for (long i = 0; i < mix.size(); ++i) mix.data()[i] = nd(gen);
  polu::net::Tensor<float> x({m, h, w, c});
  Eigen::VectorXd z(factors);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t f = 0; f < factors; ++f) z[f] = nd(gen);
    const Eigen::VectorXd v = mix * z;
    for (std::size_t k = 0; k < dim; ++k) x[i * dim + k] = static_cast<float>(0.5 + v[k] + 0.3 * nd(gen));
  }
  return x;
}

// Sample covariance (n - 1 denominator) computed directly.
inline Eigen::MatrixXd covariance(const polu::net::Tensor<float>& x) {
  const std::size_t m = x.dim(0), dim = x.size() / m;
  Eigen::MatrixXd a(m, dim);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < dim; ++k) a(i, k) = x[i * dim + k];
  const Eigen::RowVectorXd mean = a.colwise().mean();
  a.rowwise() -= mean;
  return (a.transpose() * a) / double(m - 1);
}

}  // namespace testutil
