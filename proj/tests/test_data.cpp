#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "polu/data.hpp"
#include "polu/error.hpp"
#include "polu/fetch.hpp"
#include "polu/io.hpp"
#include "test_util.hpp"

using namespace polu;
using namespace polu::data;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::IoError;
}

}  // namespace

TEST(Idx, SyntheticMnistRoundTrip) {
  testutil::TempDir dir;
  testutil::write_mnist(dir.path, 20, 7, 3);
  const auto d = load_mnist(dir.path);
  EXPECT_EQ(d.train.size(), 20u);
  EXPECT_EQ(d.test.size(), 7u);
  EXPECT_EQ(d.train.images.shape(), (net::Shape{20, 28, 28, 1}));
  EXPECT_EQ(d.train.class_count, 10u);
  EXPECT_EQ(d.test.split, Split::Test);
  // Pixel (i, r, c) was written as (i + r + c) % 256.
  EXPECT_FLOAT_EQ(d.train.images[1 * 784 + 2 * 28 + 3], 6.0f / 255.0f);
  for (float v : d.train.images.storage()) {
    ASSERT_GE(v, 0.f);
    ASSERT_LE(v, 1.f);
  }
  for (std::size_t i = 0; i < d.train.size(); ++i) EXPECT_EQ(d.train.labels[i], i % 10);
}

TEST(Idx, GzipFallback) {
  testutil::TempDir dir;
  testutil::write_mnist(dir.path, 5, 5, 1);
  for (const char* name : {"train-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}) {
    const auto raw = io::read_file(dir.path / name);
    testutil::write_gzip(dir.path / (std::string(name) + ".gz"), raw);
    fs::remove(dir.path / name);
  }
  const auto d = load_mnist(dir.path);
  EXPECT_EQ(d.train.size(), 5u);
  EXPECT_EQ(d.test.size(), 5u);
}

TEST(Idx, Errors) {
  testutil::TempDir dir;
  testutil::write_mnist(dir.path, 4, 4, 1);
  auto labels = io::read_file(dir.path / "train-labels-idx1-ubyte");
  labels[3] = 0x03;  // image magic on a label file
  io::write_file(dir.path / "train-labels-idx1-ubyte", labels);
  try {
    load_mnist(dir.path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FormatError);
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }

  testutil::write_mnist(dir.path, 4, 4, 1);
  auto images = io::read_file(dir.path / "t10k-images-idx3-ubyte");
  images.resize(images.size() - 10);
  io::write_file(dir.path / "t10k-images-idx3-ubyte", images);
  EXPECT_EQ(kind_of([&] { load_mnist(dir.path); }), ErrorKind::FormatError);

  EXPECT_EQ(kind_of([&] { load_mnist(dir.path / "nope"); }), ErrorKind::NotFound);

  testutil::write_mnist(dir.path, 4, 3, 1);  // label count differs from image count
  auto img = io::read_file(dir.path / "train-images-idx3-ubyte");
  io::write_file(dir.path / "t10k-images-idx3-ubyte", img);
  EXPECT_EQ(kind_of([&] { load_mnist(dir.path); }), ErrorKind::FormatError);
}

TEST(Cifar, PlanarToInterleaved) {
  std::vector<std::uint8_t> rec(3073);
  rec[0] = 7;
  for (int i = 0; i < 3072; ++i) rec[1 + i] = static_cast<std::uint8_t>(i % 251);
  const auto d = parse_cifar(rec, CifarVariant::C10, Split::Train);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.labels[0], 7u);
  EXPECT_EQ(d.images.shape(), (net::Shape{1, 32, 32, 3}));
  // Reference decoder: channel c of pixel (r, col) sits at c * 1024 + r * 32 + col.
  for (int r = 0; r < 32; ++r)
    for (int col = 0; col < 32; ++col)
      for (int c = 0; c < 3; ++c)
        ASSERT_FLOAT_EQ(d.images[(r * 32 + col) * 3 + c], rec[1 + c * 1024 + r * 32 + col] / 255.0f);
}

TEST(Cifar, FineLabelAndErrors) {
  std::vector<std::uint8_t> rec(2 * 3074);
  rec[0] = 3;
  rec[1] = 77;
  rec[3074] = 19;
  rec[3075] = 99;
  const auto d = parse_cifar(rec, CifarVariant::C100, Split::Test);
  EXPECT_EQ(d.labels, (std::vector<std::uint32_t>{77, 99}));
  EXPECT_EQ(d.class_count, 100u);
  rec.pop_back();
  EXPECT_EQ(kind_of([&] { parse_cifar(rec, CifarVariant::C100, Split::Test); }), ErrorKind::FormatError);
  std::vector<std::uint8_t> bad(3073);
  bad[0] = 10;
  EXPECT_EQ(kind_of([&] { parse_cifar(bad, CifarVariant::C10, Split::Test); }), ErrorKind::FormatError);
}

TEST(Cifar, DirectoryLayouts) {
  testutil::TempDir dir;
  testutil::write_cifar10(dir.path / "cifar-10-batches-bin", 3, 2);
  const auto c10 = load_cifar(dir.path, CifarVariant::C10);
  EXPECT_EQ(c10.train.size(), 15u);
  EXPECT_EQ(c10.test.size(), 2u);
  EXPECT_EQ(c10.train.class_count, 10u);

  testutil::write_cifar100(dir.path, 4, 3);
  const auto c100 = load_cifar(dir.path, CifarVariant::C100);
  EXPECT_EQ(c100.train.size(), 4u);
  EXPECT_EQ(c100.test.class_count, 100u);
  EXPECT_EQ(kind_of([&] { load_cifar(dir.path / "missing", CifarVariant::C10); }), ErrorKind::NotFound);
}

TEST(Subset, SeededAndSorted) {
  testutil::TempDir dir;
  testutil::write_mnist(dir.path, 50, 1, 1);
  const auto d = load_mnist(dir.path).train;
  const auto a = subset(d, 10, 3), b = subset(d, 10, 3), c = subset(d, 10, 4);
  EXPECT_EQ(a.size(), 10u);
  EXPECT_EQ(a.images, b.images);
  EXPECT_NE(a.images, c.images);
  EXPECT_EQ(subset(d, 100, 3).size(), 50u);
}

TEST(Gcn, MeanZeroNormScale) {
  net::Tensor<float> x({3, 4, 4, 3});
  std::mt19937 gen(1);
  std::uniform_real_distribution<float> u(0, 1);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(gen);
  for (std::size_t i = 96; i < 144; ++i) x[i] = 0.3f;  // third image constant
  global_contrast_normalize(x);
  for (int img = 0; img < 3; ++img) {
    double mean = 0, sq = 0;
    for (int i = 0; i < 48; ++i) mean += x[img * 48 + i];
    for (int i = 0; i < 48; ++i) sq += double(x[img * 48 + i]) * x[img * 48 + i];
    EXPECT_NEAR(mean / 48, 0.0, 1e-6);
    if (img < 2) EXPECT_NEAR(std::sqrt(sq), 55.0, 1e-3);
    else EXPECT_EQ(sq, 0.0);
  }
}

TEST(Zca, WhitensCorrelatedData) {
  const std::size_t dim = 4 * 4 * 3, m = 5000;
  const auto x = testutil::correlated_images(m, 4, 4, 3, 2);
  const auto t = zca_fit(x, 1e-2);
  ASSERT_EQ(t.whitening.rows(), static_cast<long>(dim));
  EXPECT_LT((t.whitening - t.whitening.transpose()).cwiseAbs().maxCoeff(), 1e-6);
  auto y = x;
  zca_apply(t, y);
  const auto cov = testutil::covariance(y);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      if (i == j) {
        EXPECT_GE(cov(i, j), 0.5);
        EXPECT_LE(cov(i, j), 1.5);
      } else {
        EXPECT_LT(std::abs(cov(i, j)), 0.05);
      }
    }

  net::Tensor<float> mean_image({1, 4, 4, 3});
  for (std::size_t i = 0; i < dim; ++i) mean_image[i] = static_cast<float>(t.mean[i]);
  zca_apply(t, mean_image);
  for (float v : mean_image.storage()) EXPECT_NEAR(v, 0.f, 1e-4);

  net::Tensor<float> wrong({2, 4, 4, 1});
  EXPECT_EQ(kind_of([&] { zca_apply(t, wrong); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([&] { zca_fit(net::Tensor<float>({1, 2, 2, 1})); }), ErrorKind::InvalidArgument);
}

TEST(Augment, CenterCropIsIdentity) {
  const auto x = testutil::correlated_images(3, 32, 32, 3, 5);
  std::vector<CropFlip> draws(3);
  EXPECT_EQ(augment_with(x, draws), x);
  draws[1].flip = true;
  const auto f = augment_with(x, draws);
  EXPECT_EQ(f.shape(), x.shape());
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c)
      for (int ch = 0; ch < 3; ++ch)
        ASSERT_EQ(f[3072 + (r * 32 + c) * 3 + ch], x[3072 + (r * 32 + 31 - c) * 3 + ch]);
}

TEST(Augment, ShiftsFillWithZeros) {
  net::Tensor<float> x({1, 32, 32, 1}, 1.0f);
  const CropFlip d{0, 8, false};  // 4 rows up from center, 4 columns right
  const auto y = augment_with(x, {&d, 1});
  EXPECT_EQ(y[0], 0.f);                 // row 0 comes from padding
  EXPECT_EQ(y[4 * 32 + 0], 1.f);        // row 4 col 0 -> source (0, 4)
  EXPECT_EQ(y[4 * 32 + 28], 0.f);       // col 28 -> source col 32, padding
  EXPECT_EQ(y[31 * 32 + 27], 1.f);
}

TEST(Augment, FrequenciesAndErrors) {
  std::vector<int> dy(9), dx(9);
  int flips = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto d = augment_draw(123, i);
    ASSERT_LE(d.dy, 8u);
    ASSERT_LE(d.dx, 8u);
    ++dy[d.dy];
    ++dx[d.dx];
    flips += d.flip;
  }
  EXPECT_NEAR(flips / double(n), 0.5, 0.02);
  double chi = 0;
  for (int k = 0; k < 9; ++k) {
    const double e = n / 9.0;
    chi += (dy[k] - e) * (dy[k] - e) / e + (dx[k] - e) * (dx[k] - e) / e;
  }
  EXPECT_LT(chi, 40.0);  // 16 dof, p ~ 1e-3
  EXPECT_EQ(augment_draw(1, 2).dy, augment_draw(1, 2).dy);

  EXPECT_EQ(kind_of([] { augment(net::Tensor<float>({1, 28, 28, 1}), 1); }), ErrorKind::InvalidArgument);
  const auto x = testutil::correlated_images(4, 32, 32, 3, 6);
  EXPECT_EQ(augment(x, 9, 2), augment(x, 9, 2));
}

TEST(Mnist, RealFilesWhenPresent) {
  const auto dir = fetch::data_root() / "mnist";
  if (!fs::exists(dir)) GTEST_SKIP() << "no MNIST under " << dir;
  const auto d = load_mnist(dir);
  EXPECT_EQ(d.train.size(), 60000u);
  EXPECT_EQ(d.test.size(), 10000u);
  EXPECT_EQ(d.train.images.shape(), (net::Shape{60000, 28, 28, 1}));
}
