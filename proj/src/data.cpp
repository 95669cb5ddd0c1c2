#include "polu/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "polu/error.hpp"
#include "polu/io.hpp"
#include "polu/random.hpp"

namespace polu::data {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPixels = kCifarSide * kCifarSide * 3;

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t offset, const std::string& file) {
  if (offset + 4 > b.size())
    fail(ErrorKind::FormatError, file + ": truncated header at offset " + std::to_string(offset));
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

net::Tensor<float> Dataset::gather(std::span<const std::size_t> indices) const {
  net::Shape shape = images.shape();
  const std::size_t per = images.size() / std::max<std::size_t>(1, shape[0]);
  shape[0] = indices.size();
  net::Tensor<float> out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) fail(ErrorKind::InvalidArgument, "sample index out of range");
    std::copy_n(images.data() + indices[i] * per, per, out.data() + i * per);
  }
  return out;
}

std::vector<std::uint32_t> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<std::uint32_t> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels.at(indices[i]);
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Split split) {
  const auto img = io::read_file(images);
  const auto lab = io::read_file(labels);
  const std::string img_name = images.filename().string();
  const std::string lab_name = labels.filename().string();

  const std::uint32_t im_magic = be32(img, 0, img_name);
  if (im_magic != kIdxImages)
    fail(ErrorKind::FormatError,
         img_name + ": bad image magic " + hex32(im_magic) + " at offset 0");
  const std::uint32_t lb_magic = be32(lab, 0, lab_name);
  if (lb_magic != kIdxLabels)
    fail(ErrorKind::FormatError,
         lab_name + ": bad label magic " + hex32(lb_magic) + " at offset 0");

  const std::size_t count = be32(img, 4, img_name);
  const std::size_t rows = be32(img, 8, img_name);
  const std::size_t cols = be32(img, 12, img_name);
  const std::size_t label_count = be32(lab, 4, lab_name);
  if (count != label_count)
    fail(ErrorKind::FormatError, img_name + " holds " + std::to_string(count) + " images but " +
                                     lab_name + " holds " + std::to_string(label_count) + " labels");
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + count * pixels)
    fail(ErrorKind::FormatError, img_name + ": truncated pixel data at offset " +
                                     std::to_string(img.size()) + ", expected " +
                                     std::to_string(16 + count * pixels) + " bytes");
  if (lab.size() < 8 + count)
    fail(ErrorKind::FormatError, lab_name + ": truncated labels at offset " +
                                     std::to_string(lab.size()));

  Dataset d;
  d.split = split;
  d.class_count = 10;
  d.images = net::Tensor<float>({count, rows, cols, 1});
  float* out = d.images.data();
  for (std::size_t i = 0; i < count * pixels; ++i) out[i] = static_cast<float>(img[16 + i]) / 255.0f;
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t l = lab[8 + i];
    if (l >= 10)
      fail(ErrorKind::FormatError,
           lab_name + ": label " + std::to_string(l) + " out of range at offset " +
               std::to_string(8 + i));
    d.labels[i] = l;
  }
  return d;
}

DatasetPair load_mnist(const std::filesystem::path& dir) {
  DatasetPair p;
  p.train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", Split::Train);
  p.test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", Split::Test);
  return p;
}

Dataset parse_cifar(std::span<const std::uint8_t> bytes, CifarVariant variant, Split split) {
  const std::size_t label_bytes = variant == CifarVariant::C10 ? 1 : 2;
  const std::size_t record = label_bytes + kCifarPixels;
  if (bytes.size() % record != 0)
    fail(ErrorKind::FormatError, "CIFAR data of " + std::to_string(bytes.size()) +
                                     " bytes is not a multiple of the " + std::to_string(record) +
                                     "-byte record");
  const std::size_t count = bytes.size() / record;
  Dataset d;
  d.split = split;
  d.class_count = variant == CifarVariant::C10 ? 10 : 100;
  d.images = net::Tensor<float>({count, kCifarSide, kCifarSide, 3});
  d.labels.resize(count);
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* rec = bytes.data() + i * record;
    const std::uint8_t label = rec[label_bytes - 1];
    if (label >= d.class_count)
      fail(ErrorKind::FormatError, "label " + std::to_string(label) + " out of range at offset " +
                                       std::to_string(i * record + label_bytes - 1));
    d.labels[i] = label;
    const std::uint8_t* px = rec + label_bytes;
    float* out = d.images.data() + i * kCifarPixels;
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c)
        out[p * 3 + c] = static_cast<float>(px[c * plane + p]) / 255.0f;
  }
  return d;
}

DatasetPair load_cifar(const std::filesystem::path& dir, CifarVariant variant) {
  namespace fs = std::filesystem;
  const bool c10 = variant == CifarVariant::C10;
  fs::path root = dir;
  const fs::path nested = dir / (c10 ? "cifar-10-batches-bin" : "cifar-100-binary");
  if (fs::is_directory(nested)) root = nested;

  std::vector<fs::path> train_files, test_files;
  if (c10) {
    for (int i = 1; i <= 5; ++i) train_files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
    test_files.push_back(root / "test_batch.bin");
  } else {
    train_files.push_back(root / "train.bin");
    test_files.push_back(root / "test.bin");
  }
  auto load = [&](const std::vector<fs::path>& files, Split split) {
    std::vector<std::uint8_t> all;
    for (const auto& f : files) {
      auto bytes = io::read_file(f);
      all.insert(all.end(), bytes.begin(), bytes.end());
    }
    return parse_cifar(all, variant, split);
  };
  return {load(train_files, Split::Train), load(test_files, Split::Test)};
}

Dataset subset(const Dataset& d, std::size_t count, std::uint64_t seed) {
  if (count >= d.size()) return d;
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 gen(derive_seed(seed, "subset"));
  // Partial Fisher-Yates; keep the chosen indices in ascending order.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(gen() % (d.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  Dataset out;
  out.split = d.split;
  out.class_count = d.class_count;
  out.images = d.gather(idx);
  out.labels = d.gather_labels(idx);
  return out;
}

void global_contrast_normalize(net::Tensor<float>& images, double scale, double epsilon) {
  if (images.rank() < 2) fail(ErrorKind::InvalidArgument, "expected a batch of images");
  const std::size_t count = images.dim(0);
  const std::size_t per = count ? images.size() / count : 0;
  for (std::size_t i = 0; i < count; ++i) {
    float* x = images.data() + i * per;
    double mean = 0.0;
    for (std::size_t p = 0; p < per; ++p) mean += x[p];
    mean /= static_cast<double>(per);
    double sq = 0.0;
    for (std::size_t p = 0; p < per; ++p) sq += (x[p] - mean) * (x[p] - mean);
    const double denom = std::max(epsilon, std::sqrt(sq) / scale);
    for (std::size_t p = 0; p < per; ++p) x[p] = static_cast<float>((x[p] - mean) / denom);
  }
}

ZcaTransform zca_fit(const net::Tensor<float>& images, double epsilon, std::size_t max_samples,
                     std::uint64_t seed) {
  if (images.rank() < 2 || images.dim(0) < 2)
    fail(ErrorKind::InvalidArgument, "ZCA needs at least two images");
  if (!(epsilon > 0.0)) fail(ErrorKind::InvalidArgument, "ZCA epsilon must be > 0");
  const std::size_t count = images.dim(0);
  const std::size_t dim = images.size() / count;

  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_samples >= 2 && count > max_samples) {
    std::mt19937_64 gen(derive_seed(seed, "zca"));
    for (std::size_t i = 0; i < max_samples; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(gen() % (count - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(max_samples);
    std::sort(idx.begin(), idx.end());
  }

  const auto m = static_cast<Eigen::Index>(idx.size());
  const auto D = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd X(m, D);
  for (Eigen::Index r = 0; r < m; ++r)
    for (Eigen::Index c = 0; c < D; ++c)
      X(r, c) = images[idx[static_cast<std::size_t>(r)] * dim + static_cast<std::size_t>(c)];

  ZcaTransform t;
  net::Shape sample = images.shape();
  sample.erase(sample.begin());
  t.sample_shape = sample;
  t.epsilon = epsilon;
  t.mean = X.colwise().mean().transpose();
  X.rowwise() -= t.mean.transpose();
  Eigen::MatrixXd cov(D, D);
  cov.setZero();
  cov.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose(), 1.0 / static_cast<double>(m - 1));
  cov = cov.selfadjointView<Eigen::Lower>();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success)
    fail(ErrorKind::ConvergenceFailure, "eigendecomposition of the pixel covariance failed");
  const Eigen::VectorXd scale =
      (es.eigenvalues().cwiseMax(0.0).array() + epsilon).rsqrt().matrix();
  const Eigen::MatrixXd& U = es.eigenvectors();
  t.whitening = U * scale.asDiagonal() * U.transpose();
  // Symmetrize away rounding so the transform is exactly symmetric.
  t.whitening = 0.5 * (t.whitening + t.whitening.transpose()).eval();
  return t;
}

void zca_apply(const ZcaTransform& t, net::Tensor<float>& images) {
  if (images.rank() < 2) fail(ErrorKind::InvalidArgument, "expected a batch of images");
  net::Shape sample = images.shape();
  sample.erase(sample.begin());
  if (sample != t.sample_shape)
    fail(ErrorKind::InvalidArgument, "ZCA fitted on " + net::shape_string(t.sample_shape) +
                                         ", applied to " + net::shape_string(sample));
  const std::size_t count = images.dim(0);
  const auto D = static_cast<Eigen::Index>(t.mean.size());
  const Eigen::MatrixXf W = t.whitening.cast<float>();
  const Eigen::RowVectorXf mu = t.mean.transpose().cast<float>();
  using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < count; start += kChunk) {
    const auto rows = static_cast<Eigen::Index>(std::min(kChunk, count - start));
    Eigen::Map<RowMat> x(images.data() + start * static_cast<std::size_t>(D), rows, D);
    RowMat centered = x.rowwise() - mu;
    x.noalias() = centered * W;  // W is symmetric, so right-multiplying is the same map
  }
}

CropFlip augment_draw(std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 gen(derive_seed(seed, "augment", index));
  const std::size_t span = 2 * kAugmentPad + 1;
  CropFlip d;
  d.dy = static_cast<std::size_t>(gen() % span);
  d.dx = static_cast<std::size_t>(gen() % span);
  d.flip = (gen() >> 63) != 0;
  return d;
}

net::Tensor<float> augment_with(const net::Tensor<float>& batch, std::span<const CropFlip> draws) {
  if (batch.rank() != 4 || batch.dim(1) != kCifarSide || batch.dim(2) != kCifarSide)
    fail(ErrorKind::InvalidArgument,
         "augmentation expects [B, 32, 32, C], got " + net::shape_string(batch.shape()));
  const std::size_t n = batch.dim(0), h = batch.dim(1), w = batch.dim(2), c = batch.dim(3);
  if (draws.size() != n) fail(ErrorKind::InvalidArgument, "one crop/flip draw per image required");
  net::Tensor<float> out(batch.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const CropFlip& d = draws[i];
    if (d.dy > 2 * kAugmentPad || d.dx > 2 * kAugmentPad)
      fail(ErrorKind::InvalidArgument, "crop offset outside the padded image");
    const float* src = batch.data() + i * h * w * c;
    float* dst = out.data() + i * h * w * c;
    for (std::size_t y = 0; y < h; ++y) {
      // Source row in unpadded coordinates; rows in the padding stay zero.
      const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + d.dy) - static_cast<std::ptrdiff_t>(kAugmentPad);
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t cx = d.flip ? w - 1 - x : x;
        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(cx + d.dx) - static_cast<std::ptrdiff_t>(kAugmentPad);
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
        std::copy_n(src + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c, c,
                    dst + (y * w + x) * c);
      }
    }
  }
  return out;
}

net::Tensor<float> augment(const net::Tensor<float>& batch, std::uint64_t seed,
                           std::uint64_t first_index) {
  const std::size_t n = batch.rank() > 0 ? batch.dim(0) : 0;
  std::vector<CropFlip> draws(n);
  for (std::size_t i = 0; i < n; ++i) draws[i] = augment_draw(seed, first_index + i);
  return augment_with(batch, draws);
}

}  // namespace polu::data
