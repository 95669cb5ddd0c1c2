#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "polu/tensor.hpp"

namespace polu::data {

enum class Split { Train, Test };

struct Dataset {
  net::Tensor<float> images;  // [count, height, width, channels], NHWC
  std::vector<std::uint32_t> labels;
  Split split = Split::Train;
  std::size_t class_count = 0;

  std::size_t size() const { return labels.size(); }
  /// Copies the samples at `indices` (in that order) into a new batch.
  net::Tensor<float> gather(std::span<const std::size_t> indices) const;
  std::vector<std::uint32_t> gather_labels(std::span<const std::size_t> indices) const;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
};

/// Reads one IDX image file and its label file. Gzipped copies (".gz") are
/// accepted when the plain file is absent.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Split split);

/// Expects train-images-idx3-ubyte, train-labels-idx1-ubyte,
/// t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte in `dir`.
DatasetPair load_mnist(const std::filesystem::path& dir);

enum class CifarVariant { C10, C100 };

/// Parses concatenated binary records: 1 label byte (c10) or coarse + fine
/// label bytes (c100, fine kept), then 3072 channel-planar RGB bytes.
Dataset parse_cifar(std::span<const std::uint8_t> bytes, CifarVariant variant, Split split);

/// `dir` holds data_batch_{1..5}.bin + test_batch.bin (c10) or train.bin +
/// test.bin (c100), directly or inside cifar-10-batches-bin / cifar-100-binary.
DatasetPair load_cifar(const std::filesystem::path& dir, CifarVariant variant);

/// Seeded uniform subset of `count` samples (all when count >= size).
Dataset subset(const Dataset& d, std::size_t count, std::uint64_t seed);

/// Per image: subtract its mean, divide by max(epsilon, ||x|| / scale).
void global_contrast_normalize(net::Tensor<float>& images, double scale = 55.0,
                               double epsilon = 1e-8);

struct ZcaTransform {
  net::Shape sample_shape;
  Eigen::VectorXd mean;
  Eigen::MatrixXd whitening;  // U (L + eps I)^{-1/2} U^T
  double epsilon = 1e-2;
};

/// Fits on at most `max_samples` images (seeded uniform subsample).
ZcaTransform zca_fit(const net::Tensor<float>& images, double epsilon = 1e-2,
                     std::size_t max_samples = 10000, std::uint64_t seed = 0);
void zca_apply(const ZcaTransform& t, net::Tensor<float>& images);

struct CropFlip {
  std::size_t dy = 4;  // crop offset in the padded image, 0..8
  std::size_t dx = 4;
  bool flip = false;
};

constexpr std::size_t kAugmentPad = 4;

/// The draw used for sample `index` under `seed`.
CropFlip augment_draw(std::uint64_t seed, std::uint64_t index);

/// Pads 4 px with zeros, crops back to 32x32 at the given offsets, optionally
/// mirrors horizontally. One CropFlip per image.
net::Tensor<float> augment_with(const net::Tensor<float>& batch, std::span<const CropFlip> draws);

/// augment_with using augment_draw(seed, first_index + i) for image i.
net::Tensor<float> augment(const net::Tensor<float>& batch, std::uint64_t seed,
                           std::uint64_t first_index = 0);

}  // namespace polu::data
