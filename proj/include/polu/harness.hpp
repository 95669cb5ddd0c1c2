#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polu/data.hpp"
#include "polu/json_io.hpp"
#include "polu/network.hpp"
#include "polu/stack_notation.hpp"

namespace polu::harness {

enum class DatasetKind { MNIST, CIFAR10, CIFAR100 };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset(std::string_view name);
std::size_t class_count(DatasetKind kind);

struct Preprocessing {
  bool gcn = false;
  bool zca = false;
  bool augment = false;
};

struct NetworkChoice {
  std::string preset;  // "mnist_2c2d", "simple_elu_net", "tiny", or empty
  std::string stack;   // stack notation when preset is empty
  std::vector<bool> pool_after;
  std::vector<double> dropout;
  net::Padding padding = net::Padding::Same;
};

struct ExperimentConfig {
  DatasetKind dataset = DatasetKind::MNIST;
  NetworkChoice network;
  act::ActivationSpec activation = act::ActivationSpec::polu(2.0);
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  std::vector<std::pair<std::size_t, double>> lr_schedule{{1, 0.01}};  // (start epoch, rate)
  double weight_decay = 0.0;
  double momentum = 0.9;
  std::vector<std::uint64_t> seeds{1};
  Preprocessing preprocessing;
  std::size_t train_subset = 0;  // 0 keeps the full split
  std::size_t test_subset = 0;
  std::size_t probe_size = 1024;

  /// Throws Error(InvalidArgument) on inconsistent fields.
  void validate() const;
};

/// "mnist_2c2d" or "simple_elu_net"; throws Error(NotFound) otherwise.
ExperimentConfig preset(const std::string& name);

/// Reduced-scale CIFAR trend mode: 30 epochs and a 10k training subset.
void apply_reduced(ExperimentConfig& config);

/// Step lookup: the rate of the last schedule entry starting at or before `epoch`.
double learning_rate(const ExperimentConfig& config, std::size_t epoch);

/// Network for the config's preset or stack notation, dataset and activation.
net::NetworkSpec build_network(const ExperimentConfig& config);

ExperimentConfig config_from_json(const json& j);
json to_json(const ExperimentConfig& config);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_error_pct = 0.0;
  std::vector<double> mean_activation;  // per Activation layer, on the probe batch
  double learning_rate = 0.0;
  double seconds = 0.0;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  std::string activation;
  std::vector<EpochMetrics> epochs;
  double wall_time_s = 0.0;
  bool diverged = false;
  std::string note;
};

struct PreparedData {
  data::Dataset train;
  data::Dataset test;
};

/// Loads the dataset below `root` (mnist/, cifar10/, cifar100/), applies the
/// subsets and the preprocessing flags. Missing files raise Error(NotFound).
PreparedData prepare_data(const ExperimentConfig& config, const std::filesystem::path& root);

struct RunOptions {
  std::filesystem::path metrics_csv;  // appended after every epoch when set
  std::ostream* log = nullptr;
  std::filesystem::path checkpoint;   // final parameters (PLNET1) when set
};

RunMetrics run_seed(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed,
                    const RunOptions& options = {});
std::vector<RunMetrics> run(const ExperimentConfig& config, const PreparedData& data,
                            const RunOptions& options = {});

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  std::size_t runs = 0;
  std::size_t diverged = 0;
};

Summary aggregate_values(std::span<const double> values);
/// Final-epoch test error over the non-diverged runs.
Summary aggregate(std::span<const RunMetrics> runs);

struct SweepReport {
  std::vector<double> alphas;
  std::vector<std::vector<RunMetrics>> runs;  // [alpha][seed]
};

SweepReport elu_alpha_sweep(const ExperimentConfig& base, const PreparedData& data,
                            std::span<const double> alphas, const RunOptions& options = {});

// Emission. Reals carry 9 significant digits.

std::string metrics_csv_header(std::size_t activation_layers);
std::string metrics_csv_row(std::uint64_t seed, const EpochMetrics& m);
void append_metrics_row(const std::filesystem::path& path, std::uint64_t seed, const EpochMetrics& m);
void write_metrics_csv(const std::filesystem::path& path, std::span<const RunMetrics> runs);
void write_sweep_csv(const std::filesystem::path& path, const SweepReport& report);

json to_json(const Summary& summary);
json run_summary_json(const ExperimentConfig& config, std::span<const RunMetrics> runs);
json sweep_summary_json(const ExperimentConfig& base, const SweepReport& report);

/// Keeps freed training buffers in the heap instead of returning them to the
/// OS after every batch (glibc only; a no-op elsewhere).
void tune_allocator();

}  // namespace polu::harness
