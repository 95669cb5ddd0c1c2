#include "polu/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "polu/error.hpp"
#include "polu/random.hpp"
#include "polu/serialize.hpp"

namespace polu::harness {

namespace {

constexpr const char* kMnistStack = "[1x32x3],[1x64x3],[1x128xFC],[1x10xSoftmax]";

std::string simple_elu_stack(std::size_t classes) {
  return "[1x192x5],[1x192x1,1x240x3],[1x240x1,1x260x2],[1x260x1,1x280x2],"
         "[1x280x1,1x300x2],[1x300x1],[1x" +
         std::to_string(classes) + "x1]";
}

std::string mnist_stack(std::size_t classes) {
  return "[1x32x3],[1x64x3],[1x128xFC],[1x" + std::to_string(classes) + "xSoftmax]";
}

std::string real9(double v) { return format_real(v, 9); }

std::size_t argmax_row(const float* p, std::size_t cols) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < cols; ++c)
    if (p[c] > p[best]) best = c;
  return best;
}

double test_error_pct(const net::NetworkSpec& spec, const net::ParameterSet<float>& params,
                      const data::Dataset& test) {
  if (test.size() == 0) return 0.0;
  constexpr std::size_t kChunk = 500;
  std::size_t wrong = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < test.size(); start += kChunk) {
    const std::size_t m = std::min(kChunk, test.size() - start);
    idx.resize(m);
    std::iota(idx.begin(), idx.end(), start);
    const auto out = net::predict(spec, params, test.gather(idx));
    const std::size_t cols = out.size() / m;
    for (std::size_t r = 0; r < m; ++r)
      if (argmax_row(out.data() + r * cols, cols) != test.labels[start + r]) ++wrong;
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(test.size());
}

std::vector<double> probe_means(const net::NetworkSpec& spec, const net::ParameterSet<float>& params,
                                const data::Dataset& train, std::size_t probe) {
  probe = std::min(probe, train.size());
  std::vector<double> sums;
  constexpr std::size_t kChunk = 256;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < probe; start += kChunk) {
    const std::size_t m = std::min(kChunk, probe - start);
    idx.resize(m);
    std::iota(idx.begin(), idx.end(), start);
    const auto result = net::forward(spec, params, train.gather(idx), net::Mode::Infer);
    const auto& means = result.cache.activation_means;
    sums.resize(means.size(), 0.0);
    for (std::size_t l = 0; l < means.size(); ++l) sums[l] += means[l] * static_cast<double>(m);
  }
  for (double& s : sums) s /= static_cast<double>(std::max<std::size_t>(probe, 1));
  return sums;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

// ---- configuration ----------------------------------------------------------

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::MNIST: return "mnist";
    case DatasetKind::CIFAR10: return "cifar10";
    case DatasetKind::CIFAR100: return "cifar100";
  }
  return "?";
}

DatasetKind parse_dataset(std::string_view name) {
  if (name == "mnist") return DatasetKind::MNIST;
  if (name == "cifar10") return DatasetKind::CIFAR10;
  if (name == "cifar100") return DatasetKind::CIFAR100;
  fail(ErrorKind::InvalidArgument, "unknown dataset '" + std::string(name) + "'");
}

std::size_t class_count(DatasetKind kind) { return kind == DatasetKind::CIFAR100 ? 100 : 10; }

void ExperimentConfig::validate() const {
  activation.validate();
  if (batch_size == 0) fail(ErrorKind::InvalidArgument, "batch_size must be positive");
  if (lr_schedule.empty() || lr_schedule.front().first != 1)
    fail(ErrorKind::InvalidArgument, "lr_schedule must start at epoch 1");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (i > 0 && lr_schedule[i].first <= lr_schedule[i - 1].first)
      fail(ErrorKind::InvalidArgument, "lr_schedule start epochs must be strictly increasing");
    if (!(lr_schedule[i].second > 0.0) || !std::isfinite(lr_schedule[i].second))
      fail(ErrorKind::InvalidArgument, "learning rates must be positive");
  }
  if (!(weight_decay >= 0.0)) fail(ErrorKind::InvalidArgument, "weight_decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    fail(ErrorKind::InvalidArgument, "momentum must lie in [0, 1)");
  if (seeds.empty()) fail(ErrorKind::InvalidArgument, "at least one seed is required");
  if (network.preset.empty() && network.stack.empty())
    fail(ErrorKind::InvalidArgument, "network needs a preset name or stack notation");
  if (preprocessing.augment && dataset == DatasetKind::MNIST)
    fail(ErrorKind::InvalidArgument, "crop/flip augmentation is defined for 32x32 CIFAR images");
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "mnist_2c2d") {
    c.dataset = DatasetKind::MNIST;
    c.network.preset = name;
    c.network.padding = net::Padding::Valid;
    c.epochs = 30;
    c.batch_size = 128;
    c.lr_schedule = {{1, 0.01}};
    c.momentum = 0.9;
    c.weight_decay = 0.0;
  } else if (name == "simple_elu_net") {
    c.dataset = DatasetKind::CIFAR100;
    c.network.preset = name;
    c.network.padding = net::Padding::Same;
    c.epochs = 300;
    c.batch_size = 128;
    c.lr_schedule = {{1, 0.01}, {71, 0.005}, {141, 0.0005}, {211, 0.00005}};
    c.momentum = 0.9;
    c.weight_decay = 5e-4;
    c.preprocessing = {true, true, true};
  } else if (name == "tiny") {
    c.dataset = DatasetKind::MNIST;
    c.network.preset = name;
    c.epochs = 1;
    c.weight_decay = 5e-4;
  } else {
    fail(ErrorKind::NotFound, "unknown preset '" + name + "'");
  }
  return c;
}

void apply_reduced(ExperimentConfig& config) {
  config.epochs = 30;
  config.train_subset = 10000;
}

double learning_rate(const ExperimentConfig& config, std::size_t epoch) {
  if (epoch == 0) fail(ErrorKind::InvalidArgument, "epochs are numbered from 1");
  double rate = config.lr_schedule.at(0).second;
  for (const auto& [start, r] : config.lr_schedule)
    if (start <= epoch) rate = r;
  return rate;
}

net::NetworkSpec build_network(const ExperimentConfig& config) {
  const std::size_t classes = class_count(config.dataset);
  const bool mnist = config.dataset == DatasetKind::MNIST;
  StackOptions opt;
  opt.height = mnist ? 28 : 32;
  opt.width = opt.height;
  opt.channels = mnist ? 1 : 3;
  opt.activation = config.activation;
  opt.weight_decay = config.weight_decay;
  opt.padding = config.network.padding;
  opt.pool_after = config.network.pool_after;
  opt.dropout = config.network.dropout;

  std::string text = config.network.stack;
  const std::string& p = config.network.preset;
  if (p == "mnist_2c2d") {
    text = mnist_stack(classes);
    opt.padding = net::Padding::Valid;
    // The 0.5 dropout sits after the 128-unit dense layer, i.e. before the
    // final dense layer.
    if (opt.dropout.empty()) opt.dropout = {0.0, 0.0, 0.5, 0.0};
  } else if (p == "simple_elu_net") {
    text = simple_elu_stack(classes);
    opt.padding = net::Padding::Same;
    if (opt.dropout.empty()) opt.dropout = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.0};
  } else if (p == "tiny") {
    auto spec = net::tiny_network(config.activation);
    spec.weight_decay = config.weight_decay;
    return spec;
  } else if (!p.empty()) {
    fail(ErrorKind::NotFound, "unknown preset '" + p + "'");
  }
  return parse_stack_notation(text, opt);
}

ExperimentConfig config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "preset",      "dataset",   "network",  "activation",    "epochs",      "batch_size",
      "lr_schedule", "weight_decay", "momentum", "seeds",      "preprocessing", "train_subset",
      "test_subset", "probe_size", "reduced"};
  if (!j.is_object()) fail(ErrorKind::ParseError, "config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) fail(ErrorKind::InvalidArgument, "unknown config field '" + key + "'");

  try {
    ExperimentConfig c;
    std::string base;
    if (j.contains("preset")) base = j.at("preset").get<std::string>();
    else if (j.contains("network") && j.at("network").is_string()) {
      const std::string n = j.at("network").get<std::string>();
      if (n == "mnist_2c2d" || n == "simple_elu_net" || n == "tiny") base = n;
    }
    if (!base.empty()) c = preset(base);

    if (j.contains("dataset")) c.dataset = parse_dataset(j.at("dataset").get<std::string>());
    if (j.contains("network")) {
      const json& n = j.at("network");
      if (n.is_string()) {
        const std::string s = n.get<std::string>();
        if (s != base) {
          c.network = NetworkChoice{};
          c.network.stack = s;
        }
      } else if (n.is_object()) {
        if (n.contains("preset")) {
          const std::string ps = n.at("preset").get<std::string>();
          const auto keep = c.dataset;
          if (ps != base) c = preset(ps);
          if (j.contains("dataset")) c.dataset = keep;
        }
        if (n.contains("stack")) {
          c.network.preset.clear();
          c.network.stack = n.at("stack").get<std::string>();
        }
        if (n.contains("pool_after")) c.network.pool_after = n.at("pool_after").get<std::vector<bool>>();
        if (n.contains("dropout")) c.network.dropout = n.at("dropout").get<std::vector<double>>();
        if (n.contains("padding")) {
          const std::string pad = n.at("padding").get<std::string>();
          if (pad == "same") c.network.padding = net::Padding::Same;
          else if (pad == "valid") c.network.padding = net::Padding::Valid;
          else fail(ErrorKind::InvalidArgument, "padding must be 'same' or 'valid'");
        }
      } else {
        fail(ErrorKind::InvalidArgument, "network must be a string or an object");
      }
    }
    if (j.contains("activation"))
      c.activation = act::ActivationSpec::parse(j.at("activation").get<std::string>());
    c.epochs = get_or<std::size_t>(j, "epochs", c.epochs);
    c.batch_size = get_or<std::size_t>(j, "batch_size", c.batch_size);
    if (j.contains("lr_schedule")) {
      c.lr_schedule.clear();
      for (const auto& e : j.at("lr_schedule")) {
        if (e.is_array() && e.size() == 2)
          c.lr_schedule.emplace_back(e[0].get<std::size_t>(), e[1].get<double>());
        else
          c.lr_schedule.emplace_back(e.at("start_epoch").get<std::size_t>(), e.at("rate").get<double>());
      }
    }
    c.weight_decay = get_or<double>(j, "weight_decay", c.weight_decay);
    c.momentum = get_or<double>(j, "momentum", c.momentum);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("preprocessing")) {
      const json& p = j.at("preprocessing");
      c.preprocessing.gcn = get_or<bool>(p, "gcn", c.preprocessing.gcn);
      c.preprocessing.zca = get_or<bool>(p, "zca", c.preprocessing.zca);
      c.preprocessing.augment = get_or<bool>(p, "augment", c.preprocessing.augment);
    }
    c.train_subset = get_or<std::size_t>(j, "train_subset", c.train_subset);
    c.test_subset = get_or<std::size_t>(j, "test_subset", c.test_subset);
    c.probe_size = get_or<std::size_t>(j, "probe_size", c.probe_size);
    if (get_or<bool>(j, "reduced", false)) apply_reduced(c);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("config: ") + e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json network;
  if (!c.network.preset.empty()) network["preset"] = c.network.preset;
  if (!c.network.stack.empty()) network["stack"] = c.network.stack;
  if (!c.network.pool_after.empty()) network["pool_after"] = c.network.pool_after;
  if (!c.network.dropout.empty()) network["dropout"] = c.network.dropout;
  network["padding"] = c.network.padding == net::Padding::Same ? "same" : "valid";
  json schedule = json::array();
  for (const auto& [start, rate] : c.lr_schedule) schedule.push_back(json::array({start, rate}));
  return json{{"dataset", to_string(c.dataset)},
              {"network", network},
              {"activation", c.activation.to_string()},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr_schedule", schedule},
              {"weight_decay", c.weight_decay},
              {"momentum", c.momentum},
              {"seeds", c.seeds},
              {"preprocessing",
               {{"gcn", c.preprocessing.gcn},
                {"zca", c.preprocessing.zca},
                {"augment", c.preprocessing.augment}}},
              {"train_subset", c.train_subset},
              {"test_subset", c.test_subset},
              {"probe_size", c.probe_size}};
}

// ---- data -------------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& config, const std::filesystem::path& root) {
  data::DatasetPair pair;
  switch (config.dataset) {
    case DatasetKind::MNIST: pair = data::load_mnist(root / "mnist"); break;
    case DatasetKind::CIFAR10: pair = data::load_cifar(root / "cifar10", data::CifarVariant::C10); break;
    case DatasetKind::CIFAR100:
      pair = data::load_cifar(root / "cifar100", data::CifarVariant::C100);
      break;
  }
  PreparedData d;
  d.train = config.train_subset ? data::subset(pair.train, config.train_subset, 0) : std::move(pair.train);
  d.test = config.test_subset ? data::subset(pair.test, config.test_subset, 1) : std::move(pair.test);
  if (config.preprocessing.gcn) {
    data::global_contrast_normalize(d.train.images);
    data::global_contrast_normalize(d.test.images);
  }
  if (config.preprocessing.zca) {
    const auto zca = data::zca_fit(d.train.images);
    data::zca_apply(zca, d.train.images);
    data::zca_apply(zca, d.test.images);
  }
  return d;
}

// ---- training ---------------------------------------------------------------

RunMetrics run_seed(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed,
                    const RunOptions& options) {
  config.validate();
  const net::NetworkSpec spec = build_network(config);
  const auto t0 = std::chrono::steady_clock::now();

  RunMetrics metrics;
  metrics.seed = seed;
  metrics.activation = config.activation.to_string();
  if (data.train.size() == 0 && config.epochs > 0)
    fail(ErrorKind::InvalidArgument, "training split is empty");

  auto params = net::init_parameters<float>(spec, derive_seed(seed, "init"));
  net::OptimizerState<float> opt;
  opt.momentum = config.momentum;

  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);
  std::vector<std::size_t> batch_idx;
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();
    opt.learning_rate = learning_rate(config, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 gen(derive_seed(seed, "shuffle", epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[gen() % i]);

    double loss_sum = 0.0;
    bool diverged = false;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, n - start);
      batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(start + m));
      net::Tensor<float> x = data.train.gather(batch_idx);
      if (config.preprocessing.augment)
        x = data::augment(x, derive_seed(seed, "augment", epoch), start);
      const auto labels = data.train.gather_labels(batch_idx);

      auto fwd = net::forward(spec, params, x, net::Mode::Train, derive_seed(seed, "dropout", step++));
      const auto loss = net::softmax_cross_entropy(fwd.cache.logits, labels);
      if (!std::isfinite(loss.loss)) {
        diverged = true;
        break;
      }
      loss_sum += loss.loss * static_cast<double>(m);
      const auto grads = net::backward(spec, params, fwd.cache, loss.dlogits);
      net::sgd_step(params, grads, opt);
    }
    if (diverged) {
      metrics.diverged = true;
      metrics.note = "non-finite loss in epoch " + std::to_string(epoch);
      if (options.log) *options.log << "seed " << seed << ": diverged in epoch " << epoch << '\n';
      break;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(n);
    em.test_error_pct = test_error_pct(spec, params, data.test);
    em.mean_activation = probe_means(spec, params, data.train, config.probe_size);
    em.learning_rate = opt.learning_rate;
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
    if (!options.metrics_csv.empty()) append_metrics_row(options.metrics_csv, seed, em);
    if (options.log)
      *options.log << "seed " << seed << " epoch " << epoch << "/" << config.epochs << "  loss "
                   << real9(em.train_loss) << "  test error " << real9(em.test_error_pct) << "%  ("
                   << real9(em.seconds) << " s)\n"
                   << std::flush;
    metrics.epochs.push_back(std::move(em));
  }
  if (!options.checkpoint.empty()) net::save_parameters(options.checkpoint, params);
  metrics.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return metrics;
}

std::vector<RunMetrics> run(const ExperimentConfig& config, const PreparedData& data,
                            const RunOptions& options) {
  config.validate();
  std::vector<RunMetrics> out;
  for (std::uint64_t seed : config.seeds) {
    RunOptions o = options;
    if (!o.checkpoint.empty() && config.seeds.size() > 1) {
      o.checkpoint.replace_filename(o.checkpoint.stem().string() + "_seed" + std::to_string(seed) +
                                    o.checkpoint.extension().string());
    }
    out.push_back(run_seed(config, data, seed, o));
  }
  return out;
}

Summary aggregate_values(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::InvalidArgument, "nothing to aggregate");
  Summary s;
  s.runs = values.size();
  // Sorting first makes the result independent of run order bit for bit.
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double sq = 0.0;
    for (double x : v) sq += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
  }
  return s;
}

Summary aggregate(std::span<const RunMetrics> runs) {
  if (runs.empty()) fail(ErrorKind::InvalidArgument, "no runs to aggregate");
  std::vector<double> finals;
  std::size_t diverged = 0;
  for (const auto& r : runs) {
    if (r.diverged) ++diverged;
    else if (!r.epochs.empty()) finals.push_back(r.epochs.back().test_error_pct);
  }
  if (finals.empty()) fail(ErrorKind::InvalidArgument, "no completed run has epoch metrics");
  Summary s = aggregate_values(finals);
  s.diverged = diverged;
  return s;
}

SweepReport elu_alpha_sweep(const ExperimentConfig& base, const PreparedData& data,
                            std::span<const double> alphas, const RunOptions& options) {
  if (base.activation.kind != act::Kind::ELU)
    fail(ErrorKind::InvalidArgument, "the alpha sweep needs an ELU base config");
  SweepReport report;
  for (double a : alphas) {
    ExperimentConfig c = base;
    c.activation = act::ActivationSpec::elu(a);
    report.alphas.push_back(a);
    report.runs.push_back(run(c, data, options));
  }
  return report;
}

// ---- emission ---------------------------------------------------------------

std::string metrics_csv_header(std::size_t activation_layers) {
  std::string h = "epoch,seed,train_loss,test_error_pct";
  for (std::size_t l = 0; l < activation_layers; ++l) h += ",mean_act_layer_" + std::to_string(l);
  return h;
}

std::string metrics_csv_row(std::uint64_t seed, const EpochMetrics& m) {
  std::string row = std::to_string(m.epoch) + "," + std::to_string(seed) + "," +
                    real9(m.train_loss) + "," + real9(m.test_error_pct);
  for (double a : m.mean_activation) row += "," + real9(a);
  return row;
}

void append_metrics_row(const std::filesystem::path& path, std::uint64_t seed, const EpochMetrics& m) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) fail(ErrorKind::IoError, "cannot append to '" + path.string() + "'");
  if (fresh) os << metrics_csv_header(m.mean_activation.size()) << '\n';
  os << metrics_csv_row(seed, m) << '\n';
  os.flush();
  if (!os) fail(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const RunMetrics> runs) {
  std::size_t layers = 0;
  for (const auto& r : runs)
    for (const auto& e : r.epochs) layers = std::max(layers, e.mean_activation.size());
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  os << metrics_csv_header(layers) << '\n';
  for (const auto& r : runs)
    for (const auto& e : r.epochs) os << metrics_csv_row(r.seed, e) << '\n';
  if (!os) fail(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

void write_sweep_csv(const std::filesystem::path& path, const SweepReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  os << "epoch,seed";
  for (double a : report.alphas) os << ",test_error_pct_alpha_" << format_real(a, 9);
  os << '\n';
  if (report.runs.empty()) return;
  for (std::size_t s = 0; s < report.runs[0].size(); ++s) {
    std::size_t epochs = 0;
    for (const auto& per_alpha : report.runs) epochs = std::max(epochs, per_alpha[s].epochs.size());
    for (std::size_t e = 0; e < epochs; ++e) {
      os << e + 1 << ',' << report.runs[0][s].seed;
      for (const auto& per_alpha : report.runs) {
        os << ',';
        if (e < per_alpha[s].epochs.size()) os << real9(per_alpha[s].epochs[e].test_error_pct);
      }
      os << '\n';
    }
  }
  if (!os) fail(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

json to_json(const Summary& s) {
  return json{{"mean_test_error_pct", s.mean},
              {"std_test_error_pct", s.std},
              {"runs", s.runs},
              {"diverged", s.diverged}};
}

json run_summary_json(const ExperimentConfig& config, std::span<const RunMetrics> runs) {
  json rs = json::array();
  for (const auto& r : runs) {
    json e{{"seed", r.seed},
           {"activation", r.activation},
           {"epochs", r.epochs.size()},
           {"wall_time_s", r.wall_time_s},
           {"diverged", r.diverged}};
    if (!r.epochs.empty()) {
      e["final_test_error_pct"] = r.epochs.back().test_error_pct;
      e["final_train_loss"] = r.epochs.back().train_loss;
      e["final_mean_activation"] = r.epochs.back().mean_activation;
    }
    if (!r.note.empty()) e["note"] = r.note;
    rs.push_back(e);
  }
  json out{{"config", to_json(config)}, {"runs", rs}};
  bool any = false;
  for (const auto& r : runs) any = any || (!r.diverged && !r.epochs.empty());
  if (any) out["summary"] = to_json(aggregate(runs));
  return out;
}

json sweep_summary_json(const ExperimentConfig& base, const SweepReport& report) {
  json per = json::array();
  for (std::size_t i = 0; i < report.alphas.size(); ++i) {
    const double a = report.alphas[i];
    json e{{"alpha", a},
           {"saturation", *act::saturation_value(act::ActivationSpec::elu(a))}};
    bool any = false;
    for (const auto& r : report.runs[i]) any = any || (!r.diverged && !r.epochs.empty());
    if (any) e["summary"] = to_json(aggregate(report.runs[i]));
    per.push_back(e);
  }
  return json{{"config", to_json(base)}, {"alphas", per}};
}

void tune_allocator() {
#if defined(__GLIBC__)
  // Every batch frees and reallocates the same large buffers; without this
  // glibc keeps returning them to the OS and page-faulting them back in.
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace polu::harness
