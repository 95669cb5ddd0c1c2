// polu: training, gradient checks, response-region tools and data fetching.
// Exit status: 0 success, 1 validation failure, 2 I/O failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "polu/activations.hpp"
#include "polu/error.hpp"
#include "polu/fetch.hpp"
#include "polu/harness.hpp"
#include "polu/json_io.hpp"
#include "polu/network.hpp"
#include "polu/regions.hpp"
#include "polu/serialize.hpp"

namespace fs = std::filesystem;
using namespace polu;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kIo = 2;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::NotFound:
    case ErrorKind::FormatError: return kIo;
    default: return kInvalid;
  }
}

template <class T>
std::vector<T> split_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) fail(ErrorKind::InvalidArgument, "empty element in list '" + text + "'");
    std::size_t used = 0;
    try {
      if constexpr (std::is_floating_point_v<T>) out.push_back(static_cast<T>(std::stod(item, &used)));
      else {
        if (item.front() == '-') throw std::invalid_argument("negative");
        out.push_back(static_cast<T>(std::stoull(item, &used)));
      }
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) fail(ErrorKind::InvalidArgument, "bad list element '" + item + "'");
  }
  if (out.empty()) fail(ErrorKind::InvalidArgument, "empty list");
  return out;
}

// An unknown preset name is a usage error here, not a missing file.
harness::ExperimentConfig named_preset(const std::string& name) {
  try {
    return harness::preset(name);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NotFound) fail(ErrorKind::InvalidArgument, e.what());
    throw;
  }
}

// Writes to `path`, or stdout when it is empty.
void emit(const fs::path& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) fail(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

struct TrainArgs {
  std::string config, preset, activation, seeds, alphas;
  bool reduced = false;
  long epochs = -1;
  std::string out = "polu_run";
  std::string data_dir;
  bool checkpoint = false;
};

int cmd_train(const TrainArgs& a) {
  harness::ExperimentConfig cfg;
  if (!a.config.empty()) {
    cfg = harness::config_from_json(read_json_file(a.config));
    if (!a.preset.empty()) {
      // CLI preset overrides the network and recipe but keeps seeds.
      auto p = named_preset(a.preset);
      p.seeds = cfg.seeds;
      cfg = p;
    }
  } else if (!a.preset.empty()) {
    cfg = named_preset(a.preset);
  } else {
    fail(ErrorKind::InvalidArgument, "train needs --config or --preset");
  }
  if (!a.activation.empty()) cfg.activation = act::ActivationSpec::parse(a.activation);
  if (!a.seeds.empty()) cfg.seeds = split_list<std::uint64_t>(a.seeds);
  if (a.reduced) harness::apply_reduced(cfg);
  if (a.epochs >= 0) cfg.epochs = static_cast<std::size_t>(a.epochs);
  cfg.validate();

  const fs::path root = a.data_dir.empty() ? fetch::data_root() : fs::path(a.data_dir);
  const fs::path out = a.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create '" + out.string() + "': " + ec.message());

  std::cerr << "network: " << net::describe(harness::build_network(cfg)) << '\n';
  const auto data = harness::prepare_data(cfg, root);
  std::cerr << "data: " << data.train.size() << " train / " << data.test.size() << " test\n";

  harness::RunOptions opt;
  opt.log = &std::cerr;
  if (a.checkpoint) opt.checkpoint = out / "params.plnet";

  if (!a.alphas.empty()) {
    const auto alphas = split_list<double>(a.alphas);
    const auto report = harness::elu_alpha_sweep(cfg, data, alphas, opt);
    harness::write_sweep_csv(out / "sweep.csv", report);
    write_json_file(out / "sweep_summary.json", harness::sweep_summary_json(cfg, report), 9);
    return kOk;
  }

  const fs::path csv = out / "metrics.csv";
  fs::remove(csv, ec);
  opt.metrics_csv = csv;
  const auto runs = harness::run(cfg, data, opt);
  const json summary = harness::run_summary_json(cfg, runs);
  write_json_file(out / "summary.json", summary, 9);
  std::cout << dump_json(summary, 9) << '\n';
  for (const auto& r : runs)
    if (r.diverged) return kInvalid;
  return kOk;
}

int cmd_gradcheck(const std::string& preset_name, const std::string& activation, std::uint64_t seed,
                  double tolerance, std::size_t max_per_tensor) {
  auto cfg = named_preset(preset_name);
  if (!activation.empty()) cfg.activation = act::ActivationSpec::parse(activation);
  const auto spec = harness::build_network(cfg);
  net::GradCheckOptions opt;
  opt.max_per_tensor = max_per_tensor;
  const auto report = net::grad_check(spec, seed, tolerance, opt);
  json layers = json::array();
  for (const auto& l : report.layers)
    layers.push_back(json{{"layer", l.layer},
                          {"name", l.name},
                          {"max_relative_error", l.max_relative_error},
                          {"checked", l.checked}});
  std::cout << dump_json(json{{"activation", cfg.activation.to_string()},
                              {"max_relative_error", report.max_relative_error},
                              {"tolerance", report.tolerance},
                              {"passed", report.passed},
                              {"layers", layers}},
                         9)
            << '\n';
  return report.passed ? kOk : kInvalid;
}

int cmd_bound(std::uint64_t n0, const std::string& widths_text) {
  regions::RegionBoundSpec spec{n0, split_list<std::uint64_t>(widths_text)};
  const auto bound = regions::theorem2_bound(spec);
  json j{{"n0", n0},
         {"widths", spec.widths},
         {"layers", spec.widths.size()},
         {"bound", bound.str()},
         {"last_layer_bound", regions::theorem1_bound(n0, spec.widths.back()).str()}};
  std::cout << dump_json(j) << '\n';
  return kOk;
}

int cmd_construct(double n, std::size_t k, const std::string& out) {
  const auto sc = regions::build_sum_construction(n, k);
  json j = regions::to_json(sc);
  j["regions"] = regions::to_json(regions::analytic_regions(sc));
  emit(out, dump_json(j) + "\n");
  return kOk;
}

struct CountArgs {
  std::string weights, activation = "relu", out;
  std::uint64_t seed = 1;
  std::size_t hidden = 16;
  double lo = -10.0, hi = 10.0;
  std::size_t resolution = 200000;
};

int cmd_count(const CountArgs& a) {
  const auto spec = regions::line_network(a.hidden, act::ActivationSpec::parse(a.activation));
  net::ParameterSet<double> params;
  if (a.weights.empty()) {
    params = regions::random_line_parameters(spec, a.seed);
  } else {
    params = net::load_parameters(a.weights).cast<double>();
  }
  const double one = 1.0, zero = 0.0;
  const auto report = regions::network_line_regions(spec, params, {&zero, 1}, {&one, 1}, a.lo, a.hi,
                                                    a.resolution);
  json j = regions::to_json(report);
  j["hidden"] = a.hidden;
  j["activation"] = a.activation;
  j["theorem1_bound"] = regions::theorem1_bound(1, a.hidden).str();
  emit(a.out, dump_json(j) + "\n");
  return kOk;
}

int cmd_curve(const std::string& activation, double lo, double hi, std::size_t samples,
              const std::string& out) {
  const auto curve = act::sample_curve(act::ActivationSpec::parse(activation), lo, hi, samples);
  std::ostringstream os;
  act::write_curve_csv(os, curve);
  emit(out, os.str());
  return kOk;
}

int cmd_fetch(const std::string& dataset, const std::string& manifest, const std::string& root) {
  const auto m = manifest.empty() ? fetch::default_manifest() : fetch::load_manifest(manifest);
  const auto result =
      fetch::fetch_dataset(m, dataset, root.empty() ? fetch::data_root() : fs::path(root), &std::cerr);
  std::cout << result.dir.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  harness::tune_allocator();
  CLI::App app{"PoLU activations, response regions and training harness"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a network and emit metrics");
  t->add_option("--config", train.config, "JSON experiment config");
  t->add_option("--preset", train.preset, "mnist_2c2d | simple_elu_net");
  t->add_option("--activation", train.activation, "polu:n=2 | elu:a=1 | relu | lrelu:l=0.01");
  t->add_option("--seeds", train.seeds, "comma-separated seeds");
  t->add_flag("--reduced", train.reduced, "30 epochs on a 10k training subset");
  t->add_option("--epochs", train.epochs, "override the epoch count");
  t->add_option("--alphas", train.alphas, "ELU alpha sweep, e.g. 0.5,1,2");
  t->add_option("--out", train.out, "output directory")->capture_default_str();
  t->add_option("--data-dir", train.data_dir, "dataset root (default $POLU_DATA_DIR or ~/.cache/polu)");
  t->add_flag("--checkpoint", train.checkpoint, "save final parameters");

  std::string gc_preset = "tiny", gc_activation;
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;
  std::size_t gc_max = 0;
  auto* g = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
  g->add_option("--preset", gc_preset)->capture_default_str();
  g->add_option("--activation", gc_activation);
  g->add_option("--seed", gc_seed)->capture_default_str();
  g->add_option("--tolerance", gc_tol)->capture_default_str();
  g->add_option("--max-per-tensor", gc_max, "0 checks every parameter")->capture_default_str();

  auto* r = app.add_subcommand("regions", "response-region bounds, constructions and counts");
  r->require_subcommand(1);
  std::uint64_t n0 = 1;
  std::string widths;
  auto* rb = r->add_subcommand("bound", "exact lower bound on the region count");
  rb->add_option("--n0", n0)->required();
  rb->add_option("--widths", widths, "comma-separated layer widths")->required();

  double cn = 2.0;
  std::size_t ck = 2;
  std::string c_out;
  auto* rc = r->add_subcommand("construct", "solve the k-trough sum construction");
  rc->add_option("--n", cn)->capture_default_str();
  rc->add_option("--k", ck)->capture_default_str();
  rc->add_option("--out", c_out, "JSON file (default stdout)");

  CountArgs count;
  auto* rn = r->add_subcommand("count", "sampled region count of a 1-h-1 network");
  rn->add_option("--weights", count.weights, "PLNET1 parameter file");
  rn->add_option("--seed", count.seed, "random parameters when no weights are given")
      ->capture_default_str();
  rn->add_option("--hidden", count.hidden)->capture_default_str();
  rn->add_option("--activation", count.activation)->capture_default_str();
  rn->add_option("--lo", count.lo)->capture_default_str();
  rn->add_option("--hi", count.hi)->capture_default_str();
  rn->add_option("--resolution", count.resolution)->capture_default_str();
  rn->add_option("--out", count.out, "JSON file (default stdout)");

  std::string cv_act = "polu:n=2", cv_out;
  double cv_lo = -5.0, cv_hi = 5.0;
  std::size_t cv_samples = 1001;
  auto* cv = app.add_subcommand("curve", "sample an activation and its derivative as CSV");
  cv->add_option("--activation", cv_act)->capture_default_str();
  cv->add_option("--lo", cv_lo)->capture_default_str();
  cv->add_option("--hi", cv_hi)->capture_default_str();
  cv->add_option("--samples", cv_samples)->capture_default_str();
  cv->add_option("--out", cv_out, "CSV file (default stdout)");

  std::string f_dataset, f_manifest, f_root;
  auto* f = app.add_subcommand("fetch", "download and verify a dataset");
  f->add_option("--dataset", f_dataset, "mnist | cifar10 | cifar100")->required();
  f->add_option("--manifest", f_manifest, "JSON manifest overriding the built-in one");
  f->add_option("--root", f_root, "dataset root");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    if (*t) return cmd_train(train);
    if (*g) return cmd_gradcheck(gc_preset, gc_activation, gc_seed, gc_tol, gc_max);
    if (*rb) return cmd_bound(n0, widths);
    if (*rc) return cmd_construct(cn, ck, c_out);
    if (*rn) return cmd_count(count);
    if (*cv) return cmd_curve(cv_act, cv_lo, cv_hi, cv_samples, cv_out);
    if (*f) return cmd_fetch(f_dataset, f_manifest, f_root);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kInvalid;
}
