// Short MNIST trainings on a fixed subset. Skipped when the data is absent.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "polu/data.hpp"
#include "polu/fetch.hpp"
#include "polu/harness.hpp"

using namespace polu;
using namespace polu::harness;
using act::ActivationSpec;

namespace {

const PreparedData* mnist_subset() {
  static const PreparedData* cached = [] () -> const PreparedData* {
    const auto root = fetch::data_root();
    if (!std::filesystem::exists(root / "mnist")) return nullptr;
    auto c = preset("mnist_2c2d");
    c.train_subset = 1000;
    c.test_subset = 500;
    return new PreparedData(prepare_data(c, root));
  }();
  return cached;
}

std::vector<double> smoothed(const std::vector<double>& v, std::size_t window) {
  std::vector<double> out;
  for (std::size_t i = 0; i + window <= v.size(); ++i) {
    double s = 0;
    for (std::size_t k = 0; k < window; ++k) s += v[i + k];
    out.push_back(s / window);
  }
  return out;
}

}  // namespace

TEST(MnistIntegration, SmoothedLossDecreasesForEveryActivation) {
  const auto* d = mnist_subset();
  if (!d) GTEST_SKIP() << "MNIST not present";
  for (const auto& a : {ActivationSpec::relu(), ActivationSpec::lrelu(0.01), ActivationSpec::elu(1),
                        ActivationSpec::polu(1), ActivationSpec::polu(1.5), ActivationSpec::polu(2)}) {
    auto c = preset("mnist_2c2d");
    c.activation = a;
    c.epochs = 20;
    c.probe_size = 128;
    const auto r = run_seed(c, *d, 1);
    ASSERT_FALSE(r.diverged) << a.to_string();
    std::vector<double> loss;
    for (const auto& e : r.epochs) loss.push_back(e.train_loss);
    const auto s = smoothed(loss, 5);
    for (std::size_t i = 1; i < s.size(); ++i)
      EXPECT_LT(s[i], s[i - 1]) << a.to_string() << " window " << i;
  }
}

TEST(MnistIntegration, PoluReducesBiasShiftInFirstConvLayer) {
  const auto* d = mnist_subset();
  if (!d) GTEST_SKIP() << "MNIST not present";
  auto c = preset("mnist_2c2d");
  c.epochs = 1;
  c.activation = ActivationSpec::relu();
  const auto relu = run_seed(c, *d, 1);
  c.activation = ActivationSpec::polu(2);
  const auto polu2 = run_seed(c, *d, 1);
  const double mr = relu.epochs.at(0).mean_activation.at(0);
  const double mp = polu2.epochs.at(0).mean_activation.at(0);
  EXPECT_LT(std::abs(mp), std::abs(mr)) << "polu " << mp << " relu " << mr;
}
