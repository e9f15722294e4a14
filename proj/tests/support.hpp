#pragma once

// Shared helpers for the unit and acceptance tests.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ler/gradcheck.hpp"
#include "ler/rng.hpp"
#include "ler/tensor.hpp"

namespace ler::testing {

template <typename T = double>
BasicTensor<T> random_tensor(Shape shape, CounterRng& rng, double scale = 1.0, bool requires_grad = true) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return BasicTensor<T>::from(std::move(shape), std::move(v), requires_grad);
}

template <typename T = double>
BasicTensor<T> uniform_tensor(Shape shape, CounterRng& rng, double lo, double hi, bool requires_grad = true) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return BasicTensor<T>::from(std::move(shape), std::move(v), requires_grad);
}

/// Worst relative error between autodiff and central differences for
/// sum(f(inputs) * probe), where probe is a fixed random tensor so that
/// symmetric reductions (e.g. softmax rows) do not hide errors.
inline double op_gradient_error(const std::function<Tensor64(const std::vector<Tensor64>&)>& f,
                                std::vector<Tensor64> inputs, std::uint64_t seed, double eps = 1e-3) {
  CounterRng rng(seed, 0xC0DE);
  Tensor64 probe;
  auto loss = [&]() {
    Tensor64 y = f(inputs);
    if (!probe.defined()) probe = random_tensor<double>(y.shape(), rng, 1.0, false);
    return sum(mul(y, probe));
  };
  for (auto& x : inputs) x.zero_grad();
  loss().backward();
  double worst = 0.0;
  for (auto& x : inputs) {
    if (!x.requires_grad()) continue;
    const std::vector<double> analytic = x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                                                      : std::vector<double>(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double numeric = finite_diff_entry<double>([&] { return loss().item(); }, x, i, eps);
      worst = std::max(worst, relative_error(analytic[i], numeric));
    }
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ler_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ler::testing
