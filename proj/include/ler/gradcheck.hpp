#pragma once

// Central-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ler/tensor.hpp"

namespace ler {

/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every element of x.
/// `x` is perturbed in place and restored; f must not record a graph that
/// the caller later relies on.
template <typename T>
BasicTensor<T> finite_diff_grad(const std::function<double(const BasicTensor<T>&)>& f,
                                BasicTensor<T> x, double eps = 1e-3) {
  NoGradGuard guard;
  auto values = x.mutable_data();
  std::vector<T> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T saved = values[i];
    values[i] = static_cast<T>(static_cast<double>(saved) + eps);
    const double up = f(x);
    values[i] = static_cast<T>(static_cast<double>(saved) - eps);
    const double down = f(x);
    values[i] = saved;
    grad[i] = static_cast<T>((up - down) / (2.0 * eps));
  }
  return BasicTensor<T>::from(x.shape(), std::move(grad));
}

/// Finite difference for a single entry of a tensor that lives inside some
/// larger closure (e.g. a model parameter).
template <typename T>
double finite_diff_entry(const std::function<double()>& f, BasicTensor<T>& x, std::size_t index,
                         double eps = 1e-3) {
  NoGradGuard guard;
  auto values = x.mutable_data();
  const T saved = values[index];
  values[index] = static_cast<T>(static_cast<double>(saved) + eps);
  const double up = f();
  values[index] = static_cast<T>(static_cast<double>(saved) - eps);
  const double down = f();
  values[index] = saved;
  return (up - down) / (2.0 * eps);
}

/// |a - b| / max(1e-6, |a| + |b|)
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b));
}

template <typename T>
double max_relative_error(std::span<const T> a, std::span<const T> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    worst = std::max(worst, relative_error(a[i], b[i]));
  }
  return worst;
}

}  // namespace ler
