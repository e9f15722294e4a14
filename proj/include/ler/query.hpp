#pragma once

// Content-free text query: the mean of a frozen prompt-feature pool, plus
// per-slot position embeddings.

#include <cmath>
#include <string>
#include <vector>

#include "ler/lten.hpp"
#include "ler/rng.hpp"
#include "ler/tensor.hpp"

namespace ler {

/// Row-wise prompt features [k, D0]. Never receives gradient.
struct PromptPool {
  Tensor features;

  std::size_t count() const { return features.dim(0); }
  std::size_t dim() const { return features.dim(1); }
};

inline PromptPool validate_pool(Tensor features, std::size_t expected_dim) {
  if (!features.defined() || features.rank() != 2) {
    throw DimensionError("prompt pool must be rank 2 [k, D0], got " +
                         (features.defined() ? to_string(features.shape()) : std::string("nothing")));
  }
  if (features.dim(1) != expected_dim) {
    throw DimensionError("prompt pool feature dim " + std::to_string(features.dim(1)) +
                         " does not match model D0 " + std::to_string(expected_dim));
  }
  if (!all_finite(features)) throw FormatError("prompt pool contains non-finite values");
  features.zero_grad();
  return {features.detach()};
}

/// Reads an LTEN rank-2 feature file and checks it against D0.
inline PromptPool load_embedding_file(const std::string& path, std::size_t d0) {
  return validate_pool(load_lten(path), d0);
}

/// Seeded stand-in pool when no exported features exist: N(0, 1) / sqrt(D0).
inline PromptPool fallback_pool(std::size_t k, std::size_t d0, std::uint64_t seed) {
  if (k == 0 || d0 == 0) throw DimensionError("fallback pool needs k >= 1 and D0 >= 1");
  CounterRng rng(seed, 0x9F00);
  std::vector<float> v(k * d0);
  const double s = 1.0 / std::sqrt(static_cast<double>(d0));
  for (auto& x : v) x = static_cast<float>(rng.normal() * s);
  return {Tensor::from({k, d0}, std::move(v))};
}

/// Elementwise mean over pool rows, accumulated in double. Returns [D0].
inline Tensor aggregate(const PromptPool& pool) {
  if (!pool.features.defined() || pool.features.rank() != 2 || pool.count() == 0) {
    throw DimensionError("aggregate: empty prompt pool");
  }
  const std::size_t k = pool.count();
  const std::size_t d = pool.dim();
  std::vector<double> acc(d, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t i = 0; i < d; ++i) acc[i] += pool.features[r * d + i];
  }
  std::vector<float> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(k));
  return Tensor::from({d}, std::move(out));
}

/// T1[j] = t_clip + pos[j]. Gradient flows into `pos` only when it requires it.
template <typename T>
BasicTensor<T> make_initial_query(const BasicTensor<T>& t_clip, const BasicTensor<T>& pos) {
  if (pos.rank() != 2 || t_clip.rank() != 1 || t_clip.dim(0) != pos.dim(1)) {
    throw DimensionError("make_initial_query: t_clip " + to_string(t_clip.shape()) +
                         " incompatible with position table " + to_string(pos.shape()));
  }
  return add(pos, t_clip.detach());
}

/// Fixed 2-D sinusoidal encoding for an h x w token grid, [h*w, d]. The first
/// half of the channels encodes the row, the second half the column.
template <typename T>
BasicTensor<T> sinusoidal_2d(std::size_t h, std::size_t w, std::size_t d) {
  if (d % 4 != 0) throw DimensionError("sinusoidal_2d: dim " + std::to_string(d) + " must be divisible by 4");
  const std::size_t half = d / 2;
  Buffer<T> v(h * w * d);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      T* row = v.data() + (y * w + x) * d;
      for (std::size_t i = 0; i < half / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(half));
        row[2 * i] = static_cast<T>(std::sin(static_cast<double>(y) * freq));
        row[2 * i + 1] = static_cast<T>(std::cos(static_cast<double>(y) * freq));
        row[half + 2 * i] = static_cast<T>(std::sin(static_cast<double>(x) * freq));
        row[half + 2 * i + 1] = static_cast<T>(std::cos(static_cast<double>(x) * freq));
      }
    }
  }
  return BasicTensor<T>::from({h * w, d}, std::move(v));
}

}  // namespace ler
