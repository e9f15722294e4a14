#pragma once

// Parameter registry and the transformer / conv building blocks.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ler/rng.hpp"
#include "ler/tensor.hpp"

namespace ler {

/// Which part of the network a parameter belongs to. Training stages select
/// parameters by group.
enum class ParamGroup { Encoder, Localization, Extraction, Recognition, Ids };

inline const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Encoder: return "encoder";
    case ParamGroup::Localization: return "localization";
    case ParamGroup::Extraction: return "extraction";
    case ParamGroup::Recognition: return "recognition";
    case ParamGroup::Ids: return "ids";
  }
  return "?";
}

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  ParamGroup group;
  bool decay;  // weight matrices decay; biases, norms and embeddings-as-offsets do not
};

enum class Init { Zeros, Ones, TruncNormal, FanIn };

/// Owns every learnable tensor. Initial values are drawn from one
/// CounterRng in registration order.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed, 0x1417) {}

  BasicTensor<T> add(const std::string& name, Shape shape, Init init, bool decay, std::size_t fan_in = 0) {
    Buffer<T> v(shape_numel(shape));
    switch (init) {
      case Init::Zeros: break;
      case Init::Ones: std::fill(v.begin(), v.end(), T(1)); break;
      case Init::TruncNormal:
        for (auto& x : v) x = static_cast<T>(rng_.truncated_normal(0.02));
        break;
      case Init::FanIn: {
        const double sigma = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& x : v) x = static_cast<T>(rng_.truncated_normal(sigma));
        break;
      }
    }
    auto t = BasicTensor<T>::from(std::move(shape), std::move(v), true);
    params_.push_back({prefix_ + name, t, group_, decay});
    return t;
  }

  void set_scope(ParamGroup group, std::string prefix) {
    group_ = group;
    prefix_ = std::move(prefix);
  }
  const std::string& prefix() const { return prefix_; }
  void push(const std::string& part) { stack_.push_back(prefix_); prefix_ += part + "."; }
  void pop() { prefix_ = stack_.back(); stack_.pop_back(); }

  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }

  std::size_t count(bool include_ids = true) const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (include_ids || p.group != ParamGroup::Ids) n += p.value.size();
    }
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

 private:
  CounterRng rng_;
  std::vector<Parameter<T>> params_;
  ParamGroup group_ = ParamGroup::Encoder;
  std::string prefix_;
  std::vector<std::string> stack_;
};

/// RAII naming scope for nested modules.
template <typename T>
struct NameScope {
  ParamStore<T>& store;
  NameScope(ParamStore<T>& s, const std::string& part) : store(s) { store.push(part); }
  ~NameScope() { store.pop(); }
};

template <typename T>
struct Linear {
  BasicTensor<T> weight;  // [in, out]
  BasicTensor<T> bias;    // [out] or undefined

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, std::size_t in, std::size_t out, bool with_bias = true) {
    NameScope<T> scope(ps, name);
    weight = ps.add("weight", {in, out}, Init::TruncNormal, true);
    if (with_bias) bias = ps.add("bias", {out}, Init::Zeros, false);
  }

  /// x [.., in] -> [.., out]
  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    if (x.rank() > 3) {
      Shape s = x.shape();
      const std::size_t in = s.back();
      auto y = (*this)(reshape(x, {x.size() / in, in}));
      s.back() = weight.dim(1);
      return reshape(y, s);
    }
    auto y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
  }
};

template <typename T>
struct LayerNorm {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& name, std::size_t d) {
    NameScope<T> scope(ps, name);
    gamma = ps.add("gamma", {d}, Init::Ones, false);
    beta = ps.add("beta", {d}, Init::Zeros, false);
  }
  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return layer_norm(x, gamma, beta); }
};

template <typename T>
struct FeedForward {
  Linear<T> fc1;
  Linear<T> fc2;

  FeedForward() = default;
  FeedForward(ParamStore<T>& ps, const std::string& name, std::size_t d, std::size_t hidden) {
    NameScope<T> scope(ps, name);
    fc1 = Linear<T>(ps, "fc1", d, hidden);
    fc2 = Linear<T>(ps, "fc2", hidden, d);
  }
  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return fc2(gelu(fc1(x))); }
};

/// Additive mask that forbids each query from attending to its own slot.
template <typename T>
BasicTensor<T> diagonal_mask(std::size_t n) {
  Buffer<T> m(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = -std::numeric_limits<T>::infinity();
  return BasicTensor<T>::from({n, n}, std::move(m));
}

/// Memory given in factored form: row b is weights[b, t] * features[t, :].
template <typename T>
struct GatedMemory {
  BasicTensor<T> weights;   // [B, T]
  BasicTensor<T> features;  // [T, D]
};

template <typename T>
struct MultiHeadAttention {
  Linear<T> q, k, v, out;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& ps, const std::string& name, std::size_t d, std::size_t h) : heads(h) {
    if (h == 0 || d % h != 0) {
      throw DimensionError("attention: dim " + std::to_string(d) + " not divisible by " + std::to_string(h) + " heads");
    }
    NameScope<T> scope(ps, name);
    q = Linear<T>(ps, "q", d, d);
    k = Linear<T>(ps, "k", d, d);
    v = Linear<T>(ps, "v", d, d);
    out = Linear<T>(ps, "out", d, d);
  }

  struct Result {
    BasicTensor<T> output;
    BasicTensor<T> weights;  // [B*heads, Lq, Lk], batch-major
  };

  /// query [B, Lq, D] (or [Lq, D]), memory [B, Lk, D] (or [Lk, D]);
  /// mask [Lq, Lk] additive, optional.
  Result attend(const BasicTensor<T>& query, const BasicTensor<T>& memory,
                const BasicTensor<T>& mask = {}) const {
    const bool batched = query.rank() == 3;
    const std::size_t b = batched ? query.dim(0) : 1;
    const std::size_t lq = query.dim(query.rank() - 2);
    const std::size_t lk = memory.dim(memory.rank() - 2);
    const std::size_t d = query.shape().back();
    const std::size_t dh = d / heads;
    auto split = [&](const BasicTensor<T>& x, std::size_t len) {
      if (heads == 1) return reshape(x, {b, len, dh});
      return reshape(permute(reshape(x, {b, len, heads, dh}), {0, 2, 1, 3}), {b * heads, len, dh});
    };
    auto qh = split(q(query), lq);
    auto kh = split(k(memory), lk);
    auto vh = split(v(memory), lk);
    auto scores = scale(matmul_nt(qh, kh), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
    if (mask.defined()) scores = add(scores, mask);
    auto weights = softmax(scores, -1);
    auto ctx = matmul(weights, vh);
    BasicTensor<T> merged = heads == 1 ? reshape(ctx, {b, lq, d})
                                       : reshape(permute(reshape(ctx, {b, heads, lq, dh}), {0, 2, 1, 3}), {b, lq, d});
    if (!batched) merged = reshape(merged, {lq, d});
    return {out(merged), weights};
  }

  BasicTensor<T> operator()(const BasicTensor<T>& query, const BasicTensor<T>& memory,
                            const BasicTensor<T>& mask = {}) const {
    return attend(query, memory, mask).output;
  }

  /// Same as attending to memory = gate_rows(weights, features), computed
  /// without projecting the [B, T, D] memory: row scaling commutes with the
  /// key/value projections.
  BasicTensor<T> operator()(const BasicTensor<T>& query, const GatedMemory<T>& memory) const {
    const std::size_t b = query.dim(0);
    const std::size_t lq = query.dim(1);
    const std::size_t lk = memory.features.dim(0);
    const std::size_t d = query.shape().back();
    const std::size_t dh = d / heads;
    auto split = [&](const BasicTensor<T>& x, std::size_t len) {
      if (heads == 1) return reshape(x, {b, len, dh});
      return reshape(permute(reshape(x, {b, len, heads, dh}), {0, 2, 1, 3}), {b * heads, len, dh});
    };
    auto project = [&](const Linear<T>& lin) {
      auto gated = gate_rows(memory.weights, matmul(memory.features, lin.weight));
      return lin.bias.defined() ? add(gated, lin.bias) : gated;
    };
    auto qh = split(q(query), lq);
    auto kh = split(project(k), lk);
    auto vh = split(project(v), lk);
    auto scores = scale(matmul_nt(qh, kh), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
    auto ctx = matmul(softmax(scores, -1), vh);
    auto merged = heads == 1 ? reshape(ctx, {b, lq, d})
                             : reshape(permute(reshape(ctx, {b, heads, lq, dh}), {0, 2, 1, 3}), {b, lq, d});
    return out(merged);
  }
};

/// Pre-norm self-attention + feed-forward block.
template <typename T>
struct EncoderBlock {
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> attn;
  FeedForward<T> ffn;

  EncoderBlock() = default;
  EncoderBlock(ParamStore<T>& ps, const std::string& name, std::size_t d, std::size_t heads, std::size_t hidden) {
    NameScope<T> scope(ps, name);
    norm1 = LayerNorm<T>(ps, "norm1", d);
    attn = MultiHeadAttention<T>(ps, "attn", d, heads);
    norm2 = LayerNorm<T>(ps, "norm2", d);
    ffn = FeedForward<T>(ps, "ffn", d, hidden);
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    auto h = norm1(x);
    auto y = add(x, attn(h, h));
    return add(y, ffn(norm2(y)));
  }
};

/// Pre-norm decoder block: self-attention over queries, cross-attention to
/// memory, feed-forward.
template <typename T>
struct DecoderBlock {
  LayerNorm<T> norm1, norm2, norm3;
  MultiHeadAttention<T> self_attn, cross_attn;
  FeedForward<T> ffn;

  DecoderBlock() = default;
  DecoderBlock(ParamStore<T>& ps, const std::string& name, std::size_t d, std::size_t heads, std::size_t hidden) {
    NameScope<T> scope(ps, name);
    norm1 = LayerNorm<T>(ps, "norm1", d);
    self_attn = MultiHeadAttention<T>(ps, "self_attn", d, heads);
    norm2 = LayerNorm<T>(ps, "norm2", d);
    cross_attn = MultiHeadAttention<T>(ps, "cross_attn", d, heads);
    norm3 = LayerNorm<T>(ps, "norm3", d);
    ffn = FeedForward<T>(ps, "ffn", d, hidden);
  }

  template <typename Memory>
  BasicTensor<T> operator()(const BasicTensor<T>& x, const Memory& memory) const {
    auto h = norm1(x);
    auto y = add(x, self_attn(h, h));
    y = add(y, cross_attn(norm2(y), memory));
    return add(y, ffn(norm3(y)));
  }
};

/// Depthwise 3x3 mixing followed by a pointwise MLP, residual, on [H, W, C].
template <typename T>
struct ConvMixBlock {
  LayerNorm<T> norm;
  BasicTensor<T> dw_kernel, dw_bias;
  Linear<T> pw1, pw2;

  ConvMixBlock() = default;
  ConvMixBlock(ParamStore<T>& ps, const std::string& name, std::size_t c, std::size_t hidden) {
    NameScope<T> scope(ps, name);
    norm = LayerNorm<T>(ps, "norm", c);
    dw_kernel = ps.add("dw.weight", {3, 3, c}, Init::FanIn, true, 9);
    dw_bias = ps.add("dw.bias", {c}, Init::Zeros, false);
    pw1 = Linear<T>(ps, "pw1", c, hidden);
    pw2 = Linear<T>(ps, "pw2", hidden, c);
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    auto h = depthwise_conv2d(norm(x), dw_kernel, dw_bias, 1, 1);
    return add(x, pw2(gelu(pw1(h))));
  }
};

template <typename T>
struct Conv2d {
  BasicTensor<T> kernel, bias;
  std::size_t stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<T>& ps, const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
         std::size_t stride_, std::size_t pad_)
      : stride(stride_), pad(pad_) {
    NameScope<T> scope(ps, name);
    kernel = ps.add("weight", {k, k, cin, cout}, Init::FanIn, true, k * k * cin);
    bias = ps.add("bias", {cout}, Init::Zeros, false);
  }
  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return conv2d(x, kernel, bias, stride, pad); }
};

}  // namespace ler
