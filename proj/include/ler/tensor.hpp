#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// The engine is a template over the scalar type: `Tensor` (float) is the
// training/inference path, `Tensor64` (double) exists so that gradient checks
// can evaluate the same graph at 64-bit precision. Broadcasting is limited to
// a shared suffix (one operand's shape equals the trailing dims of the other)
// which covers bias addition and a single leading batch dimension.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <new>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ler {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
class BasicTensor;

/// Allocator with cache-line alignment. Eigen picks its vectorized code path
/// from the pointer alignment, so fixed alignment keeps results bit-identical
/// across calls and runs.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
struct Node {
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(TensorImpl<T>&)> backward;
  bool consumed = false;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::shared_ptr<Buffer<T>> storage;
  Buffer<T> grad;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;

  std::size_t size() const { return storage->size(); }
  const T* data() const { return storage->data(); }
  T* data() { return storage->data(); }
  Buffer<T>& grad_buffer() {
    if (grad.size() != size()) grad.assign(size(), T(0));
    return grad;
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
T* grad_ptr(const std::shared_ptr<TensorImpl<T>>& in) {
  return (in && in->requires_grad) ? in->grad_buffer().data() : nullptr;
}

}  // namespace detail

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using Impl = detail::TensorImpl<T>;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static BasicTensor from(Shape shape, const std::vector<T>& values, bool requires_grad = false) {
    return from(std::move(shape), Buffer<T>(values.begin(), values.end()), requires_grad);
  }

  static BasicTensor from(Shape shape, std::initializer_list<T> values, bool requires_grad = false) {
    return from(std::move(shape), Buffer<T>(values), requires_grad);
  }

  static BasicTensor from(Shape shape, Buffer<T> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor: shape " + to_string(shape) + " holds " +
                           std::to_string(shape_numel(shape)) +
                           " values, got " + std::to_string(values.size()));
    }
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("tensor: zero-sized dimension in " + to_string(shape));
    }
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->storage = std::make_shared<Buffer<T>>(std::move(values));
    impl->requires_grad = requires_grad;
    return BasicTensor(std::move(impl));
  }

  static BasicTensor full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), Buffer<T>(n, value), requires_grad);
  }

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static BasicTensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t size() const { return impl_->size(); }

  std::span<const T> data() const { return {impl_->data(), impl_->size()}; }
  /// Writes through to storage shared with any reshaped views.
  std::span<T> mutable_data() { return {impl_->data(), impl_->size()}; }
  T operator[](std::size_t i) const { return impl_->data()[i]; }
  T item() const {
    if (size() != 1) throw DimensionError("item: tensor has shape " + to_string(shape()));
    return impl_->data()[0];
  }
  std::vector<T> to_vector() const { return {data().begin(), data().end()}; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) {
    if (impl_->node) throw GraphError("set_requires_grad: only valid on leaf tensors");
    impl_->requires_grad = on;
  }
  bool is_leaf() const { return impl_->node == nullptr; }
  bool has_grad() const { return impl_->grad.size() == impl_->size(); }
  std::span<const T> grad() const { return {impl_->grad.data(), impl_->grad.size()}; }
  std::span<T> mutable_grad() { return {impl_->grad_buffer().data(), impl_->size()}; }
  void zero_grad() { impl_->grad.clear(); }

  /// Same storage, no history, no gradient.
  BasicTensor detach() const {
    auto impl = std::make_shared<Impl>();
    impl->shape = impl_->shape;
    impl->storage = impl_->storage;
    return BasicTensor(std::move(impl));
  }

  /// Independent deep copy as a leaf.
  BasicTensor clone(bool requires_grad = false) const {
    return from(shape(), to_vector(), requires_grad);
  }

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate; the
  /// recorded graph is released afterwards and cannot be replayed.
  void backward() const;

  Impl& impl() const { return *impl_; }
  const std::shared_ptr<Impl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T>
void BasicTensor<T>::backward() const {
  if (!impl_) throw GraphError("backward: undefined tensor");
  if (size() != 1) {
    throw GraphError("backward: loss must be scalar, got shape " + to_string(shape()));
  }
  if (!impl_->requires_grad) {
    throw GraphError("backward: loss is detached from every differentiable input");
  }
  if (impl_->node && impl_->node->consumed) {
    throw GraphError("backward: graph already consumed; run a fresh forward pass first");
  }

  // Post-order DFS gives children before parents; walk it in reverse.
  std::vector<std::shared_ptr<Impl>> order;
  std::unordered_set<const Impl*> seen{impl_.get()};
  std::vector<std::pair<std::shared_ptr<Impl>, std::size_t>> stack{{impl_, 0}};
  while (!stack.empty()) {
    auto& top = stack.back();
    const auto& node = top.first->node;
    if (node && node->consumed) {
      throw GraphError("backward: graph shares nodes with an already-consumed graph");
    }
    if (node && top.second < node->inputs.size()) {
      std::shared_ptr<Impl> child = node->inputs[top.second++];
      if (child && child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  impl_->grad_buffer()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl& t = **it;
    if (!t.node) continue;
    if (t.grad.size() == t.size()) t.node->backward(t);
    t.node->consumed = true;
    t.node->backward = nullptr;
    t.node->inputs.clear();
    t.grad.clear();
    t.grad.shrink_to_fit();
  }
}

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
BasicTensor<T> make_result(Shape shape, Buffer<T> values,
                           std::initializer_list<const BasicTensor<T>*> inputs,
                           std::function<void(TensorImpl<T>&)> backward) {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->storage = std::make_shared<Buffer<T>>(std::move(values));
  bool needs_grad = false;
  if (grad_mode()) {
    for (const auto* in : inputs) {
      if (in && in->defined() && in->requires_grad()) needs_grad = true;
    }
  }
  if (needs_grad) {
    auto node = std::make_shared<Node<T>>();
    for (const auto* in : inputs) {
      node->inputs.push_back(in && in->defined() ? in->impl_ptr() : nullptr);
    }
    node->backward = std::move(backward);
    impl->requires_grad = true;
    impl->node = std::move(node);
  }
  return BasicTensor<T>(std::move(impl));
}

inline std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  if (axis < -r || axis >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

inline bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

template <typename T>
BasicTensor<T> matmul_impl(const BasicTensor<T>& a, const BasicTensor<T>& b,
                           bool transpose_b, const char* op) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  auto fail = [&] {
    throw DimensionError(std::string(op) + ": dimension mismatch " + to_string(as) +
                         " x " + to_string(bs));
  };
  if (as.size() < 2 || as.size() > 3 || bs.size() < 2 || bs.size() > 3) fail();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t bk = transpose_b ? bs.back() : bs[bs.size() - 2];
  const std::size_t n = transpose_b ? bs[bs.size() - 2] : bs.back();
  if (k != bk) fail();
  const bool a3 = as.size() == 3;
  const bool b3 = bs.size() == 3;
  if (a3 && b3 && as[0] != bs[0]) fail();

  // A shared right operand folds the batch into the row dimension.
  const bool fold = !b3;
  const std::size_t batch = fold ? 1 : bs[0];
  const std::size_t rows = fold ? (a3 ? as[0] * m : m) : m;
  const std::size_t a_stride = (!fold && a3) ? m * k : 0;
  const std::size_t b_stride = b3 ? k * n : 0;
  const std::size_t c_stride = rows * n;
  const std::size_t b_rows = transpose_b ? n : k;
  const std::size_t b_cols = transpose_b ? k : n;

  Shape out_shape = (a3 || b3) ? Shape{a3 ? as[0] : bs[0], m, n} : Shape{m, n};
  Buffer<T> out(batch * c_stride);
  const T* pa = a.impl().data();
  const T* pb = b.impl().data();
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMatrixMap<T> A(pa + i * a_stride, rows, k);
    ConstMatrixMap<T> B(pb + i * b_stride, b_rows, b_cols);
    MatrixMap<T> C(out.data() + i * c_stride, rows, n);
    if (transpose_b) {
      C.noalias() = A * B.transpose();
    } else {
      C.noalias() = A * B;
    }
  }

  return make_result<T>(
      std::move(out_shape), std::move(out), {&a, &b},
      [=](TensorImpl<T>& o) {
        const auto& in = o.node->inputs;
        T* ga = grad_ptr(in[0]);
        T* gb = grad_ptr(in[1]);
        const T* da = in[0]->data();
        const T* db = in[1]->data();
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMatrixMap<T> G(o.grad.data() + i * c_stride, rows, n);
          ConstMatrixMap<T> A(da + i * a_stride, rows, k);
          ConstMatrixMap<T> B(db + i * b_stride, b_rows, b_cols);
          if (ga) {
            MatrixMap<T> GA(ga + i * a_stride, rows, k);
            if (transpose_b) {
              GA.noalias() += G * B;
            } else {
              GA.noalias() += G * B.transpose();
            }
          }
          if (gb) {
            MatrixMap<T> GB(gb + i * b_stride, b_rows, b_cols);
            if (transpose_b) {
              GB.noalias() += G.transpose() * A;
            } else {
              GB.noalias() += A.transpose() * G;
            }
          }
        }
      });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// a[.., m, k] x b[.., k, n]. At most one leading batch dim; a rank-2 operand
/// is shared across the other's batch.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::matmul_impl(a, b, false, "matmul");
}

/// a[.., m, k] x b[.., n, k]^T without materializing the transpose.
template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::matmul_impl(a, b, true, "matmul_nt");
}

// ---------------------------------------------------------------------------
// Elementwise

/// a + b where one operand's shape is a suffix of the other's.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (!detail::is_suffix(a.shape(), b.shape())) {
    if (detail::is_suffix(b.shape(), a.shape())) return add(b, a);
    throw DimensionError("add: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t n = a.size();
  const std::size_t inner = b.size();
  Buffer<T> out(n);
  const T* pa = a.impl().data();
  const T* pb = b.impl().data();
  for (std::size_t o = 0; o < n; o += inner) {
    for (std::size_t k = 0; k < inner; ++k) out[o + k] = pa[o + k] + pb[k];
  }
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b},
                                [n, inner](detail::TensorImpl<T>& o) {
                                  const auto& in = o.node->inputs;
                                  const T* g = o.grad.data();
                                  if (T* ga = detail::grad_ptr(in[0])) {
                                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                                  }
                                  if (T* gb = detail::grad_ptr(in[1])) {
                                    for (std::size_t o = 0; o < n; o += inner) {
                                      for (std::size_t k = 0; k < inner; ++k) gb[k] += g[o + k];
                                    }
                                  }
                                });
}

/// Elementwise product with the same suffix broadcasting as `add`.
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (!detail::is_suffix(a.shape(), b.shape())) {
    if (detail::is_suffix(b.shape(), a.shape())) return mul(b, a);
    throw DimensionError("mul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t n = a.size();
  const std::size_t inner = b.size();
  Buffer<T> out(n);
  const T* pa = a.impl().data();
  const T* pb = b.impl().data();
  for (std::size_t o = 0; o < n; o += inner) {
    for (std::size_t k = 0; k < inner; ++k) out[o + k] = pa[o + k] * pb[k];
  }
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b},
                                [n, inner](detail::TensorImpl<T>& o) {
                                  const auto& in = o.node->inputs;
                                  const T* g = o.grad.data();
                                  const T* pa = in[0]->data();
                                  const T* pb = in[1]->data();
                                  if (T* ga = detail::grad_ptr(in[0])) {
                                    for (std::size_t o = 0; o < n; o += inner) {
                                      for (std::size_t k = 0; k < inner; ++k) ga[o + k] += g[o + k] * pb[k];
                                    }
                                  }
                                  if (T* gb = detail::grad_ptr(in[1])) {
                                    for (std::size_t o = 0; o < n; o += inner) {
                                      for (std::size_t k = 0; k < inner; ++k) gb[k] += g[o + k] * pa[o + k];
                                    }
                                  }
                                });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  const std::size_t n = x.size();
  Buffer<T> out(n);
  const T* px = x.impl().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = px[i] * factor;
  return detail::make_result<T>(x.shape(), std::move(out), {&x},
                                [n, factor](detail::TensorImpl<T>& o) {
                                  if (T* gx = detail::grad_ptr(o.node->inputs[0])) {
                                    for (std::size_t i = 0; i < n; ++i) gx[i] += o.grad[i] * factor;
                                  }
                                });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  const std::size_t n = x.size();
  Buffer<T> out(n);
  const T* px = x.impl().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = px[i] > T(0) ? px[i] : T(0);
  return detail::make_result<T>(x.shape(), std::move(out), {&x},
                                [n](detail::TensorImpl<T>& o) {
                                  const auto& in = o.node->inputs;
                                  if (T* gx = detail::grad_ptr(in[0])) {
                                    const T* px = in[0]->data();
                                    for (std::size_t i = 0; i < n; ++i) {
                                      if (px[i] > T(0)) gx[i] += o.grad[i];
                                    }
                                  }
                                });
}

/// Exact (erf-based) GELU, evaluated in the tensor's own precision.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  constexpr T kInvSqrt2 = static_cast<T>(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = static_cast<T>(0.39894228040143267794);
  const std::size_t n = x.size();
  Buffer<T> out(n);
  Buffer<T> cdf(n);
  const T* px = x.impl().data();
  for (std::size_t i = 0; i < n; ++i) {
    cdf[i] = T(0.5) * (T(1) + std::erf(px[i] * kInvSqrt2));
    out[i] = px[i] * cdf[i];
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {&x}, [n, cdf = std::move(cdf)](detail::TensorImpl<T>& o) {
        const auto& in = o.node->inputs;
        if (T* gx = detail::grad_ptr(in[0])) {
          const T* px = in[0]->data();
          for (std::size_t i = 0; i < n; ++i) {
            const T v = px[i];
            gx[i] += o.grad[i] * (cdf[i] + v * kInvSqrt2Pi * std::exp(T(-0.5) * v * v));
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions and normalization

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  const std::size_t n = x.size();
  const T* px = x.impl().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += px[i];
  return detail::make_result<T>({1}, {static_cast<T>(acc)}, {&x},
                                [n](detail::TensorImpl<T>& o) {
                                  if (T* gx = detail::grad_ptr(o.node->inputs[0])) {
                                    const T g = o.grad[0];
                                    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
                                  }
                                });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), static_cast<T>(1.0 / static_cast<double>(x.size())));
}

/// Numerically stable softmax along `axis` (max subtracted before exp).
/// Entries equal to -inf map to exactly 0.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, int axis = -1) {
  const std::size_t ax = detail::normalize_axis(axis, x.rank(), "softmax");
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[ax];
  Buffer<T> out(x.size());
  const T* px = x.impl().data();
  if (inner == 1) {
    using Row = Eigen::Array<T, Eigen::Dynamic, 1>;
    for (std::size_t o = 0; o < outer; ++o) {
      Eigen::Map<const Row> xr(px + o * len, static_cast<Eigen::Index>(len));
      Eigen::Map<Row> yr(out.data() + o * len, static_cast<Eigen::Index>(len));
      yr = (xr - xr.maxCoeff()).exp();
      double denom = 0.0;
      for (std::size_t k = 0; k < len; ++k) denom += yr[static_cast<Eigen::Index>(k)];
      yr *= static_cast<T>(1.0 / denom);
    }
  }
  for (std::size_t o = 0; o < outer && inner > 1; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, px[base + k * inner]);
      double denom = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const T e = std::exp(px[base + k * inner] - mx);
        out[base + k * inner] = e;
        denom += e;
      }
      const double inv = 1.0 / denom;
      for (std::size_t k = 0; k < len; ++k) {
        out[base + k * inner] = static_cast<T>(out[base + k * inner] * inv);
      }
    }
  }
  return detail::make_result<T>(
      s, std::move(out), {&x}, [outer, inner, len](detail::TensorImpl<T>& o) {
        T* gx = detail::grad_ptr(o.node->inputs[0]);
        if (!gx) return;
        const T* y = o.data();
        const T* g = o.grad.data();
        for (std::size_t a = 0; a < outer; ++a) {
          for (std::size_t b = 0; b < inner; ++b) {
            const std::size_t base = a * len * inner + b;
            double dot = 0.0;
            for (std::size_t k = 0; k < len; ++k) {
              dot += static_cast<double>(g[base + k * inner]) * y[base + k * inner];
            }
            for (std::size_t k = 0; k < len; ++k) {
              const std::size_t idx = base + k * inner;
              gx[idx] += static_cast<T>(y[idx] * (g[idx] - dot));
            }
          }
        }
      });
}

/// Normalizes over the last dimension, then applies gamma/beta.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps = 1e-5) {
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: affine params " + to_string(gamma.shape()) + "/" +
                         to_string(beta.shape()) + " do not match last dim of " +
                         to_string(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  Buffer<T> out(x.size());
  Buffer<T> xhat(x.size());
  Buffer<T> rstd(rows);
  const T* px = x.impl().data();
  const T* pg = gamma.impl().data();
  const T* pb = beta.impl().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    rstd[r] = static_cast<T>(inv);
    for (std::size_t i = 0; i < d; ++i) {
      const T h = static_cast<T>((row[i] - mu) * inv);
      xhat[r * d + i] = h;
      out[r * d + i] = h * pg[i] + pb[i];
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](detail::TensorImpl<T>& o) {
        const auto& in = o.node->inputs;
        T* gx = detail::grad_ptr(in[0]);
        T* gg = detail::grad_ptr(in[1]);
        T* gb = detail::grad_ptr(in[2]);
        const T* pg = in[1]->data();
        const T* g = o.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g + r * d;
          const T* hr = xhat.data() + r * d;
          if (gg || gb) {
            for (std::size_t i = 0; i < d; ++i) {
              if (gg) gg[i] += gr[i] * hr[i];
              if (gb) gb[i] += gr[i];
            }
          }
          if (gx) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
              const double dh = static_cast<double>(gr[i]) * pg[i];
              m1 += dh;
              m2 += dh * hr[i];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (std::size_t i = 0; i < d; ++i) {
              const double dh = static_cast<double>(gr[i]) * pg[i];
              gx[r * d + i] += static_cast<T>(rstd[r] * (dh - m1 - hr[i] * m2));
            }
          }
        }
      });
}

/// Mean over the second-to-last axis: [.., n, d] -> [.., d].
template <typename T>
BasicTensor<T> global_mean_pool(const BasicTensor<T>& x) {
  if (x.rank() < 2) throw DimensionError("global_mean_pool: need rank >= 2, got " + to_string(x.shape()));
  const std::size_t d = x.shape().back();
  const std::size_t n = x.shape()[x.rank() - 2];
  const std::size_t outer = x.size() / (n * d);
  Shape out_shape(x.shape().begin(), x.shape().end() - 2);
  out_shape.push_back(d);
  Buffer<T> out(outer * d);
  const T* px = x.impl().data();
  std::vector<double> acc(d);
  for (std::size_t o = 0; o < outer; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < d; ++i) acc[i] += px[(o * n + r) * d + i];
    }
    for (std::size_t i = 0; i < d; ++i) out[o * d + i] = static_cast<T>(acc[i] / static_cast<double>(n));
  }
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), {&x}, [outer, n, d](detail::TensorImpl<T>& o) {
        T* gx = detail::grad_ptr(o.node->inputs[0]);
        if (!gx) return;
        const T inv = static_cast<T>(1.0 / static_cast<double>(n));
        for (std::size_t a = 0; a < outer; ++a) {
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < d; ++i) gx[(a * n + r) * d + i] += o.grad[a * d + i] * inv;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Layout

/// Zero-copy reshape: the result shares storage with `x`.
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->storage = x.impl().storage;
  if (detail::grad_mode() && x.requires_grad()) {
    auto node = std::make_shared<detail::Node<T>>();
    node->inputs.push_back(x.impl_ptr());
    node->backward = [](detail::TensorImpl<T>& o) {
      if (T* gx = detail::grad_ptr(o.node->inputs[0])) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
      }
    };
    impl->requires_grad = true;
    impl->node = std::move(node);
  }
  return BasicTensor<T>(std::move(impl));
}

/// Axis permutation for rank <= 4 (copies).
template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r || r > 4) {
    throw DimensionError("permute: permutation of size " + std::to_string(perm.size()) +
                         " invalid for shape " + to_string(x.shape()));
  }
  std::array<bool, 4> used{};
  for (std::size_t p : perm) {
    if (p >= r || used[p]) throw DimensionError("permute: invalid permutation for " + to_string(x.shape()));
    used[p] = true;
  }
  // Pad to rank 4 with leading unit dims.
  std::array<std::size_t, 4> in_dims{1, 1, 1, 1};
  std::array<std::size_t, 4> p4{0, 1, 2, 3};
  const std::size_t pad = 4 - r;
  for (std::size_t i = 0; i < r; ++i) {
    in_dims[pad + i] = x.shape()[i];
    p4[pad + i] = pad + perm[i];
  }
  std::array<std::size_t, 4> in_strides{};
  in_strides[3] = 1;
  for (int i = 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_dims[i + 1];
  std::array<std::size_t, 4> out_dims{};
  std::array<std::size_t, 4> src_stride{};
  for (std::size_t i = 0; i < 4; ++i) {
    out_dims[i] = in_dims[p4[i]];
    src_stride[i] = in_strides[p4[i]];
  }
  Shape out_shape;
  for (std::size_t i = 0; i < r; ++i) out_shape.push_back(x.shape()[perm[i]]);

  std::vector<std::size_t> src(x.size());
  std::size_t idx = 0;
  for (std::size_t a = 0; a < out_dims[0]; ++a) {
    for (std::size_t b = 0; b < out_dims[1]; ++b) {
      for (std::size_t c = 0; c < out_dims[2]; ++c) {
        const std::size_t base = a * src_stride[0] + b * src_stride[1] + c * src_stride[2];
        for (std::size_t d = 0; d < out_dims[3]; ++d) src[idx++] = base + d * src_stride[3];
      }
    }
  }
  Buffer<T> out(x.size());
  const T* px = x.impl().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[src[i]];
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), {&x}, [src = std::move(src)](detail::TensorImpl<T>& o) {
        if (T* gx = detail::grad_ptr(o.node->inputs[0])) {
          for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += o.grad[i];
        }
      });
}

/// Repeats `x` along a new leading dimension of size `count`.
template <typename T>
BasicTensor<T> expand(const BasicTensor<T>& x, std::size_t count) {
  if (count == 0) throw DimensionError("expand: count must be positive");
  const std::size_t n = x.size();
  Shape out_shape{count};
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  Buffer<T> out(count * n);
  for (std::size_t c = 0; c < count; ++c) {
    std::copy_n(x.impl().data(), n, out.begin() + static_cast<std::ptrdiff_t>(c * n));
  }
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&x},
                                [count, n](detail::TensorImpl<T>& o) {
                                  if (T* gx = detail::grad_ptr(o.node->inputs[0])) {
                                    for (std::size_t c = 0; c < count; ++c) {
                                      for (std::size_t i = 0; i < n; ++i) gx[i] += o.grad[c * n + i];
                                    }
                                  }
                                });
}

/// Rows of `table` [V, D] selected by `ids` -> [ids.size(), D].
template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const int> ids) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be rank 2, got " + to_string(table.shape()));
  if (ids.empty()) throw DimensionError("embedding: empty index list");
  const std::size_t v = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<int> idx(ids.begin(), ids.end());
  Buffer<T> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= v) {
      throw DimensionError("embedding: index " + std::to_string(idx[r]) + " outside table of " +
                           std::to_string(v) + " rows");
    }
    std::copy_n(table.impl().data() + static_cast<std::size_t>(idx[r]) * d, d,
                out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  const std::size_t n = idx.size();
  return detail::make_result<T>({n, d}, std::move(out), {&table},
                                [idx = std::move(idx), d](detail::TensorImpl<T>& o) {
                                  if (T* gt = detail::grad_ptr(o.node->inputs[0])) {
                                    for (std::size_t r = 0; r < idx.size(); ++r) {
                                      T* row = gt + static_cast<std::size_t>(idx[r]) * d;
                                      for (std::size_t i = 0; i < d; ++i) row[i] += o.grad[r * d + i];
                                    }
                                  }
                                });
}

/// Per-row gating: out[j, t, :] = weights[j, t] * features[t, :].
/// weights [L, T], features [T, D] -> [L, T, D].
template <typename T>
BasicTensor<T> gate_rows(const BasicTensor<T>& weights, const BasicTensor<T>& features) {
  if (weights.rank() != 2 || features.rank() != 2 || weights.dim(1) != features.dim(0)) {
    throw DimensionError("gate_rows: incompatible shapes " + to_string(weights.shape()) + " and " +
                         to_string(features.shape()));
  }
  const std::size_t l = weights.dim(0);
  const std::size_t t = weights.dim(1);
  const std::size_t d = features.dim(1);
  Buffer<T> out(l * t * d);
  const T* pw = weights.impl().data();
  const T* pf = features.impl().data();
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t k = 0; k < t; ++k) {
      const T w = pw[j * t + k];
      T* dst = out.data() + (j * t + k) * d;
      const T* src = pf + k * d;
      for (std::size_t i = 0; i < d; ++i) dst[i] = w * src[i];
    }
  }
  return detail::make_result<T>(
      {l, t, d}, std::move(out), {&weights, &features}, [l, t, d](detail::TensorImpl<T>& o) {
        const auto& in = o.node->inputs;
        T* gw = detail::grad_ptr(in[0]);
        T* gf = detail::grad_ptr(in[1]);
        const T* pw = in[0]->data();
        const T* pf = in[1]->data();
        for (std::size_t j = 0; j < l; ++j) {
          for (std::size_t k = 0; k < t; ++k) {
            const T* g = o.grad.data() + (j * t + k) * d;
            if (gw) {
              double acc = 0.0;
              for (std::size_t i = 0; i < d; ++i) acc += static_cast<double>(g[i]) * pf[k * d + i];
              gw[j * t + k] += static_cast<T>(acc);
            }
            if (gf) {
              const T w = pw[j * t + k];
              for (std::size_t i = 0; i < d; ++i) gf[k * d + i] += w * g[i];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolutions over HWC images

struct ConvGeometry {
  std::size_t in_h, in_w, out_h, out_w, kh, kw, stride, pad;
};

inline ConvGeometry conv_geometry(const Shape& x, std::size_t kh, std::size_t kw,
                                  std::size_t stride, std::size_t pad, const char* op) {
  if (x.size() != 3) throw DimensionError(std::string(op) + ": input must be [H, W, C], got " + to_string(x));
  if (stride == 0) throw DimensionError(std::string(op) + ": stride must be positive");
  if (x[0] + 2 * pad < kh || x[1] + 2 * pad < kw) {
    throw DimensionError(std::string(op) + ": kernel larger than padded input " + to_string(x));
  }
  return {x[0], x[1], (x[0] + 2 * pad - kh) / stride + 1, (x[1] + 2 * pad - kw) / stride + 1,
          kh, kw, stride, pad};
}

/// Dense 2-D convolution. x [H, W, Cin], kernel [kh, kw, Cin, Cout],
/// bias [Cout] or undefined.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t pad) {
  if (kernel.rank() != 4 || x.rank() != 3 || kernel.dim(2) != x.dim(2)) {
    throw DimensionError("conv2d: kernel " + (kernel.defined() ? to_string(kernel.shape()) : "?") +
                         " incompatible with input " + to_string(x.shape()));
  }
  const std::size_t cin = x.dim(2);
  const std::size_t cout = kernel.dim(3);
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw DimensionError("conv2d: bias " + to_string(bias.shape()) + " does not match " + std::to_string(cout) + " outputs");
  }
  const ConvGeometry g = conv_geometry(x.shape(), kernel.dim(0), kernel.dim(1), stride, pad, "conv2d");
  const std::size_t patch = g.kh * g.kw * cin;
  const std::size_t positions = g.out_h * g.out_w;

  // im2col; -1 marks zero padding.
  std::vector<std::ptrdiff_t> gather(positions * g.kh * g.kw);
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
          const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.in_h) &&
                              ix < static_cast<std::ptrdiff_t>(g.in_w);
          gather[((oy * g.out_w + ox) * g.kh + ky) * g.kw + kx] =
              inside ? (iy * static_cast<std::ptrdiff_t>(g.in_w) + ix) * static_cast<std::ptrdiff_t>(cin) : -1;
        }
      }
    }
  }
  const T* px = x.impl().data();
  Buffer<T> cols(positions * patch, T(0));
  for (std::size_t p = 0; p < positions * g.kh * g.kw; ++p) {
    if (gather[p] >= 0) std::copy_n(px + gather[p], cin, cols.begin() + static_cast<std::ptrdiff_t>(p * cin));
  }
  Buffer<T> out(positions * cout);
  {
    detail::ConstMatrixMap<T> C(cols.data(), positions, patch);
    detail::ConstMatrixMap<T> K(kernel.impl().data(), patch, cout);
    detail::MatrixMap<T> O(out.data(), positions, cout);
    O.noalias() = C * K;
    if (bias.defined()) {
      const T* pb = bias.impl().data();
      for (std::size_t p = 0; p < positions; ++p) {
        for (std::size_t c = 0; c < cout; ++c) out[p * cout + c] += pb[c];
      }
    }
  }
  return detail::make_result<T>(
      {g.out_h, g.out_w, cout}, std::move(out), {&x, &kernel, &bias},
      [positions, patch, cin, cout, gather = std::move(gather), cols = std::move(cols),
       taps = g.kh * g.kw](detail::TensorImpl<T>& o) {
        const auto& in = o.node->inputs;
        T* gx = detail::grad_ptr(in[0]);
        T* gk = detail::grad_ptr(in[1]);
        T* gb = detail::grad_ptr(in[2]);
        detail::ConstMatrixMap<T> G(o.grad.data(), positions, cout);
        if (gk) {
          detail::ConstMatrixMap<T> C(cols.data(), positions, patch);
          detail::MatrixMap<T> GK(gk, patch, cout);
          GK.noalias() += C.transpose() * G;
        }
        if (gb) {
          for (std::size_t p = 0; p < positions; ++p) {
            for (std::size_t c = 0; c < cout; ++c) gb[c] += o.grad[p * cout + c];
          }
        }
        if (gx) {
          detail::ConstMatrixMap<T> K(in[1]->data(), patch, cout);
          detail::RowMatrix<T> gcols = G * K.transpose();
          for (std::size_t p = 0; p < positions * taps; ++p) {
            if (gather[p] < 0) continue;
            const T* src = gcols.data() + p * cin;
            T* dst = gx + gather[p];
            for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
          }
        }
      });
}

/// Depthwise 2-D convolution. x [H, W, C], kernel [kh, kw, C], bias [C] or undefined.
template <typename T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                                const BasicTensor<T>& bias, std::size_t stride, std::size_t pad) {
  if (kernel.rank() != 3 || x.rank() != 3 || kernel.dim(2) != x.dim(2)) {
    throw DimensionError("depthwise_conv2d: kernel " + (kernel.defined() ? to_string(kernel.shape()) : "?") +
                         " incompatible with input " + to_string(x.shape()));
  }
  const std::size_t ch = x.dim(2);
  if (bias.defined() && bias.shape() != Shape{ch}) {
    throw DimensionError("depthwise_conv2d: bias " + to_string(bias.shape()) + " does not match " + std::to_string(ch) + " channels");
  }
  const ConvGeometry g = conv_geometry(x.shape(), kernel.dim(0), kernel.dim(1), stride, pad, "depthwise_conv2d");
  Buffer<T> out(g.out_h * g.out_w * ch, T(0));
  const T* px = x.impl().data();
  const T* pk = kernel.impl().data();
  auto for_each_tap = [g, ch](auto&& fn) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            fn((oy * g.out_w + ox) * ch,
               (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * ch,
               (ky * g.kw + kx) * ch);
          }
        }
      }
    }
  };
  for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) {
    for (std::size_t c = 0; c < ch; ++c) out[o + c] += px[i + c] * pk[k + c];
  });
  if (bias.defined()) {
    const T* pb = bias.impl().data();
    for (std::size_t p = 0; p < g.out_h * g.out_w; ++p) {
      for (std::size_t c = 0; c < ch; ++c) out[p * ch + c] += pb[c];
    }
  }
  return detail::make_result<T>(
      {g.out_h, g.out_w, ch}, std::move(out), {&x, &kernel, &bias},
      [for_each_tap, ch, positions = g.out_h * g.out_w](detail::TensorImpl<T>& o) {
        const auto& in = o.node->inputs;
        T* gx = detail::grad_ptr(in[0]);
        T* gk = detail::grad_ptr(in[1]);
        T* gb = detail::grad_ptr(in[2]);
        const T* px = in[0]->data();
        const T* pk = in[1]->data();
        const T* g = o.grad.data();
        for_each_tap([&](std::size_t op, std::size_t ip, std::size_t kp) {
          for (std::size_t c = 0; c < ch; ++c) {
            if (gx) gx[ip + c] += g[op + c] * pk[kp + c];
            if (gk) gk[kp + c] += g[op + c] * px[ip + c];
          }
        });
        if (gb) {
          for (std::size_t p = 0; p < positions; ++p) {
            for (std::size_t c = 0; c < ch; ++c) gb[c] += g[p * ch + c];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Loss

/// Weighted cross-entropy over rows of logits [n, C] (log-softmax inside):
///   sum_r mask_r * (logsumexp(x_r) - x_r[target_r]) / denominator.
/// An empty mask means every row counts. A zero denominator yields a zero
/// scalar that is still attached to the graph (and back-propagates zeros).
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> targets,
                             std::span<const std::uint8_t> mask, double denominator) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [n, C], got " + to_string(logits.shape()));
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " rows");
  }
  if (!mask.empty() && mask.size() != n) throw DimensionError("cross_entropy: mask length mismatch");
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw DimensionError("cross_entropy: target " + std::to_string(t) + " outside " + std::to_string(c) + " classes");
    }
  }
  const double norm = denominator > 0.0 ? 1.0 / denominator : 0.0;
  const T* px = logits.impl().data();
  Buffer<T> probs(n * c);
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> weight(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    weight[r] = (mask.empty() || mask[r]) ? norm : 0.0;
    const T* row = px + r * c;
    const T mx = *std::max_element(row, row + c);
    double denom = 0.0;
    for (std::size_t k = 0; k < c; ++k) denom += std::exp(static_cast<double>(row[k] - mx));
    const double lse = static_cast<double>(mx) + std::log(denom);
    for (std::size_t k = 0; k < c; ++k) {
      probs[r * c + k] = static_cast<T>(std::exp(static_cast<double>(row[k]) - lse));
    }
    if (weight[r] != 0.0) total += weight[r] * (lse - row[tgt[r]]);
  }
  return detail::make_result<T>(
      {1}, {static_cast<T>(total)}, {&logits},
      [n, c, probs = std::move(probs), tgt = std::move(tgt), weight = std::move(weight)](detail::TensorImpl<T>& o) {
        T* gx = detail::grad_ptr(o.node->inputs[0]);
        if (!gx) return;
        const double g = o.grad[0];
        for (std::size_t r = 0; r < n; ++r) {
          if (weight[r] == 0.0) continue;
          const double s = g * weight[r];
          for (std::size_t k = 0; k < c; ++k) gx[r * c + k] += static_cast<T>(s * probs[r * c + k]);
          gx[r * c + static_cast<std::size_t>(tgt[r])] -= static_cast<T>(s);
        }
      });
}

/// Mean cross-entropy over all rows.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> targets) {
  return cross_entropy(logits, targets, {}, static_cast<double>(targets.size()));
}

/// Single-row convenience: logits [C] (or [1, C]) against one class index.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, int target) {
  const BasicTensor<T> rows = logits.rank() == 1 ? reshape(logits, {1, logits.size()}) : logits;
  const int t[1] = {target};
  return cross_entropy(rows, std::span<const int>(t, 1));
}

template <typename T>
bool all_finite(const BasicTensor<T>& x) {
  return std::all_of(x.data().begin(), x.data().end(), [](T v) { return std::isfinite(v); });
}

}  // namespace ler
