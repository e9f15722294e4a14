#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ler/tensor.hpp"
#include "support.hpp"

using namespace ler;
using ler::testing::op_gradient_error;
using ler::testing::random_tensor;
using ler::testing::uniform_tensor;

namespace {

constexpr double kTol = 1e-3;

// Plain loops, kept deliberately naive.
std::vector<double> naive_matmul(const Tensor64& a, const Tensor64& b) {
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * m + j] += a[i * k + p] * b[p * m + j];
  return out;
}

std::vector<double> naive_conv(const Tensor64& x, const Tensor64& w, const Tensor64& b, std::size_t stride,
                               std::size_t pad) {
  const long h = static_cast<long>(x.dim(0)), wd = static_cast<long>(x.dim(1));
  const std::size_t cin = x.dim(2), kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  const std::size_t oh = (x.dim(0) + 2 * pad - kh) / stride + 1, ow = (x.dim(1) + 2 * pad - kw) / stride + 1;
  std::vector<double> out(oh * ow * cout, 0.0);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t co = 0; co < cout; ++co) {
        double acc = b.defined() ? b[co] : 0.0;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              acc += x[(static_cast<std::size_t>(iy) * x.dim(1) + static_cast<std::size_t>(ix)) * cin + ci] *
                     w[((ky * kw + kx) * cin + ci) * cout + co];
            }
          }
        out[(oy * ow + ox) * cout + co] = acc;
      }
  return out;
}

void expect_close(std::span<const double> got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "index " << i;
}

}  // namespace

TEST(TensorBasics, FromChecksElementCount) {
  EXPECT_THROW(Tensor::from({2, 3}, std::vector<float>(5)), DimensionError);
  EXPECT_THROW(Tensor::from({0, 3}, {}), DimensionError);
}

TEST(TensorBasics, ReshapeSharesStorage) {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = reshape(a, {3, 2});
  b.mutable_data()[0] = 42.0f;
  EXPECT_EQ(a[0], 42.0f);
  EXPECT_THROW(reshape(a, {4, 2}), DimensionError);
}

TEST(TensorBasics, BackwardTwiceIsAnError) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  Tensor loss = sum(mul(x, x));
  loss.backward();
  EXPECT_THROW(loss.backward(), GraphError);
}

TEST(TensorBasics, BackwardNeedsScalarAttachedLoss) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  EXPECT_THROW(mul(x, x).backward(), GraphError);
  Tensor c = Tensor::from({1}, {2.0f});
  EXPECT_THROW(c.backward(), GraphError);
}

TEST(TensorBasics, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = sum(mul(x, x));
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_THROW(y.backward(), GraphError);
}

TEST(TensorBasics, GradientsAccumulateAcrossBackwardCalls) {
  Tensor x = Tensor::from({2}, {1, 3}, true);
  sum(mul(x, x)).backward();
  sum(mul(x, x)).backward();
  EXPECT_FLOAT_EQ(x.grad()[0], 4.0f);
  EXPECT_FLOAT_EQ(x.grad()[1], 12.0f);
}

TEST(TensorBasics, SharedSubexpressionGetsBothContributions) {
  Tensor64 x = Tensor64::from({1}, {3.0}, true);
  Tensor64 y = mul(x, x);
  sum(add(y, y)).backward();  // d/dx 2x^2 = 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(TensorForward, MatmulMatchesNaiveLoops) {
  CounterRng rng(1, 0);
  auto a = random_tensor<double>({5, 7}, rng);
  auto b = random_tensor<double>({7, 3}, rng);
  expect_close(matmul(a, b).data(), naive_matmul(a, b), 1e-12);
  EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(TensorForward, MatmulNtTransposesSecondOperand) {
  Tensor64 a = Tensor64::from({1, 2}, {1, 2});
  Tensor64 b = Tensor64::from({3, 2}, {1, 0, 0, 1, 1, 1});
  const auto y = matmul_nt(a, b);
  EXPECT_EQ(y.shape(), (Shape{1, 3}));
  expect_close(y.data(), {1, 2, 3}, 0);
}

TEST(TensorForward, BatchedMatmulWithSharedRightOperand) {
  CounterRng rng(2, 0);
  auto a = random_tensor<double>({2, 3, 4}, rng);
  auto b = random_tensor<double>({4, 5}, rng);
  auto y = matmul(a, b);
  ASSERT_EQ(y.shape(), (Shape{2, 3, 5}));
  for (std::size_t i = 0; i < 2; ++i) {
    auto ai = Tensor64::from({3, 4}, std::vector<double>(a.data().begin() + i * 12, a.data().begin() + (i + 1) * 12));
    const auto want = naive_matmul(ai, b);
    expect_close(y.data().subspan(i * 15, 15), want, 1e-12);
  }
}

TEST(TensorForward, BroadcastAddOverLeadingDims) {
  Tensor a = Tensor::from({2, 3}, {0, 0, 0, 1, 1, 1});
  Tensor b = Tensor::from({3}, {1, 2, 3});
  const auto y = add(a, b);
  EXPECT_EQ(y.to_vector(), (std::vector<float>{1, 2, 3, 2, 3, 4}));
  EXPECT_EQ(add(b, a).to_vector(), y.to_vector());
  EXPECT_THROW(add(a, Tensor::from({2}, {1, 2})), DimensionError);
}

TEST(TensorForward, SoftmaxKnownValues) {
  Tensor64 x = Tensor64::from({1, 3}, {1, 2, 3});
  expect_close(softmax(x).data(), {0.09003057317038046, 0.24472847105479767, 0.6652409557748219}, 1e-15);
}

TEST(TensorForward, SoftmaxIsShiftInvariantAndStable) {
  Tensor64 x = Tensor64::from({1, 3}, {1001, 1002, 1003});
  expect_close(softmax(x).data(), {0.09003057317038046, 0.24472847105479767, 0.6652409557748219}, 1e-12);
}

TEST(TensorForward, SoftmaxOfMinusInfinityIsExactlyZero) {
  const float inf = std::numeric_limits<float>::infinity();
  Tensor x = Tensor::from({2, 3}, {-inf, 0.5f, 0.1f, 0.3f, -inf, 2.0f});
  const auto y = softmax(x);
  EXPECT_EQ(y[0], 0.0f);
  EXPECT_EQ(y[4], 0.0f);
  EXPECT_NEAR(y[1] + y[2], 1.0f, 1e-6);
}

TEST(TensorForward, SoftmaxOverInnerAxis) {
  Tensor64 x = Tensor64::from({2, 2}, {0, 0, std::log(3.0), 0});
  const auto y = softmax(x, 0);  // columns
  expect_close(y.data(), {0.25, 0.5, 0.75, 0.5}, 1e-12);
}

TEST(TensorForward, GeluKnownValues) {
  Tensor64 x = Tensor64::from({3}, {-1, 0, 1});
  expect_close(gelu(x).data(), {-0.15865525393145707, 0.0, 0.8413447460685429}, 1e-12);
}

TEST(TensorForward, LayerNormNormalizesLastAxis) {
  Tensor64 x = Tensor64::from({2, 4}, {1, 2, 3, 4, -2, 0, 2, 4});
  Tensor64 g = Tensor64::full({4}, 1.0), b = Tensor64::zeros({4});
  const auto y = layer_norm(x, g, b, 0.0);
  // mean 2.5, var 1.25 ; mean 1, var 5
  const double s1 = 1.0 / std::sqrt(1.25), s2 = 1.0 / std::sqrt(5.0);
  expect_close(y.data(), {-1.5 * s1, -0.5 * s1, 0.5 * s1, 1.5 * s1, -3 * s2, -1 * s2, 1 * s2, 3 * s2}, 1e-12);
}

TEST(TensorForward, ConvMatchesNaiveLoops) {
  CounterRng rng(3, 0);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      auto x = random_tensor<double>({7, 9, 3}, rng);
      auto w = random_tensor<double>({3, 3, 3, 4}, rng);
      auto b = random_tensor<double>({4}, rng);
      const auto y = conv2d(x, w, b, stride, pad);
      expect_close(y.data(), naive_conv(x, w, b, stride, pad), 1e-12);
    }
  }
}

TEST(TensorForward, DepthwiseConvMatchesPerChannelDenseConv) {
  CounterRng rng(4, 0);
  auto x = random_tensor<double>({6, 5, 3}, rng);
  auto k = random_tensor<double>({3, 3, 3}, rng);
  const auto y = depthwise_conv2d(x, k, Tensor64{}, 1, 1);
  // Dense kernel that is diagonal across channels.
  std::vector<double> dense(3 * 3 * 3 * 3, 0.0);
  for (std::size_t p = 0; p < 9; ++p)
    for (std::size_t c = 0; c < 3; ++c) dense[(p * 3 + c) * 3 + c] = k[p * 3 + c];
  const auto want = naive_conv(x, Tensor64::from({3, 3, 3, 3}, dense), Tensor64{}, 1, 1);
  expect_close(y.data(), want, 1e-12);
}

TEST(TensorForward, GlobalMeanPoolAveragesSecondToLastAxis) {
  Tensor64 x = Tensor64::from({2, 3, 2}, {1, 2, 3, 4, 5, 6, 0, 0, 0, 0, 3, 3});
  expect_close(global_mean_pool(x).data(), {3, 4, 1, 1}, 1e-15);
}

TEST(TensorForward, PermuteRank3) {
  Tensor x = Tensor::from({2, 1, 3}, {1, 2, 3, 4, 5, 6});
  const auto y = permute(x, {2, 0, 1});
  EXPECT_EQ(y.shape(), (Shape{3, 2, 1}));
  EXPECT_EQ(y.to_vector(), (std::vector<float>{1, 4, 2, 5, 3, 6}));
}

TEST(TensorForward, GateRowsScalesFeatures) {
  Tensor w = Tensor::from({2, 2}, {1, 0, 0.5f, 2});
  Tensor f = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(gate_rows(w, f).to_vector(), (std::vector<float>{1, 2, 0, 0, 0.5f, 1, 6, 8}));
}

TEST(TensorForward, EmbeddingGathersRows) {
  Tensor table = Tensor::from({3, 2}, {0, 1, 10, 11, 20, 21});
  const int ids[] = {2, 0, 2};
  EXPECT_EQ(embedding(table, ids).to_vector(), (std::vector<float>{20, 21, 0, 1, 20, 21}));
  const int bad[] = {3};
  EXPECT_THROW(embedding(table, bad), DimensionError);
}

TEST(CrossEntropy, UniformLogitsGiveLogClassCount) {
  Tensor64 x = Tensor64::zeros({4, 7});
  const int t[] = {0, 3, 6, 2};
  EXPECT_NEAR(cross_entropy(x, t).item(), std::log(7.0), 1e-12);
}

TEST(CrossEntropy, MatchesLogSumExpReference) {
  CounterRng rng(5, 0);
  auto x = random_tensor<double>({3, 5}, rng, 3.0);
  const int t[] = {4, 0, 2};
  double want = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    double m = -1e300, s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) m = std::max(m, x[r * 5 + c]);
    for (std::size_t c = 0; c < 5; ++c) s += std::exp(x[r * 5 + c] - m);
    want += m + std::log(s) - x[r * 5 + static_cast<std::size_t>(t[r])];
  }
  EXPECT_NEAR(cross_entropy(x, t).item(), want / 3.0, 1e-12);
}

TEST(CrossEntropy, FullyMaskedIsZeroWithZeroGradient) {
  Tensor64 x = Tensor64::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  const int t[] = {0, 1};
  const std::uint8_t mask[] = {0, 0};
  auto loss = cross_entropy(x, t, mask, 0.0);
  EXPECT_EQ(loss.item(), 0.0);
  loss.backward();
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(CrossEntropy, RejectsOutOfRangeTargets) {
  Tensor x = Tensor::zeros({1, 3});
  const int t[] = {3};
  EXPECT_THROW(cross_entropy(x, t), DimensionError);
}

// Central differences in double precision against every op's backward.
class OpGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OpGradient, ElementwiseAndReductions) {
  const std::uint64_t seed = GetParam();
  CounterRng rng(seed, 1);
  auto a = random_tensor<double>({3, 4}, rng);
  auto b = random_tensor<double>({3, 4}, rng);
  auto row = random_tensor<double>({4}, rng);
  EXPECT_LT(op_gradient_error([](auto& in) { return add(in[0], in[1]); }, {a, b}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return add(in[0], in[1]); }, {a, row}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return mul(in[0], in[1]); }, {a, b}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return mul(in[1], in[0]); }, {a, row}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return scale(in[0], 0.7); }, {a}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return gelu(in[0]); }, {a}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return sum(in[0]); }, {a}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return mean(in[0]); }, {a}, seed), kTol);
  // relu away from the kink
  auto away = uniform_tensor<double>({6}, rng, 0.1, 1.0);
  auto neg = scale(away.detach(), -1.0).clone(true);
  EXPECT_LT(op_gradient_error([](auto& in) { return relu(in[0]); }, {away}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return relu(in[0]); }, {neg}, seed), kTol);
}

TEST_P(OpGradient, MatmulFamily) {
  const std::uint64_t seed = GetParam();
  CounterRng rng(seed, 2);
  auto a = random_tensor<double>({3, 4}, rng);
  auto b = random_tensor<double>({4, 2}, rng);
  auto c = random_tensor<double>({5, 4}, rng);
  auto a3 = random_tensor<double>({2, 3, 4}, rng);
  auto b3 = random_tensor<double>({2, 4, 2}, rng);
  auto c3 = random_tensor<double>({2, 5, 4}, rng);
  EXPECT_LT(op_gradient_error([](auto& in) { return matmul(in[0], in[1]); }, {a, b}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return matmul_nt(in[0], in[1]); }, {a, c}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return matmul(in[0], in[1]); }, {a3, b3}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return matmul(in[0], in[1]); }, {a3, b}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return matmul_nt(in[0], in[1]); }, {a3, c3}, seed), kTol);
}

TEST_P(OpGradient, NormalizationAndSoftmax) {
  const std::uint64_t seed = GetParam();
  CounterRng rng(seed, 3);
  auto x = random_tensor<double>({3, 5}, rng);
  auto x3 = random_tensor<double>({2, 3, 4}, rng);
  auto g = random_tensor<double>({5}, rng);
  auto b = random_tensor<double>({5}, rng);
  EXPECT_LT(op_gradient_error([](auto& in) { return softmax(in[0], -1); }, {x}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return softmax(in[0], 0); }, {x}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return softmax(in[0], 1); }, {x3}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return layer_norm(in[0], in[1], in[2]); }, {x, g, b}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return global_mean_pool(in[0]); }, {x3}, seed), kTol);
  // Masked softmax: -inf entries carry no gradient.
  auto m = Tensor64::from({3, 3}, {-INFINITY, 0, 0, 0, -INFINITY, 0, 0, 0, -INFINITY});
  auto s = random_tensor<double>({3, 3}, rng);
  EXPECT_LT(op_gradient_error([&](auto& in) { return softmax(add(in[0], m), -1); }, {s}, seed), kTol);
}

TEST_P(OpGradient, ShapeOps) {
  const std::uint64_t seed = GetParam();
  CounterRng rng(seed, 4);
  auto x = random_tensor<double>({2, 3, 4}, rng);
  auto x4 = random_tensor<double>({2, 3, 2, 2}, rng);
  auto table = random_tensor<double>({5, 3}, rng);
  auto w = random_tensor<double>({2, 3}, rng);
  auto f = random_tensor<double>({3, 4}, rng);
  const std::vector<int> ids{4, 1, 1, 0};
  EXPECT_LT(op_gradient_error([](auto& in) { return reshape(in[0], {6, 4}); }, {x}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return permute(in[0], {1, 2, 0}); }, {x}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return permute(in[0], {0, 2, 1, 3}); }, {x4}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return expand(in[0], 3); }, {f}, seed), kTol);
  EXPECT_LT(op_gradient_error([&](auto& in) { return embedding(in[0], ids); }, {table}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return gate_rows(in[0], in[1]); }, {w, f}, seed), kTol);
}

TEST_P(OpGradient, Convolutions) {
  const std::uint64_t seed = GetParam();
  CounterRng rng(seed, 5);
  auto x = random_tensor<double>({6, 7, 2}, rng);
  auto k = random_tensor<double>({3, 3, 2, 3}, rng);
  auto b = random_tensor<double>({3}, rng);
  auto dk = random_tensor<double>({3, 3, 2}, rng);
  auto db = random_tensor<double>({2}, rng);
  EXPECT_LT(op_gradient_error([](auto& in) { return conv2d(in[0], in[1], in[2], 1, 1); }, {x, k, b}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return conv2d(in[0], in[1], in[2], 2, 1); }, {x, k, b}, seed), kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return depthwise_conv2d(in[0], in[1], in[2], 1, 1); }, {x, dk, db},
                              seed),
            kTol);
  EXPECT_LT(op_gradient_error([](auto& in) { return depthwise_conv2d(in[0], in[1], in[2], 2, 1); }, {x, dk, db},
                              seed),
            kTol);
}

TEST_P(OpGradient, CrossEntropy) {
  const std::uint64_t seed = GetParam();
  CounterRng rng(seed, 6);
  auto x = random_tensor<double>({4, 6}, rng);
  const std::vector<int> t{5, 0, 3, 3};
  const std::vector<std::uint8_t> mask{1, 0, 1, 1};
  EXPECT_LT(op_gradient_error([&](auto& in) { return cross_entropy(in[0], t); }, {x}, seed), kTol);
  EXPECT_LT(op_gradient_error([&](auto& in) { return cross_entropy(in[0], t, mask, 7.0); }, {x}, seed), kTol);
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Values(1u, 2u, 3u, 4u, 5u));
