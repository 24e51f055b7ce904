#include <gtest/gtest.h>

#include "styleaug/errors.hpp"
#include "styleaug/layers.hpp"
#include "support.hpp"

using namespace styleaug;
using test::relative_error;

namespace {

constexpr int kCases = 50;
constexpr double kTol = 1e-3;

double project(const Tensor& y, const Tensor& w) { return dot(y, w); }

}  // namespace

TEST(Conv2d, IdentityKernelOnScalar) {
  const Tensor out = conv2d_forward(Tensor({1, 1, 1}, {5}), Tensor({1, 1, 1, 1}, {1}),
                                    Tensor({1}, {0}), 1, 0);
  EXPECT_EQ(out, Tensor({1, 1, 1}, {5}));
}

TEST(Conv2d, HandSumOfProducts) {
  const Tensor out = conv2d_forward(Tensor({1, 2, 2}, {1, 2, 3, 4}),
                                    Tensor({1, 1, 2, 2}, 1.0f), Tensor({1}), 1, 0);
  EXPECT_EQ(out, Tensor({1, 1, 1}, {10}));
}

TEST(Conv2d, ZeroInputGivesBias) {
  Rng rng(3);
  const Tensor w = test::random_tensor({2, 1, 3, 3}, rng);
  const Tensor out = conv2d_forward(Tensor({1, 3, 3}), w, Tensor({2}, {0.5f, -2.0f}), 1, 1);
  ASSERT_EQ(out.shape(), (Shape{2, 3, 3}));
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(out[i], 0.5f);
    EXPECT_EQ(out[9 + i], -2.0f);
  }
}

TEST(Conv2d, OutputExtentsFollowStrideAndPadding) {
  const Tensor out = conv2d_forward(Tensor({2, 7, 5}), Tensor({3, 2, 3, 2}),
                                    Tensor({3}), 2, 1);
  // floor((7 + 2 - 3) / 2) + 1 = 4, floor((5 + 2 - 2) / 2) + 1 = 3
  EXPECT_EQ(out.shape(), (Shape{3, 4, 3}));
}

TEST(Conv2d, ShapeErrors) {
  EXPECT_THROW(conv2d_forward(Tensor({2, 3, 3}), Tensor({1, 1, 3, 3}), Tensor({1}), 1, 0),
               ShapeMismatch);
  EXPECT_THROW(conv2d_forward(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1}), 1, 0),
               ShapeMismatch);
  EXPECT_THROW(conv2d_forward(Tensor({1, 3, 3}), Tensor({2, 1, 3, 3}), Tensor({1}), 1, 0),
               ShapeMismatch);
  EXPECT_THROW(conv2d_backward(Tensor({1, 3, 3}), Tensor({1, 1, 3, 3}), Tensor({1, 2, 2}), 1, 0),
               ShapeMismatch);
}

TEST(Conv2d, IdentityKernelBackwardPassesGradient) {
  Rng rng(5);
  const Tensor x = test::random_tensor({1, 3, 4}, rng);
  const Tensor g = test::random_tensor({1, 3, 4}, rng);
  const ConvGrads grads = conv2d_backward(x, Tensor({1, 1, 1, 1}, {1}), g, 1, 0);
  EXPECT_EQ(grads.input, g);
}

TEST(Conv2d, ZeroUpstreamGivesZeroGradients) {
  Rng rng(6);
  const Tensor x = test::random_tensor({2, 4, 4}, rng);
  const Tensor w = test::random_tensor({3, 2, 3, 3}, rng);
  const ConvGrads grads = conv2d_backward(x, w, Tensor({3, 4, 4}), 1, 1);
  EXPECT_EQ(max_abs(grads.input), 0.0f);
  EXPECT_EQ(max_abs(grads.weights), 0.0f);
  EXPECT_EQ(max_abs(grads.bias), 0.0f);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(11);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t C = 1 + rng.below(3), O = 1 + rng.below(3);
    const std::size_t kh = 1 + rng.below(3), kw = 1 + rng.below(3);
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
    const std::size_t H = std::max<std::size_t>(kh, 3 + rng.below(3));
    const std::size_t W = std::max<std::size_t>(kw, 3 + rng.below(3));
    const Tensor x = test::random_tensor({C, H, W}, rng);
    const Tensor w = test::random_tensor({O, C, kh, kw}, rng);
    const Tensor b = test::random_tensor({O}, rng);
    const Tensor y = conv2d_forward(x, w, b, stride, pad);
    const Tensor proj = test::random_tensor(y.shape(), rng);
    const ConvGrads grads = conv2d_backward(x, w, proj, stride, pad);

    auto fx = [&](const Tensor& v) { return project(conv2d_forward(v, w, b, stride, pad), proj); };
    auto fw = [&](const Tensor& v) { return project(conv2d_forward(x, v, b, stride, pad), proj); };
    auto fb = [&](const Tensor& v) { return project(conv2d_forward(x, w, v, stride, pad), proj); };
    // One gradient over all arguments: a lone bias gradient can cancel to
    // near zero, where float rounding in the forward pass dominates.
    EXPECT_LT(test::joint_relative_error({{grads.input, test::numeric_gradient(fx, x)},
                                          {grads.weights, test::numeric_gradient(fw, w)},
                                          {grads.bias, test::numeric_gradient(fb, b)}}),
              kTol)
        << "case " << c;
    EXPECT_EQ(conv2d_backward_input(x, w, proj, stride, pad), grads.input);
  }
}

TEST(Conv2d, LinearInInput) {
  Rng rng(12);
  for (int c = 0; c < 20; ++c) {
    const Tensor x = test::random_tensor({2, 5, 5}, rng);
    const Tensor y = test::random_tensor({2, 5, 5}, rng);
    const Tensor w = test::random_tensor({3, 2, 3, 3}, rng);
    const Tensor zero_bias({3});
    const float a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    const Tensor lhs = conv2d_forward(a * x + b * y, w, zero_bias, 1, 1);
    const Tensor rhs = a * conv2d_forward(x, w, zero_bias, 1, 1) +
                       b * conv2d_forward(y, w, zero_bias, 1, 1);
    EXPECT_LT(max_abs(lhs - rhs), 1e-5f);
  }
}

TEST(Relu, SignDefinition) {
  EXPECT_EQ(relu_forward(Tensor({3}, {-1, 0, 2})), Tensor({3}, {0, 0, 2}));
  EXPECT_EQ(relu_backward(Tensor({3}, {-1, 0, 2}), Tensor({3}, {5, 6, 7})),
            Tensor({3}, {0, 0, 7}));
}

TEST(Relu, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  for (int c = 0; c < kCases; ++c) {
    const Tensor x = test::away_from_zero({1 + rng.below(3), 2 + rng.below(4), 2 + rng.below(4)}, rng);
    const Tensor proj = test::random_tensor(x.shape(), rng);
    auto f = [&](const Tensor& v) { return project(relu_forward(v), proj); };
    EXPECT_LT(relative_error(relu_backward(x, proj), test::numeric_gradient(f, x)), kTol);
  }
}

TEST(MaxPool, EnumerateWindow) {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(maxpool_forward(x, 2, 2), Tensor({1, 1, 1}, {4}));
  EXPECT_EQ(maxpool_backward(x, Tensor({1, 1, 1}, {7}), 2, 2),
            Tensor({1, 2, 2}, {0, 0, 0, 7}));
}

TEST(MaxPool, TiesRouteToLowestIndex) {
  const Tensor x({1, 2, 2}, {3, 3, 3, 3});
  EXPECT_EQ(maxpool_backward(x, Tensor({1, 1, 1}, {1}), 2, 2),
            Tensor({1, 2, 2}, {1, 0, 0, 0}));
}

TEST(MaxPool, OverlappingWindowsAccumulate) {
  // The centre is the maximum of all four 2x2 windows.
  const Tensor y({1, 3, 3}, {0, 0, 0, 0, 9, 0, 0, 0, 0});
  const Tensor g = maxpool_backward(y, Tensor({1, 2, 2}, {1, 1, 1, 1}), 2, 1);
  EXPECT_EQ(g.at(0, 1, 1), 4.0f);
  EXPECT_EQ(sum(g), 4.0);
}

TEST(MaxPool, GradientMatchesFiniteDifferences) {
  Rng rng(31);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t k = 1 + rng.below(3), stride = 1 + rng.below(2);
    const Tensor x = test::distinct_values(
        {1 + rng.below(3), k + 1 + rng.below(4), k + 1 + rng.below(4)}, rng);
    const Tensor y = maxpool_forward(x, k, stride);
    const Tensor proj = test::random_tensor(y.shape(), rng);
    auto f = [&](const Tensor& v) { return project(maxpool_forward(v, k, stride), proj); };
    EXPECT_LT(relative_error(maxpool_backward(x, proj, k, stride), test::numeric_gradient(f, x)),
              kTol);
  }
}

TEST(AvgPool, MeanOfWindow) {
  EXPECT_EQ(avgpool_forward(Tensor({1, 2, 2}, {1, 2, 3, 4}), 2, 2),
            Tensor({1, 1, 1}, {2.5f}));
  EXPECT_EQ(avgpool_backward(Tensor({1, 2, 2}), Tensor({1, 1, 1}, {4}), 2, 2),
            Tensor({1, 2, 2}, 1.0f));
}

TEST(AvgPool, GradientMatchesFiniteDifferences) {
  Rng rng(41);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t k = 1 + rng.below(3), stride = 1 + rng.below(2);
    const Tensor x = test::random_tensor(
        {1 + rng.below(3), k + rng.below(4), k + rng.below(4)}, rng);
    const Tensor y = avgpool_forward(x, k, stride);
    const Tensor proj = test::random_tensor(y.shape(), rng);
    auto f = [&](const Tensor& v) { return project(avgpool_forward(v, k, stride), proj); };
    EXPECT_LT(relative_error(avgpool_backward(x, proj, k, stride), test::numeric_gradient(f, x)),
              kTol);
  }
}

TEST(Pooling, ChannelPermutationEquivariance) {
  Rng rng(45);
  for (int c = 0; c < 20; ++c) {
    const std::size_t C = 2 + rng.below(3);
    const Tensor x = test::random_tensor({C, 4, 4}, rng);
    std::vector<std::size_t> perm(C);
    for (std::size_t i = 0; i < C; ++i) perm[i] = i;
    rng.shuffle(perm);
    auto permute = [&](const Tensor& t) {
      Tensor out(t.shape());
      const std::size_t plane = t.size() / C;
      for (std::size_t ch = 0; ch < C; ++ch)
        for (std::size_t i = 0; i < plane; ++i) out[perm[ch] * plane + i] = t[ch * plane + i];
      return out;
    };
    EXPECT_EQ(relu_forward(permute(x)), permute(relu_forward(x)));
    EXPECT_EQ(maxpool_forward(permute(x), 2, 2), permute(maxpool_forward(x, 2, 2)));
    EXPECT_EQ(avgpool_forward(permute(x), 2, 2), permute(avgpool_forward(x, 2, 2)));
  }
}

TEST(Dense, AffineMap) {
  const Tensor y = dense_forward(Tensor({2}, {1, 2}), Tensor({2, 2}, {1, 0, 3, 4}),
                                 Tensor({2}, {0.5f, 0}));
  EXPECT_EQ(y, Tensor({2}, {1.5f, 11}));
  EXPECT_THROW(dense_forward(Tensor({3}), Tensor({2, 2}), Tensor({2})), ShapeMismatch);
}

TEST(Dense, GradientsMatchFiniteDifferences) {
  Rng rng(51);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t in = 1 + rng.below(8), out = 1 + rng.below(5);
    const Tensor x = test::random_tensor({in}, rng);
    const Tensor w = test::random_tensor({out, in}, rng);
    const Tensor b = test::random_tensor({out}, rng);
    const Tensor proj = test::random_tensor({out}, rng);
    const DenseGrads grads = dense_backward(x, w, proj);
    auto fx = [&](const Tensor& v) { return project(dense_forward(v, w, b), proj); };
    auto fw = [&](const Tensor& v) { return project(dense_forward(x, v, b), proj); };
    auto fb = [&](const Tensor& v) { return project(dense_forward(x, w, v), proj); };
    EXPECT_LT(relative_error(grads.input, test::numeric_gradient(fx, x)), kTol);
    EXPECT_LT(relative_error(grads.weights, test::numeric_gradient(fw, w)), kTol);
    EXPECT_LT(relative_error(grads.bias, test::numeric_gradient(fb, b)), kTol);
  }
}

TEST(Softmax, NormalizedAndShiftInvariant) {
  const Tensor y = softmax_forward(Tensor({3}, {1, 2, 3}));
  EXPECT_NEAR(sum(y), 1.0, 1e-6);
  const Tensor shifted = softmax_forward(Tensor({3}, {101, 102, 103}));
  EXPECT_LT(max_abs(y - shifted), 1e-6f);
  EXPECT_TRUE(all_finite(softmax_forward(Tensor({2}, {1e4f, -1e4f}))));
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(61);
  for (int c = 0; c < kCases; ++c) {
    const Tensor x = test::random_tensor({2 + rng.below(6)}, rng, -2, 2);
    const Tensor proj = test::random_tensor(x.shape(), rng);
    auto f = [&](const Tensor& v) { return project(softmax_forward(v), proj); };
    EXPECT_LT(relative_error(softmax_backward(softmax_forward(x), proj),
                             test::numeric_gradient(f, x)),
              kTol);
  }
}

TEST(Dropout, EvalModeIsIdentity) {
  Rng rng(71);
  const Tensor x = test::random_tensor({4, 3}, rng);
  EXPECT_EQ(dropout_forward(x, 0.5f, 99, Mode::kEval), x);
  EXPECT_EQ(dropout_backward(x, 0.5f, 99, Mode::kEval), x);
}

TEST(Dropout, TrainModeMaskIsSeededAndScaled) {
  const Tensor x({1000}, 1.0f);
  const Tensor a = dropout_forward(x, 0.5f, 7, Mode::kTrain);
  EXPECT_EQ(a, dropout_forward(x, 0.5f, 7, Mode::kTrain));
  EXPECT_NE(a, dropout_forward(x, 0.5f, 8, Mode::kTrain));
  std::size_t kept = 0;
  for (float v : a.data()) {
    ASSERT_TRUE(v == 0.0f || v == 2.0f);
    kept += v != 0.0f;
  }
  EXPECT_GT(kept, 430u);
  EXPECT_LT(kept, 570u);
  EXPECT_EQ(dropout_forward(x, 0.0f, 7, Mode::kTrain), x);
}

TEST(Dropout, GradientMatchesFiniteDifferences) {
  Rng rng(72);
  for (int c = 0; c < kCases; ++c) {
    const Tensor x = test::random_tensor({3 + rng.below(10)}, rng);
    const float rate = rng.uniform(0.0f, 0.9f);
    const std::uint64_t seed = rng.next();
    const Tensor proj = test::random_tensor(x.shape(), rng);
    auto f = [&](const Tensor& v) { return project(dropout_forward(v, rate, seed, Mode::kTrain), proj); };
    EXPECT_LT(relative_error(dropout_backward(proj, rate, seed, Mode::kTrain),
                             test::numeric_gradient(f, x)),
              kTol);
  }
}

TEST(LayerKind, Validation) {
  EXPECT_THROW(validate_layer(Conv{0}), ConfigError);
  EXPECT_THROW(validate_layer(Conv{4, 0, 3}), ConfigError);
  EXPECT_THROW(validate_layer(Conv{4, 3, 3, 0}), ConfigError);
  EXPECT_THROW(validate_layer(MaxPool{0, 1}), ConfigError);
  EXPECT_THROW(validate_layer(Dropout{1.0f}), ConfigError);
  EXPECT_THROW(validate_layer(Dropout{-0.1f}), ConfigError);
  EXPECT_NO_THROW(validate_layer(Conv{4, 3, 3, 1, 0}));
  EXPECT_NO_THROW(validate_layer(Dropout{0.0f}));
}
