#include <gtest/gtest.h>

#include "styleaug/errors.hpp"
#include "styleaug/losses.hpp"
#include "support.hpp"

using namespace styleaug;
using test::relative_error;

namespace {

constexpr int kCases = 50;

// Independent double-precision oracle for Eq. 3.
double style_energy_oracle(const Tensor& f, const Tensor& a) {
  const std::size_t n = f.dim(0), m = f.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double g = 0.0;
      for (std::size_t k = 0; k < m; ++k) g += double(f.at(i, k)) * f.at(j, k);
      const double d = g - a.at(i, j);
      total += d * d;
    }
  }
  return total / (4.0 * n * n * m * m);
}

Tensor symmetric_target(std::size_t n, Rng& rng) {
  const Tensor r = test::random_tensor({n, n + 2}, rng);
  return gram(r);
}

Network desk_network(std::uint64_t seed) {
  const NetworkSpec spec = NetworkSpec::desk_default();
  return Network::bind(spec, Network::random_weights(spec, seed));
}

struct Problem {
  Network net;
  ContentTarget content;
  StyleTarget style;
};

Problem make_problem(std::uint64_t seed, std::size_t size, Rng& rng) {
  Problem p{desk_network(seed), {}, {}};
  const Tensor content_img = test::random_tensor({3, size, size}, rng, 0, 1);
  const Tensor style_img = test::random_tensor({3, size, size}, rng, 0, 1);
  p.content = {"c4", p.net.forward_record(content_img, {"c4"}).at("c4")};
  for (const auto& [tag, f] : p.net.forward_record(style_img, {"c1", "c3"})) {
    p.style.layers[tag] = {gram(f), f.dim(0), f.dim(1)};
  }
  return p;
}

}  // namespace

TEST(Gram, Examples) {
  EXPECT_EQ(gram(Tensor({2, 2}, {1, 0, 0, 1})), Tensor({2, 2}, {1, 0, 0, 1}));
  EXPECT_EQ(gram(Tensor({1, 2}, {1, 1})), Tensor({1, 1}, {2}));
  EXPECT_THROW(gram(Tensor({4})), ShapeMismatch);
}

TEST(Gram, SymmetricPsdAndPermutationInvariant) {
  Rng rng(1);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = 1 + rng.below(6), m = 1 + rng.below(20);
    const Tensor f = test::random_tensor({n, m}, rng);
    const Tensor g = gram(f);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) ASSERT_NEAR(g.at(i, j), g.at(j, i), 1e-5);
    // PSD: v^T G v = |F^T v|^2 >= 0 for random probes.
    for (int probe = 0; probe < 5; ++probe) {
      const Tensor v = test::random_tensor({n}, rng);
      double q = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) q += double(v[i]) * g.at(i, j) * v[j];
      ASSERT_GE(q, -1e-4);
    }
    std::vector<std::size_t> perm(m);
    for (std::size_t k = 0; k < m; ++k) perm[k] = k;
    rng.shuffle(perm);
    Tensor fp(f.shape());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < m; ++k) fp.at(i, k) = f.at(i, perm[k]);
    EXPECT_LT(max_abs(gram(fp) - g), 1e-5f);
  }
}

TEST(ContentLoss, Examples) {
  const Tensor f({2, 3}, 0.7f);
  LossGrad same = content_loss(f, f);
  EXPECT_EQ(same.value, 0.0);
  EXPECT_EQ(max_abs(same.grad), 0.0f);
  const LossGrad r = content_loss(Tensor({1, 1}, {2}), Tensor({1, 1}, {0}));
  EXPECT_DOUBLE_EQ(r.value, 2.0);
  EXPECT_EQ(r.grad, Tensor({1, 1}, {2}));
  EXPECT_THROW(content_loss(Tensor({1, 2}), Tensor({2, 1})), ShapeMismatch);
}

TEST(ContentLoss, SymmetricNonNegativeAndGradientChecked) {
  Rng rng(2);
  for (int c = 0; c < kCases; ++c) {
    const Shape shape{1 + rng.below(4), 1 + rng.below(10)};
    const Tensor f = test::random_tensor(shape, rng);
    const Tensor p = test::random_tensor(shape, rng);
    const LossGrad a = content_loss(f, p);
    EXPECT_GT(a.value, 0.0);
    EXPECT_DOUBLE_EQ(a.value, content_loss(p, f).value);
    auto fn = [&](const Tensor& x) { return content_loss(x, p).value; };
    EXPECT_LT(relative_error(a.grad, test::numeric_gradient(fn, f)), 1e-3);
  }
}

TEST(StyleEnergy, HandValue) {
  const LossGrad r = style_energy(Tensor({1, 2}, {1, 1}), Tensor({1, 1}, {0}));
  EXPECT_FLOAT_EQ(static_cast<float>(r.value), 0.25f);
  // (G - A) F / (N^2 M^2) = 2 * [1, 1] / 4
  EXPECT_EQ(r.grad, Tensor({1, 2}, {0.5f, 0.5f}));
}

TEST(StyleEnergy, MatchedStatisticsVanish) {
  Rng rng(3);
  const Tensor f = test::random_tensor({3, 7}, rng);
  const LossGrad r = style_energy(f, gram(f));
  EXPECT_NEAR(r.value, 0.0, 1e-12);
  EXPECT_LT(max_abs(r.grad), 1e-6f);
  EXPECT_THROW(style_energy(f, Tensor({2, 2})), ShapeMismatch);
}

TEST(StyleEnergy, MatchesOracleAndFiniteDifferences) {
  Rng rng(4);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t n = 1 + rng.below(4), m = 1 + rng.below(8);
    const Tensor f = test::random_tensor({n, m}, rng);
    const Tensor a = symmetric_target(n, rng);
    const LossGrad r = style_energy(f, a);
    EXPECT_NEAR(r.value, style_energy_oracle(f, a), 1e-6 * (1.0 + r.value));
    auto fn = [&](const Tensor& x) { return style_energy(x, a).value; };
    EXPECT_LT(relative_error(r.grad, test::numeric_gradient(fn, f)), 1e-4) << "case " << c;
  }
}

TEST(StyleEnergy, PermutationInvariant) {
  Rng rng(5);
  for (int c = 0; c < 20; ++c) {
    const Tensor f = test::random_tensor({3, 9}, rng);
    const Tensor a = symmetric_target(3, rng);
    std::vector<std::size_t> perm(9);
    for (std::size_t k = 0; k < 9; ++k) perm[k] = k;
    rng.shuffle(perm);
    Tensor fp(f.shape());
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 9; ++k) fp.at(i, k) = f.at(i, perm[k]);
    EXPECT_NEAR(style_energy(fp, a).value, style_energy(f, a).value, 1e-6);
  }
}

TEST(StyleLoss, SingleTagEqualsEnergy) {
  Rng rng(6);
  const Tensor f = test::random_tensor({2, 5}, rng);
  const Tensor a = symmetric_target(2, rng);
  StyleTarget t;
  t.layers["x"] = {a, 2, 5};
  const StyleLossResult r = style_loss({{"x", f}}, t, {{"x", 1.0}});
  const LossGrad e = style_energy(f, a);
  EXPECT_DOUBLE_EQ(r.value, e.value);
  EXPECT_EQ(r.grads.at("x"), e.grad);
}

TEST(StyleLoss, LinearInLayerWeightsAndCompositional) {
  Rng rng(7);
  for (int c = 0; c < kCases; ++c) {
    const Tensor f1 = test::random_tensor({2, 6}, rng), f2 = test::random_tensor({3, 4}, rng);
    StyleTarget t;
    t.layers["p"] = {symmetric_target(2, rng), 2, 6};
    t.layers["q"] = {symmetric_target(3, rng), 3, 4};
    const ActivationSet acts{{"p", f1}, {"q", f2}};
    const double w = rng.uniform(0.1f, 0.4f);
    const StyleLossResult r = style_loss(acts, t, {{"p", w}, {"q", 1 - w}});
    const double hand = w * style_energy(f1, t.layers["p"].gram).value +
                        (1 - w) * style_energy(f2, t.layers["q"].gram).value;
    EXPECT_NEAR(r.value, hand, 1e-9 * (1 + hand));
    const StyleLossResult doubled = style_loss(acts, t, {{"p", 2 * w}, {"q", 1 - w}});
    EXPECT_LT(max_abs(doubled.grads.at("p") - 2.0f * r.grads.at("p")), 1e-6f);
    EXPECT_EQ(doubled.grads.at("q"), r.grads.at("q"));

    auto fn = [&](const Tensor& x) {
      return style_loss({{"p", x}, {"q", f2}}, t, {{"p", w}, {"q", 1 - w}}).value;
    };
    EXPECT_LT(relative_error(r.grads.at("p"), test::numeric_gradient(fn, f1)), 1e-3);
  }
}

TEST(StyleLoss, MissingActivationIsUnknownTag) {
  StyleTarget t;
  t.layers["x"] = {Tensor({1, 1}), 1, 1};
  EXPECT_THROW(style_loss({}, t, {{"x", 1.0}}), UnknownTag);
}

TEST(TvLoss, Examples) {
  const LossGrad flat = tv_loss(Tensor({3, 4, 4}, 0.3f));
  EXPECT_EQ(flat.value, 0.0);
  EXPECT_EQ(max_abs(flat.grad), 0.0f);
  const LossGrad pair = tv_loss(Tensor({1, 1, 2}, {0, 1}));
  EXPECT_DOUBLE_EQ(pair.value, 1.0);
  EXPECT_EQ(pair.grad, Tensor({1, 1, 2}, {-2, 2}));
  EXPECT_THROW(tv_loss(Tensor({1, 1, 1})), ShapeMismatch);
  EXPECT_THROW(tv_loss(Tensor({4, 4})), ShapeMismatch);
}

TEST(TvLoss, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  for (int c = 0; c < kCases; ++c) {
    const Tensor x = test::random_tensor({1 + rng.below(3), 2 + rng.below(5), 2 + rng.below(5)}, rng, 0, 1);
    auto fn = [&](const Tensor& v) { return tv_loss(v).value; };
    EXPECT_LT(relative_error(tv_loss(x).grad, test::numeric_gradient(fn, x)), 1e-4);
  }
}

TEST(LossWeights, Validation) {
  LossWeights w;
  w.layer_weights = {{"a", 0.5}, {"b", 0.5}};
  EXPECT_NO_THROW(w.validate());
  w.layer_weights = {{"a", 0.5}, {"b", 0.6}};
  EXPECT_THROW(w.validate(), ConfigError);
  w.layer_weights = {{"a", 1.5}, {"b", -0.5}};
  EXPECT_THROW(w.validate(), ConfigError);
  w.layer_weights = {};
  w.content_weight = -1;
  EXPECT_THROW(w.validate(), ConfigError);
  const auto u = LossWeights::uniform({"a", "b", "c", "d"});
  EXPECT_EQ(u.at("c"), 0.25);
}

TEST(TotalLoss, AllWeightsZero) {
  Rng rng(9);
  const Problem p = make_problem(1, 8, rng);
  LossWeights w;
  w.content_weight = w.style_weight = w.tv_weight = 0.0;
  w.layer_weights = LossWeights::uniform({"c1", "c3"});
  const TotalLoss r = total_loss(test::random_tensor({3, 8, 8}, rng, 0, 1), p.net,
                                 p.content, p.style, w);
  EXPECT_EQ(r.total, 0.0);
  EXPECT_EQ(max_abs(r.grad), 0.0f);
}

TEST(TotalLoss, MatchedTargetsLeaveOnlyTv) {
  Rng rng(10);
  const Network net = desk_network(2);
  const Tensor image = test::random_tensor({3, 8, 8}, rng, 0, 1);
  ContentTarget content{"c4", net.forward_record(image, {"c4"}).at("c4")};
  StyleTarget style;
  for (const auto& [tag, f] : net.forward_record(image, {"c1", "c3"}))
    style.layers[tag] = {gram(f), f.dim(0), f.dim(1)};
  LossWeights w;
  w.layer_weights = LossWeights::uniform({"c1", "c3"});
  const TotalLoss r = total_loss(image, net, content, style, w);
  EXPECT_EQ(r.content, 0.0);
  EXPECT_NEAR(r.style, 0.0, 1e-12);
  EXPECT_NEAR(r.total, w.tv_weight * tv_loss(image).value, 1e-12);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  // Instances whose stencil crosses a ReLU or max-pool boundary are redrawn.
  int accepted = 0;
  for (int c = 0; accepted < kCases; ++c) {
    ASSERT_LT(c, 2000) << "too few smooth instances";
    const Problem p = make_problem(300 + c, 8, rng);
    LossWeights w;
    w.content_weight = rng.uniform(0.0f, 0.01f);
    w.style_weight = rng.uniform(0.5f, 2.0f);
    w.tv_weight = rng.uniform(0.0f, 1e-3f);
    const double w1 = rng.uniform(0.2f, 0.8f);
    w.layer_weights = {{"c1", w1}, {"c3", 1 - w1}};
    const Tensor image = test::random_tensor({3, 8, 8}, rng, 0, 1);
    if (!test::smooth_on_stencil(
            [&](const Tensor& x) { return test::activation_pattern(p.net, x); }, image)) {
      continue;
    }
    ++accepted;
    const TotalLoss r = total_loss(image, p.net, p.content, p.style, w);
    auto fn = [&](const Tensor& x) { return total_loss(x, p.net, p.content, p.style, w).total; };
    EXPECT_LT(relative_error(r.grad, test::numeric_gradient(fn, image)), 1e-3) << "case " << c;
  }
}

TEST(TotalLoss, ScalesLinearlyWithAllWeights) {
  Rng rng(12);
  const Problem p = make_problem(5, 8, rng);
  LossWeights w;
  w.layer_weights = LossWeights::uniform({"c1", "c3"});
  const Tensor image = test::random_tensor({3, 8, 8}, rng, 0, 1);
  const TotalLoss base = total_loss(image, p.net, p.content, p.style, w);
  LossWeights scaled = w;
  scaled.content_weight *= 4;
  scaled.style_weight *= 4;
  scaled.tv_weight *= 4;
  const TotalLoss r = total_loss(image, p.net, p.content, p.style, scaled);
  EXPECT_NEAR(r.total, 4 * base.total, 1e-12 * (1 + r.total));
  EXPECT_LT(max_abs(r.grad - 4.0f * base.grad), 1e-6f * (1 + max_abs(r.grad)));
}
