#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <variant>
#include <string>
#include <vector>

#include "styleaug/layers.hpp"
#include "styleaug/network.hpp"
#include "styleaug/rng.hpp"
#include "styleaug/tensor.hpp"

namespace styleaug::test {

inline Tensor random_tensor(Shape shape, Rng& rng, float lo = -1.0f,
                            float hi = 1.0f) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Values bounded away from zero (|v| >= margin), for ReLU kinks.
inline Tensor away_from_zero(Shape shape, Rng& rng, float margin = 0.05f) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) {
    const float mag = rng.uniform(margin, 1.0f);
    v = rng.uniform() < 0.5f ? -mag : mag;
  }
  return t;
}

/// Distinct values spaced `gap` apart in random order, for max-pool ties.
inline Tensor distinct_values(Shape shape, Rng& rng, float gap = 0.02f) {
  Tensor t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const float offset = -0.5f * gap * static_cast<float>(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    t[order[i]] = offset + gap * static_cast<float>(i);
  }
  return t;
}

/// ||a - n|| / max(||a||, ||n||), 0 when both vanish.
inline double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    diff += (a - n) * (a - n);
    na += a * a;
    nn += n * n;
  }
  const double scale = std::sqrt(std::max(na, nn));
  return scale < 1e-12 ? 0.0 : std::sqrt(diff) / scale;
}

/// Central differences of the scalar `f` around `x` with step `eps`. The
/// divisor is the step actually taken after rounding x +- eps to float.
inline Tensor numeric_gradient(const std::function<double(const Tensor&)>& f,
                               const Tensor& x, float eps = 1e-3f) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float orig = probe[i];
    const float hi = orig + eps;
    const float lo = orig - eps;
    probe[i] = hi;
    const double up = f(probe);
    probe[i] = lo;
    const double down = f(probe);
    probe[i] = orig;
    g[i] = static_cast<float>((up - down) /
                              (static_cast<double>(hi) - static_cast<double>(lo)));
  }
  return g;
}

/// ||a - n|| / max(||a||, ||n||) over several gradient tensors taken as one
/// vector, e.g. the gradient of a layer with respect to all its arguments.
inline double joint_relative_error(
    const std::vector<std::pair<Tensor, Tensor>>& analytic_numeric) {
  std::vector<float> a, n;
  for (const auto& [x, y] : analytic_numeric) {
    a.insert(a.end(), x.data().begin(), x.data().end());
    n.insert(n.end(), y.data().begin(), y.data().end());
  }
  const Shape shape{a.size()};
  return relative_error(Tensor(shape, a), Tensor(shape, n));
}

/// Which ReLU inputs are positive and which max-pool inputs win their window
/// during a forward pass. Two inputs with the same pattern lie on the same
/// smooth piece of the network.
inline std::vector<std::uint8_t> activation_pattern(
    const Network& net, const Tensor& image, Mode mode = Mode::kEval,
    std::uint64_t dropout_seed = 0,
    std::optional<std::size_t> stop_after = std::nullopt) {
  const Tape tape = net.forward(image, mode, dropout_seed, stop_after);
  std::vector<std::uint8_t> pattern;
  for (std::size_t i = 0; i + 1 < tape.values.size(); ++i) {
    const Tensor& in = tape.values[i];
    const LayerKind& kind = net.spec().layers[i].kind;
    if (std::holds_alternative<ReLU>(kind)) {
      for (float v : in.data()) pattern.push_back(v > 0.0f);
    } else if (const auto* p = std::get_if<MaxPool>(&kind)) {
      const Tensor routed = maxpool_backward(
          in, Tensor(tape.values[i + 1].shape(), 1.0f), p->k, p->stride);
      for (float v : routed.data()) pattern.push_back(v != 0.0f);
    }
  }
  return pattern;
}

/// True when no central-difference probe x +- eps e_i changes `pattern`, so
/// the function is differentiable on the whole stencil and finite
/// differences are a valid oracle there.
inline bool smooth_on_stencil(
    const std::function<std::vector<std::uint8_t>(const Tensor&)>& pattern,
    const Tensor& x, float eps = 1e-3f) {
  const auto base = pattern(x);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float orig = probe[i];
    for (float step : {eps, -eps}) {
      probe[i] = orig + step;
      if (pattern(probe) != base) return false;
    }
    probe[i] = orig;
  }
  return true;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("styleaug_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace styleaug::test
