#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sigmasr/distributions.hpp"
#include "sigmasr/tensor.hpp"

namespace sigmasr::testing {

// Central finite differences of a scalar function of several leaf tensors.
// Each leaf's values are perturbed in place and restored.
inline std::vector<std::vector<double>> numeric_grads(const std::function<Tensor()>& loss,
                                                      std::vector<Tensor> leaves, double h = 1e-5) {
  std::vector<std::vector<double>> out;
  for (auto& leaf : leaves) {
    std::vector<double> g(leaf.numel());
    auto v = leaf.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      v[i] = orig + h;
      const double up = loss().item();
      v[i] = orig - h;
      const double down = loss().item();
      v[i] = orig;
      g[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<std::vector<double>> autodiff_grads(const std::function<Tensor()>& loss,
                                                       std::vector<Tensor> leaves) {
  for (auto& l : leaves) l.zero_grad();
  backward(loss());
  std::vector<std::vector<double>> out;
  for (const auto& l : leaves) out.push_back(l.grad());
  return out;
}

// Largest elementwise |a - n| / max(|a|, |n|, floor).
inline double max_rel_error(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& n,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size(); ++i) {
      const double den = std::max({std::abs(a[t][i]), std::abs(n[t][i]), floor});
      worst = std::max(worst, std::abs(a[t][i] - n[t][i]) / den);
    }
  return worst;
}

// Largest per-tensor ||a - n|| / max(||a||, ||n||): robust to the odd element
// whose finite difference straddles a ReLU kink.
inline double max_tensor_rel_error(const std::vector<std::vector<double>>& a,
                                   const std::vector<std::vector<double>>& n) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < a[t].size(); ++i) {
      diff += (a[t][i] - n[t][i]) * (a[t][i] - n[t][i]);
      na += a[t][i] * a[t][i];
      nn += n[t][i] * n[t][i];
    }
    const double den = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    worst = std::max(worst, std::sqrt(diff) / den);
  }
  return worst;
}

// Values uniform on [lo, hi) kept at least `gap` away from zero, so that
// kinks at zero (abs, relu, prelu) are never straddled by a finite difference.
inline Tensor random_leaf(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0, double gap = 1e-3) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    do {
      x = lo + (hi - lo) * rng.uniform();
    } while (std::abs(x) < gap);
  }
  return Tensor::from(shape, std::move(v), true);
}

// sum(f * w) for fixed random weights w: a scalar that exercises every output.
inline Tensor project(const Tensor& f, const Tensor& w) { return sum(mul(f, w)); }

}  // namespace sigmasr::testing
