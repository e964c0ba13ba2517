#include "sigmasr/distributions.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sigmasr {

double Rng::uniform_open(double lo, double hi) {
  double u = 0.0;
  do {
    u = uniform();
  } while (u == 0.0);
  const double v = lo + (hi - lo) * u;
  return v >= hi ? std::nextafter(hi, lo) : v;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = 0;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0, v = 0.0, s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

Tensor sample_standard_normal(Rng& rng, const Shape& shape) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.normal();
  return Tensor::from(shape, std::move(values));
}

Tensor sample_uniform(Rng& rng, const Shape& shape, double lo, double hi) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.uniform_open(lo, hi);
  return Tensor::from(shape, std::move(values));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double gaussian_logpdf(double x, double mu, double sigma) {
  const double s = std::max(sigma, kSigmaFloor);
  const double d = x - mu;
  return -0.5 * std::log(2.0 * std::numbers::pi * s * s) - d * d / (2.0 * s * s);
}

Tensor laplace_reparam(const Tensor& mu, const Tensor& sigma, const Tensor& u) {
  if (mu.shape() != sigma.shape() || mu.shape() != u.shape()) {
    throw std::invalid_argument("laplace_reparam: mu, sigma and u must share a shape");
  }
  std::vector<double> offsets(u.numel());
  const auto uv = u.values();
  for (std::size_t i = 0; i < uv.size(); ++i) {
    const double a = std::abs(uv[i]);
    if (a >= 0.5) throw std::domain_error("laplace_reparam: |u| must be < 1/2");
    const double sgn = uv[i] > 0.0 ? 1.0 : (uv[i] < 0.0 ? -1.0 : 0.0);
    offsets[i] = sgn * std::log1p(-2.0 * a);
  }
  return mu - sigma * Tensor::from(u.shape(), std::move(offsets));
}

double laplace_cdf(double x, double mu, double b) {
  const double t = (x - mu) / b;
  return t < 0.0 ? 0.5 * std::exp(t) : 1.0 - 0.5 * std::exp(-t);
}

double normal_abs_moment(double a, double b) {
  if (b < 0.0) throw std::invalid_argument("normal_abs_moment: b must be non-negative");
  if (b == 0.0) return std::abs(a);
  const double t = a / b;
  return b * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * t * t) + a * (1.0 - 2.0 * normal_cdf(-t));
}

}  // namespace sigmasr
