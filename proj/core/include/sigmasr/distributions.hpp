#pragma once

#include <cstdint>
#include <random>

#include "sigmasr/tensor.hpp"

namespace sigmasr {

/// Deterministic random stream: std::mt19937_64 (bit-exact by the standard)
/// with hand-written distributions, since the std distributions are
/// implementation-defined and would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  /// Independent stream for a worker or purpose: seeded with seed + index.
  static Rng stream(std::uint64_t seed, std::uint64_t index) { return Rng(seed + index); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next_u64() {
    ++draws_;
    return engine_();
  }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  /// Uniform on the open interval (lo, hi).
  double uniform_open(double lo, double hi);
  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal via the Marsaglia polar method.
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// i.i.d. N(0, 1) samples, off the tape.
Tensor sample_standard_normal(Rng& rng, const Shape& shape);
/// i.i.d. uniform samples on (lo, hi), off the tape.
Tensor sample_uniform(Rng& rng, const Shape& shape, double lo, double hi);

inline constexpr double kSigmaFloor = 1e-6;

/// Standard normal CDF through erfc.
double normal_cdf(double x);
double normal_pdf(double x);

/// log N(x; mu, sigma^2). sigma is clamped to kSigmaFloor from below.
double gaussian_logpdf(double x, double mu, double sigma);

/// Laplace(mu, sigma) sample built on the tape: mu - sigma * sgn(u) * ln(1 - 2|u|)
/// with u uniform on (-1/2, 1/2). Throws when any |u| >= 1/2.
Tensor laplace_reparam(const Tensor& mu, const Tensor& sigma, const Tensor& u);
double laplace_cdf(double x, double mu, double b);

/// E|a + bZ| for Z ~ N(0, 1):
/// b * sqrt(2/pi) * exp(-a^2 / (2 b^2)) + a * (1 - 2 Phi(-a / b)); |a| when b == 0.
double normal_abs_moment(double a, double b);

/// E|1 - Z|, the exact expected gradient magnitude of the data-adaptive loss.
inline double expected_abs_one_minus_normal() { return normal_abs_moment(1.0, 1.0); }

}  // namespace sigmasr
