#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "sigmasr/distributions.hpp"
#include "sigmasr/tensor.hpp"

namespace sigmasr {

enum class LossVariant { l1, l2, trainable_sigma, constant_sigma, data_adaptive };
enum class Reduction { mean, sum };

std::string_view to_string(LossVariant v);
std::string_view to_string(Reduction r);
LossVariant parse_loss_variant(std::string_view s);
Reduction parse_reduction(std::string_view s);

struct LossSpec {
  LossVariant variant = LossVariant::data_adaptive;
  double kT = 1.0;
  double beta = 0.01;
  double k_noise = 0.0;
  int n_samples = 1;
  Reduction reduction = Reduction::mean;
  bool threshold_aux = true;

  void validate() const;
};

Tensor reduce(const Tensor& t, Reduction r);

Tensor l1_loss(const Tensor& mu, const Tensor& target, Reduction reduction = Reduction::mean);
Tensor l2_loss(const Tensor& mu, const Tensor& target, Reduction reduction = Reduction::mean);

// The stochastic losses below take `z` either with mu's shape (one draw) or
// with shape {n_samples} ++ mu.shape; the loss is averaged over draws.

/// (1/kT) * reduce(|target - (mu + sigma * z)|). Gradients reach mu and sigma.
/// Throws if any sigma is negative.
Tensor expected_l1_trainable_sigma(const Tensor& mu, const Tensor& sigma, const Tensor& target,
                                   const Tensor& z, const LossSpec& spec);

struct Noise2NoiseLoss {
  Tensor loss;
  bool fell_back_to_l1 = false;  // k_noise == 0
};

/// reduce(|(target + k_noise * z) - mu|). The noise is a constant, so only mu
/// receives a gradient.
Noise2NoiseLoss noise2noise_loss(const Tensor& mu, const Tensor& target, const Tensor& z, double k_noise,
                                 const LossSpec& spec);

/// reduce(|target - (mu + |target - mu| * z)|), differentiating through both
/// occurrences of mu.
Tensor data_adaptive_loss(const Tensor& mu, const Tensor& target, const Tensor& z, const LossSpec& spec);

/// Regression target for the sigma branch: |target - mu|, with entries
/// strictly below their image's mean residual zeroed when `threshold` is set.
/// An "image" is one index of the leading axis of a rank-4 tensor; lower-rank
/// tensors count as a single image.
Tensor aux_sigma_targets(const Tensor& mu_detached, const Tensor& target, bool threshold);

/// beta * reduce(|aux_sigma_targets - sigma|). Throws if mu_detached is on the tape.
Tensor aux_sigma_loss(const Tensor& sigma, const Tensor& mu_detached, const Tensor& target, const LossSpec& spec);

/// data_adaptive_loss(mu) + aux_sigma_loss(sigma, detach(mu)). With beta == 0
/// the aux term is skipped and sigma may be undefined.
Tensor combined_objective(const Tensor& mu, const Tensor& sigma, const Tensor& target, const Tensor& z,
                          const LossSpec& spec);

struct JensenEstimate {
  double expected = 0.0;   // Monte-Carlo mean of (1/kT) mean_i |target_i - (mu_i + sigma_i z_i)|
  double l1 = 0.0;         // (1/kT) mean_i |target_i - mu_i|
  double gap_stderr = 0.0; // standard error of (expected - l1)
};

/// Monte-Carlo check of E_z[l(mu + sigma z)] >= l(mu). Works on values only.
JensenEstimate jensen_gap(const Tensor& mu, const Tensor& sigma, const Tensor& target, int n_mc, Rng& rng,
                          double kT = 1.0);

}  // namespace sigmasr
