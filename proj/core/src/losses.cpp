#include "sigmasr/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sigmasr {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

// Splits z into per-draw constant tensors shaped like `like`.
std::vector<Tensor> split_draws(const Tensor& z, const Tensor& like, const char* op) {
  if (z.shape() == like.shape()) return {z.detach()};
  const auto& zs = z.shape();
  const Shape inner(zs.begin() + (zs.empty() ? 0 : 1), zs.end());
  if (zs.empty() || inner != like.shape()) {
    throw std::invalid_argument(std::string(op) + ": z must have shape " + shape_to_string(like.shape()) +
                                " or {n_samples} ++ that shape, got " + shape_to_string(zs));
  }
  const std::size_t n = like.numel();
  const auto zv = z.values();
  std::vector<Tensor> draws;
  draws.reserve(zs[0]);
  for (std::size_t s = 0; s < zs[0]; ++s) {
    draws.push_back(Tensor::from(inner, std::vector<double>(zv.begin() + static_cast<long>(s * n),
                                                            zv.begin() + static_cast<long>((s + 1) * n))));
  }
  return draws;
}

template <class PerDraw>
Tensor average_over_draws(const std::vector<Tensor>& draws, PerDraw per_draw) {
  Tensor total = per_draw(draws.front());
  if (draws.size() == 1) return total;
  for (std::size_t s = 1; s < draws.size(); ++s) total = total + per_draw(draws[s]);
  return total * (1.0 / static_cast<double>(draws.size()));
}

}  // namespace

std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::l1: return "l1";
    case LossVariant::l2: return "l2";
    case LossVariant::trainable_sigma: return "trainable_sigma";
    case LossVariant::constant_sigma: return "constant_sigma";
    case LossVariant::data_adaptive: return "data_adaptive";
  }
  return "?";
}

std::string_view to_string(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

LossVariant parse_loss_variant(std::string_view s) {
  for (auto v : {LossVariant::l1, LossVariant::l2, LossVariant::trainable_sigma, LossVariant::constant_sigma,
                 LossVariant::data_adaptive}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown loss variant '" + std::string(s) + "'");
}

Reduction parse_reduction(std::string_view s) {
  if (s == "mean") return Reduction::mean;
  if (s == "sum") return Reduction::sum;
  throw std::invalid_argument("unknown reduction '" + std::string(s) + "'");
}

void LossSpec::validate() const {
  if (!(kT > 0.0)) throw std::invalid_argument("loss: kT must be positive");
  if (n_samples < 1) throw std::invalid_argument("loss: n_samples must be >= 1");
  if (!(beta >= 0.0)) throw std::invalid_argument("loss: beta must be non-negative");
  if (!(k_noise >= 0.0)) throw std::invalid_argument("loss: k_noise must be non-negative");
}

Tensor reduce(const Tensor& t, Reduction r) { return r == Reduction::mean ? mean(t) : sum(t); }

Tensor l1_loss(const Tensor& mu, const Tensor& target, Reduction reduction) {
  require_same_shape(mu, target, "l1_loss");
  return reduce(abs(target - mu), reduction);
}

Tensor l2_loss(const Tensor& mu, const Tensor& target, Reduction reduction) {
  require_same_shape(mu, target, "l2_loss");
  const Tensor d = target - mu;
  return reduce(d * d, reduction);
}

Tensor expected_l1_trainable_sigma(const Tensor& mu, const Tensor& sigma, const Tensor& target, const Tensor& z,
                                   const LossSpec& spec) {
  require_same_shape(mu, target, "expected_l1_trainable_sigma");
  require_same_shape(mu, sigma, "expected_l1_trainable_sigma");
  for (double s : sigma.values()) {
    if (s < 0.0) throw std::invalid_argument("expected_l1_trainable_sigma: sigma must be non-negative");
  }
  const double inv_kt = 1.0 / spec.kT;
  return average_over_draws(split_draws(z, mu, "expected_l1_trainable_sigma"), [&](const Tensor& zs) {
    return reduce(abs(target - (mu + sigma * zs)), spec.reduction) * inv_kt;
  });
}

Noise2NoiseLoss noise2noise_loss(const Tensor& mu, const Tensor& target, const Tensor& z, double k_noise,
                                 const LossSpec& spec) {
  require_same_shape(mu, target, "noise2noise_loss");
  if (k_noise < 0.0) throw std::invalid_argument("noise2noise_loss: k_noise must be non-negative");
  if (k_noise == 0.0) return {l1_loss(mu, target, spec.reduction), true};
  auto loss = average_over_draws(split_draws(z, mu, "noise2noise_loss"), [&](const Tensor& zs) {
    const Tensor noisy_target = (target + zs * k_noise).detach();
    return reduce(abs(noisy_target - mu), spec.reduction);
  });
  return {loss, false};
}

Tensor data_adaptive_loss(const Tensor& mu, const Tensor& target, const Tensor& z, const LossSpec& spec) {
  require_same_shape(mu, target, "data_adaptive_loss");
  return average_over_draws(split_draws(z, mu, "data_adaptive_loss"), [&](const Tensor& zs) {
    const Tensor adaptive_sigma = abs(target - mu);
    return reduce(abs(target - (mu + adaptive_sigma * zs)), spec.reduction);
  });
}

Tensor aux_sigma_targets(const Tensor& mu_detached, const Tensor& target, bool threshold) {
  require_same_shape(mu_detached, target, "aux_sigma_targets");
  const auto mv = mu_detached.values();
  const auto tv = target.values();
  std::vector<double> resid(mv.size());
  for (std::size_t i = 0; i < mv.size(); ++i) resid[i] = std::abs(tv[i] - mv[i]);
  if (threshold && !resid.empty()) {
    const auto& s = target.shape();
    const std::size_t images = s.size() == 4 ? s[0] : 1;
    const std::size_t per_image = resid.size() / images;
    for (std::size_t n = 0; n < images; ++n) {
      const auto first = resid.begin() + static_cast<long>(n * per_image);
      const auto last = first + static_cast<long>(per_image);
      double total = 0.0;
      for (auto it = first; it != last; ++it) total += *it;
      const double avg = total / static_cast<double>(per_image);
      for (auto it = first; it != last; ++it) {
        if (*it < avg) *it = 0.0;
      }
    }
  }
  return Tensor::from(target.shape(), std::move(resid));
}

Tensor aux_sigma_loss(const Tensor& sigma, const Tensor& mu_detached, const Tensor& target, const LossSpec& spec) {
  require_same_shape(sigma, target, "aux_sigma_loss");
  if (mu_detached.on_tape()) throw std::invalid_argument("aux_sigma_loss: mu must be detached");
  const Tensor goal = aux_sigma_targets(mu_detached, target, spec.threshold_aux);
  return reduce(abs(goal - sigma), spec.reduction) * spec.beta;
}

Tensor combined_objective(const Tensor& mu, const Tensor& sigma, const Tensor& target, const Tensor& z,
                          const LossSpec& spec) {
  Tensor main = data_adaptive_loss(mu, target, z, spec);
  if (spec.beta == 0.0) return main;
  return main + aux_sigma_loss(sigma, mu.detach(), target, spec);
}

JensenEstimate jensen_gap(const Tensor& mu, const Tensor& sigma, const Tensor& target, int n_mc, Rng& rng,
                          double kT) {
  require_same_shape(mu, target, "jensen_gap");
  require_same_shape(mu, sigma, "jensen_gap");
  if (n_mc < 1) throw std::invalid_argument("jensen_gap: n_mc must be >= 1");
  const auto mv = mu.values();
  const auto sv = sigma.values();
  const auto tv = target.values();
  const std::size_t n = mv.size();
  for (double s : sv) {
    if (s < 0.0) throw std::invalid_argument("jensen_gap: sigma must be non-negative");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) l1 += std::abs(tv[i] - mv[i]);
  l1 *= inv_n / kT;

  // Accumulate per-draw gaps so that sigma == 0 yields exactly zero.
  double gap_mean = 0.0, gap_m2 = 0.0;
  for (int d = 0; d < n_mc; ++d) {
    double gap = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      gap += std::abs(tv[i] - (mv[i] + sv[i] * rng.normal())) - std::abs(tv[i] - mv[i]);
    }
    gap *= inv_n / kT;
    const double delta = gap - gap_mean;
    gap_mean += delta / (d + 1);
    gap_m2 += delta * (gap - gap_mean);
  }
  JensenEstimate est;
  est.l1 = l1;
  est.expected = l1 + gap_mean;
  est.gap_stderr = n_mc > 1 ? std::sqrt(gap_m2 / (n_mc - 1) / n_mc) : 0.0;
  return est;
}

}  // namespace sigmasr
