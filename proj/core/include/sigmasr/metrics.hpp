#pragma once

#include <span>
#include <string_view>

#include "sigmasr/image.hpp"

namespace sigmasr {

enum class EvalChannel { y, rgb };
enum class PllReduction { pixel_mean, image_sum };

std::string_view to_string(EvalChannel c);
EvalChannel parse_eval_channel(std::string_view s);

struct EvalProtocol {
  EvalChannel channel = EvalChannel::y;
  int border_crop = 0;  // usually the SR scale
  double peak = 255.0;
  double psnr_cap = 99.0;

  static EvalProtocol for_scale(int scale, EvalChannel channel = EvalChannel::y) {
    return {channel, scale, 255.0, 99.0};
  }
};

/// Converts to Y (when requested and the image has 3 channels) and crops the
/// border. Throws if the crop would leave nothing.
Image prepare_for_eval(const Image& image, const EvalProtocol& proto);

/// 10·log10(peak² / MSE) on the 0-255 scale; proto.psnr_cap for identical inputs.
double psnr(const Image& a, const Image& b, const EvalProtocol& proto);

struct SsimTerms {
  double ssim = 0.0;
  double luminance = 0.0;          // mean of (2 μa μb + C1) / (μa² + μb² + C1)
  double contrast_structure = 0.0; // mean of (2 σab + C2) / (σa² + σb² + C2)
};

/// Mean SSIM over all valid 11×11 windows (Gaussian σ = 1.5, K1 = 0.01,
/// K2 = 0.03, L = 255), averaged over channels after prepare_for_eval.
double ssim(const Image& a, const Image& b, const EvalProtocol& proto);
/// Per-plane SSIM with the component terms, on values already in [0, 1].
SsimTerms ssim_plane(const Image& a, const Image& b, int channel = 0);

/// Gaussian predictive log-likelihood of hr under N(mu, sigma²), on the
/// [0, 1] scale, sigma floored at 1e-6.
double pll(const Image& sr_mu, const Image& sr_sigma, const Image& hr,
           PllReduction reduction = PllReduction::pixel_mean);

/// Streaming mean of training residuals |hr - mu|; the constant-sigma baseline.
class ConstantSigmaBaseline {
 public:
  void add(double residual);
  void add(std::span<const double> residuals);
  void add_residuals(const Image& hr, const Image& mu);
  std::size_t count() const { return count_; }
  /// Throws when nothing has been added.
  double value() const;

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
};

double constant_sigma_baseline(std::span<const double> residuals);

/// PSNR between a sigma map and a residual map: both scaled by 255, full
/// image, computed per channel and averaged.
double residual_psnr(const Image& sigma, const Image& residual, double cap = 99.0);

/// |hr - mu| per element.
Image residual_map(const Image& hr, const Image& mu);

}  // namespace sigmasr
