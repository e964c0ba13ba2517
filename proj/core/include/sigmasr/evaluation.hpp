#pragma once

#include <optional>

#include "sigmasr/data.hpp"
#include "sigmasr/metrics.hpp"
#include "sigmasr/models.hpp"

namespace sigmasr {

/// Super-resolves one LR image. mu is clipped to [0, 1]; sigma is present
/// only when requested and the model has a sigma branch.
struct SrPrediction {
  Image mu;
  std::optional<Image> sigma;
};
SrPrediction super_resolve(const TwoBranchModel& model, const Image& lr, bool with_sigma);

struct ImageScores {
  double psnr = 0.0;
  double ssim = 0.0;
  double pll = 0.0;
  double residual_psnr = 0.0;
  double bicubic_psnr = 0.0;
};

/// Scores the model on one HR image (LR generated by bicubic downscaling).
/// Uses the sigma branch for PLL and residual PSNR when present, otherwise
/// the constant `fallback_sigma`.
ImageScores evaluate_image(const TwoBranchModel& model, const TrainingImage& pair, const EvalProtocol& proto,
                           double fallback_sigma, PllReduction pll_reduction = PllReduction::pixel_mean);

/// Mean |hr - mu| over a set of images: the constant-sigma baseline value.
double mean_residual(const TwoBranchModel& model, std::span<const TrainingImage> images);

/// Renders a non-negative map for viewing with dark meaning large:
/// 1 - min(1, gain * v).
Image render_dark_is_large(const Image& map, double gain = 1.0);

}  // namespace sigmasr
