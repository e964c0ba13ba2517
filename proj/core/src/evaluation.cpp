#include "sigmasr/evaluation.hpp"

#include <algorithm>
#include <stdexcept>

namespace sigmasr {

SrPrediction super_resolve(const TwoBranchModel& model, const Image& lr, bool with_sigma) {
  const ModelOutput out = model.forward(image_to_tensor(lr), with_sigma && model.has_sigma_branch());
  SrPrediction p{clamp01(tensor_to_image(out.mu.detach())), std::nullopt};
  if (out.sigma) p.sigma = tensor_to_image(out.sigma->detach());
  return p;
}

ImageScores evaluate_image(const TwoBranchModel& model, const TrainingImage& pair, const EvalProtocol& proto,
                           double fallback_sigma, PllReduction pll_reduction) {
  const SrPrediction pred = super_resolve(model, pair.lr, true);
  const Image sigma = pred.sigma ? *pred.sigma : Image(pair.hr.width, pair.hr.height, pair.hr.channels, fallback_sigma);
  const Image bicubic = clamp01(resize_to(pair.lr, pair.hr.width, pair.hr.height));
  ImageScores s;
  s.psnr = psnr(pred.mu, pair.hr, proto);
  s.ssim = ssim(pred.mu, pair.hr, proto);
  s.pll = pll(pred.mu, sigma, pair.hr, pll_reduction);
  s.residual_psnr = residual_psnr(sigma, residual_map(pair.hr, pred.mu), proto.psnr_cap);
  s.bicubic_psnr = psnr(bicubic, pair.hr, proto);
  return s;
}

double mean_residual(const TwoBranchModel& model, std::span<const TrainingImage> images) {
  ConstantSigmaBaseline baseline;
  for (const auto& img : images) {
    baseline.add_residuals(img.hr, super_resolve(model, img.lr, false).mu);
  }
  return baseline.value();
}

Image render_dark_is_large(const Image& map, double gain) {
  if (!(gain > 0.0)) throw std::invalid_argument("render_dark_is_large: gain must be positive");
  Image out = map;
  for (double& v : out.values) v = 1.0 - std::clamp(gain * v, 0.0, 1.0);
  return out;
}

}  // namespace sigmasr
