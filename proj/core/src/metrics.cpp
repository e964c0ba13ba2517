#include "sigmasr/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sigmasr/distributions.hpp"

namespace sigmasr {

namespace {

void require_same_dims(const Image& a, const Image& b, const char* op) {
  if (!a.same_dims(b)) throw std::invalid_argument(std::string(op) + ": image dimensions differ");
}

double psnr_from_mse(double mse, double peak, double cap) {
  if (mse <= 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(peak * peak / mse));
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::vector<double> gaussian_taps() {
  std::vector<double> taps(kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

// Valid-mode separable Gaussian filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h, const std::vector<double>& taps) {
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += taps[static_cast<std::size_t>(k)] * plane[static_cast<std::size_t>(y * w + x + k)];
      tmp[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * static_cast<std::size_t>(oh));
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) acc += taps[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>((y + k) * ow + x)];
      out[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  return out;
}

}  // namespace

std::string_view to_string(EvalChannel c) { return c == EvalChannel::y ? "y" : "rgb"; }

EvalChannel parse_eval_channel(std::string_view s) {
  if (s == "y") return EvalChannel::y;
  if (s == "rgb") return EvalChannel::rgb;
  throw std::invalid_argument("unknown eval channel '" + std::string(s) + "'");
}

Image prepare_for_eval(const Image& image, const EvalProtocol& proto) {
  if (proto.border_crop < 0) throw std::invalid_argument("eval: border_crop must be >= 0");
  const Image converted = (proto.channel == EvalChannel::y && image.channels == 3) ? rgb_to_y(image) : image;
  const int b = proto.border_crop;
  if (converted.width <= 2 * b || converted.height <= 2 * b) {
    throw std::invalid_argument("eval: border crop leaves an empty image");
  }
  if (b == 0) return converted;
  return crop(converted, b, b, converted.width - 2 * b, converted.height - 2 * b);
}

double psnr(const Image& a, const Image& b, const EvalProtocol& proto) {
  require_same_dims(a, b, "psnr");
  const Image pa = prepare_for_eval(a, proto);
  const Image pb = prepare_for_eval(b, proto);
  double se = 0.0;
  for (std::size_t i = 0; i < pa.values.size(); ++i) {
    const double d = (pa.values[i] - pb.values[i]) * proto.peak;
    se += d * d;
  }
  return psnr_from_mse(se / static_cast<double>(pa.values.size()), proto.peak, proto.psnr_cap);
}

SsimTerms ssim_plane(const Image& a, const Image& b, int channel) {
  require_same_dims(a, b, "ssim");
  if (a.width < kSsimWindow || a.height < kSsimWindow) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }
  const double L = 255.0;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const std::size_t plane = a.plane_size();
  const std::size_t off = static_cast<std::size_t>(channel) * plane;
  std::vector<double> pa(plane), pb(plane), aa(plane), bb(plane), ab(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    pa[i] = a.values[off + i] * L;
    pb[i] = b.values[off + i] * L;
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  const auto taps = gaussian_taps();
  const auto mu_a = filter_valid(pa, a.width, a.height, taps);
  const auto mu_b = filter_valid(pb, a.width, a.height, taps);
  const auto e_aa = filter_valid(aa, a.width, a.height, taps);
  const auto e_bb = filter_valid(bb, a.width, a.height, taps);
  const auto e_ab = filter_valid(ab, a.width, a.height, taps);

  SsimTerms t;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    const double lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    const double cs = (2.0 * cov + c2) / (va + vb + c2);
    t.luminance += lum;
    t.contrast_structure += cs;
    t.ssim += lum * cs;
  }
  const double n = static_cast<double>(mu_a.size());
  t.luminance /= n;
  t.contrast_structure /= n;
  t.ssim /= n;
  return t;
}

double ssim(const Image& a, const Image& b, const EvalProtocol& proto) {
  require_same_dims(a, b, "ssim");
  const Image pa = prepare_for_eval(a, proto);
  const Image pb = prepare_for_eval(b, proto);
  double total = 0.0;
  for (int c = 0; c < pa.channels; ++c) total += ssim_plane(pa, pb, c).ssim;
  return total / pa.channels;
}

double pll(const Image& sr_mu, const Image& sr_sigma, const Image& hr, PllReduction reduction) {
  require_same_dims(sr_mu, hr, "pll");
  require_same_dims(sr_sigma, hr, "pll");
  double total = 0.0;
  for (std::size_t i = 0; i < hr.values.size(); ++i) {
    total += gaussian_logpdf(hr.values[i], sr_mu.values[i], sr_sigma.values[i]);
  }
  return reduction == PllReduction::pixel_mean ? total / static_cast<double>(hr.values.size()) : total;
}

void ConstantSigmaBaseline::add(double residual) {
  ++count_;
  mean_ += (residual - mean_) / static_cast<double>(count_);
}

void ConstantSigmaBaseline::add(std::span<const double> residuals) {
  for (double r : residuals) add(r);
}

void ConstantSigmaBaseline::add_residuals(const Image& hr, const Image& mu) {
  require_same_dims(hr, mu, "constant_sigma_baseline");
  for (std::size_t i = 0; i < hr.values.size(); ++i) add(std::abs(hr.values[i] - mu.values[i]));
}

double ConstantSigmaBaseline::value() const {
  if (count_ == 0) throw std::invalid_argument("constant_sigma_baseline: no residuals");
  return mean_;
}

double constant_sigma_baseline(std::span<const double> residuals) {
  ConstantSigmaBaseline b;
  b.add(residuals);
  return b.value();
}

double residual_psnr(const Image& sigma, const Image& residual, double cap) {
  require_same_dims(sigma, residual, "residual_psnr");
  const std::size_t plane = sigma.plane_size();
  double total = 0.0;
  for (int c = 0; c < sigma.channels; ++c) {
    double se = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = static_cast<std::size_t>(c) * plane + i;
      const double d = (sigma.values[k] - residual.values[k]) * 255.0;
      se += d * d;
    }
    total += psnr_from_mse(se / static_cast<double>(plane), 255.0, cap);
  }
  return total / sigma.channels;
}

Image residual_map(const Image& hr, const Image& mu) {
  require_same_dims(hr, mu, "residual_map");
  Image out = hr;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::abs(hr.values[i] - mu.values[i]);
  return out;
}

}  // namespace sigmasr
