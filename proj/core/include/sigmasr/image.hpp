#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sigmasr/tensor.hpp"

namespace sigmasr {

/// Planar (C×H×W) image with values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> values;
  std::string provenance;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0);

  std::size_t plane_size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  double& at(int c, int y, int x) { return values[index(c, y, x)]; }
  double at(int c, int y, int x) const { return values[index(c, y, x)]; }

  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  bool same_dims(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
};

class PnmError : public std::runtime_error {
 public:
  enum class Kind { io, malformed_header, unsupported_maxval, truncated };
  PnmError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Binary PGM (P5) or PPM (P6), maxval 255. Values are clamped to [0, 1].
Image load_pnm(const std::filesystem::path& path);
Image decode_pnm(const std::vector<unsigned char>& bytes);
/// Writes P5 for one channel and P6 for three; values are clamped and rounded.
void save_pnm(const Image& image, const std::filesystem::path& path);
std::vector<unsigned char> encode_pnm(const Image& image);

std::uint8_t to_u8(double v);

/// BT.601 studio-swing luma, rescaled to [0, 1]:
/// (16 + 65.481 R + 128.553 G + 24.966 B) / 255 with RGB in [0, 1].
Image rgb_to_y(const Image& image);

Image clamp01(const Image& image);
Image crop(const Image& image, int x, int y, int w, int h);
/// Crops the right/bottom edge so both dimensions are multiples of `scale`.
Image modcrop(const Image& image, int scale);

// ---- bicubic resampling ----------------------------------------------------

inline constexpr double kKeysA = -0.5;

/// Keys cubic convolution kernel with a = -0.5.
double keys_kernel(double x);
/// Taps for source offsets -1, 0, +1, +2 at fractional phase t in [0, 1).
std::array<double, 4> keys_weights(double t);

enum class ResizeDirection { down, up };

/// Separable Keys bicubic resize by an integer-or-fractional factor. Output
/// size is floor(dim / scale) when downscaling and round(dim * scale) when
/// upscaling. Downscaling widens the kernel by the factor (antialiasing);
/// borders are handled by clamping sample positions.
Image bicubic_resize(const Image& image, double scale, ResizeDirection direction);
Image resize_to(const Image& image, int out_width, int out_height);

// ---- dihedral transforms ----------------------------------------------------

/// code in [0, 8): optional horizontal flip (code >= 4) followed by
/// (code % 4) counter-clockwise quarter turns.
Image apply_dihedral(const Image& image, int code);

// ---- tensor conversion ------------------------------------------------------

/// Stacks equally-sized images into an N×C×H×W tensor (off the tape).
Tensor images_to_tensor(const std::vector<const Image*>& images);
Tensor image_to_tensor(const Image& image);
/// Extracts image n from an N×C×H×W tensor.
Image tensor_to_image(const Tensor& t, std::size_t n = 0);

}  // namespace sigmasr
