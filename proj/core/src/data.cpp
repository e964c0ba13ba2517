#include "sigmasr/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sigmasr {

TrainingImage make_training_image(const Image& hr, int scale) {
  TrainingImage t;
  t.scale = scale;
  t.hr = modcrop(hr, scale);
  t.lr = bicubic_resize(t.hr, scale, ResizeDirection::down);
  return t;
}

PatchPair sample_patch_pair(const TrainingImage& source, int patch, Rng& rng) {
  if (patch < 1) throw std::invalid_argument("sample_patch_pair: patch must be positive");
  const int span_x = source.lr.width - patch + 1;
  const int span_y = source.lr.height - patch + 1;
  if (span_x < 1 || span_y < 1) {
    throw std::invalid_argument("sample_patch_pair: LR image " + std::to_string(source.lr.width) + "x" +
                                std::to_string(source.lr.height) + " smaller than patch " + std::to_string(patch));
  }
  PatchPair p;
  p.scale = source.scale;
  p.lr_x = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span_x)));
  p.lr_y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span_y)));
  p.hr_x = p.lr_x * source.scale;
  p.hr_y = p.lr_y * source.scale;
  p.lr = crop(source.lr, p.lr_x, p.lr_y, patch, patch);
  p.hr = crop(source.hr, p.hr_x, p.hr_y, patch * source.scale, patch * source.scale);
  return p;
}

PatchPair apply_dihedral(const PatchPair& pair, int code) {
  PatchPair out = pair;
  out.lr = apply_dihedral(pair.lr, code);
  out.hr = apply_dihedral(pair.hr, code);
  out.dihedral = code;
  return out;
}

PatchPair augment(const PatchPair& pair, Rng& rng) {
  return apply_dihedral(pair, static_cast<int>(rng.uniform_int(8)));
}

std::vector<Image> synth_dataset(int n_images, int size, Rng& rng) {
  if (n_images < 0 || size < 1) throw std::invalid_argument("synth_dataset: invalid size");
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(n_images));
  for (int n = 0; n < n_images; ++n) {
    Image img(size, size, 3);
    img.provenance = "synthetic:" + std::to_string(rng.seed()) + ":" + std::to_string(n);

    // Shared luminance structure plus small per-channel tints keeps the
    // channels correlated like natural images.
    struct Wave {
      double fx, fy, phase, amp;
    };
    std::vector<Wave> waves(6);
    for (auto& w : waves) {
      const double freq = 0.02 + 0.18 * rng.uniform();  // cycles per pixel, below Nyquist of the LR grid
      const double angle = 2.0 * std::numbers::pi * rng.uniform();
      w = {freq * std::cos(angle), freq * std::sin(angle), 2.0 * std::numbers::pi * rng.uniform(),
           0.05 + 0.1 * rng.uniform()};
    }
    std::array<double, 3> base{}, tint{};
    for (int c = 0; c < 3; ++c) {
      base[static_cast<std::size_t>(c)] = 0.3 + 0.4 * rng.uniform();
      tint[static_cast<std::size_t>(c)] = 0.7 + 0.6 * rng.uniform();
    }

    struct Shape2 {
      double cx, cy, r, level;
      bool disc;
    };
    std::vector<Shape2> shapes(3);
    for (auto& s : shapes) {
      s = {size * rng.uniform(), size * rng.uniform(), size * (0.1 + 0.25 * rng.uniform()), 0.5 * rng.uniform() - 0.25,
           rng.uniform() < 0.5};
    }

    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double lum = 0.0;
        for (const auto& w : waves) {
          lum += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
        }
        for (const auto& s : shapes) {
          const double dx = x - s.cx, dy = y - s.cy;
          const bool inside = s.disc ? dx * dx + dy * dy < s.r * s.r : std::abs(dx) < s.r && std::abs(dy) < 0.6 * s.r;
          if (inside) lum += s.level;
        }
        for (int c = 0; c < 3; ++c) {
          const auto ci = static_cast<std::size_t>(c);
          img.at(c, y, x) = std::clamp(base[ci] + tint[ci] * lum, 0.0, 1.0);
        }
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<Image> load_dataset_dir(const std::filesystem::path& root) {
  const auto dir = root / "HR";
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("dataset: missing directory " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("dataset: no .ppm images in " + dir.string());
  std::vector<Image> images;
  for (const auto& f : files) images.push_back(load_pnm(f));
  return images;
}

double mean_gradient_magnitude(const Image& image) {
  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        if (x + 1 < image.width) {
          total += std::abs(image.at(c, y, x + 1) - image.at(c, y, x));
          ++count;
        }
        if (y + 1 < image.height) {
          total += std::abs(image.at(c, y + 1, x) - image.at(c, y, x));
          ++count;
        }
      }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace sigmasr
