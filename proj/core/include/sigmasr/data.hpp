#pragma once

#include <filesystem>
#include <vector>

#include "sigmasr/distributions.hpp"
#include "sigmasr/image.hpp"

namespace sigmasr {

/// HR image (cropped to a multiple of the scale) with its bicubic LR.
struct TrainingImage {
  Image hr;
  Image lr;
  int scale = 2;
};

TrainingImage make_training_image(const Image& hr, int scale);

struct PatchPair {
  Image lr;
  Image hr;
  int scale = 2;
  int lr_x = 0, lr_y = 0;
  int hr_x = 0, hr_y = 0;
  int dihedral = 0;  // applied augmentation code, 0 = identity
};

/// Uniformly placed LR window of `patch`×`patch` and the aligned HR window
/// (hr_origin = scale · lr_origin). Throws when the LR image is too small.
PatchPair sample_patch_pair(const TrainingImage& source, int patch, Rng& rng);

/// Applies one of the 8 dihedral transforms, chosen uniformly, to both images.
PatchPair augment(const PatchPair& pair, Rng& rng);
PatchPair apply_dihedral(const PatchPair& pair, int code);

/// Band-limited synthetic RGB textures: random sinusoid mixtures plus hard
/// edged shapes, clamped to [0, 1]. Same rng state, same images.
std::vector<Image> synth_dataset(int n_images, int size, Rng& rng);

/// Loads `<root>/HR/*.ppm` (and *.pgm) in lexicographic order.
std::vector<Image> load_dataset_dir(const std::filesystem::path& root);

/// Mean absolute spatial gradient over all channels.
double mean_gradient_magnitude(const Image& image);

}  // namespace sigmasr
