#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sigmasr/analysis.hpp"
#include "sigmasr/metrics.hpp"
#include "sigmasr/models.hpp"
#include "sigmasr/trainer.hpp"

namespace sigmasr::tools {

/// Bad key, bad value or unreadable config file: a usage error (exit 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SigmaBranchMode { automatic, on, off };

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out = "run";

  TrunkConfig trunk;
  SigmaBranchConfig sigma;
  SigmaBranchMode sigma_branch = SigmaBranchMode::automatic;
  TrainConfig train;

  std::filesystem::path data_dir;  // empty: synthetic images
  int synthetic_images = 6;
  int image_size = 64;
  int eval_images = 3;

  EvalChannel channel = EvalChannel::y;
  int border_crop = -1;  // -1: the model's scale
  PllReduction pll_reduction = PllReduction::pixel_mean;
  std::string eval_split = "eval";

  int n = 0;  // experiment size; 0 picks the experiment's default
  double r = 0.5;
  double k = 1.0;
  std::vector<double> sigma_grid{0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0};
  int n_seeds = 3;
  double psnr_margin = 0.05;
  double collapse_ratio = 0.1;

  double gain = 1.0;

  /// Defaults mirror the desk setup used by the analysis experiments.
  RunConfig();

  /// Sets "section.key" (or a top-level key) from its text form.
  void set(std::string_view key, std::string_view value);
  /// Parses a config file: `[section]` headers, `key = value` lines, `#` comments.
  void load_file(const std::filesystem::path& path);
  void parse_text(std::string_view text, const std::string& origin = "config");

  /// Whether a model built from this config gets a sigma branch.
  bool wants_sigma_branch() const;
  DeskSetup desk_setup() const;

  /// Every key with its current value, in file syntax; reading it back
  /// reproduces this config.
  std::string to_text() const;
  void validate() const;

  static const std::vector<std::string>& keys();
};

}  // namespace sigmasr::tools
