#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sigmasr/distributions.hpp"
#include "sigmasr/tensor.hpp"

namespace sigmasr {

/// Small EDSR-baseline style trunk producing mu:
/// head conv -> n residual blocks (conv, relu, conv, +skip) -> body conv (+head skip)
/// -> upsampler (conv to F·s² channels, pixel shuffle, 3×3 conv to in_channels).
struct TrunkConfig {
  int in_channels = 3;
  int feature_channels = 64;
  int n_resblocks = 16;
  int scale = 2;

  void validate() const;
};

/// Where the sigma branch reads its input from.
enum class SigmaTap { features, input };

std::string_view to_string(SigmaTap tap);
SigmaTap parse_sigma_tap(std::string_view s);

/// n_blocks Conv+PReLU blocks, the same upsampler as the trunk, then sigmoid.
struct SigmaBranchConfig {
  int channels = 160;
  int n_blocks = 4;
  int kernel = 3;
  SigmaTap tap = SigmaTap::features;

  void validate() const;
};

struct Parameter {
  std::string name;
  Tensor value;
};

struct ModelOutput {
  Tensor mu;
  std::optional<Tensor> sigma;
};

class TwoBranchModel {
 public:
  /// Trunk parameters are drawn from `rng` before the sigma branch, so a
  /// given seed yields the same trunk with or without a branch.
  static TwoBranchModel build(const TrunkConfig& trunk, const std::optional<SigmaBranchConfig>& sigma, Rng& rng);

  /// Runs the trunk, and the sigma branch when present and requested.
  ModelOutput forward(const Tensor& x, bool with_sigma = true) const;
  /// Inference path: the sigma branch is never evaluated.
  Tensor forward_mu(const Tensor& x) const;

  const TrunkConfig& trunk_config() const { return trunk_; }
  const std::optional<SigmaBranchConfig>& sigma_config() const { return sigma_; }
  bool has_sigma_branch() const { return sigma_.has_value(); }
  int scale() const { return trunk_.scale; }

  /// All parameters in declaration order: trunk first, then sigma branch.
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t trunk_parameter_tensors() const { return n_trunk_params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  std::uint64_t trunk_evaluations() const { return trunk_evals_; }
  std::uint64_t sigma_evaluations() const { return sigma_evals_; }

  /// Assembles a model from explicit parameter values (checkpoint loading).
  /// Names and shapes must match what build() would declare.
  static TwoBranchModel from_parameters(const TrunkConfig& trunk, const std::optional<SigmaBranchConfig>& sigma,
                                        std::vector<Parameter> params);

 private:
  TwoBranchModel() = default;
  struct Features {
    Tensor features;
    Tensor mu;
  };
  Features run_trunk(const Tensor& x) const;
  Tensor run_sigma(const Tensor& x, const Tensor& features) const;
  const Tensor& param(std::size_t index) const { return params_[index].value; }

  TrunkConfig trunk_;
  std::optional<SigmaBranchConfig> sigma_;
  std::vector<Parameter> params_;
  std::size_t n_trunk_params_ = 0;
  mutable std::uint64_t trunk_evals_ = 0;
  mutable std::uint64_t sigma_evals_ = 0;
};

/// Closed-form parameter count for the architecture above.
std::size_t expected_parameter_count(const TrunkConfig& trunk, const std::optional<SigmaBranchConfig>& sigma);

}  // namespace sigmasr
