#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sigmasr/data.hpp"
#include "sigmasr/losses.hpp"
#include "sigmasr/models.hpp"

namespace sigmasr {

struct TrainConfig {
  int batch = 8;
  int patch = 16;
  double lr0 = 1e-4;
  int halve_every = 5000;
  int total_iters = 20000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LossSpec loss;
  std::uint64_t seed = 1;
  int telemetry_every = 1;
  int checkpoint_every = 0;  // 0: every halving boundary
  bool augment = true;
  /// Iteration at which the auxiliary sigma loss switches on (warm start).
  int sigma_start_iter = 0;
  /// trainable_sigma only: feed this constant sigma to the expected loss
  /// instead of the branch output.
  std::optional<double> fixed_sigma;
  /// Fill the wall_ms telemetry column. Off by default so telemetry is
  /// bitwise reproducible.
  bool record_wall_time = false;
  /// Where telemetry.csv and checkpoints go; empty keeps everything in memory.
  std::filesystem::path out_dir;

  void validate() const;
  int effective_checkpoint_every() const { return checkpoint_every > 0 ? checkpoint_every : halve_every; }
};

/// lr0 · 2^(-floor(iter / halve_every)).
double lr_at(int iter, const TrainConfig& cfg);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;

  static AdamState for_parameters(std::span<const Parameter> params);
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bias-corrected Adam update using each parameter's accumulated gradient.
/// Throws NonFiniteError, leaving every parameter untouched, if any gradient
/// is NaN or infinite.
void adam_step(std::span<Parameter> params, AdamState& state, double lr, const AdamHyper& hyper = {});

struct TelemetryRow {
  int iter = 0;
  double loss = 0.0;
  double mean_sigma = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
  std::array<double, 3> channel_sigma{};
  double mean_residual = 0.0;  // mean |hr - mu| over the batch

};

struct TrainReport {
  std::vector<TelemetryRow> telemetry;
  int iterations = 0;
  bool diverged = false;
  std::string message;
  std::vector<std::filesystem::path> checkpoints;
  /// Iterations that started with a nonzero parameter gradient.
  int stale_gradient_iterations = 0;
};

/// Assembles one mini-batch: image choice, patch placement and augmentation
/// all come from `rng`, in a fixed order.
struct Batch {
  Tensor lr;
  Tensor hr;
};
Batch sample_batch(std::span<const TrainingImage> dataset, int batch, int patch, bool augment, Rng& rng);

/// Loss for one forward pass under the configured variant. `z_rng` is only
/// consumed by the stochastic variants.
struct StepLoss {
  Tensor loss;
  Tensor sigma_used;  // sigma fed to the objective or produced by the branch; may be undefined
  double mean_residual = 0.0;
};
StepLoss compute_step_loss(const TwoBranchModel& model, const Batch& batch, const TrainConfig& cfg, int iter,
                           Rng& z_rng);

/// Adam training loop. Data sampling uses Rng::stream(seed, 0), noise draws
/// Rng::stream(seed, 1). Stops early, with diverged set, on a non-finite
/// loss or gradient; checkpoints already written are kept.
TrainReport train(TwoBranchModel& model, std::span<const TrainingImage> dataset, const TrainConfig& cfg);

inline constexpr const char* kTelemetryHeader = "iter,loss,mean_sigma,lr,wall_ms";
void write_telemetry_csv(const std::filesystem::path& path, std::span<const TelemetryRow> rows,
                         const TrainConfig& cfg);

/// Short decimal rendering used in every CSV the project writes.
std::string format_number(double v);

}  // namespace sigmasr
