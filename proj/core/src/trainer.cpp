#include "sigmasr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "sigmasr/checkpoint.hpp"

namespace sigmasr {

void TrainConfig::validate() const {
  if (batch < 1 || patch < 1) throw std::invalid_argument("train: batch and patch must be positive");
  if (!(lr0 > 0.0)) throw std::invalid_argument("train: lr0 must be positive");
  if (halve_every < 1) throw std::invalid_argument("train: halve_every must be positive");
  if (total_iters < 1) throw std::invalid_argument("train: total_iters must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("train: eps must be positive");
  if (telemetry_every < 1) throw std::invalid_argument("train: telemetry_every must be positive");
  if (checkpoint_every < 0 || sigma_start_iter < 0) throw std::invalid_argument("train: negative cadence");
  if (fixed_sigma && *fixed_sigma < 0.0) throw std::invalid_argument("train: fixed_sigma must be non-negative");
  loss.validate();
}

double lr_at(int iter, const TrainConfig& cfg) {
  if (iter < 0) throw std::invalid_argument("lr_at: iter must be non-negative");
  return std::ldexp(cfg.lr0, -(iter / cfg.halve_every));
}

AdamState AdamState::for_parameters(std::span<const Parameter> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.numel(), 0.0);
    s.v.emplace_back(p.value.numel(), 0.0);
  }
  return s;
}

void adam_step(std::span<Parameter> params, AdamState& state, double lr, const AdamHyper& hyper) {
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
  for (const auto& p : params) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.impl()->grad) {
      if (!std::isfinite(g)) throw NonFiniteError("adam_step: non-finite gradient in " + p.name);
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.value.has_grad()) continue;
    const auto& g = p.value.impl()->grad;
    auto w = p.value.mutable_values();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != w.size()) throw std::invalid_argument("adam_step: moment shape mismatch for " + p.name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

Batch sample_batch(std::span<const TrainingImage> dataset, int batch, int patch, bool augment_patches, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("sample_batch: empty dataset");
  std::vector<PatchPair> pairs;
  pairs.reserve(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const auto& img = dataset[rng.uniform_int(dataset.size())];
    PatchPair p = sample_patch_pair(img, patch, rng);
    if (augment_patches) p = augment(p, rng);
    pairs.push_back(std::move(p));
  }
  std::vector<const Image*> lr, hr;
  for (const auto& p : pairs) {
    lr.push_back(&p.lr);
    hr.push_back(&p.hr);
  }
  return {images_to_tensor(lr), images_to_tensor(hr)};
}

StepLoss compute_step_loss(const TwoBranchModel& model, const Batch& batch, const TrainConfig& cfg, int iter,
                           Rng& z_rng) {
  const LossSpec& spec = cfg.loss;
  const bool aux_active = spec.variant != LossVariant::trainable_sigma && spec.beta > 0.0 &&
                          model.has_sigma_branch() && iter >= cfg.sigma_start_iter;
  const ModelOutput out = model.forward(batch.lr, model.has_sigma_branch());
  const Tensor& mu = out.mu;

  auto draw_z = [&]() {
    Shape s = mu.shape();
    if (spec.n_samples > 1) s.insert(s.begin(), static_cast<std::size_t>(spec.n_samples));
    return sample_standard_normal(z_rng, s);
  };

  StepLoss result;
  if (out.sigma) result.sigma_used = *out.sigma;
  {
    const auto m = mu.values();
    const auto t = batch.hr.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) acc += std::abs(t[i] - m[i]);
    result.mean_residual = m.empty() ? 0.0 : acc / static_cast<double>(m.size());
  }
  switch (spec.variant) {
    case LossVariant::l1:
      result.loss = l1_loss(mu, batch.hr, spec.reduction);
      break;
    case LossVariant::l2:
      result.loss = l2_loss(mu, batch.hr, spec.reduction);
      break;
    case LossVariant::trainable_sigma: {
      Tensor sigma;
      if (cfg.fixed_sigma) {
        sigma = Tensor::full(mu.shape(), *cfg.fixed_sigma);
        result.sigma_used = sigma;
      } else if (out.sigma) {
        sigma = *out.sigma;
      } else {
        throw std::invalid_argument("train: trainable_sigma needs a sigma branch or a fixed sigma");
      }
      result.loss = expected_l1_trainable_sigma(mu, sigma, batch.hr, draw_z(), spec);
      break;
    }
    case LossVariant::constant_sigma:
      result.loss = noise2noise_loss(mu, batch.hr, draw_z(), spec.k_noise, spec).loss;
      if (!out.sigma) result.sigma_used = Tensor::full(mu.shape(), spec.k_noise);
      break;
    case LossVariant::data_adaptive:
      result.loss = data_adaptive_loss(mu, batch.hr, draw_z(), spec);
      if (!out.sigma) {
        const Tensor r = abs(batch.hr - mu);
        result.sigma_used = r.detach();
      }
      break;
  }
  if (aux_active) result.loss = result.loss + aux_sigma_loss(*out.sigma, mu.detach(), batch.hr, spec);
  return result;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_telemetry_csv(const std::filesystem::path& path, std::span<const TelemetryRow> rows,
                         const TrainConfig& cfg) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("telemetry: cannot write " + path.string());
  out << "# variant=" << to_string(cfg.loss.variant) << " seed=" << cfg.seed << " beta=" << format_number(cfg.loss.beta)
      << '\n';
  out << kTelemetryHeader << '\n';
  for (const auto& r : rows) {
    out << r.iter << ',' << format_number(r.loss) << ',' << format_number(r.mean_sigma) << ','
        << format_number(r.lr) << ',' << format_number(r.wall_ms) << '\n';
  }
}

namespace {

TelemetryRow telemetry_row(int iter, double loss, const Tensor& sigma, double lr) {
  TelemetryRow row;
  row.iter = iter;
  row.loss = loss;
  row.lr = lr;
  if (sigma.defined() && sigma.numel() > 0) {
    const auto v = sigma.values();
    double total = 0.0;
    for (double s : v) total += s;
    row.mean_sigma = total / static_cast<double>(v.size());
    if (sigma.rank() == 4) {
      const std::size_t n = sigma.dim(0), c = sigma.dim(1), hw = sigma.dim(2) * sigma.dim(3);
      for (std::size_t ch = 0; ch < std::min<std::size_t>(c, 3); ++ch) {
        double acc = 0.0;
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t i = 0; i < hw; ++i) acc += v[(b * c + ch) * hw + i];
        row.channel_sigma[ch] = acc / static_cast<double>(n * hw);
      }
    }
  }
  return row;
}

std::filesystem::path checkpoint_name(const std::filesystem::path& dir, int iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%07d.bin", iter);
  return dir / buf;
}

}  // namespace

TrainReport train(TwoBranchModel& model, std::span<const TrainingImage> dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  Rng data_rng = Rng::stream(cfg.seed, 0);
  Rng z_rng = Rng::stream(cfg.seed, 1);
  AdamState adam = AdamState::for_parameters(model.parameters());
  const AdamHyper hyper{cfg.beta1, cfg.beta2, cfg.eps};
  const int ckpt_every = cfg.effective_checkpoint_every();
  const auto start = std::chrono::steady_clock::now();

  TrainReport report;
  auto flush_telemetry = [&]() {
    if (!cfg.out_dir.empty()) write_telemetry_csv(cfg.out_dir / "telemetry.csv", report.telemetry, cfg);
  };

  model.zero_grad();
  for (int iter = 0; iter < cfg.total_iters; ++iter) {
    for (const auto& p : model.parameters()) {
      const auto& g = p.value.impl()->grad;
      if (std::any_of(g.begin(), g.end(), [](double x) { return x != 0.0; })) {
        ++report.stale_gradient_iterations;
        break;
      }
    }

    const Batch batch = sample_batch(dataset, cfg.batch, cfg.patch, cfg.augment, data_rng);
    const double lr = lr_at(iter, cfg);
    StepLoss step = compute_step_loss(model, batch, cfg, iter, z_rng);
    const double loss_value = step.loss.item();
    if (!std::isfinite(loss_value)) {
      report.diverged = true;
      report.message = "non-finite loss at iteration " + std::to_string(iter);
      break;
    }
    backward(step.loss);
    try {
      adam_step(model.parameters(), adam, lr, hyper);
    } catch (const NonFiniteError& e) {
      report.diverged = true;
      report.message = std::string(e.what()) + " at iteration " + std::to_string(iter);
      break;
    }
    model.zero_grad();
    report.iterations = iter + 1;

    const bool last = iter + 1 == cfg.total_iters;
    if (iter % cfg.telemetry_every == 0 || last) {
      TelemetryRow row = telemetry_row(iter, loss_value, step.sigma_used, lr);
      row.mean_residual = step.mean_residual;
      if (cfg.record_wall_time) {
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
      report.telemetry.push_back(row);
    }
    if (!cfg.out_dir.empty() && ((iter + 1) % ckpt_every == 0 || last)) {
      const auto path = checkpoint_name(cfg.out_dir, iter + 1);
      save_checkpoint(model, path);
      report.checkpoints.push_back(path);
    }
  }
  flush_telemetry();
  return report;
}

}  // namespace sigmasr
