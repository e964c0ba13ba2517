#include "sigmasr_tools/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "sigmasr/analysis.hpp"
#include "sigmasr/checkpoint.hpp"
#include "sigmasr/evaluation.hpp"
#include "sigmasr_tools/config.hpp"

namespace sigmasr::tools {

namespace {

// Failures that are the caller's fault but only show up after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& common) {
  cmd->add_option("--config", common.config, "Config file ([section] key = value)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "Seed for every random stream of the run");
  cmd->add_option("--out", common.out, "Output directory");
  cmd->add_option("--set", common.sets, "Override a config key: section.key=value (repeatable)");
}

RunConfig base_config(const CommonArgs& common) {
  RunConfig cfg;
  if (!common.config.empty()) cfg.load_file(common.config);
  for (const auto& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (common.seed) cfg.seed = *common.seed;
  if (!common.out.empty()) cfg.out = common.out;
  return cfg;
}

void write_effective_config(const RunConfig& cfg, const std::string& command) {
  std::filesystem::create_directories(cfg.out);
  std::ofstream f(cfg.out / "effective_config.toml", std::ios::binary | std::ios::trunc);
  f << "# sigmasr " << command << '\n' << cfg.to_text();
  if (!f) throw std::runtime_error("cannot write " + (cfg.out / "effective_config.toml").string());
}

std::vector<TrainingImage> synthetic_split(const RunConfig& cfg, int scale, bool eval_split) {
  Rng rng = Rng::stream(cfg.seed, eval_split ? 11 : 10);
  const int n = eval_split ? cfg.eval_images : cfg.synthetic_images;
  std::vector<TrainingImage> out;
  for (const auto& img : synth_dataset(n, cfg.image_size, rng)) out.push_back(make_training_image(img, scale));
  return out;
}

std::vector<TrainingImage> training_images(const RunConfig& cfg, int scale) {
  if (cfg.data_dir.empty()) return synthetic_split(cfg, scale, false);
  std::vector<TrainingImage> out;
  for (const auto& img : load_dataset_dir(cfg.data_dir)) out.push_back(make_training_image(img, scale));
  return out;
}

std::string image_label(const Image& img, std::size_t index) {
  if (img.provenance.empty()) return "image" + std::to_string(index);
  if (img.provenance.starts_with("synthetic:")) return img.provenance;
  return std::filesystem::path(img.provenance).filename().string();
}

std::filesystem::path pnm_name(const std::filesystem::path& dir, const std::string& stem, const Image& img) {
  return dir / (stem + (img.channels == 1 ? ".pgm" : ".ppm"));
}

// ---- train ---------------------------------------------------------------------

int cmd_train(RunConfig cfg, std::ostream& out, std::ostream& err) {
  cfg.validate();
  write_effective_config(cfg, "train");
  const auto images = training_images(cfg, cfg.trunk.scale);
  Rng init = Rng::stream(cfg.seed, 20);
  std::optional<SigmaBranchConfig> sigma;
  if (cfg.wants_sigma_branch()) sigma = cfg.sigma;
  TwoBranchModel model = TwoBranchModel::build(cfg.trunk, sigma, init);

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.out_dir = cfg.out;
  out << "training " << to_string(tc.loss.variant) << " for " << tc.total_iters << " iterations on "
      << images.size() << " images (" << model.parameter_count() << " parameters"
      << (model.has_sigma_branch() ? ", sigma branch" : "") << ")\n";
  const TrainReport report = train(model, images, tc);
  if (report.diverged) {
    err << "error: training diverged: " << report.message << '\n';
    return kExitFailure;
  }
  const auto& last = report.telemetry.back();
  out << "done: " << report.iterations << " iterations, final loss " << format_number(last.loss)
      << ", mean sigma " << format_number(last.mean_sigma) << '\n';
  out << "telemetry: " << (cfg.out / "telemetry.csv").string() << '\n';
  if (!report.checkpoints.empty()) out << "checkpoint: " << report.checkpoints.back().string() << '\n';
  return kExitOk;
}

// ---- eval ------------------------------------------------------------------------

int cmd_eval(RunConfig cfg, const std::string& checkpoint, const std::vector<std::string>& inputs, std::ostream& out) {
  cfg.validate();
  if (checkpoint.empty()) throw UsageError("eval: --checkpoint is required");
  if (!std::filesystem::exists(checkpoint)) throw std::runtime_error("eval: missing checkpoint " + checkpoint);
  write_effective_config(cfg, "eval");
  const TwoBranchModel model = load_checkpoint(checkpoint);
  const int scale = model.scale();

  std::vector<TrainingImage> images;
  if (!inputs.empty()) {
    for (const auto& f : inputs) images.push_back(make_training_image(load_pnm(f), scale));
  } else if (!cfg.data_dir.empty()) {
    images = training_images(cfg, scale);
  } else {
    images = synthetic_split(cfg, scale, cfg.eval_split == "eval");
  }

  EvalProtocol proto = EvalProtocol::for_scale(scale, cfg.channel);
  if (cfg.border_crop >= 0) proto.border_crop = cfg.border_crop;

  // Models without a sigma branch are scored with the constant baseline:
  // the mean residual on the training images (or the inputs themselves).
  double fallback = 0.0;
  if (!model.has_sigma_branch()) {
    fallback = inputs.empty() ? mean_residual(model, training_images(cfg, scale)) : mean_residual(model, images);
  }

  const auto csv_path = cfg.out / "eval.csv";
  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  csv << "image,psnr,ssim,pll,residual_psnr\n";
  ImageScores mean;
  double bicubic = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageScores s = evaluate_image(model, images[i], proto, fallback, cfg.pll_reduction);
    const std::string label = image_label(images[i].hr, i);
    csv << label << ',' << format_number(s.psnr) << ',' << format_number(s.ssim) << ',' << format_number(s.pll)
        << ',' << format_number(s.residual_psnr) << '\n';
    out << label << ": psnr " << format_number(s.psnr) << " dB (bicubic " << format_number(s.bicubic_psnr)
        << "), ssim " << format_number(s.ssim) << ", pll " << format_number(s.pll) << ", residual_psnr "
        << format_number(s.residual_psnr) << '\n';
    mean.psnr += s.psnr;
    mean.ssim += s.ssim;
    mean.pll += s.pll;
    mean.residual_psnr += s.residual_psnr;
    bicubic += s.bicubic_psnr;
  }
  const double n = static_cast<double>(images.size());
  csv << "mean," << format_number(mean.psnr / n) << ',' << format_number(mean.ssim / n) << ','
      << format_number(mean.pll / n) << ',' << format_number(mean.residual_psnr / n) << '\n';
  if (!csv) throw std::runtime_error("eval: cannot write " + csv_path.string());
  out << "mean: psnr " << format_number(mean.psnr / n) << " dB (bicubic " << format_number(bicubic / n)
      << "), channel " << to_string(proto.channel) << ", border " << proto.border_crop << '\n';
  out << "report: " << csv_path.string() << '\n';
  return kExitOk;
}

// ---- analyze ------------------------------------------------------------------------

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"gradient-sign",       "gradient-magnitude", "expectation-identity",
                                                 "jensen",              "noise2noise",        "sigma-degradation",
                                                 "training-comparison"};
  return names;
}

int cmd_analyze(RunConfig cfg, const std::string& name, std::ostream& out) {
  cfg.validate();
  write_effective_config(cfg, "analyze " + name);
  Rng rng(cfg.seed);
  const auto n_or = [&](int fallback) { return cfg.n > 0 ? cfg.n : fallback; };
  ExperimentReport rep;
  if (name == "gradient-sign") {
    rep = gradient_sign_experiment(n_or(10000), rng);
  } else if (name == "gradient-magnitude") {
    rep = gradient_magnitude_experiment(n_or(1000000), rng);
  } else if (name == "expectation-identity") {
    rep = expectation_identity_experiment(n_or(1000000), 16, rng);
  } else if (name == "jensen") {
    rep = jensen_experiment(cfg.sigma_grid, n_or(1000000), rng);
  } else if (name == "noise2noise") {
    rep = noise2noise_experiment(cfg.r, cfg.k, n_or(1000000), rng);
  } else if (name == "sigma-degradation") {
    rep = sigma_degradation_experiment(cfg.desk_setup(), cfg.collapse_ratio);
  } else if (name == "training-comparison") {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < cfg.n_seeds; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
    rep = training_comparison_experiment(cfg.desk_setup(), seeds, cfg.psnr_margin);
  } else {
    throw UsageError("analyze: unknown experiment '" + name + "'");
  }
  const auto csv = rep.write(cfg.out);
  out << rep.summary();
  if (name == "gradient-sign") {
    out << "violations: " << static_cast<long long>(rep.check("data_adaptive_sign_violations").measured) << '\n';
  }
  out << "report: " << csv.string() << '\n';
  return rep.passed() ? kExitOk : kExitFailure;
}

// ---- uncertainty ------------------------------------------------------------------------

int cmd_uncertainty(RunConfig cfg, const std::string& checkpoint, const std::string& input, const std::string& hr_path,
                    std::ostream& out) {
  cfg.validate();
  if (checkpoint.empty()) throw UsageError("uncertainty: --checkpoint is required");
  if (input.empty() && hr_path.empty()) throw UsageError("uncertainty: give --input (LR image) and/or --hr");
  if (!std::filesystem::exists(checkpoint)) throw std::runtime_error("uncertainty: missing checkpoint " + checkpoint);
  const TwoBranchModel model = load_checkpoint(checkpoint);
  if (!model.has_sigma_branch()) throw std::runtime_error("uncertainty: checkpoint has no sigma branch");
  write_effective_config(cfg, "uncertainty");

  std::optional<Image> hr;
  Image lr;
  if (!hr_path.empty()) hr = modcrop(load_pnm(hr_path), model.scale());
  lr = input.empty() ? bicubic_resize(*hr, model.scale(), ResizeDirection::down) : load_pnm(input);

  const SrPrediction pred = super_resolve(model, lr, true);
  const Image& sigma = *pred.sigma;
  save_pnm(pred.mu, pnm_name(cfg.out, "sr", pred.mu));
  save_pnm(render_dark_is_large(sigma, cfg.gain), pnm_name(cfg.out, "sigma", sigma));
  double mean_sigma = 0.0;
  for (double v : sigma.values) mean_sigma += v;
  mean_sigma /= static_cast<double>(sigma.values.size());
  out << "sr: " << pred.mu.width << "x" << pred.mu.height << ", sigma map: " << sigma.width << "x" << sigma.height
      << ", mean sigma " << format_number(mean_sigma) << '\n';
  if (hr) {
    if (!hr->same_dims(pred.mu)) {
      throw std::runtime_error("uncertainty: HR image is " + std::to_string(hr->width) + "x" +
                               std::to_string(hr->height) + ", SR output is " + std::to_string(pred.mu.width) + "x" +
                               std::to_string(pred.mu.height));
    }
    const Image residual = residual_map(*hr, pred.mu);
    save_pnm(render_dark_is_large(residual, cfg.gain), pnm_name(cfg.out, "residual", residual));
    out << "residual_psnr: " << format_number(residual_psnr(sigma, residual)) << '\n';
  }
  out << "outputs: " << cfg.out.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Super-resolution training with a probabilistic l1 objective", "sigmasr"};
  app.require_subcommand(1);

  CommonArgs train_common, eval_common, analyze_common, unc_common;

  auto* train_cmd = app.add_subcommand("train", "Train a model and write telemetry.csv and checkpoints");
  add_common(train_cmd, train_common);
  std::string loss, data;
  std::optional<int> iters;
  std::optional<double> beta;
  bool wall_clock = false;
  train_cmd->add_option("--loss", loss, "Loss variant: l1, l2, trainable_sigma, constant_sigma, data_adaptive");
  train_cmd->add_option("--iters", iters, "Number of iterations");
  train_cmd->add_option("--beta", beta, "Weight of the auxiliary sigma loss");
  train_cmd->add_option("--data", data, "Dataset root containing HR/*.ppm (default: synthetic images)");
  train_cmd->add_flag("--wall-clock", wall_clock, "Record elapsed time in telemetry (breaks bitwise reruns)");

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint: PSNR, SSIM, PLL and residual PSNR");
  add_common(eval_cmd, eval_common);
  std::string eval_ckpt, channel, split;
  std::vector<std::string> eval_inputs;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file");
  eval_cmd->add_option("--input", eval_inputs, "HR images to evaluate (LR is made by bicubic downscaling)");
  eval_cmd->add_option("--channel", channel, "y or rgb");
  eval_cmd->add_option("--split", split, "Synthetic split when no images are given: eval or train");
  std::string eval_data;
  eval_cmd->add_option("--data", eval_data, "Dataset root containing HR/*.ppm");

  auto* analyze_cmd = app.add_subcommand("analyze", "Run one of the analysis experiments");
  add_common(analyze_cmd, analyze_common);
  std::string experiment;
  std::optional<int> n;
  std::optional<double> r, k;
  analyze_cmd->add_option("experiment", experiment, "Experiment name")
      ->required()
      ->check(CLI::IsMember(experiment_names()));
  analyze_cmd->add_option("-n", n, "Number of cases or Monte-Carlo draws");
  analyze_cmd->add_option("--r", r, "Residual for noise2noise");
  analyze_cmd->add_option("--k", k, "Noise scale for noise2noise");

  auto* unc_cmd = app.add_subcommand("uncertainty", "Write SR, sigma and residual maps for one image");
  add_common(unc_cmd, unc_common);
  std::string unc_ckpt, unc_input, unc_hr;
  std::optional<double> gain;
  unc_cmd->add_option("--checkpoint", unc_ckpt, "Checkpoint with a sigma branch");
  unc_cmd->add_option("--input", unc_input, "LR input image");
  unc_cmd->add_option("--hr", unc_hr, "HR reference (also the input source when --input is absent)");
  unc_cmd->add_option("--gain", gain, "Map scale before rendering (dark = large)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    err << "run 'sigmasr --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      RunConfig cfg = base_config(train_common);
      if (!loss.empty()) cfg.set("loss.variant", loss);
      if (iters) cfg.train.total_iters = *iters;
      if (beta) cfg.train.loss.beta = *beta;
      if (!data.empty()) cfg.data_dir = data;
      if (wall_clock) cfg.train.record_wall_time = true;
      return cmd_train(cfg, out, err);
    }
    if (eval_cmd->parsed()) {
      RunConfig cfg = base_config(eval_common);
      if (!channel.empty()) cfg.set("eval.channel", channel);
      if (!split.empty()) cfg.set("eval.split", split);
      if (!eval_data.empty()) cfg.data_dir = eval_data;
      return cmd_eval(cfg, eval_ckpt, eval_inputs, out);
    }
    if (analyze_cmd->parsed()) {
      RunConfig cfg = base_config(analyze_common);
      if (n) cfg.n = *n;
      if (r) cfg.r = *r;
      if (k) cfg.k = *k;
      return cmd_analyze(cfg, experiment, out);
    }
    if (unc_cmd->parsed()) {
      RunConfig cfg = base_config(unc_common);
      if (gain) cfg.gain = *gain;
      return cmd_uncertainty(cfg, unc_ckpt, unc_input, unc_hr, out);
    }
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace sigmasr::tools
