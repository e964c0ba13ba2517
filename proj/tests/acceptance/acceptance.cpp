// Acceptance suite: one PASS/FAIL line per criterion. Run with no arguments
// for all criteria, or pass criterion numbers to run a subset.

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "sigmasr/analysis.hpp"
#include "sigmasr/losses.hpp"
#include "sigmasr/metrics.hpp"
#include "sigmasr/models.hpp"
#include "sigmasr_tools/cli.hpp"

namespace fs = std::filesystem;
using namespace sigmasr;
using testing::autodiff_grads;
using testing::max_rel_error;
using testing::max_tensor_rel_error;
using testing::numeric_grads;
using testing::project;
using testing::random_leaf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string failed_checks(const ExperimentReport& rep) {
  std::string out;
  for (const auto& c : rep.checks)
    if (!c.pass) out += " [" + c.name + "=" + fmt(c.measured) + "]";
  return out;
}

// ---- 1 ---------------------------------------------------------------------------

Outcome check_gradient_sign() {
  Stopwatch sw;
  Rng rng(1);
  const auto rep = gradient_sign_experiment(10000, rng);
  const double t = sw.seconds();
  const double violations = rep.check("data_adaptive_sign_violations").measured;
  return {violations == 0.0 && t < 10.0,
          "10^4 cases, " + fmt(violations) + " sign violations, " + fmt(t, 3) + " s (limit 10 s)"};
}

// ---- 2 ---------------------------------------------------------------------------

Outcome check_gradient_magnitude() {
  Stopwatch sw;
  Rng rng(2);
  const auto rep = gradient_magnitude_experiment(1000000, rng);
  const double t = sw.seconds();
  bool ok = t < 30.0;
  std::string detail = "10^6 draws:";
  for (const char* r : {"0.01", "0.5", "3"}) {
    const double m = rep.check(std::string("abs_mean_grad_r=") + r).measured;
    ok = ok && std::abs(m - 1.1666) <= 0.01;
    detail += std::string(" r=") + r + " -> " + fmt(m);
  }
  return {ok, detail + " (target 1.1666 +- 0.01), " + fmt(t, 3) + " s (limit 30 s)"};
}

// ---- 3 ---------------------------------------------------------------------------

Outcome check_expectation_identity() {
  Rng rng(3);
  const auto rep = expectation_identity_experiment(1000000, 16, rng);
  const double ratio = rep.check("ratio_to_l1").measured;
  const auto& upper = rep.check("upper_bound_of_l1");
  const bool ok = std::abs(ratio - 1.1666315) <= 0.005 * 1.1666315 && upper.pass;
  return {ok, "E[l_E]/l1 = " + fmt(ratio, 8) + " (target 1.1666315 +- 0.5%), E[l_E] - l1 = " + fmt(upper.measured)};
}

// ---- 4 ---------------------------------------------------------------------------

Outcome check_jensen() {
  Rng rng(4);
  const auto rep = jensen_experiment({0.0, 0.1, 0.5, 1.0, 2.0}, 1000000, rng);
  const double gap0 = rep.check("gap_at_sigma_0").measured;
  const double gap1 = rep.check("gap_at_r1_sigma1").measured;
  const auto& random = rep.check("random_gap_nonnegative");
  const bool ok = gap0 == 0.0 && std::abs(gap1 - 0.16663) <= 0.005 && random.pass;
  return {ok, "gap(sigma=0) = " + fmt(gap0) + ", gap(r=1, sigma=1) = " + fmt(gap1) +
                  " (target 0.16663 +- 0.005), min random gap " + fmt(random.measured, 4) + " MC sd (limit -4)"};
}

// ---- 5 ---------------------------------------------------------------------------

Outcome check_noise2noise() {
  Rng rng(5);
  const auto rep = noise2noise_experiment(0.5, 1.0, 1000000, rng);
  const double freq = rep.check("flip_frequency").measured;
  return {std::abs(freq - 0.3085) <= 0.005, "flip frequency " + fmt(freq) + " (target 0.3085 +- 0.005)"};
}

// ---- 6 ---------------------------------------------------------------------------

Outcome check_sigma_degradation() {
  Stopwatch sw;
  const auto rep = sigma_degradation_experiment(DeskSetup());
  const double t = sw.seconds();
  std::string control_raw;
  for (const auto& [k, v] : rep.parameters)
    if (k == "control_raw_sigma_ratio") control_raw = v;
  const bool ok = rep.passed() && t < 900.0;
  return {ok, "trainable sigma final/initial " + fmt(rep.check("trainable_sigma_collapses").measured, 4) +
                  " (limit 0.1), control sigma/residual ratio " +
                  fmt(rep.check("data_adaptive_aux_no_collapse").measured, 4) + " (raw " + control_raw +
                  "), " + fmt(t, 4) + " s (limit 900 s)" + failed_checks(rep)};
}

// ---- 7 ---------------------------------------------------------------------------

struct OpCase {
  std::string name;
  std::function<Tensor()> loss;
  std::vector<Tensor> leaves;
};

Outcome check_autodiff_soundness() {
  Rng rng(7);
  const Shape s{2, 3, 4, 5};
  auto weights = [&](const Shape& shape) { return sample_standard_normal(rng, shape); };
  std::vector<OpCase> cases;
  {
    Tensor a = random_leaf(rng, s), b = random_leaf(rng, s), w = weights(s);
    cases.push_back({"add", [=] { return project(add(a, b), w); }, {a, b}});
    cases.push_back({"sub", [=] { return project(sub(a, b), w); }, {a, b}});
    cases.push_back({"mul", [=] { return project(mul(a, b), w); }, {a, b}});
    cases.push_back({"scale", [=] { return project(scale(a, -1.7), w); }, {a}});
    cases.push_back({"abs", [=] { return project(abs(a), w); }, {a}});
    cases.push_back({"relu", [=] { return project(relu(a), w); }, {a}});
    cases.push_back({"sigmoid", [=] { return project(sigmoid(scale(a, 3.0)), w); }, {a}});
    cases.push_back({"sum", [=] { return scale(sum(mul(a, a)), 0.5); }, {a}});
    cases.push_back({"mean", [=] { return mean(mul(a, b)); }, {a, b}});
  }
  {
    Tensor a = random_leaf(rng, s), slope = random_leaf(rng, {3}, 0.05, 0.5), w = weights(s);
    cases.push_back({"prelu", [=] { return project(prelu(a, slope), w); }, {a, slope}});
  }
  for (std::size_t ksize : {1, 3, 5}) {
    Tensor x = random_leaf(rng, {2, 3, 6, 5}), k = random_leaf(rng, {4, 3, ksize, ksize});
    Tensor bias = random_leaf(rng, {4}), w = weights({2, 4, 6, 5});
    cases.push_back({"conv2d(k=" + std::to_string(ksize) + ")",
                     [=] { return project(conv2d(x, k, bias), w); },
                     {x, k, bias}});
  }
  {
    Tensor a = random_leaf(rng, {1, 8, 3, 2}), w = weights({1, 2, 6, 4});
    cases.push_back({"pixel_shuffle", [=] { return project(pixel_shuffle(a, 2), w); }, {a}});
  }
  {
    Tensor mu = random_leaf(rng, s), t = sample_uniform(rng, s, -1.0, 1.0).detach();
    Tensor sigma = random_leaf(rng, s, 0.05, 0.6);
    const Tensor z = sample_standard_normal(rng, s);
    LossSpec spec;
    spec.kT = 0.7;
    cases.push_back({"l1_loss", [=] { return l1_loss(mu, t); }, {mu}});
    cases.push_back({"l2_loss", [=] { return l2_loss(mu, t, Reduction::sum); }, {mu}});
    cases.push_back({"expected_l1_trainable_sigma",
                     [=] { return expected_l1_trainable_sigma(mu, sigma, t, z, spec); },
                     {mu, sigma}});
    cases.push_back({"data_adaptive_loss", [=] { return data_adaptive_loss(mu, t, z, spec); }, {mu}});
    cases.push_back({"noise2noise_loss", [=] { return noise2noise_loss(mu, t, z, 0.3, spec).loss; }, {mu}});
    const Tensor mu_const = detach(mu);
    LossSpec aux = spec;
    aux.beta = 0.4;
    cases.push_back({"aux_sigma_loss", [=] { return aux_sigma_loss(sigma, mu_const, t, aux); }, {sigma}});
  }

  double worst_op = 0.0;
  std::string worst_name;
  for (auto& c : cases) {
    const double e = max_rel_error(autodiff_grads(c.loss, c.leaves), numeric_grads(c.loss, c.leaves));
    if (e > worst_op) {
      worst_op = e;
      worst_name = c.name;
    }
  }

  // Micro two-branch model: 2 features, 1 residual block, a 3-channel sigma
  // branch reading the input, 4x4 input at scale 2. Both outputs are
  // projected onto fixed random weights so every parameter gets a gradient.
  Rng mrng(31);
  TrunkConfig trunk;
  trunk.feature_channels = 2;
  trunk.n_resblocks = 1;
  trunk.scale = 2;
  SigmaBranchConfig branch;
  branch.channels = 3;
  branch.n_blocks = 2;
  branch.tap = SigmaTap::input;
  TwoBranchModel model = TwoBranchModel::build(trunk, branch, mrng);
  for (auto& p : model.parameters())
    if (p.name.ends_with(".bias"))
      for (auto& v : p.value.mutable_values()) v = 0.2 * (mrng.uniform() - 0.5);
  const Tensor x = sample_uniform(mrng, {1, 3, 4, 4}, 0.0, 1.0);
  const Tensor w_mu = sample_standard_normal(mrng, {1, 3, 8, 8});
  const Tensor w_sigma = sample_standard_normal(mrng, {1, 3, 8, 8});
  auto loss = [&] {
    const auto out = model.forward(x);
    return project(out.mu, w_mu) + project(*out.sigma, w_sigma);
  };
  std::vector<Tensor> leaves;
  for (const auto& p : model.parameters()) leaves.push_back(p.value);
  const double model_err = max_tensor_rel_error(autodiff_grads(loss, leaves), numeric_grads(loss, leaves));

  return {worst_op < 1e-4 && model_err < 1e-3,
          std::to_string(cases.size()) + " op cases, worst rel. error " + fmt(worst_op, 3) + " (" + worst_name +
              ", limit 1e-4); micro model " + fmt(model_err, 3) + " over " + std::to_string(leaves.size()) +
              " tensors (limit 1e-3)"};
}

// ---- 8 ---------------------------------------------------------------------------

Outcome check_training_comparison() {
  Stopwatch sw;
  const auto rep = training_comparison_experiment(DeskSetup(), {1, 2, 3}, 0.05);
  const double t = sw.seconds();
  std::map<std::string, std::string> p(rep.parameters.begin(), rep.parameters.end());
  auto param = [&](const std::string& k) { return p.count(k) ? p[k] : std::string("?"); };
  const bool ok = rep.passed() && t < 3600.0;
  return {ok, "mean PSNR l1 " + param("mean_psnr_l1") + " dB vs combined " + param("mean_psnr_combined") +
                  " dB (margin 0.05); residual PSNR sigma " + param("mean_sigma_residual_psnr") +
                  " dB vs constant " + param("mean_constant_residual_psnr") + " dB; " + fmt(t, 4) +
                  " s (limit 3600 s)" + failed_checks(rep)};
}

// ---- 9 ---------------------------------------------------------------------------

Outcome check_metric_closed_forms() {
  Rng rng(9);
  Image a(16, 16, 3);
  for (auto& v : a.values) v = 0.1 + 0.8 * rng.uniform();
  Image shifted = a;
  for (auto& v : shifted.values) v += 1.0 / 255.0;  // MSE of exactly 1 grey level squared
  const EvalProtocol rgb{EvalChannel::rgb, 0, 255.0, 99.0};
  const double p = psnr(a, shifted, rgb);
  const double s = ssim(a, a, rgb);
  const double s_y = ssim(a, a, EvalProtocol::for_scale(2));
  const double l = pll(a, Image(16, 16, 3, 1.0), a);
  const double l_ref = -0.5 * std::log(2.0 * std::numbers::pi);
  const bool ok = std::abs(p - 48.1308) <= 1e-4 && std::abs(s - 1.0) <= 1e-4 && std::abs(s_y - 1.0) <= 1e-4 &&
                  std::abs(l - (-0.9189385)) <= 1e-4 && std::abs(l - l_ref) <= 1e-12;
  return {ok, "PSNR(MSE=1) " + fmt(p, 9) + " (48.1308), SSIM(x,x) " + fmt(s, 12) + " rgb / " + fmt(s_y, 12) +
                  " y, PLL " + fmt(l, 9) + " (-0.9189385); tolerance 1e-4"};
}

// ---- 10 ---------------------------------------------------------------------------

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sigmasr");
  std::ostringstream out, err;
  const int code = tools::run(args, out, err);
  if (code != 0) std::cerr << "sigmasr exited " << code << ": " << err.str();
  return code;
}

std::map<std::string, std::string> artifacts(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext != ".csv" && ext != ".bin" && ext != ".pgm" && ext != ".ppm") continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), root).string()] = std::string((std::istreambuf_iterator<char>(in)), {});
  }
  return files;
}

Outcome check_cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "sigmasr_acceptance_determinism";
  fs::remove_all(root);
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    const std::string seed = "13";
    if (cli({"train", "--seed", seed, "--out", (dir / "train").string(), "--iters", "300", "--set",
             "train.checkpoint_every=100"}) != 0)
      return {false, "train failed"};
    fs::path ckpt;
    for (const auto& e : fs::directory_iterator(dir / "train"))
      if (e.path().extension() == ".bin" && (ckpt.empty() || e.path() > ckpt)) ckpt = e.path();
    if (cli({"eval", "--seed", seed, "--checkpoint", ckpt.string(), "--out", (dir / "eval").string()}) != 0)
      return {false, "eval failed"};
    if (cli({"analyze", "gradient-sign", "--seed", seed, "--out", (dir / "analyze").string()}) != 0)
      return {false, "analyze failed"};
  }
  const auto a = artifacts(root / "a"), b = artifacts(root / "b");
  std::size_t csv = 0, bin = 0, differing = 0;
  for (const auto& [name, bytes] : a) {
    (name.ends_with(".bin") ? bin : csv) += 1;
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) ++differing;
  }
  const bool ok = !a.empty() && a.size() == b.size() && differing == 0 && bin > 0 && csv > 0;
  fs::remove_all(root);
  return {ok, "train/eval/analyze twice with seed 13: " + std::to_string(csv) + " CSV and " + std::to_string(bin) +
                  " checkpoint files, " + std::to_string(differing) + " differing"};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient sign invariance", check_gradient_sign},
      {"expected gradient magnitude", check_gradient_magnitude},
      {"expectation identity", check_expectation_identity},
      {"jensen gap", check_jensen},
      {"noise2noise sign flips", check_noise2noise},
      {"sigma degradation", check_sigma_degradation},
      {"autodiff soundness", check_autodiff_soundness},
      {"training improvement direction", check_training_comparison},
      {"metric closed forms", check_metric_closed_forms},
      {"cli determinism", check_cli_determinism},
  };

  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "usage: " << argv[0] << " [criterion 1-" << criteria.size() << "]...\n";
      return 2;
    }
    selected.insert(static_cast<std::size_t>(n));
  }

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
