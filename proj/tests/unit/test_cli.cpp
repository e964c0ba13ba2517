#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sigmasr/checkpoint.hpp"
#include "sigmasr/evaluation.hpp"
#include "sigmasr_tools/cli.hpp"
#include "sigmasr_tools/config.hpp"

namespace sigmasr::tools {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out, err;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("sigmasr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  static Result call(std::vector<std::string> args) {
    args.insert(args.begin(), "sigmasr");
    std::ostringstream out, err;
    Result r;
    r.code = run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
  }

  // A model and dataset small enough for a few iterations per test.
  static std::vector<std::string> tiny(std::vector<std::string> args) {
    for (const char* kv : {"model.features=4", "model.resblocks=1", "model.sigma_channels=4", "model.sigma_blocks=1",
                           "train.batch=2", "train.patch=8", "data.synthetic_images=2", "data.image_size=32",
                           "data.eval_images=1"}) {
      args.push_back("--set");
      args.push_back(kv);
    }
    return args;
  }

  Result train(const fs::path& out, const std::string& loss, int iters = 6, std::uint64_t seed = 1) {
    return call(tiny({"train", "--out", out.string(), "--seed", std::to_string(seed), "--loss", loss, "--iters",
                      std::to_string(iters)}));
  }

  static fs::path last_checkpoint(const fs::path& dir) {
    fs::path best;
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.starts_with("ckpt_") && e.path().extension() == ".bin" && (best.empty() || e.path() > best)) {
        best = e.path();
      }
    }
    return best;
  }

  fs::path root_;
};

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(call({}).code, kExitUsage);
  EXPECT_EQ(call({"fly"}).code, kExitUsage);
  EXPECT_EQ(call({"train", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(call({"train", "--config", (root_ / "missing.toml").string()}).code, kExitUsage);
  const auto unknown_key = call({"train", "--out", root_.string(), "--set", "model.depth=3"});
  EXPECT_EQ(unknown_key.code, kExitUsage);
  EXPECT_NE(unknown_key.err.find("model.depth"), std::string::npos);
  EXPECT_EQ(call({"train", "--out", root_.string(), "--loss", "l3"}).code, kExitUsage);
  EXPECT_EQ(call({"analyze", "voodoo"}).code, kExitUsage);
  EXPECT_EQ(call({"eval", "--out", root_.string()}).code, kExitUsage);
  EXPECT_EQ(call({"uncertainty", "--out", root_.string(), "--checkpoint", "x"}).code, kExitUsage);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = call({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  for (const char* sub : {"train", "eval", "analyze", "uncertainty"}) EXPECT_NE(r.out.find(sub), std::string::npos);
}

TEST_F(CliTest, UnknownKeyInConfigFileExitsTwo) {
  std::ofstream(root_ / "bad.toml") << "[train]\nwarmup = 3\n";
  EXPECT_EQ(call({"train", "--config", (root_ / "bad.toml").string(), "--out", root_.string()}).code, kExitUsage);
}

TEST_F(CliTest, TrainWritesTelemetryCheckpointsAndConfigEcho) {
  const auto r = train(root_ / "run", "data_adaptive");
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(root_ / "run" / "telemetry.csv"));
  EXPECT_FALSE(last_checkpoint(root_ / "run").empty());
  const std::string telemetry = read_file(root_ / "run" / "telemetry.csv");
  EXPECT_EQ(telemetry.rfind("# variant=data_adaptive seed=1", 0), 0u);
  EXPECT_NE(telemetry.find("\niter,loss,mean_sigma,lr,wall_ms\n"), std::string::npos);

  // The echo reproduces the run's configuration.
  RunConfig echoed;
  echoed.load_file(root_ / "run" / "effective_config.toml");
  EXPECT_EQ(echoed.train.total_iters, 6);
  EXPECT_EQ(echoed.trunk.feature_channels, 4);
  EXPECT_EQ(echoed.train.loss.variant, LossVariant::data_adaptive);
  EXPECT_EQ(echoed.out, root_ / "run");
}

TEST_F(CliTest, ConfigFileAndOverrides) {
  std::ofstream(root_ / "desk.toml") << "seed = 4\n[train]\niters = 3\n[loss]\nvariant = \"l1\"\n";
  const auto r = call(tiny({"train", "--config", (root_ / "desk.toml").string(), "--out", (root_ / "run").string(),
                            "--iters", "2"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  RunConfig echoed;
  echoed.load_file(root_ / "run" / "effective_config.toml");
  EXPECT_EQ(echoed.seed, 4u);
  EXPECT_EQ(echoed.train.total_iters, 2);
  EXPECT_EQ(echoed.train.loss.variant, LossVariant::l1);
}

TEST_F(CliTest, TelemetryHeaderRecordsTheVariant) {
  ASSERT_EQ(train(root_ / "a", "l1").code, kExitOk);
  ASSERT_EQ(train(root_ / "b", "data_adaptive").code, kExitOk);
  const std::string a = read_file(root_ / "a" / "telemetry.csv");
  const std::string b = read_file(root_ / "b" / "telemetry.csv");
  EXPECT_EQ(a.substr(0, a.find('\n')).find("variant=l1"), 2u);
  EXPECT_EQ(b.substr(0, b.find('\n')).find("variant=data_adaptive"), 2u);
}

TEST_F(CliTest, SameSeedGivesIdenticalArtifacts) {
  ASSERT_EQ(train(root_ / "a", "data_adaptive", 8, 3).code, kExitOk);
  ASSERT_EQ(train(root_ / "b", "data_adaptive", 8, 3).code, kExitOk);
  EXPECT_EQ(read_file(root_ / "a" / "telemetry.csv"), read_file(root_ / "b" / "telemetry.csv"));
  const auto ca = last_checkpoint(root_ / "a"), cb = last_checkpoint(root_ / "b");
  EXPECT_EQ(ca.filename(), cb.filename());
  EXPECT_EQ(read_file(ca), read_file(cb));
  ASSERT_EQ(train(root_ / "c", "data_adaptive", 8, 4).code, kExitOk);
  EXPECT_NE(read_file(root_ / "a" / "telemetry.csv"), read_file(root_ / "c" / "telemetry.csv"));
}

TEST_F(CliTest, EvalWritesPerImageAndMeanRows) {
  ASSERT_EQ(train(root_ / "run", "data_adaptive").code, kExitOk);
  const auto ckpt = last_checkpoint(root_ / "run");
  const auto y = call(tiny({"eval", "--checkpoint", ckpt.string(), "--out", (root_ / "y").string(), "--split", "train"}));
  ASSERT_EQ(y.code, kExitOk) << y.err;
  const auto rgb = call(tiny({"eval", "--checkpoint", ckpt.string(), "--out", (root_ / "rgb").string(), "--split",
                              "train", "--channel", "rgb"}));
  ASSERT_EQ(rgb.code, kExitOk) << rgb.err;
  std::istringstream ys(read_file(root_ / "y" / "eval.csv")), rs(read_file(root_ / "rgb" / "eval.csv"));
  std::vector<std::string> ylines, rlines;
  for (std::string l; std::getline(ys, l);) ylines.push_back(l);
  for (std::string l; std::getline(rs, l);) rlines.push_back(l);
  ASSERT_EQ(ylines.size(), 4u);  // header, two images, mean
  EXPECT_EQ(ylines[0], "image,psnr,ssim,pll,residual_psnr");
  EXPECT_EQ(ylines[3].rfind("mean,", 0), 0u);
  auto psnr_of = [](const std::string& line) {
    const auto a = line.find(',');
    return std::stod(line.substr(a + 1, line.find(',', a + 1) - a - 1));
  };
  EXPECT_NE(psnr_of(ylines[1]), psnr_of(rlines[1]));
  EXPECT_TRUE(std::isfinite(psnr_of(ylines[3])));
  EXPECT_NE(y.out.find("bicubic"), std::string::npos);
}

TEST_F(CliTest, EvalOnExplicitImagesAndMissingCheckpoint) {
  ASSERT_EQ(train(root_ / "run", "l1").code, kExitOk);
  Image img(20, 20, 3, 0.4);
  for (int x = 0; x < 20; ++x) img.at(1, 5, x) = 0.9;
  save_pnm(img, root_ / "probe.ppm");
  const auto r = call(tiny({"eval", "--checkpoint", last_checkpoint(root_ / "run").string(), "--out",
                            (root_ / "e").string(), "--input", (root_ / "probe.ppm").string()}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(read_file(root_ / "e" / "eval.csv").find("\nprobe.ppm,"), std::string::npos);
  EXPECT_EQ(call({"eval", "--checkpoint", (root_ / "none.bin").string(), "--out", root_.string()}).code, kExitFailure);
}

TEST_F(CliTest, AnalyzeGradientSignReportsZeroViolations) {
  const auto r = call({"analyze", "gradient-sign", "-n", "10000", "--out", root_.string()});
  ASSERT_EQ(r.code, kExitOk) << r.out << r.err;
  EXPECT_NE(r.out.find("violations: 0\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(root_ / "reports" / "gradient-sign" / "1.csv"));
}

TEST_F(CliTest, AnalyzeJensenWritesMonotoneGapColumn) {
  const auto r = call({"analyze", "jensen", "-n", "20000", "--seed", "2", "--out", root_.string()});
  ASSERT_EQ(r.code, kExitOk) << r.out;
  std::istringstream csv(read_file(root_ / "reports" / "jensen" / "2.csv"));
  std::string header;
  std::getline(csv, header);
  // Find the closed-form gap column and check it never decreases down the grid.
  std::vector<std::string> cols;
  std::istringstream hs(header);
  for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
  const auto it = std::find(cols.begin(), cols.end(), "gap_closed_form");
  ASSERT_NE(it, cols.end()) << header;
  const auto col = static_cast<std::size_t>(it - cols.begin());
  double prev = -1.0;
  int rows = 0;
  for (std::string line; std::getline(csv, line);) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) f.push_back(c);
    ASSERT_GT(f.size(), col);
    const double g = std::stod(f[col]);
    EXPECT_GE(g, prev);
    prev = g;
    ++rows;
  }
  EXPECT_EQ(rows, 7);  // the default grid
}

TEST_F(CliTest, AnalyzeIsDeterministic) {
  ASSERT_EQ(call({"analyze", "noise2noise", "-n", "50000", "--out", (root_ / "a").string()}).code, kExitOk);
  ASSERT_EQ(call({"analyze", "noise2noise", "-n", "50000", "--out", (root_ / "b").string()}).code, kExitOk);
  EXPECT_EQ(read_file(root_ / "a" / "reports" / "noise2noise" / "1.csv"),
            read_file(root_ / "b" / "reports" / "noise2noise" / "1.csv"));
}

TEST_F(CliTest, UncertaintyMapsMatchSrDimensionsAndMetrics) {
  ASSERT_EQ(train(root_ / "run", "data_adaptive").code, kExitOk);
  const auto ckpt = last_checkpoint(root_ / "run");
  Rng rng(3);
  const Image hr = synth_dataset(1, 24, rng).front();
  save_pnm(hr, root_ / "hr.ppm");
  const auto r = call({"uncertainty", "--checkpoint", ckpt.string(), "--hr", (root_ / "hr.ppm").string(), "--out",
                       (root_ / "u").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Image sr = load_pnm(root_ / "u" / "sr.ppm");
  const Image sigma = load_pnm(root_ / "u" / "sigma.ppm");
  const Image residual = load_pnm(root_ / "u" / "residual.ppm");
  EXPECT_EQ(sr.width, 24);
  EXPECT_TRUE(sigma.same_dims(sr));
  EXPECT_TRUE(residual.same_dims(sr));

  // The printed value agrees with the metrics module on the same prediction.
  const auto model = load_checkpoint(ckpt);
  const Image hr_loaded = load_pnm(root_ / "hr.ppm");
  const auto pred = super_resolve(model, bicubic_resize(hr_loaded, 2.0, ResizeDirection::down), true);
  const double expected = residual_psnr(*pred.sigma, residual_map(hr_loaded, pred.mu));
  const auto pos = r.out.find("residual_psnr: ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_NEAR(std::stod(r.out.substr(pos + 15)), expected, 1e-8 * std::abs(expected));
}

TEST_F(CliTest, UncertaintyNeedsASigmaBranch) {
  ASSERT_EQ(train(root_ / "run", "l1").code, kExitOk);
  Image hr(16, 16, 3, 0.5);
  save_pnm(hr, root_ / "hr.ppm");
  const auto r = call({"uncertainty", "--checkpoint", last_checkpoint(root_ / "run").string(), "--hr",
                       (root_ / "hr.ppm").string(), "--out", (root_ / "u").string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("sigma branch"), std::string::npos);
}

TEST_F(CliTest, PerfectPredictionRendersWhiteResidual) {
  // Dark means large: a zero residual renders as pure white.
  Image zero(4, 4, 3, 0.0);
  const Image rendered = render_dark_is_large(zero);
  for (double v : rendered.values) EXPECT_EQ(v, 1.0);
  Image big(1, 1, 1, 2.0);
  EXPECT_EQ(render_dark_is_large(big).values[0], 0.0);
  EXPECT_THROW(render_dark_is_large(zero, 0.0), std::invalid_argument);
}

}  // namespace
}  // namespace sigmasr::tools
