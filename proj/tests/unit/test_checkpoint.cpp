#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sigmasr/checkpoint.hpp"

namespace sigmasr {
namespace {

namespace fs = std::filesystem;

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sigmasr_ckpt_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static TwoBranchModel model(bool with_sigma) {
    TrunkConfig t;
    t.feature_channels = 4;
    t.n_resblocks = 1;
    t.scale = 3;
    SigmaBranchConfig s;
    s.channels = 5;
    s.n_blocks = 2;
    s.tap = SigmaTap::input;
    Rng rng(12);
    return TwoBranchModel::build(t, with_sigma ? std::optional(s) : std::nullopt, rng);
  }

  static std::vector<char> bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }
  static void write_bytes(const fs::path& p, const std::vector<char>& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  }

  fs::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsExact) {
  for (bool with_sigma : {true, false}) {
    const auto m = model(with_sigma);
    const fs::path p = dir_ / "m.ckpt";
    save_checkpoint(m, p);
    const auto back = load_checkpoint(p);
    EXPECT_EQ(back.has_sigma_branch(), with_sigma);
    EXPECT_EQ(back.trunk_config().scale, 3);
    EXPECT_EQ(back.trunk_config().feature_channels, 4);
    if (with_sigma) {
      EXPECT_EQ(back.sigma_config()->channels, 5);
      EXPECT_EQ(back.sigma_config()->tap, SigmaTap::input);
    }
    ASSERT_EQ(back.parameters().size(), m.parameters().size());
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
      EXPECT_EQ(back.parameters()[i].name, m.parameters()[i].name);
      const auto a = m.parameters()[i].value.values(), b = back.parameters()[i].value.values();
      ASSERT_EQ(a.size(), b.size());
      EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
      EXPECT_TRUE(back.parameters()[i].value.requires_grad());
    }
    // Saving the loaded model reproduces the file byte for byte.
    save_checkpoint(back, dir_ / "again.ckpt");
    EXPECT_EQ(bytes(p), bytes(dir_ / "again.ckpt"));
  }
}

TEST_F(CheckpointTest, HeaderLayout) {
  const fs::path p = dir_ / "m.ckpt";
  save_checkpoint(model(true), p);
  const auto b = bytes(p);
  ASSERT_GT(b.size(), 12u);
  EXPECT_EQ(std::string(b.data(), 7), "SIGMASR");
  EXPECT_EQ(b[7], '\0');
  EXPECT_EQ(static_cast<unsigned char>(b[8]), kCheckpointVersion);
  EXPECT_EQ(b[9], 0);
  // in_channels = 3 follows as a little-endian i32.
  EXPECT_EQ(b[12], 3);
}

TEST_F(CheckpointTest, ManifestListsEveryTensor) {
  const auto m = model(true);
  const fs::path p = dir_ / "m.ckpt";
  save_checkpoint(m, p);
  std::ifstream in(manifest_path(p));
  ASSERT_TRUE(in);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "sigmasr-checkpoint v1");
  std::getline(in, line);
  EXPECT_EQ(line.front(), '#');
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string name, shape, checksum;
    std::size_t numel = 0;
    ls >> name >> shape >> numel >> checksum;
    ASSERT_LT(rows, m.parameters().size());
    const auto& param = m.parameters()[rows];
    EXPECT_EQ(name, param.name);
    EXPECT_EQ(numel, param.value.numel());
    EXPECT_EQ(checksum.size(), 16u);
    EXPECT_EQ(std::stoull(checksum, nullptr, 16), fnv1a64(param.value.values()));
    ++rows;
  }
  EXPECT_EQ(rows, m.parameters().size());
}

TEST_F(CheckpointTest, CorruptionIsReported) {
  const fs::path p = dir_ / "m.ckpt";
  save_checkpoint(model(true), p);
  const auto good = bytes(p);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  write_bytes(p, bad_magic);
  EXPECT_THROW(load_checkpoint(p), CheckpointError);

  auto bad_version = good;
  bad_version[8] = 9;
  write_bytes(p, bad_version);
  EXPECT_THROW(load_checkpoint(p), CheckpointError);

  write_bytes(p, std::vector<char>(good.begin(), good.end() - 5));
  EXPECT_THROW(load_checkpoint(p), CheckpointError);

  auto trailing = good;
  trailing.push_back('x');
  write_bytes(p, trailing);
  EXPECT_THROW(load_checkpoint(p), CheckpointError);

  EXPECT_THROW(load_checkpoint(dir_ / "missing.ckpt"), CheckpointError);
}

TEST(Fnv1a, KnownVectors) {
  // Reference values of the 64-bit FNV-1a hash.
  EXPECT_EQ(fnv1a64_bytes({}), 0xcbf29ce484222325ULL);
  const unsigned char a[] = {'a'};
  EXPECT_EQ(fnv1a64_bytes(a), 0xaf63dc4c8601ec8cULL);
  const unsigned char foobar[] = {'f', 'o', 'o', 'b', 'a', 'r'};
  EXPECT_EQ(fnv1a64_bytes(foobar), 0x85944171f73967e8ULL);
}

TEST(Fnv1a, HashesLittleEndianDoubleBytes) {
  const double v[] = {1.0};
  // 1.0 is 0x3ff0000000000000: six zero bytes, then 0xf0, 0x3f.
  const unsigned char le[] = {0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
  EXPECT_EQ(fnv1a64(v), fnv1a64_bytes(le));
}

}  // namespace
}  // namespace sigmasr
