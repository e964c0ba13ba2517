#include "sigmasr/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace sigmasr {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'I', 'G', 'M', 'A', 'S', 'R', '\0'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  template <class T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<unsigned char>((u >> (8 * i)) & 0xFF));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<unsigned char>& data() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T le() {
    using U = std::make_unsigned_t<T>;
    need(sizeof(T));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> le_bytes(std::span<const double> values) {
  Writer w;
  for (double v : values) w.f64(v);
  return w.data();
}

}  // namespace

std::uint64_t fnv1a64_bytes(std::span<const unsigned char> bytes, std::uint64_t hash) {
  for (unsigned char b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t fnv1a64(std::span<const double> values) { return fnv1a64_bytes(le_bytes(values)); }

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".manifest";
  return p;
}

void save_checkpoint(const TwoBranchModel& model, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.le<std::uint32_t>(kCheckpointVersion);
  const auto& t = model.trunk_config();
  w.le<std::int32_t>(t.in_channels);
  w.le<std::int32_t>(t.feature_channels);
  w.le<std::int32_t>(t.n_resblocks);
  w.le<std::int32_t>(t.scale);
  const auto& s = model.sigma_config();
  w.le<std::uint8_t>(s ? 1 : 0);
  w.le<std::int32_t>(s ? s->channels : 0);
  w.le<std::int32_t>(s ? s->n_blocks : 0);
  w.le<std::int32_t>(s ? s->kernel : 0);
  w.le<std::uint8_t>(s && s->tap == SigmaTap::input ? 1 : 0);

  const auto& params = model.parameters();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  std::ostringstream manifest;
  manifest << "sigmasr-checkpoint v" << kCheckpointVersion << '\n';
  manifest << "# name shape numel fnv1a64\n";
  for (const auto& p : params) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    const auto& shape = p.value.shape();
    w.le<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.le<std::uint64_t>(d);
    for (double v : p.value.values()) w.f64(v);
    manifest << p.name << ' ' << shape_to_string(shape) << ' ' << p.value.numel() << ' ' << std::hex
             << std::setw(16) << std::setfill('0') << fnv1a64(p.value.values()) << std::dec << '\n';
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
  std::ofstream man(manifest_path(path), std::ios::binary | std::ios::trunc);
  man << manifest.str();
  if (!out || !man) throw CheckpointError("checkpoint: write failed for " + path.string());
}

TwoBranchModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data));

  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw CheckpointError("checkpoint: bad magic in " + path.string());
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  TrunkConfig t;
  t.in_channels = r.le<std::int32_t>();
  t.feature_channels = r.le<std::int32_t>();
  t.n_resblocks = r.le<std::int32_t>();
  t.scale = r.le<std::int32_t>();
  std::optional<SigmaBranchConfig> s;
  const bool has_sigma = r.le<std::uint8_t>() != 0;
  SigmaBranchConfig sc;
  sc.channels = r.le<std::int32_t>();
  sc.n_blocks = r.le<std::int32_t>();
  sc.kernel = r.le<std::int32_t>();
  sc.tap = r.le<std::uint8_t>() != 0 ? SigmaTap::input : SigmaTap::features;
  if (has_sigma) s = sc;

  const auto count = r.le<std::uint32_t>();
  std::vector<Parameter> params;
  params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.le<std::uint32_t>(), '\0');
    r.bytes(name.data(), name.size());
    Shape shape(r.le<std::uint32_t>());
    for (auto& d : shape) d = r.le<std::uint64_t>();
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = r.f64();
    params.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values), true)});
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes in " + path.string());
  try {
    return TwoBranchModel::from_parameters(t, s, std::move(params));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace sigmasr
