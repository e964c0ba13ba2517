#include "sigmasr/models.hpp"

#include <cmath>
#include <stdexcept>

namespace sigmasr {

namespace {

enum class Init { conv_weight, zero, prelu_slope };

struct Declared {
  std::string name;
  Shape shape;
  Init init;
};

constexpr double kPreluInitSlope = 0.25;

void declare_conv(std::vector<Declared>& out, const std::string& name, int in, int o, int k) {
  const auto ks = static_cast<std::size_t>(k);
  out.push_back({name + ".weight", {static_cast<std::size_t>(o), static_cast<std::size_t>(in), ks, ks},
                 Init::conv_weight});
  out.push_back({name + ".bias", {static_cast<std::size_t>(o)}, Init::zero});
}

std::vector<Declared> declare_trunk(const TrunkConfig& t) {
  std::vector<Declared> d;
  const int f = t.feature_channels;
  declare_conv(d, "trunk.head", t.in_channels, f, 3);
  for (int b = 0; b < t.n_resblocks; ++b) {
    const std::string base = "trunk.body." + std::to_string(b);
    declare_conv(d, base + ".conv1", f, f, 3);
    declare_conv(d, base + ".conv2", f, f, 3);
  }
  declare_conv(d, "trunk.body.tail", f, f, 3);
  declare_conv(d, "trunk.up.expand", f, f * t.scale * t.scale, 3);
  declare_conv(d, "trunk.up.out", f, t.in_channels, 3);
  return d;
}

std::vector<Declared> declare_sigma(const TrunkConfig& t, const SigmaBranchConfig& s) {
  std::vector<Declared> d;
  int in = s.tap == SigmaTap::features ? t.feature_channels : t.in_channels;
  for (int b = 0; b < s.n_blocks; ++b) {
    const std::string base = "sigma.block." + std::to_string(b);
    declare_conv(d, base + ".conv", in, s.channels, s.kernel);
    d.push_back({base + ".prelu", {static_cast<std::size_t>(s.channels)}, Init::prelu_slope});
    in = s.channels;
  }
  declare_conv(d, "sigma.up.expand", in, in * t.scale * t.scale, 3);
  declare_conv(d, "sigma.up.out", in, t.in_channels, 3);
  return d;
}

Tensor init_tensor(const Declared& decl, Rng& rng) {
  const std::size_t n = shape_numel(decl.shape);
  std::vector<double> v(n, 0.0);
  switch (decl.init) {
    case Init::conv_weight: {
      const double fan_in = static_cast<double>(decl.shape[1] * decl.shape[2] * decl.shape[3]);
      const double bound = 1.0 / std::sqrt(fan_in);
      for (auto& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
      break;
    }
    case Init::zero:
      break;
    case Init::prelu_slope:
      std::fill(v.begin(), v.end(), kPreluInitSlope);
      break;
  }
  return Tensor::from(decl.shape, std::move(v), true);
}

}  // namespace

void TrunkConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("trunk: in_channels must be >= 1");
  if (feature_channels < 1) throw std::invalid_argument("trunk: feature_channels must be >= 1");
  if (n_resblocks < 0) throw std::invalid_argument("trunk: n_resblocks must be >= 0");
  if (scale < 2 || scale > 4) throw std::invalid_argument("trunk: scale must be 2, 3 or 4");
}

void SigmaBranchConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("sigma branch: channels must be >= 1");
  if (n_blocks < 1) throw std::invalid_argument("sigma branch: n_blocks must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("sigma branch: kernel must be odd");
}

std::string_view to_string(SigmaTap tap) { return tap == SigmaTap::features ? "features" : "input"; }

SigmaTap parse_sigma_tap(std::string_view s) {
  if (s == "features") return SigmaTap::features;
  if (s == "input") return SigmaTap::input;
  throw std::invalid_argument("unknown sigma tap '" + std::string(s) + "'");
}

TwoBranchModel TwoBranchModel::build(const TrunkConfig& trunk, const std::optional<SigmaBranchConfig>& sigma,
                                     Rng& rng) {
  trunk.validate();
  if (sigma) sigma->validate();
  std::vector<Parameter> params;
  for (const auto& decl : declare_trunk(trunk)) params.push_back({decl.name, init_tensor(decl, rng)});
  if (sigma) {
    for (const auto& decl : declare_sigma(trunk, *sigma)) params.push_back({decl.name, init_tensor(decl, rng)});
  }
  return from_parameters(trunk, sigma, std::move(params));
}

TwoBranchModel TwoBranchModel::from_parameters(const TrunkConfig& trunk, const std::optional<SigmaBranchConfig>& sigma,
                                               std::vector<Parameter> params) {
  trunk.validate();
  if (sigma) sigma->validate();
  auto declared = declare_trunk(trunk);
  const std::size_t n_trunk = declared.size();
  if (sigma) {
    auto s = declare_sigma(trunk, *sigma);
    declared.insert(declared.end(), s.begin(), s.end());
  }
  if (declared.size() != params.size()) {
    throw std::invalid_argument("model: expected " + std::to_string(declared.size()) + " parameter tensors, got " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < declared.size(); ++i) {
    if (declared[i].name != params[i].name || declared[i].shape != params[i].value.shape()) {
      throw std::invalid_argument("model: parameter " + std::to_string(i) + " is " + params[i].name +
                                  shape_to_string(params[i].value.shape()) + ", expected " + declared[i].name +
                                  shape_to_string(declared[i].shape));
    }
    if (!params[i].value.requires_grad()) {
      params[i].value = Tensor::from(params[i].value.shape(),
                                     std::vector<double>(params[i].value.values().begin(), params[i].value.values().end()),
                                     true);
    }
  }
  TwoBranchModel m;
  m.trunk_ = trunk;
  m.sigma_ = sigma;
  m.params_ = std::move(params);
  m.n_trunk_params_ = n_trunk;
  return m;
}

TwoBranchModel::Features TwoBranchModel::run_trunk(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(trunk_.in_channels)) {
    throw std::invalid_argument("model: input must be N×" + std::to_string(trunk_.in_channels) + "×h×w, got " +
                                shape_to_string(x.shape()));
  }
  ++trunk_evals_;
  std::size_t i = 0;
  auto conv = [&](const Tensor& in) {
    Tensor out = conv2d(in, param(i), param(i + 1));
    i += 2;
    return out;
  };
  const Tensor head = conv(x);
  Tensor h = head;
  for (int b = 0; b < trunk_.n_resblocks; ++b) {
    Tensor r = relu(conv(h));
    h = h + conv(r);
  }
  Tensor features = conv(h) + head;
  Tensor up = pixel_shuffle(conv(features), static_cast<std::size_t>(trunk_.scale));
  Tensor mu = conv(up);
  return {features, mu};
}

Tensor TwoBranchModel::run_sigma(const Tensor& x, const Tensor& features) const {
  ++sigma_evals_;
  std::size_t i = n_trunk_params_;
  // The branch reads the trunk features but never trains them: its losses
  // must leave the mu trunk's gradients untouched.
  Tensor h = sigma_->tap == SigmaTap::features ? features.detach() : x;
  for (int b = 0; b < sigma_->n_blocks; ++b) {
    h = prelu(conv2d(h, param(i), param(i + 1)), param(i + 2));
    i += 3;
  }
  h = pixel_shuffle(conv2d(h, param(i), param(i + 1)), static_cast<std::size_t>(trunk_.scale));
  return sigmoid(conv2d(h, param(i + 2), param(i + 3)));
}

ModelOutput TwoBranchModel::forward(const Tensor& x, bool with_sigma) const {
  auto [features, mu] = run_trunk(x);
  ModelOutput out{mu, std::nullopt};
  if (with_sigma && sigma_) out.sigma = run_sigma(x, features);
  return out;
}

Tensor TwoBranchModel::forward_mu(const Tensor& x) const { return run_trunk(x).mu; }

std::size_t TwoBranchModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void TwoBranchModel::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

std::size_t expected_parameter_count(const TrunkConfig& trunk, const std::optional<SigmaBranchConfig>& sigma) {
  auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; };
  const std::size_t f = static_cast<std::size_t>(trunk.feature_channels);
  const std::size_t c_in = static_cast<std::size_t>(trunk.in_channels);
  const std::size_t s2 = static_cast<std::size_t>(trunk.scale * trunk.scale);
  std::size_t n = conv(c_in, f, 3) + 2 * static_cast<std::size_t>(trunk.n_resblocks) * conv(f, f, 3) +
                  conv(f, f, 3) + conv(f, f * s2, 3) + conv(f, c_in, 3);
  if (sigma) {
    const std::size_t c = static_cast<std::size_t>(sigma->channels);
    const std::size_t k = static_cast<std::size_t>(sigma->kernel);
    const std::size_t tap = sigma->tap == SigmaTap::features ? f : c_in;
    n += conv(tap, c, k) + c;
    n += static_cast<std::size_t>(sigma->n_blocks - 1) * (conv(c, c, k) + c);
    n += conv(c, c * s2, 3) + conv(c, c_in, 3);
  }
  return n;
}

}  // namespace sigmasr
