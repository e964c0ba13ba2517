#include "sigmasr/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace sigmasr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + shape_to_string(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return impl;
}

const TensorImpl& checked(const Tensor& t, const char* what) {
  if (!t.defined()) {
    throw std::invalid_argument(std::string(what) + ": undefined tensor");
  }
  return *t.impl();
}

// Builds the output tensor and, when any input needs a gradient, records the
// node that produced it.
Tensor record(OpKind kind, Shape shape, std::vector<double> values,
              std::vector<std::shared_ptr<TensorImpl>> inputs, Node::BackwardFn fn) {
  auto out = make_impl(std::move(shape), std::move(values));
  const bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [](const auto& in) { return in->requires_grad; });
  if (needs_grad) {
    out->requires_grad = true;
    out->node = std::make_shared<Node>(Node{kind, std::move(inputs), std::move(fn)});
  }
  return Tensor(std::move(out));
}

void accumulate(std::vector<double>* dst, std::size_t n) {
  if (dst->size() != n) dst->assign(n, 0.0);
}

enum class Broadcast { same, scalar, suffix };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::same;
  if (shape_numel(b) == 1) return Broadcast::scalar;
  if (b.size() < a.size() && std::equal(b.begin(), b.end(), a.end() - static_cast<long>(b.size()))) {
    return Broadcast::suffix;
  }
  throw std::invalid_argument(std::string(op) + ": cannot broadcast " + shape_to_string(b) +
                              " onto " + shape_to_string(a));
}

template <class Fwd, class GradA, class GradB>
Tensor binary(OpKind kind, const Tensor& a, const Tensor& b, Fwd fwd, GradA grad_a, GradB grad_b) {
  const auto& ai = checked(a, op_name(kind));
  const auto& bi = checked(b, op_name(kind));
  broadcast_kind(ai.shape, bi.shape, op_name(kind));
  const std::size_t n = ai.values.size();
  const std::size_t m = bi.values.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ai.values[i], bi.values[i % m]);
  auto a_impl = a.impl();
  auto b_impl = b.impl();
  return record(kind, ai.shape, std::move(out), {a_impl, b_impl},
                [a_impl, b_impl, n, m, grad_a, grad_b](std::span<const double> g,
                                                      std::span<std::vector<double>*> gin) {
                  const auto& av = a_impl->values;
                  const auto& bv = b_impl->values;
                  if (gin[0]) {
                    accumulate(gin[0], n);
                    auto& ga = *gin[0];
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * grad_a(av[i], bv[i % m]);
                  }
                  if (gin[1]) {
                    accumulate(gin[1], m);
                    auto& gb = *gin[1];
                    for (std::size_t i = 0; i < n; ++i) gb[i % m] += g[i] * grad_b(av[i], bv[i % m]);
                  }
                });
}

template <class Fwd, class Deriv>
Tensor unary(OpKind kind, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto& ai = checked(a, op_name(kind));
  const std::size_t n = ai.values.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ai.values[i]);
  auto a_impl = a.impl();
  return record(kind, ai.shape, std::move(out), {a_impl},
                [a_impl, n, deriv](std::span<const double> g, std::span<std::vector<double>*> gin) {
                  if (!gin[0]) return;
                  accumulate(gin[0], n);
                  auto& ga = *gin[0];
                  for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * deriv(a_impl->values[i]);
                });
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Valid destination range [lo, hi) for a row shifted by d within [0, n).
inline void shifted_range(long d, std::size_t n, std::size_t& lo, std::size_t& hi) {
  const long ln = static_cast<long>(n);
  lo = static_cast<std::size_t>(std::clamp(-d, 0L, ln));
  hi = static_cast<std::size_t>(std::clamp(ln - d, 0L, ln));
  if (hi < lo) hi = lo;
}

// Unfolds one image (C×H×W) into a (C·k·k)×(H·W) patch matrix.
void im2col(const double* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            int pad, double* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * hw;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        std::size_t x0 = 0, x1 = 0;
        shifted_range(dx, w, x0, x1);
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          double* dst = row + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = img + (c * h + static_cast<std::size_t>(sy)) * w;
          // The padded margins are at most (k - 1) / 2 wide.
          for (std::size_t x = 0; x < x0; ++x) dst[x] = 0.0;
          for (std::size_t x = x0; x < x1; ++x) dst[x] = src[static_cast<long>(x) + dx];
          for (std::size_t x = x1; x < w; ++x) dst[x] = 0.0;
        }
      }
    }
  }
}

void col2im(const double* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            int pad, double* img) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * hw;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        std::size_t x0 = 0, x1 = 0;
        shifted_range(dx, w, x0, x1);
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          double* dst = img + (c * h + static_cast<std::size_t>(sy)) * w + dx;
          const double* src = row + y * w;
          for (std::size_t x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::abs: return "abs";
    case OpKind::relu: return "relu";
    case OpKind::prelu: return "prelu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::conv2d: return "conv2d";
    case OpKind::pixel_shuffle: return "pixel_shuffle";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
  }
  return "?";
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  auto impl = make_impl(std::move(shape), std::vector<double>(n, value));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  auto impl = make_impl(std::move(shape), std::move(values));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(std::initializer_list<double> values, bool requires_grad) {
  return from(Shape{values.size()}, std::vector<double>(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from(Shape{}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return checked(*this, "shape").shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw std::out_of_range("tensor: axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(*this, "numel").values.size(); }

std::span<const double> Tensor::values() const { return checked(*this, "values").values; }

std::span<double> Tensor::mutable_values() {
  checked(*this, "mutable_values");
  if (impl_->node) throw std::logic_error("tensor: values of a recorded op are read-only");
  return impl_->values;
}

double Tensor::item() const {
  const auto& impl = checked(*this, "item");
  if (impl.values.size() != 1) throw std::invalid_argument("item: tensor holds more than one value");
  return impl.values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
bool Tensor::on_tape() const { return impl_ && impl_->node != nullptr; }

OpKind Tensor::producer() const {
  if (!on_tape()) throw std::logic_error("tensor: not produced by a recorded op");
  return impl_->node->kind;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& impl = checked(*this, "grad");
  if (impl.grad.empty()) return std::vector<double>(impl.values.size(), 0.0);
  return impl.grad;
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& impl = checked(*this, "detach");
  return Tensor(make_impl(impl.shape, impl.values));
}

Tensor detach(const Tensor& a) { return a.detach(); }

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::add, a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::sub, a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::mul, a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      OpKind::scale, a, [factor](double x) { return x * factor; }, [factor](double) { return factor; });
}

Tensor abs(const Tensor& a) {
  return unary(
      OpKind::abs, a, [](double x) { return std::abs(x); }, [](double x) { return sign(x); });
}

Tensor relu(const Tensor& a) {
  return unary(
      OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  const auto& ai = checked(a, "sigmoid");
  const std::size_t n = ai.values.size();
  auto out = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ai.values[i];
    // Split by sign so exp never overflows.
    if (x >= 0.0) {
      (*out)[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      (*out)[i] = e / (1.0 + e);
    }
  }
  std::vector<double> values = *out;
  return record(OpKind::sigmoid, ai.shape, std::move(values), {a.impl()},
                [out, n](std::span<const double> g, std::span<std::vector<double>*> gin) {
                  if (!gin[0]) return;
                  accumulate(gin[0], n);
                  auto& ga = *gin[0];
                  for (std::size_t i = 0; i < n; ++i) {
                    const double y = (*out)[i];
                    ga[i] += g[i] * y * (1.0 - y);
                  }
                });
}

Tensor prelu(const Tensor& a, const Tensor& slope) {
  const auto& ai = checked(a, "prelu");
  const auto& si = checked(slope, "prelu");
  const std::size_t n = ai.values.size();
  const std::size_t n_slopes = si.values.size();
  std::size_t inner = n;  // elements sharing one slope value, per channel block
  std::size_t channels = 1;
  if (n_slopes != 1) {
    if (ai.shape.size() < 2 || ai.shape[1] != n_slopes) {
      throw std::invalid_argument("prelu: slope " + shape_to_string(si.shape) +
                                  " is neither scalar nor per-channel for input " +
                                  shape_to_string(ai.shape));
    }
    channels = n_slopes;
    inner = 1;
    for (std::size_t d = 2; d < ai.shape.size(); ++d) inner *= ai.shape[d];
  }
  auto channel_of = [channels, inner](std::size_t i) { return channels == 1 ? 0 : (i / inner) % channels; };

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ai.values[i];
    out[i] = x > 0.0 ? x : si.values[channel_of(i)] * x;
  }
  auto a_impl = a.impl();
  auto s_impl = slope.impl();
  return record(OpKind::prelu, ai.shape, std::move(out), {a_impl, s_impl},
                [a_impl, s_impl, n, n_slopes, channel_of](std::span<const double> g,
                                                         std::span<std::vector<double>*> gin) {
                  const auto& x = a_impl->values;
                  const auto& s = s_impl->values;
                  if (gin[0]) {
                    accumulate(gin[0], n);
                    auto& ga = *gin[0];
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (x[i] > 0.0 ? 1.0 : s[channel_of(i)]);
                  }
                  if (gin[1]) {
                    accumulate(gin[1], n_slopes);
                    auto& gs = *gin[1];
                    for (std::size_t i = 0; i < n; ++i) {
                      if (x[i] <= 0.0) gs[channel_of(i)] += g[i] * x[i];
                    }
                  }
                });
}

// ---- conv2d ---------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int padding) {
  const auto& xi = checked(input, "conv2d");
  const auto& wi = checked(weight, "conv2d");
  if (xi.shape.size() != 4) throw std::invalid_argument("conv2d: input must be NCHW, got " + shape_to_string(xi.shape));
  if (wi.shape.size() != 4 || wi.shape[2] != wi.shape[3] || wi.shape[2] % 2 == 0) {
    throw std::invalid_argument("conv2d: weight must be O×I×k×k with odd k, got " + shape_to_string(wi.shape));
  }
  const std::size_t batch = xi.shape[0], in_ch = xi.shape[1], h = xi.shape[2], w = xi.shape[3];
  const std::size_t out_ch = wi.shape[0], k = wi.shape[2];
  if (wi.shape[1] != in_ch) {
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(wi.shape[1]) +
                                " input channels, input has " + std::to_string(in_ch));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != out_ch) throw std::invalid_argument("conv2d: bias length must equal output channels");
  const int pad = padding < 0 ? static_cast<int>((k - 1) / 2) : padding;
  if (2 * static_cast<std::size_t>(pad) != k - 1) {
    throw std::invalid_argument("conv2d: only size-preserving padding (k-1)/2 is supported");
  }

  const std::size_t hw = h * w;
  const std::size_t patch = in_ch * k * k;
  const bool keep_cols = weight.requires_grad();
  std::vector<double> out(batch * out_ch * hw);
  // Unfolded patches for every image; kept for the weight gradient.
  std::shared_ptr<double[]> cols(new double[patch * hw * (keep_cols ? batch : 1)]);
  ConstMapMat wmat(wi.values.data(), static_cast<long>(out_ch), static_cast<long>(patch));
  for (std::size_t n = 0; n < batch; ++n) {
    double* col = cols.get() + (keep_cols ? n * patch * hw : 0);
    im2col(xi.values.data() + n * in_ch * hw, in_ch, h, w, k, pad, col);
    ConstMapMat cmat(col, static_cast<long>(patch), static_cast<long>(hw));
    MapMat omat(out.data() + n * out_ch * hw, static_cast<long>(out_ch), static_cast<long>(hw));
    omat.noalias() = wmat * cmat;
    if (has_bias) {
      const auto b = bias.values();
      for (std::size_t o = 0; o < out_ch; ++o) omat.row(static_cast<long>(o)).array() += b[o];
    }
  }
  if (!keep_cols) cols.reset();

  std::vector<std::shared_ptr<TensorImpl>> inputs{input.impl(), weight.impl()};
  if (has_bias) inputs.push_back(bias.impl());
  auto w_impl = weight.impl();
  return record(
      OpKind::conv2d, {batch, out_ch, h, w}, std::move(out), std::move(inputs),
      [cols, w_impl, has_bias, batch, in_ch, h, w, out_ch, k, pad, hw, patch](
          std::span<const double> g, std::span<std::vector<double>*> gin) {
        ConstMapMat wmat(w_impl->values.data(), static_cast<long>(out_ch), static_cast<long>(patch));
        std::unique_ptr<double[]> scratch(gin[0] ? new double[patch * hw] : nullptr);
        if (gin[0]) accumulate(gin[0], batch * in_ch * hw);
        if (gin[1]) accumulate(gin[1], out_ch * patch);
        if (has_bias && gin[2]) accumulate(gin[2], out_ch);
        for (std::size_t n = 0; n < batch; ++n) {
          ConstMapMat gmat(g.data() + n * out_ch * hw, static_cast<long>(out_ch), static_cast<long>(hw));
          if (gin[1]) {
            ConstMapMat cmat(cols.get() + n * patch * hw, static_cast<long>(patch), static_cast<long>(hw));
            MapMat gw(gin[1]->data(), static_cast<long>(out_ch), static_cast<long>(patch));
            gw.noalias() += gmat * cmat.transpose();
          }
          if (gin[0]) {
            MapMat cmat(scratch.get(), static_cast<long>(patch), static_cast<long>(hw));
            cmat.noalias() = wmat.transpose() * gmat;
            col2im(scratch.get(), in_ch, h, w, k, pad, gin[0]->data() + n * in_ch * hw);
          }
          if (has_bias && gin[2]) {
            auto& gb = *gin[2];
            // A plain loop: Eigen's vectorized sum peels by pointer alignment,
            // which would make the rounding depend on where malloc put g.
            for (std::size_t o = 0; o < out_ch; ++o) {
              const double* row = g.data() + (n * out_ch + o) * hw;
              double acc = 0.0;
              for (std::size_t i = 0; i < hw; ++i) acc += row[i];
              gb[o] += acc;
            }
          }
        }
      });
}

// ---- pixel shuffle --------------------------------------------------------

namespace {

// Index into the shuffled output for input element (n, ci, y, x).
struct ShuffleGeometry {
  std::size_t batch, in_ch, h, w, r, out_ch;
  std::size_t out_index(std::size_t n, std::size_t ci, std::size_t y, std::size_t x) const {
    const std::size_t c = ci / (r * r);
    const std::size_t dy = (ci % (r * r)) / r;
    const std::size_t dx = ci % r;
    const std::size_t oh = h * r, ow = w * r;
    return ((n * out_ch + c) * oh + y * r + dy) * ow + x * r + dx;
  }
};

ShuffleGeometry shuffle_geometry(const Shape& s, std::size_t r) {
  if (s.size() != 4) throw std::invalid_argument("pixel_shuffle: input must be NCHW");
  if (r == 0 || s[1] % (r * r) != 0) {
    throw std::invalid_argument("pixel_shuffle: channels " + std::to_string(s[1]) +
                                " not divisible by r^2 = " + std::to_string(r * r));
  }
  return {s[0], s[1], s[2], s[3], r, s[1] / (r * r)};
}

}  // namespace

Tensor pixel_shuffle(const Tensor& input, std::size_t r) {
  const auto& xi = checked(input, "pixel_shuffle");
  const auto geo = shuffle_geometry(xi.shape, r);
  const std::size_t n_el = xi.values.size();
  std::vector<double> out(n_el);
  std::size_t i = 0;
  for (std::size_t n = 0; n < geo.batch; ++n)
    for (std::size_t c = 0; c < geo.in_ch; ++c)
      for (std::size_t y = 0; y < geo.h; ++y)
        for (std::size_t x = 0; x < geo.w; ++x) out[geo.out_index(n, c, y, x)] = xi.values[i++];
  return record(OpKind::pixel_shuffle, {geo.batch, geo.out_ch, geo.h * r, geo.w * r}, std::move(out),
                {input.impl()}, [geo, n_el](std::span<const double> g, std::span<std::vector<double>*> gin) {
                  if (!gin[0]) return;
                  accumulate(gin[0], n_el);
                  auto& gx = *gin[0];
                  std::size_t j = 0;
                  for (std::size_t n = 0; n < geo.batch; ++n)
                    for (std::size_t c = 0; c < geo.in_ch; ++c)
                      for (std::size_t y = 0; y < geo.h; ++y)
                        for (std::size_t x = 0; x < geo.w; ++x) gx[j++] += g[geo.out_index(n, c, y, x)];
                });
}

Tensor pixel_unshuffle(const Tensor& input, std::size_t r) {
  const auto& s = checked(input, "pixel_unshuffle").shape;
  if (s.size() != 4 || r == 0 || s[2] % r != 0 || s[3] % r != 0) {
    throw std::invalid_argument("pixel_unshuffle: spatial size not divisible by r");
  }
  const auto geo = shuffle_geometry({s[0], s[1] * r * r, s[2] / r, s[3] / r}, r);
  const auto src = input.values();
  std::vector<double> out(src.size());
  std::size_t i = 0;
  for (std::size_t n = 0; n < geo.batch; ++n)
    for (std::size_t c = 0; c < geo.in_ch; ++c)
      for (std::size_t y = 0; y < geo.h; ++y)
        for (std::size_t x = 0; x < geo.w; ++x) out[i++] = src[geo.out_index(n, c, y, x)];
  return Tensor::from({geo.batch, geo.in_ch, geo.h, geo.w}, std::move(out));
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
  const auto& ai = checked(a, "sum");
  const std::size_t n = ai.values.size();
  double total = 0.0;
  for (double v : ai.values) total += v;
  return record(OpKind::sum, {}, {total}, {a.impl()},
                [n](std::span<const double> g, std::span<std::vector<double>*> gin) {
                  if (!gin[0]) return;
                  accumulate(gin[0], n);
                  for (auto& v : *gin[0]) v += g[0];
                });
}

Tensor mean(const Tensor& a) {
  const auto& ai = checked(a, "mean");
  const std::size_t n = ai.values.size();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  double total = 0.0;
  for (double v : ai.values) total += v;
  const double inv = 1.0 / static_cast<double>(n);
  return record(OpKind::mean, {}, {total * inv}, {a.impl()},
                [n, inv](std::span<const double> g, std::span<std::vector<double>*> gin) {
                  if (!gin[0]) return;
                  accumulate(gin[0], n);
                  for (auto& v : *gin[0]) v += g[0] * inv;
                });
}

// ---- backward -------------------------------------------------------------

void backward(const Tensor& loss) {
  const auto& root = checked(loss, "backward");
  if (root.values.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_to_string(root.shape));
  }
  if (!root.requires_grad) return;
  if (!root.node) {
    // A bare leaf: d(loss)/d(loss) = 1.
    auto& g = loss.impl()->grad;
    accumulate(&g, 1);
    g[0] += 1.0;
    return;
  }

  // Post-order DFS gives a topological order (inputs before outputs).
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack{{loss.impl().get(), 0}};
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->inputs.size()) {
      TensorImpl* child = impl->node->inputs[next++].get();
      if (child->node && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  std::unordered_map<TensorImpl*, std::vector<double>> grads;
  grads[loss.impl().get()] = {1.0};
  std::vector<std::vector<double>*> buffers;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = *it;
    auto found = grads.find(impl);
    if (found == grads.end()) continue;
    std::vector<double> g = std::move(found->second);
    grads.erase(found);
    if (g.empty()) continue;

    const Node& node = *impl->node;
    buffers.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      TensorImpl* in = node.inputs[i].get();
      if (!in->requires_grad) continue;
      buffers[i] = in->node ? &grads[in] : &in->grad;
    }
    node.backward(g, buffers);
  }
}

}  // namespace sigmasr
