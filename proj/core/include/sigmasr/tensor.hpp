#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto shared storage. Every op that consumes a
// tensor with requires_grad() records a Node describing how to push the
// output gradient back to its inputs; the recorded graph lives exactly as
// long as some handle to its output does. backward() walks the graph from a
// scalar loss and accumulates into the grad buffers of leaf tensors
// (parameters). Intermediate gradients are never stored, so calling
// backward() twice on the same graph accumulates twice into the leaves.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sigmasr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

enum class OpKind {
  add,
  sub,
  mul,
  scale,
  abs,
  relu,
  prelu,
  sigmoid,
  conv2d,
  pixel_shuffle,
  sum,
  mean,
};

const char* op_name(OpKind kind);

struct TensorImpl;

/// One recorded operation. `backward` receives the gradient of the op's
/// output and one accumulation buffer per input (nullptr when that input
/// does not need a gradient).
struct Node {
  using BackwardFn = std::function<void(std::span<const double> grad_out,
                                        std::span<std::vector<double>*> grad_in)>;
  OpKind kind;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves and detached tensors
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor from(std::initializer_list<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Writable view for leaves and off-tape tensors. Throws for tensors
  /// produced by a recorded op, whose values are saved context.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  /// True when this tensor is the output of a recorded op.
  bool on_tape() const;
  OpKind producer() const;

  bool has_grad() const;
  /// Accumulated gradient; all zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();

  /// Same values, fresh storage, off the tape, no gradient.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Elementwise binary ops. `b` must either match a's shape, hold a single
// value, or match a trailing suffix of a's shape (broadcast along a's
// leading dimensions).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// |a|, with subgradient 0 at a == 0.
Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
/// a where a > 0, slope * a otherwise. `slope` is a single value or holds one
/// value per channel (dimension 1 of an NCHW input).
Tensor prelu(const Tensor& a, const Tensor& slope);
Tensor sigmoid(const Tensor& a);

/// Stride-1 cross-correlation. input NCHW, weight O×I×k×k (k odd), bias of
/// length O or undefined. padding < 0 selects (k - 1) / 2.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int padding = -1);

/// N×(C·r²)×H×W -> N×C×(H·r)×(W·r):
/// out[n, c, y·r+dy, x·r+dx] = in[n, c·r²+dy·r+dx, y, x].
Tensor pixel_shuffle(const Tensor& input, std::size_t r);
/// Inverse permutation of pixel_shuffle on values only (off-tape).
Tensor pixel_unshuffle(const Tensor& input, std::size_t r);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor detach(const Tensor& a);

/// Accumulates d(loss)/d(leaf) into every reachable leaf with requires_grad.
/// Throws if loss is not a single value.
void backward(const Tensor& loss);

}  // namespace sigmasr
