#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace fadet {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class TensorImpl;
using NodePtr = std::shared_ptr<TensorImpl>;

// One node of the reverse-mode tape. Parents are always created before the
// node itself, so the global sequence number doubles as a topological order.
class TensorImpl {
 public:
  TensorImpl(Shape shape, std::vector<double> values);

  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized lazily, only when requires_grad
  bool requires_grad = false;
  uint64_t seq = 0;
  std::string name;  // set for parameters, used in diagnostics
  std::vector<NodePtr> parents;
  std::function<void(TensorImpl&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  void ensure_grad();
};

/// Dense row-major tensor of 64-bit floats, value-semantics handle into the
/// autodiff graph.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int axis) const { return impl_->shape.at(axis); }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& mutable_data() { return impl_->data; }
  const std::vector<double>& grad() const;
  bool has_grad() const { return !impl_->grad.empty(); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  Tensor& set_name(std::string name);
  const std::string& name() const { return impl_->name; }

  void zero_grad();
  double item() const;
  double at(std::initializer_list<int64_t> index) const;
  double grad_at(std::initializer_list<int64_t> index) const;

  /// Copy of the values, detached from the graph.
  Tensor detach() const;

  NodePtr impl() const { return impl_; }

 private:
  NodePtr impl_;
};

// Elementwise binary ops with right-aligned broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor pow_scalar(const Tensor& x, double p);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor log1p(const Tensor& x);
Tensor expm1(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);

/// 2-D matrix product [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);  // 2-D only
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, const std::vector<int64_t>& offsets,
             const std::vector<int64_t>& sizes);

Tensor sum(const Tensor& x);                              // -> scalar
Tensor sum(const Tensor& x, int axis, bool keepdims);     // one axis
Tensor mean(const Tensor& x);                             // -> scalar
Tensor mean(const Tensor& x, int axis, bool keepdims);

/// Numerically stabilized softmax along `axis`. -inf entries are legal and
/// yield exact zeros, provided at least one finite entry exists per lane.
Tensor softmax(const Tensor& x, int axis);

/// Normalizes over the last axis: (x - mu) / sqrt(var + eps). Affine scale
/// and shift, when wanted, are applied by the caller with mul/add.
Tensor layer_norm(const Tensor& x, double eps = 1e-5);

/// Direct 2-D convolution, stride 1, zero "same" padding.
/// x: [H,W,Cin], w: [Cout,kh,kw,Cin] with odd kh,kw, b: [Cout] -> [H,W,Cout].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

/// Row gather: table [V,d], indices in [0,V) -> [len(indices), d].
Tensor embedding(const Tensor& table, const std::vector<int64_t>& indices);

/// Reverse-mode sweep from a scalar loss. Visits each reachable node exactly
/// once; leaf gradients accumulate, so zero_grad between passes makes the
/// result idempotent for an identical forward pass.
void backward(const Tensor& loss);

}  // namespace fadet
