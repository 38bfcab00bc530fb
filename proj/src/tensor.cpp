#include "fadet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace fadet {

namespace {

std::atomic<uint64_t> g_seq{1};

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

TensorImpl::TensorImpl(Shape shape_in, std::vector<double> values)
    : shape(std::move(shape_in)), data(std::move(values)) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
  }
  seq = g_seq.fetch_add(1, std::memory_order_relaxed);
}

void TensorImpl::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  auto impl = std::make_shared<TensorImpl>(std::move(shape),
                                           std::vector<double>(n, value));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values,
                         bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>(std::move(shape), std::move(values));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) {
    throw ContractError("tensor '" + impl_->name + "' has no gradient buffer");
  }
  return impl_->grad;
}

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

Tensor& Tensor::set_name(std::string name) {
  impl_->name = std::move(name);
  return *this;
}

void Tensor::zero_grad() {
  if (impl_->requires_grad) {
    impl_->ensure_grad();
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

namespace {

int64_t flat_index(const Shape& shape, std::initializer_list<int64_t> index) {
  if (index.size() != shape.size()) {
    throw ShapeError("index rank does not match shape " + shape_str(shape));
  }
  int64_t flat = 0;
  size_t k = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= shape[k]) throw ShapeError("index out of range");
    flat = flat * shape[k] + i;
    ++k;
  }
  return flat;
}

}  // namespace

double Tensor::at(std::initializer_list<int64_t> index) const {
  return impl_->data[flat_index(impl_->shape, index)];
}

double Tensor::grad_at(std::initializer_list<int64_t> index) const {
  return grad()[flat_index(impl_->shape, index)];
}

Tensor Tensor::detach() const {
  return Tensor::from_data(impl_->shape, impl_->data, false);
}

// ---------------------------------------------------------------------------
// node construction

namespace {

Tensor make_op(Shape shape, std::vector<double> values,
               std::vector<Tensor> parents,
               std::function<void(TensorImpl&)> backward_fn) {
  auto impl = std::make_shared<TensorImpl>(std::move(shape), std::move(values));
  bool needs_grad = false;
  for (const auto& p : parents) needs_grad = needs_grad || p.requires_grad();
  if (needs_grad) {
    impl->requires_grad = true;
    impl->parents.reserve(parents.size());
    for (auto& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

// Right-aligned broadcast layout: per-output-axis input strides, 0 where the
// input extent is 1.
struct BroadcastPlan {
  Shape out;
  std::vector<int64_t> stride_a;
  std::vector<int64_t> stride_b;
  bool same_shape = false;
};

BroadcastPlan broadcast_plan(const Shape& a, const Shape& b,
                             const char* op_name) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same_shape = true;
    return plan;
  }
  size_t rank = std::max(a.size(), b.size());
  plan.out.resize(rank);
  plan.stride_a.resize(rank);
  plan.stride_b.resize(rank);
  for (size_t i = 0; i < rank; ++i) {
    size_t ri = rank - 1 - i;
    int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op_name) + ": shapes " + shape_str(a) +
                       " and " + shape_str(b) + " are not broadcastable");
    }
    plan.out[ri] = std::max(da, db);
  }
  int64_t sa = 1, sb = 1;
  for (size_t i = 0; i < rank; ++i) {
    size_t ri = rank - 1 - i;
    int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    plan.stride_a[ri] = (da == 1 && plan.out[ri] != 1) ? 0 : sa;
    plan.stride_b[ri] = (db == 1 && plan.out[ri] != 1) ? 0 : sb;
    sa *= da;
    sb *= db;
  }
  return plan;
}

template <typename F>
void for_each_broadcast(const BroadcastPlan& plan, F&& fn) {
  int64_t total = shape_numel(plan.out);
  size_t rank = plan.out.size();
  std::vector<int64_t> idx(rank, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t o = 0; o < total; ++o) {
    fn(o, ia, ib);
    for (size_t k = rank; k-- > 0;) {
      idx[k]++;
      ia += plan.stride_a[k];
      ib += plan.stride_b[k];
      if (idx[k] < plan.out[k]) break;
      ia -= plan.stride_a[k] * plan.out[k];
      ib -= plan.stride_b[k] * plan.out[k];
      idx[k] = 0;
    }
  }
}

using BinaryFwd = double (*)(double, double);
using BinaryBwd = void (*)(double g, double a, double b, double& da, double& db);

Tensor binary_op(const Tensor& a, const Tensor& b, const char* name,
                 BinaryFwd fwd, BinaryBwd bwd) {
  BroadcastPlan plan = broadcast_plan(a.shape(), b.shape(), name);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(shape_numel(plan.out));
  if (plan.same_shape) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for_each_broadcast(plan, [&](int64_t o, int64_t ia, int64_t ib) {
      out[o] = fwd(av[ia], bv[ib]);
    });
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_op(plan.out, std::move(out), {a, b},
                 [ai, bi, plan, bwd](TensorImpl& node) {
                   bool ga = ai->requires_grad;
                   bool gb = bi->requires_grad;
                   if (ga) ai->ensure_grad();
                   if (gb) bi->ensure_grad();
                   double dummy = 0.0;
                   if (plan.same_shape) {
                     for (size_t i = 0; i < node.grad.size(); ++i) {
                       bwd(node.grad[i], ai->data[i], bi->data[i],
                           ga ? ai->grad[i] : dummy, gb ? bi->grad[i] : dummy);
                     }
                   } else {
                     for_each_broadcast(
                         plan, [&](int64_t o, int64_t ia, int64_t ib) {
                           bwd(node.grad[o], ai->data[ia], bi->data[ib],
                               ga ? ai->grad[ia] : dummy,
                               gb ? bi->grad[ib] : dummy);
                         });
                   }
                 });
}

using UnaryFwd = double (*)(double);
using UnaryBwd = double (*)(double x, double y);  // returns dy/dx

Tensor unary_op(const Tensor& x, UnaryFwd fwd, UnaryBwd bwd) {
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  auto xi = x.impl();
  return make_op(x.shape(), std::move(out), {x}, [xi, bwd](TensorImpl& node) {
    xi->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) {
      xi->grad[i] += node.grad[i] * bwd(xi->data[i], node.data[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double, double& da, double& db) {
        da += g;
        db += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double, double& da, double& db) {
        da += g;
        db -= g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double x, double y, double& da, double& db) {
        da += g * y;
        db += g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double g, double x, double y, double& da, double& db) {
        da += g / y;
        db -= g * x / (y * y);
      });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor add_scalar(const Tensor& x, double c) {
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + c;
  auto xi = x.impl();
  return make_op(x.shape(), std::move(out), {x}, [xi](TensorImpl& node) {
    xi->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) xi->grad[i] += node.grad[i];
  });
}

Tensor mul_scalar(const Tensor& x, double c) {
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * c;
  auto xi = x.impl();
  return make_op(x.shape(), std::move(out), {x}, [xi, c](TensorImpl& node) {
    xi->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i)
      xi->grad[i] += node.grad[i] * c;
  });
}

Tensor pow_scalar(const Tensor& x, double p) {
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::pow(xv[i], p);
  auto xi = x.impl();
  return make_op(x.shape(), std::move(out), {x}, [xi, p](TensorImpl& node) {
    xi->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) {
      xi->grad[i] += node.grad[i] * p * std::pow(xi->data[i], p - 1.0);
    }
  });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor log1p(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::log1p(v); },
      [](double v, double) { return 1.0 / (1.0 + v); });
}

Tensor expm1(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::expm1(v); },
      [](double v, double) { return std::exp(v); });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sin(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::sin(v); },
      [](double v, double) { return std::cos(v); });
}

Tensor cos(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::cos(v); },
      [](double v, double) { return -std::sin(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw ShapeError("matmul inner dimensions disagree: " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const double* av = a.data().data();
  const double* bv = b.data().data();
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      double aval = av[i * k + p];
      const double* brow = bv + p * n;
      double* orow = out.data() + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += aval * brow[j];
    }
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_op({m, n}, std::move(out), {a, b},
                 [ai, bi, m, k, n](TensorImpl& node) {
                   const double* g = node.grad.data();
                   if (ai->requires_grad) {
                     ai->ensure_grad();
                     // dA += G * B^T
                     for (int64_t i = 0; i < m; ++i) {
                       for (int64_t p = 0; p < k; ++p) {
                         double acc = 0.0;
                         const double* grow = g + i * n;
                         const double* brow = bi->data.data() + p * n;
                         for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                         ai->grad[i * k + p] += acc;
                       }
                     }
                   }
                   if (bi->requires_grad) {
                     bi->ensure_grad();
                     // dB += A^T * G
                     for (int64_t i = 0; i < m; ++i) {
                       const double* arow = ai->data.data() + i * k;
                       const double* grow = g + i * n;
                       for (int64_t p = 0; p < k; ++p) {
                         double aval = arow[p];
                         double* brow = bi->grad.data() + p * n;
                         for (int64_t j = 0; j < n; ++j) brow[j] += aval * grow[j];
                       }
                     }
                   }
                 });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) {
    throw ShapeError("transpose expects rank-2, got " + shape_str(x.shape()));
  }
  int64_t m = x.dim(0), n = x.dim(1);
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  auto xi = x.impl();
  return make_op({n, m}, std::move(out), {x}, [xi, m, n](TensorImpl& node) {
    xi->ensure_grad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        xi->grad[i * n + j] += node.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  }
  auto xi = x.impl();
  return make_op(std::move(shape), x.data(), {x}, [xi](TensorImpl& node) {
    xi->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) xi->grad[i] += node.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  int rank = static_cast<int>(first.size());
  if (axis < 0 || axis >= rank) throw ShapeError("concat axis out of range");
  Shape out_shape = first;
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p.dim(d) != first[d]) {
        throw ShapeError("concat shape mismatch: " + shape_str(p.shape()) +
                         " vs " + shape_str(first));
      }
    }
    axis_total += p.dim(axis);
  }
  out_shape[axis] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first[d];
  for (int d = axis + 1; d < rank; ++d) inner *= first[d];

  std::vector<double> out(shape_numel(out_shape));
  int64_t axis_offset = 0;
  for (const auto& p : parts) {
    int64_t pa = p.dim(axis);
    const auto& pv = p.data();
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = pv.data() + o * pa * inner;
      double* dst = out.data() + (o * axis_total + axis_offset) * inner;
      std::memcpy(dst, src, sizeof(double) * pa * inner);
    }
    axis_offset += pa;
  }

  std::vector<NodePtr> impls;
  impls.reserve(parts.size());
  std::vector<int64_t> axis_sizes;
  for (const auto& p : parts) {
    impls.push_back(p.impl());
    axis_sizes.push_back(p.dim(axis));
  }
  return make_op(out_shape, std::move(out), parts,
                 [impls, axis_sizes, outer, inner, axis_total](TensorImpl& node) {
                   int64_t axis_offset = 0;
                   for (size_t pi = 0; pi < impls.size(); ++pi) {
                     auto& p = impls[pi];
                     int64_t pa = axis_sizes[pi];
                     if (p->requires_grad) {
                       p->ensure_grad();
                       for (int64_t o = 0; o < outer; ++o) {
                         const double* src =
                             node.grad.data() + (o * axis_total + axis_offset) * inner;
                         double* dst = p->grad.data() + o * pa * inner;
                         for (int64_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
                       }
                     }
                     axis_offset += pa;
                   }
                 });
}

Tensor slice(const Tensor& x, const std::vector<int64_t>& offsets,
             const std::vector<int64_t>& sizes) {
  int rank = x.rank();
  if (static_cast<int>(offsets.size()) != rank ||
      static_cast<int>(sizes.size()) != rank) {
    throw ShapeError("slice spec rank mismatch for " + shape_str(x.shape()));
  }
  for (int d = 0; d < rank; ++d) {
    if (offsets[d] < 0 || sizes[d] <= 0 || offsets[d] + sizes[d] > x.dim(d)) {
      throw ShapeError("slice out of bounds on axis " + std::to_string(d) +
                       " of " + shape_str(x.shape()));
    }
  }
  Shape out_shape(sizes.begin(), sizes.end());
  int64_t total = shape_numel(out_shape);
  std::vector<double> out(total);
  const Shape& xs = x.shape();
  std::vector<int64_t> xstride(rank, 1);
  for (int d = rank - 2; d >= 0; --d) xstride[d] = xstride[d + 1] * xs[d + 1];

  std::vector<int64_t> idx(rank, 0);
  const auto& xv = x.data();
  for (int64_t o = 0; o < total; ++o) {
    int64_t src = 0;
    for (int d = 0; d < rank; ++d) src += (offsets[d] + idx[d]) * xstride[d];
    out[o] = xv[src];
    for (int d = rank; d-- > 0;) {
      if (++idx[d] < sizes[d]) break;
      idx[d] = 0;
    }
  }
  auto xi = x.impl();
  return make_op(out_shape, std::move(out), {x},
                 [xi, offsets, sizes, xstride, rank, total](TensorImpl& node) {
                   xi->ensure_grad();
                   std::vector<int64_t> idx(rank, 0);
                   for (int64_t o = 0; o < total; ++o) {
                     int64_t src = 0;
                     for (int d = 0; d < rank; ++d)
                       src += (offsets[d] + idx[d]) * xstride[d];
                     xi->grad[src] += node.grad[o];
                     for (int d = rank; d-- > 0;) {
                       if (++idx[d] < sizes[d]) break;
                       idx[d] = 0;
                     }
                   }
                 });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  auto xi = x.impl();
  return make_op({}, {acc}, {x}, [xi](TensorImpl& node) {
    xi->ensure_grad();
    double g = node.grad[0];
    for (auto& gv : xi->grad) gv += g;
  });
}

namespace {

struct AxisLayout {
  int64_t outer = 1, extent = 1, inner = 1;
};

AxisLayout axis_layout(const Shape& s, int axis) {
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  AxisLayout l;
  for (int d = 0; d < axis; ++d) l.outer *= s[d];
  l.extent = s[axis];
  for (size_t d = axis + 1; d < s.size(); ++d) l.inner *= s[d];
  return l;
}

Shape reduced_shape(const Shape& s, int axis, bool keepdims) {
  Shape out;
  for (size_t d = 0; d < s.size(); ++d) {
    if (static_cast<int>(d) == axis) {
      if (keepdims) out.push_back(1);
    } else {
      out.push_back(s[d]);
    }
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x, int axis, bool keepdims) {
  AxisLayout l = axis_layout(x.shape(), axis);
  Shape out_shape = reduced_shape(x.shape(), axis, keepdims);
  std::vector<double> out(static_cast<size_t>(l.outer * l.inner), 0.0);
  const auto& xv = x.data();
  for (int64_t o = 0; o < l.outer; ++o)
    for (int64_t k = 0; k < l.extent; ++k)
      for (int64_t i = 0; i < l.inner; ++i)
        out[o * l.inner + i] += xv[(o * l.extent + k) * l.inner + i];
  auto xi = x.impl();
  return make_op(out_shape, std::move(out), {x}, [xi, l](TensorImpl& node) {
    xi->ensure_grad();
    for (int64_t o = 0; o < l.outer; ++o)
      for (int64_t k = 0; k < l.extent; ++k)
        for (int64_t i = 0; i < l.inner; ++i)
          xi->grad[(o * l.extent + k) * l.inner + i] +=
              node.grad[o * l.inner + i];
  });
}

Tensor mean(const Tensor& x) {
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean(const Tensor& x, int axis, bool keepdims) {
  double scale = 1.0 / static_cast<double>(x.dim(axis));
  return mul_scalar(sum(x, axis, keepdims), scale);
}

Tensor softmax(const Tensor& x, int axis) {
  AxisLayout l = axis_layout(x.shape(), axis);
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  for (int64_t o = 0; o < l.outer; ++o) {
    for (int64_t i = 0; i < l.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < l.extent; ++k) {
        mx = std::max(mx, xv[(o * l.extent + k) * l.inner + i]);
      }
      double denom = 0.0;
      for (int64_t k = 0; k < l.extent; ++k) {
        int64_t at = (o * l.extent + k) * l.inner + i;
        double e = std::exp(xv[at] - mx);
        out[at] = e;
        denom += e;
      }
      for (int64_t k = 0; k < l.extent; ++k) out[(o * l.extent + k) * l.inner + i] /= denom;
    }
  }
  auto xi = x.impl();
  return make_op(x.shape(), std::move(out), {x}, [xi, l](TensorImpl& node) {
    xi->ensure_grad();
    for (int64_t o = 0; o < l.outer; ++o) {
      for (int64_t i = 0; i < l.inner; ++i) {
        double dot = 0.0;
        for (int64_t k = 0; k < l.extent; ++k) {
          int64_t at = (o * l.extent + k) * l.inner + i;
          dot += node.grad[at] * node.data[at];
        }
        for (int64_t k = 0; k < l.extent; ++k) {
          int64_t at = (o * l.extent + k) * l.inner + i;
          xi->grad[at] += node.data[at] * (node.grad[at] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm needs rank >= 1");
  int64_t width = x.dim(x.rank() - 1);
  int64_t rows = x.numel() / width;
  const auto& xv = x.data();
  std::vector<double> out(xv.size());
  std::vector<double> inv_std(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * width;
    double mu = 0.0;
    for (int64_t j = 0; j < width; ++j) mu += row[j];
    mu /= width;
    double var = 0.0;
    for (int64_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= width;
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (int64_t j = 0; j < width; ++j) out[r * width + j] = (row[j] - mu) * inv;
  }
  auto xi = x.impl();
  return make_op(x.shape(), std::move(out), {x},
                 [xi, rows, width, inv_std](TensorImpl& node) {
                   xi->ensure_grad();
                   for (int64_t r = 0; r < rows; ++r) {
                     const double* g = node.grad.data() + r * width;
                     const double* y = node.data.data() + r * width;
                     double mean_g = 0.0, mean_gy = 0.0;
                     for (int64_t j = 0; j < width; ++j) {
                       mean_g += g[j];
                       mean_gy += g[j] * y[j];
                     }
                     mean_g /= width;
                     mean_gy /= width;
                     double inv = inv_std[r];
                     for (int64_t j = 0; j < width; ++j) {
                       xi->grad[r * width + j] +=
                           inv * (g[j] - mean_g - y[j] * mean_gy);
                     }
                   }
                 });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1) {
    throw ShapeError("conv2d expects x[H,W,Cin], w[Cout,kh,kw,Cin], b[Cout]");
  }
  int64_t H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
  int64_t Cout = w.dim(0), kh = w.dim(1), kw = w.dim(2);
  if (w.dim(3) != Cin || b.dim(0) != Cout) {
    throw ShapeError("conv2d channel mismatch: x " + shape_str(x.shape()) +
                     ", w " + shape_str(w.shape()));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ContractError("conv2d kernel must be odd");
  int64_t ph = kh / 2, pw = kw / 2;
  const auto& xv = x.data();
  const auto& wv = w.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<size_t>(H * W * Cout));
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t xcol = 0; xcol < W; ++xcol) {
      for (int64_t co = 0; co < Cout; ++co) {
        double acc = bv[co];
        for (int64_t dy = 0; dy < kh; ++dy) {
          int64_t sy = y + dy - ph;
          if (sy < 0 || sy >= H) continue;
          for (int64_t dx = 0; dx < kw; ++dx) {
            int64_t sx = xcol + dx - pw;
            if (sx < 0 || sx >= W) continue;
            const double* xp = xv.data() + (sy * W + sx) * Cin;
            const double* wp = wv.data() + ((co * kh + dy) * kw + dx) * Cin;
            for (int64_t ci = 0; ci < Cin; ++ci) acc += xp[ci] * wp[ci];
          }
        }
        out[(y * W + xcol) * Cout + co] = acc;
      }
    }
  }
  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = b.impl();
  return make_op(
      {H, W, Cout}, std::move(out), {x, w, b},
      [xi, wi, bi, H, W, Cin, Cout, kh, kw, ph, pw](TensorImpl& node) {
        bool gx = xi->requires_grad, gw = wi->requires_grad,
             gb = bi->requires_grad;
        if (gx) xi->ensure_grad();
        if (gw) wi->ensure_grad();
        if (gb) bi->ensure_grad();
        const double* g = node.grad.data();
        for (int64_t y = 0; y < H; ++y) {
          for (int64_t xcol = 0; xcol < W; ++xcol) {
            for (int64_t co = 0; co < Cout; ++co) {
              double gv = g[(y * W + xcol) * Cout + co];
              if (gv == 0.0) continue;
              if (gb) bi->grad[co] += gv;
              for (int64_t dy = 0; dy < kh; ++dy) {
                int64_t sy = y + dy - ph;
                if (sy < 0 || sy >= H) continue;
                for (int64_t dx = 0; dx < kw; ++dx) {
                  int64_t sx = xcol + dx - pw;
                  if (sx < 0 || sx >= W) continue;
                  const double* xp = xi->data.data() + (sy * W + sx) * Cin;
                  const double* wp =
                      wi->data.data() + ((co * kh + dy) * kw + dx) * Cin;
                  for (int64_t ci = 0; ci < Cin; ++ci) {
                    if (gw)
                      wi->grad[((co * kh + dy) * kw + dx) * Cin + ci] +=
                          gv * xp[ci];
                    if (gx) xi->grad[(sy * W + sx) * Cin + ci] += gv * wp[ci];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor embedding(const Tensor& table, const std::vector<int64_t>& indices) {
  if (table.rank() != 2) throw ShapeError("embedding table must be rank-2");
  int64_t V = table.dim(0), d = table.dim(1);
  std::vector<double> out(indices.size() * d);
  const auto& tv = table.data();
  for (size_t i = 0; i < indices.size(); ++i) {
    int64_t row = indices[i];
    if (row < 0 || row >= V) throw ContractError("embedding index out of range");
    std::memcpy(out.data() + i * d, tv.data() + row * d, sizeof(double) * d);
  }
  auto ti = table.impl();
  return make_op({static_cast<int64_t>(indices.size()), d}, std::move(out),
                 {table}, [ti, indices, d](TensorImpl& node) {
                   ti->ensure_grad();
                   for (size_t i = 0; i < indices.size(); ++i) {
                     const double* src = node.grad.data() + i * d;
                     double* dst = ti->grad.data() + indices[i] * d;
                     for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
                   }
                 });
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw ContractError(
        "backward() on a loss that is not connected to any requires_grad leaf");
  }
  // Collect the reachable subgraph (iterative DFS, dedup by node identity).
  std::vector<TensorImpl*> reachable;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{loss.impl().get()};
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    TensorImpl* node = stack.back();
    stack.pop_back();
    reachable.push_back(node);
    for (const auto& p : node->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) {
        stack.push_back(p.get());
      }
    }
  }
  std::sort(reachable.begin(), reachable.end(),
            [](TensorImpl* a, TensorImpl* b) { return a->seq > b->seq; });
  // Interior grads are scratch per sweep; leaf grads accumulate.
  for (TensorImpl* node : reachable) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), 0.0);
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (TensorImpl* node : reachable) {
    if (node->backward_fn) node->backward_fn(*node);
  }
}

}  // namespace fadet
