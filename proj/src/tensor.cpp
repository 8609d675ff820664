#include "loftr/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace loftr::LOFTR_PRECISION {

using detail::ImplPtr;
using detail::TensorImpl;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

// --- Tensor -------------------------------------------------------------------

namespace {

ImplPtr make_impl(Shape shape, std::vector<real> data) {
  if (shape_numel(shape) != data.size())
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return impl;
}

const TensorImpl& checked(const ImplPtr& impl) {
  if (!impl) throw ContractError("tensor: use of an undefined tensor");
  return *impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<real>(n, real{0})));
}

Tensor Tensor::full(Shape shape, real value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<real>(n, value)));
}

Tensor Tensor::from_data(Shape shape, std::vector<real> values) {
  return Tensor(make_impl(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(real value) { return Tensor(make_impl({}, {value})); }

Tensor Tensor::parameter(Shape shape, std::vector<real> values) {
  Tensor t = from_data(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size())
    throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const real> Tensor::values() const { return checked(impl_).data; }

std::span<real> Tensor::mutable_values() {
  checked(impl_);
  if (impl_->tape != nullptr)
    throw ContractError("tensor: values of a recorded tensor are immutable");
  return impl_->data;
}

std::vector<real> Tensor::to_vector() const { return checked(impl_).data; }

real Tensor::item() const {
  if (numel() != 1) throw DimensionError("tensor: item() on " + shape_to_string(shape()));
  return impl_->data[0];
}

real Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw DimensionError("tensor: index rank mismatch");
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw IndexError("tensor: index out of range");
    offset = offset * s[axis] + i;
    ++axis;
  }
  return impl_->data[offset];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  checked(impl_);
  if (impl_->tape != nullptr) throw ContractError("tensor: requires_grad is fixed for recorded tensors");
  impl_->requires_grad = flag;
}

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::vector<real> Tensor::grad() const {
  const TensorImpl& impl = checked(impl_);
  if (impl.grad.empty()) return std::vector<real>(impl.data.size(), real{0});
  return impl.grad;
}

void Tensor::zero_grad() {
  checked(impl_);
  impl_->grad.clear();
}

bool Tensor::all_finite() const {
  const auto& d = checked(impl_).data;
  return std::all_of(d.begin(), d.end(), [](real v) { return std::isfinite(v); });
}

Tensor Tensor::detach() const {
  const TensorImpl& impl = checked(impl_);
  return Tensor(make_impl(impl.shape, impl.data));
}

// --- Tape ---------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

NoTapeScope::NoTapeScope() : previous_(g_active_tape) { g_active_tape = nullptr; }

NoTapeScope::~NoTapeScope() { g_active_tape = previous_; }

void Tape::record(const Tensor& output, std::function<void()> backward_fn) {
  TensorImpl& impl = *output.impl();
  impl.tape = this;
  impl.tape_index = nodes_.size();
  nodes_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& output) {
  if (!output.defined()) throw ContractError("backward: undefined output");
  if (output.numel() != 1)
    throw ContractError("backward: output must be scalar, got " + shape_to_string(output.shape()));
  TensorImpl& out = *output.impl();
  if (out.tape != this) throw ContractError("backward: output was not recorded on this tape");
  if (consumed_) throw ContractError("backward: tape already consumed");
  consumed_ = true;
  out.grad_buffer()[0] += real{1};
  for (std::size_t i = out.tape_index + 1; i-- > 0;) nodes_[i]();
}

// --- op plumbing ----------------------------------------------------------------

namespace {

bool should_track(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make_result(Shape shape, std::vector<real> data, bool track) {
  ImplPtr impl = make_impl(std::move(shape), std::move(data));
  impl->requires_grad = track;
  return Tensor(std::move(impl));
}

void record(const Tensor& out, std::function<void()> fn) { g_active_tape->record(out, std::move(fn)); }

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined input");
}

// Row-major C[m×n] (+)= op(A) · op(B) where op transposes when requested. A
// transposed row-major operand is read as its column-major counterpart.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b,
          real* c, bool accumulate) {
  using RowMajor = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ColMajor = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
  const auto rows = Eigen::Index(m), cols = Eigen::Index(n), inner = Eigen::Index(k);
  Eigen::Map<RowMajor> out(c, rows, cols);
  if (!accumulate) out.setZero();
  if (!ta && !tb)
    out.noalias() += Eigen::Map<const RowMajor>(a, rows, inner) * Eigen::Map<const RowMajor>(b, inner, cols);
  else if (ta && !tb)
    out.noalias() += Eigen::Map<const ColMajor>(a, rows, inner) * Eigen::Map<const RowMajor>(b, inner, cols);
  else if (!ta && tb)
    out.noalias() += Eigen::Map<const RowMajor>(a, rows, inner) * Eigen::Map<const ColMajor>(b, inner, cols);
  else
    out.noalias() += Eigen::Map<const ColMajor>(a, rows, inner) * Eigen::Map<const ColMajor>(b, inner, cols);
}

struct MatmulDims {
  std::size_t batch = 1;
  std::size_t m = 0, n = 0, k = 0;
  bool shared_b = false;
  Shape out_shape;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b, bool ta, bool tb, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  MatmulDims d;
  auto fail = [&] {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(sa) + " and " +
                         shape_to_string(sb));
  };
  if (sa.size() < 2 || sa.size() > 3 || sb.size() < 2 || sb.size() > 3) fail();
  if (sb.size() == 3 && sa.size() != 3) fail();
  const std::size_t ra = sa[sa.size() - 2], ca = sa[sa.size() - 1];
  const std::size_t rb = sb[sb.size() - 2], cb = sb[sb.size() - 1];
  d.m = ta ? ca : ra;
  d.k = ta ? ra : ca;
  const std::size_t kb = tb ? cb : rb;
  d.n = tb ? rb : cb;
  if (d.k != kb) fail();
  if (sa.size() == 3) {
    d.batch = sa[0];
    if (sb.size() == 3) {
      if (sb[0] != sa[0]) fail();
    } else {
      if (ta) fail();
      d.shared_b = true;
    }
    d.out_shape = {d.batch, d.m, d.n};
  } else {
    d.out_shape = {d.m, d.n};
  }
  return d;
}

Tensor matmul_impl(const Tensor& a, const Tensor& b, bool ta, bool tb, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  const MatmulDims d = matmul_dims(a, b, ta, tb, op);
  std::vector<real> out(d.batch * d.m * d.n);
  const real* pa = a.values().data();
  const real* pb = b.values().data();
  if (d.shared_b) {
    gemm(false, tb, d.batch * d.m, d.n, d.k, pa, pb, out.data(), false);
  } else {
    for (std::size_t s = 0; s < d.batch; ++s)
      gemm(ta, tb, d.m, d.n, d.k, pa + s * d.m * d.k, pb + s * d.k * d.n, out.data() + s * d.m * d.n,
           false);
  }
  const bool track = should_track({&a, &b});
  Tensor result = make_result(d.out_shape, std::move(out), track);
  if (track) {
    ImplPtr ia = a.impl(), ib = b.impl(), io = result.impl();
    record(result, [ia, ib, io, d, ta, tb] {
      if (io->grad.empty()) return;
      const real* g = io->grad.data();
      const std::size_t batches = d.shared_b ? 1 : d.batch;
      const std::size_t m = d.shared_b ? d.batch * d.m : d.m;
      const std::size_t sa_stride = m * d.k, sb_stride = d.shared_b ? 0 : d.k * d.n, sg = m * d.n;
      if (ia->requires_grad) {
        real* ga = ia->grad_buffer().data();
        for (std::size_t s = 0; s < batches; ++s) {
          const real* gs = g + s * sg;
          const real* bs = ib->data.data() + s * sb_stride;
          real* gas = ga + s * sa_stride;
          if (!ta && !tb) gemm(false, true, m, d.k, d.n, gs, bs, gas, true);
          else if (!ta && tb) gemm(false, false, m, d.k, d.n, gs, bs, gas, true);
          else if (ta && !tb) gemm(false, true, d.k, m, d.n, bs, gs, gas, true);
          else gemm(true, true, d.k, m, d.n, bs, gs, gas, true);
        }
      }
      if (ib->requires_grad) {
        real* gb = ib->grad_buffer().data();
        for (std::size_t s = 0; s < batches; ++s) {
          const real* gs = g + s * sg;
          const real* as = ia->data.data() + s * sa_stride;
          real* gbs = gb + s * sb_stride;
          if (!ta && !tb) gemm(true, false, d.k, d.n, m, as, gs, gbs, true);
          else if (!ta && tb) gemm(true, false, d.n, d.k, m, gs, as, gbs, true);
          else if (ta && !tb) gemm(false, false, d.k, d.n, m, as, gs, gbs, true);
          else gemm(true, true, d.n, d.k, m, gs, as, gbs, true);
        }
      }
    });
  }
  return result;
}

// Maps every flat index of `big` to the flat index of `small` under
// right-aligned broadcasting.
std::vector<std::size_t> broadcast_map(const Shape& big, const Shape& small, const char* op) {
  if (small.size() > big.size())
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_to_string(small) + " into " +
                         shape_to_string(big));
  const std::size_t offset = big.size() - small.size();
  std::vector<std::size_t> strides(big.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = small.size(); i-- > 0;) {
    const std::size_t bi = i + offset;
    if (small[i] == big[bi]) strides[bi] = stride;
    else if (small[i] != 1)
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_to_string(small) + " into " +
                           shape_to_string(big));
    stride *= small[i];
  }
  const std::size_t n = shape_numel(big);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(big.size(), 0);
  std::size_t off = 0;
  for (std::size_t f = 0; f < n; ++f) {
    map[f] = off;
    for (std::size_t ax = big.size(); ax-- > 0;) {
      ++idx[ax];
      off += strides[ax];
      if (idx[ax] < big[ax]) break;
      off -= strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return map;
}

enum class BinaryKind { Add, Sub, Mul, Div };

Tensor binary_op(const Tensor& a, const Tensor& b, BinaryKind kind, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  const bool same = a.shape() == b.shape();
  std::vector<std::size_t> map;
  if (!same) map = broadcast_map(a.shape(), b.shape(), op);
  const auto va = a.values();
  const auto vb = b.values();
  const std::size_t n = va.size();
  std::vector<real> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const real x = va[i];
    const real y = vb[same ? i : map[i]];
    switch (kind) {
      case BinaryKind::Add: out[i] = x + y; break;
      case BinaryKind::Sub: out[i] = x - y; break;
      case BinaryKind::Mul: out[i] = x * y; break;
      case BinaryKind::Div: out[i] = x / y; break;
    }
  }
  const bool track = should_track({&a, &b});
  Tensor result = make_result(a.shape(), std::move(out), track);
  if (track) {
    ImplPtr ia = a.impl(), ib = b.impl(), io = result.impl();
    record(result, [ia, ib, io, kind, same, map = std::move(map)] {
      if (io->grad.empty()) return;
      const auto& g = io->grad;
      const std::size_t n = g.size();
      auto bidx = [&](std::size_t i) { return same ? i : map[i]; };
      if (ia->requires_grad) {
        auto& ga = ia->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          switch (kind) {
            case BinaryKind::Add:
            case BinaryKind::Sub: ga[i] += g[i]; break;
            case BinaryKind::Mul: ga[i] += g[i] * ib->data[bidx(i)]; break;
            case BinaryKind::Div: ga[i] += g[i] / ib->data[bidx(i)]; break;
          }
        }
      }
      if (ib->requires_grad) {
        auto& gb = ib->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = bidx(i);
          switch (kind) {
            case BinaryKind::Add: gb[j] += g[i]; break;
            case BinaryKind::Sub: gb[j] -= g[i]; break;
            case BinaryKind::Mul: gb[j] += g[i] * ia->data[i]; break;
            case BinaryKind::Div: {
              const real y = ib->data[j];
              gb[j] -= g[i] * ia->data[i] / (y * y);
              break;
            }
          }
        }
      }
    });
  }
  return result;
}

// Elementwise op given value and derivative-from-(input, output) functions.
template <class Forward, class Derivative>
Tensor unary_op(const Tensor& x, Forward f, Derivative df, const char* op) {
  require_defined(x, op);
  const auto vx = x.values();
  std::vector<real> out(vx.size());
  for (std::size_t i = 0; i < vx.size(); ++i) out[i] = f(vx[i]);
  const bool track = should_track({&x});
  Tensor result = make_result(x.shape(), std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io, df] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += io->grad[i] * df(ix->data[i], io->data[i]);
    });
  }
  return result;
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size())
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " +
                         shape_to_string(shape));
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

// --- linear algebra ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false, false, "matmul"); }
Tensor matmul_nt(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false, true, "matmul_nt"); }
Tensor matmul_tn(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true, false, "matmul_tn"); }

Tensor transpose(const Tensor& x) {
  require_defined(x, "transpose");
  const Shape& s = x.shape();
  if (s.size() < 2 || s.size() > 3) throw DimensionError("transpose: needs a 2D or 3D tensor");
  const std::size_t batch = s.size() == 3 ? s[0] : 1;
  const std::size_t r = s[s.size() - 2], c = s[s.size() - 1];
  Shape out_shape = s;
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  const auto v = x.values();
  std::vector<real> out(v.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = v[b * r * c + i * c + j];
  const bool track = should_track({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io, batch, r, c] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gx[b * r * c + i * c + j] += io->grad[b * r * c + j * r + i];
    });
  }
  return result;
}

// --- elementwise ----------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::Mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinaryKind::Div, "div"); }

Tensor scale(const Tensor& x, real factor) {
  return unary_op(
      x, [factor](real v) { return v * factor; }, [factor](real, real) { return factor; }, "scale");
}

Tensor add_scalar(const Tensor& x, real value) {
  return unary_op(
      x, [value](real v) { return v + value; }, [](real, real) { return real{1}; }, "add_scalar");
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](real v) { return std::exp(v); }, [](real, real y) { return y; }, "exp");
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, [](real v) { return std::log(v); }, [](real v, real) { return real{1} / v; }, "log");
}

Tensor elu(const Tensor& x) {
  return unary_op(
      x, [](real v) { return v >= 0 ? v : std::expm1(v); },
      [](real v, real y) { return v >= 0 ? real{1} : y + real{1}; }, "elu");
}

Tensor elu_plus_one(const Tensor& x) {
  return unary_op(
      x, [](real v) { return v >= 0 ? v + real{1} : std::exp(v); },
      [](real v, real y) { return v >= 0 ? real{1} : y; }, "elu_plus_one");
}

// --- reductions ----------------------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  const auto v = x.values();
  std::vector<real> out(v.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      real mx = v[base];
      for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, v[base + k * s.inner]);
      double total = 0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        const real e = std::exp(v[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        total += e;
      }
      const real inv = static_cast<real>(1.0 / total);
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] *= inv;
    }
  }
  const bool track = should_track({&x});
  Tensor result = make_result(x.shape(), std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io, s] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      const auto& y = io->data;
      const auto& g = io->grad;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.extent * s.inner + in;
          double dot = 0;
          for (std::size_t k = 0; k < s.extent; ++k) dot += double(y[base + k * s.inner]) * g[base + k * s.inner];
          for (std::size_t k = 0; k < s.extent; ++k) {
            const std::size_t i = base + k * s.inner;
            gx[i] += y[i] * (g[i] - static_cast<real>(dot));
          }
        }
      }
    });
  }
  return result;
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "log_softmax");
  const AxisSplit s = split_axis(x.shape(), axis, "log_softmax");
  const auto v = x.values();
  std::vector<real> out(v.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      real mx = v[base];
      for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, v[base + k * s.inner]);
      double total = 0;
      for (std::size_t k = 0; k < s.extent; ++k) total += std::exp(double(v[base + k * s.inner] - mx));
      const real lse = mx + static_cast<real>(std::log(total));
      for (std::size_t k = 0; k < s.extent; ++k) out[base + k * s.inner] = v[base + k * s.inner] - lse;
    }
  }
  const bool track = should_track({&x});
  Tensor result = make_result(x.shape(), std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io, s] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      const auto& y = io->data;
      const auto& g = io->grad;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.extent * s.inner + in;
          double gsum = 0;
          for (std::size_t k = 0; k < s.extent; ++k) gsum += g[base + k * s.inner];
          for (std::size_t k = 0; k < s.extent; ++k) {
            const std::size_t i = base + k * s.inner;
            gx[i] += g[i] - std::exp(y[i]) * static_cast<real>(gsum);
          }
        }
      }
    });
  }
  return result;
}

Tensor logsumexp(const Tensor& x, std::size_t axis) {
  require_defined(x, "logsumexp");
  const AxisSplit s = split_axis(x.shape(), axis, "logsumexp");
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  const auto v = x.values();
  std::vector<real> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      real mx = v[base];
      for (std::size_t k = 1; k < s.extent; ++k) mx = std::max(mx, v[base + k * s.inner]);
      double total = 0;
      for (std::size_t k = 0; k < s.extent; ++k) total += std::exp(double(v[base + k * s.inner] - mx));
      out[o * s.inner + in] = mx + static_cast<real>(std::log(total));
    }
  }
  const bool track = should_track({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io, s] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t r = o * s.inner + in;
          const std::size_t base = o * s.extent * s.inner + in;
          for (std::size_t k = 0; k < s.extent; ++k) {
            const std::size_t i = base + k * s.inner;
            gx[i] += io->grad[r] * std::exp(ix->data[i] - io->data[r]);
          }
        }
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double total = 0;
  for (real v : x.values()) total += v;
  const bool track = should_track({&x});
  Tensor result = make_result({}, {static_cast<real>(total)}, track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io] {
      if (io->grad.empty()) return;
      for (real& g : ix->grad_buffer()) g += io->grad[0];
    });
  }
  return result;
}

Tensor sum(const Tensor& x, std::size_t axis) {
  require_defined(x, "sum");
  const AxisSplit s = split_axis(x.shape(), axis, "sum");
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  const auto v = x.values();
  std::vector<real> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      double total = 0;
      for (std::size_t k = 0; k < s.extent; ++k) total += v[(o * s.extent + k) * s.inner + in];
      out[o * s.inner + in] = static_cast<real>(total);
    }
  }
  const bool track = should_track({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io, s] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.extent; ++k)
          for (std::size_t in = 0; in < s.inner; ++in)
            gx[(o * s.extent + k) * s.inner + in] += io->grad[o * s.inner + in];
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), real{1} / static_cast<real>(n));
}

Tensor mean(const Tensor& x, std::size_t axis) {
  const std::size_t n = x.dim(axis);
  if (n == 0) throw DimensionError("mean: empty axis");
  return scale(sum(x, axis), real{1} / static_cast<real>(n));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
  require_defined(x, "layer_norm");
  if (x.ndim() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t n = x.shape().back();
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n})
    throw DimensionError("layer_norm: gain/bias must have shape [" + std::to_string(n) + "]");
  const std::size_t rows = x.numel() / n;
  const auto v = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<real> out(v.size());
  std::vector<real> xhat(v.size());
  std::vector<real> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const real* row = v.data() + r * n;
    double mu = 0;
    for (std::size_t i = 0; i < n; ++i) mu += row[i];
    mu /= double(n);
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= double(n);
    const double is = 1.0 / std::sqrt(var + double(eps));
    inv_std[r] = static_cast<real>(is);
    for (std::size_t i = 0; i < n; ++i) {
      const real h = static_cast<real>((row[i] - mu) * is);
      xhat[r * n + i] = h;
      out[r * n + i] = h * gv[i] + bv[i];
    }
  }
  const bool track = should_track({&x, &gamma, &beta});
  Tensor result = make_result(x.shape(), std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), ig = gamma.impl(), ib = beta.impl(), io = result.impl();
    record(result, [ix, ig, ib, io, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      if (io->grad.empty()) return;
      const auto& g = io->grad;
      if (ig->requires_grad) {
        auto& gg = ig->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < n; ++i) gg[i] += g[r * n + i] * xhat[r * n + i];
      }
      if (ib->requires_grad) {
        auto& gb = ib->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[r * n + i];
      }
      if (ix->requires_grad) {
        auto& gx = ix->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0, mean_dx = 0;
          for (std::size_t i = 0; i < n; ++i) {
            const double d = double(g[r * n + i]) * ig->data[i];
            mean_d += d;
            mean_dx += d * xhat[r * n + i];
          }
          mean_d /= double(n);
          mean_dx /= double(n);
          for (std::size_t i = 0; i < n; ++i) {
            const double d = double(g[r * n + i]) * ig->data[i];
            gx[r * n + i] += static_cast<real>(inv_std[r] * (d - mean_d - xhat[r * n + i] * mean_dx));
          }
        }
      }
    });
  }
  return result;
}

Tensor l2_normalize(const Tensor& x, real eps) {
  require_defined(x, "l2_normalize");
  if (x.ndim() == 0) throw DimensionError("l2_normalize: scalar input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = n == 0 ? 0 : x.numel() / n;
  const auto v = x.values();
  std::vector<real> out(v.size());
  std::vector<real> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) ss += double(v[r * n + i]) * v[r * n + i];
    const real norm = static_cast<real>(std::sqrt(ss + double(eps)));
    norms[r] = norm;
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = v[r * n + i] / norm;
  }
  const bool track = should_track({&x});
  Tensor result = make_result(x.shape(), std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io, n, rows, norms = std::move(norms)] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      const auto& y = io->data;
      const auto& g = io->grad;
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0;
        for (std::size_t i = 0; i < n; ++i) dot += double(y[r * n + i]) * g[r * n + i];
        for (std::size_t i = 0; i < n; ++i)
          gx[r * n + i] += (g[r * n + i] - y[r * n + i] * static_cast<real>(dot)) / norms[r];
      }
    });
  }
  return result;
}

// --- shape manipulation ------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  const bool track = should_track({&x});
  Tensor result = make_result(std::move(shape), x.to_vector(), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += io->grad[i];
    });
  }
  return result;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_defined(x, "slice");
  const AxisSplit s = split_axis(x.shape(), axis, "slice");
  if (start + length > s.extent) throw IndexError("slice: range exceeds axis extent");
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  const auto v = x.values();
  std::vector<real> out(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((o * s.extent + start) * s.inner), length * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * length * s.inner));
  const bool track = should_track({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io, s, start, length] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < length * s.inner; ++k)
          gx[(o * s.extent + start) * s.inner + k] += io->grad[o * length * s.inner + k];
    });
  }
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  for (const Tensor& p : parts) require_defined(p, "concat");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: invalid axis");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) throw DimensionError("concat: extent mismatch off the concat axis");
    out_shape[axis] += s[axis];
  }
  const AxisSplit so = split_axis(out_shape, axis, "concat");
  std::vector<real> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t ext = p.shape()[axis];
    const auto v = p.values();
    for (std::size_t o = 0; o < so.outer; ++o)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * ext * so.inner), ext * so.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * so.extent + offset) * so.inner));
    offsets.push_back(offset);
    offset += ext;
  }
  bool track = false;
  if (active_tape() != nullptr)
    track = std::any_of(parts.begin(), parts.end(), [](const Tensor& p) { return p.requires_grad(); });
  Tensor result = make_result(std::move(out_shape), std::move(out), track);
  if (track) {
    std::vector<ImplPtr> inputs;
    for (const Tensor& p : parts) inputs.push_back(p.impl());
    ImplPtr io = result.impl();
    record(result, [inputs = std::move(inputs), offsets = std::move(offsets), io, so, axis] {
      if (io->grad.empty()) return;
      for (std::size_t p = 0; p < inputs.size(); ++p) {
        if (!inputs[p]->requires_grad) continue;
        const std::size_t ext = inputs[p]->shape[axis];
        auto& gp = inputs[p]->grad_buffer();
        for (std::size_t o = 0; o < so.outer; ++o)
          for (std::size_t k = 0; k < ext * so.inner; ++k)
            gp[o * ext * so.inner + k] += io->grad[(o * so.extent + offsets[p]) * so.inner + k];
      }
    });
  }
  return result;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::ptrdiff_t>& rows) {
  require_defined(x, "gather_rows");
  if (x.ndim() != 2) throw DimensionError("gather_rows: needs a 2D tensor");
  const std::size_t r = x.dim(0), c = x.dim(1);
  for (std::ptrdiff_t i : rows)
    if (i >= static_cast<std::ptrdiff_t>(r)) throw IndexError("gather_rows: row index out of range");
  const auto v = x.values();
  std::vector<real> out(rows.size() * c, real{0});
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (rows[k] >= 0)
      std::copy_n(v.begin() + rows[k] * static_cast<std::ptrdiff_t>(c), c,
                  out.begin() + static_cast<std::ptrdiff_t>(k * c));
  const bool track = should_track({&x});
  Tensor result = make_result({rows.size(), c}, std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io, rows, c] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] < 0) continue;
        const std::size_t base = static_cast<std::size_t>(rows[k]) * c;
        for (std::size_t j = 0; j < c; ++j) gx[base + j] += io->grad[k * c + j];
      }
    });
  }
  return result;
}

namespace {

// Permutation between [B,L,h,dh] and [B,h,L,dh] layouts.
Tensor head_permute(const Tensor& x, Shape out_shape, std::size_t batch, std::size_t length,
                    std::size_t heads, std::size_t dh, bool split) {
  const auto v = x.values();
  std::vector<real> out(v.size());
  auto src_index = [&](std::size_t b, std::size_t l, std::size_t h, std::size_t c) {
    return ((b * length + l) * heads + h) * dh + c;  // [B,L,h,dh]
  };
  auto dst_index = [&](std::size_t b, std::size_t l, std::size_t h, std::size_t c) {
    return ((b * heads + h) * length + l) * dh + c;  // [B,h,L,dh]
  };
  std::vector<std::size_t> perm(v.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t l = 0; l < length; ++l)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t c = 0; c < dh; ++c) {
          const std::size_t s = split ? src_index(b, l, h, c) : dst_index(b, l, h, c);
          const std::size_t d = split ? dst_index(b, l, h, c) : src_index(b, l, h, c);
          perm[d] = s;
        }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[perm[i]];
  const bool track = should_track({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), track);
  if (track) {
    ImplPtr ix = x.impl(), io = result.impl();
    record(result, [ix, io, perm = std::move(perm)] {
      if (io->grad.empty()) return;
      auto& gx = ix->grad_buffer();
      for (std::size_t i = 0; i < perm.size(); ++i) gx[perm[i]] += io->grad[i];
    });
  }
  return result;
}

}  // namespace

Tensor split_heads(const Tensor& x, std::size_t heads) {
  require_defined(x, "split_heads");
  if (x.ndim() != 3) throw DimensionError("split_heads: needs [B,L,d]");
  const std::size_t b = x.dim(0), l = x.dim(1), d = x.dim(2);
  if (heads == 0 || d % heads != 0) throw ConfigError("split_heads: head count must divide the width");
  return head_permute(x, {b * heads, l, d / heads}, b, l, heads, d / heads, true);
}

Tensor merge_heads(const Tensor& x, std::size_t heads) {
  require_defined(x, "merge_heads");
  if (x.ndim() != 3) throw DimensionError("merge_heads: needs [B*h,L,dh]");
  if (heads == 0 || x.dim(0) % heads != 0) throw ConfigError("merge_heads: batch not divisible by heads");
  const std::size_t b = x.dim(0) / heads, l = x.dim(1), dh = x.dim(2);
  return head_permute(x, {b, l, dh * heads}, b, l, heads, dh, false);
}

}  // namespace loftr::LOFTR_PRECISION
