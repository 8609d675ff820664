#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "loftr/errors.hpp"
#include "loftr/precision.hpp"

namespace loftr::LOFTR_PRECISION {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;
  bool requires_grad = false;
  const Tape* tape = nullptr;
  std::size_t tape_index = 0;

  std::vector<real>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), real{0});
    return grad;
  }
};

using ImplPtr = std::shared_ptr<TensorImpl>;

}  // namespace detail

/// Dense row-major array of reals. A Tensor is a cheap handle; copies share
/// storage. Values are only changed through tape-recorded operations, except
/// for parameter leaves which optimizers update in place.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, real value);
  static Tensor from_data(Shape shape, std::vector<real> values);
  static Tensor scalar(real value);
  /// A leaf that participates in differentiation.
  static Tensor parameter(Shape shape, std::vector<real> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const real> values() const;
  std::span<real> mutable_values();
  std::vector<real> to_vector() const;
  real item() const;
  real at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  /// Gradient buffer; all zeros when nothing has flowed into this tensor yet.
  std::vector<real> grad() const;
  void zero_grad();

  bool all_finite() const;
  /// New leaf holding a copy of the values, cut from any tape.
  Tensor detach() const;

  const detail::ImplPtr& impl() const { return impl_; }
  explicit Tensor(detail::ImplPtr impl) : impl_(std::move(impl)) {}

 private:
  detail::ImplPtr impl_;
};

/// Ordered record of differentiable operations. Operations are recorded on
/// the tape made active on the current thread by a TapeScope; a tape is
/// confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Reverse sweep from a scalar output recorded on this tape. Populates
  /// grad() of every requires_grad tensor reachable from `output`.
  void backward(const Tensor& output);

  std::size_t size() const { return nodes_.size(); }

  void record(const Tensor& output, std::function<void()> backward_fn);

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording on the current thread (inference and finite differences).
class NoTapeScope {
 public:
  NoTapeScope();
  ~NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// --- linear algebra -------------------------------------------------------

/// [m,k]x[k,n], batched [B,m,k]x[B,k,n], or [B,m,k]x[k,n] with a shared rhs.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ over the last two axes.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b over the last two axes.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);

// --- elementwise ------------------------------------------------------------
// Binary ops accept `b` broadcast into `a` (right-aligned, extents equal or 1).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, real factor);
Tensor add_scalar(const Tensor& x, real value);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor elu(const Tensor& x);
/// φ(x) = elu(x) + 1, strictly positive.
Tensor elu_plus_one(const Tensor& x);

// --- reductions and normalization -------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
/// Log-sum-exp along `axis`, keeping the axis with extent 1.
Tensor logsumexp(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);  // keeps the axis
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps = real(1e-5));
Tensor l2_normalize(const Tensor& x, real eps = real(1e-12));

// --- shape manipulation ------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Rows of a 2D tensor; a negative index yields a zero row.
Tensor gather_rows(const Tensor& x, const std::vector<std::ptrdiff_t>& rows);
/// [B,L,d] -> [B*h, L, d/h].
Tensor split_heads(const Tensor& x, std::size_t heads);
/// [B*h, L, d/h] -> [B,L,d].
Tensor merge_heads(const Tensor& x, std::size_t heads);

}  // namespace loftr::LOFTR_PRECISION
