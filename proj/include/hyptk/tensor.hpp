#pragma once

// Dense 64-bit tensors with tape-based reverse-mode differentiation.
//
// Operations record themselves on the thread's active Tape (see TapeScope)
// whenever at least one operand requires a gradient. Without an active tape
// every operation is a plain forward computation.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hyptk/errors.hpp"

namespace hyp {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
// Trailing-dimension broadcast of two shapes; throws ShapeError.
Shape broadcast_shapes(const Shape& a, const Shape& b);

class Tape;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  bool is_leaf = true;
  std::optional<std::vector<double>> grad;
  // Set while the tensor is produced by a record on a live tape.
  const Tape* tape = nullptr;
  std::size_t record = 0;
  // Optimizer currently holding this tensor as a parameter.
  const void* owner = nullptr;
};

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(impl_->shape.size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<const double> data() const { return impl_->data; }
  // Mutable access bypasses the tape; reserved for optimizers, initializers
  // and finite-difference probes.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::int64_t flat) const { return impl_->data[static_cast<std::size_t>(flat)]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->is_leaf; }

  bool has_grad() const { return impl_->grad.has_value(); }
  // Gradient as a tensor of the same shape; throws ContractError if absent.
  Tensor grad() const;
  std::span<const double> grad_data() const;
  void zero_grad();
  void clear_grad();

  // Copy of the values with no graph history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  void backward() const;

  TensorImpl& impl() const { return *impl_; }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }
  bool same_object(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_tensor_from_impl(std::shared_ptr<TensorImpl>);

  std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Tape

// Backward closure: receives the output gradient and one accumulation buffer
// per input (null where that input does not need a gradient).
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<std::vector<double>*> grad_in)>;

class Tape {
 public:
  struct Record {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

  void record(std::vector<std::shared_ptr<TensorImpl>> inputs, const Tensor& output,
              BackwardFn backward);
  // Propagates from a one-element loss recorded on this tape. Leaf gradients
  // accumulate across calls; intermediate gradients are overwritten.
  void backward(const Tensor& loss) const;
  void clear();

 private:
  std::vector<Record> records_;
};

// Tape that operations record onto on this thread, or null.
Tape* active_tape();

// Installs a tape as the thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

// Suspends recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
  ~NoGradScope();

 private:
  Tape* previous_;
};

void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Elementwise operations (trailing-dimension broadcasting for binary ops).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Throws ContractError on an exact zero in the denominator.
Tensor div(const Tensor& a, const Tensor& b);
// a / b with the quotient and its derivatives defined as 0 wherever b == 0.
Tensor safe_div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor tanh(const Tensor& x);
// Input clamped to [-1 + 1e-10, 1 - 1e-10] before evaluation.
Tensor artanh(const Tensor& x);
Tensor asinh(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor clamp_min(const Tensor& x, double lo);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);

inline constexpr double kArtanhClamp = 1e-10;

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& x);
Tensor operator+(const Tensor& a, double b);
Tensor operator+(double a, const Tensor& b);
Tensor operator-(const Tensor& a, double b);
Tensor operator-(double a, const Tensor& b);
Tensor operator*(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);
Tensor operator/(const Tensor& a, double b);
Tensor operator/(double a, const Tensor& b);

// ---------------------------------------------------------------------------
// Linear algebra, reductions, restructuring.

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x, std::vector<std::int64_t> dims, bool keepdim = false);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x, std::vector<std::int64_t> dims, bool keepdim = false);
Tensor mean(const Tensor& x);
// Euclidean norm along dims; gradient is 0 where the norm is 0.
Tensor norm2(const Tensor& x, std::vector<std::int64_t> dims, bool keepdim = false);
// Maximum along one axis; the gradient routes to the first maximal entry.
Tensor amax(const Tensor& x, std::int64_t dim, bool keepdim = false);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::vector<std::int64_t> order);
Tensor transpose(const Tensor& x, std::int64_t d0, std::int64_t d1);
Tensor concat(std::span<const Tensor> parts, std::int64_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::int64_t axis);
// Half-open range [start, stop) along axis.
Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t stop);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor index_select(const Tensor& x, std::int64_t axis, std::span<const std::int64_t> indices);
Tensor unsqueeze(const Tensor& x, std::int64_t axis);
Tensor squeeze(const Tensor& x, std::int64_t axis);

struct Size2 {
  std::int64_t h = 1;
  std::int64_t w = 1;
};

// N x C x H x W -> N x (C*kh*kw) x L patches; column rows ordered channel,
// kernel row, kernel column. Padding inserts exact zeros.
Tensor unfold2d(const Tensor& x, Size2 kernel, Size2 stride = {1, 1}, Size2 padding = {0, 0});

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank);

// ---------------------------------------------------------------------------
// Finite-difference gradient check.

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Compares the tape gradient of a scalar function against central
// differences. Relative error per coordinate is |a - n| / max(|a|, |n|, floor).
GradCheckResult gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double h = 1e-6, double floor = 1e-4);
// Same check against a tensor that f captures (a layer parameter). The
// tensor must require a gradient; its values are restored afterwards.
GradCheckResult gradient_check_inplace(const std::function<Tensor()>& f, Tensor& param,
                                       double h = 1e-6, double floor = 1e-4);

}  // namespace hyp
