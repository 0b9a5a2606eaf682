#include "hyptk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace hyp {

namespace {

thread_local Tape* g_active_tape = nullptr;

using ImplPtr = std::shared_ptr<TensorImpl>;

bool needs_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

Shape strides_of(const Shape& shape) {
  Shape s(shape.size(), 1);
  for (std::int64_t i = static_cast<std::int64_t>(shape.size()) - 2; i >= 0; --i) {
    s[i] = s[i + 1] * shape[i + 1];
  }
  return s;
}

// Strides of `in` aligned to the trailing dims of `out`, zero on broadcast axes.
Shape broadcast_strides(const Shape& in, const Shape& out) {
  Shape s(out.size(), 0);
  const Shape is = strides_of(in);
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    s[off + i] = in[i] == 1 ? 0 : is[i];
  }
  return s;
}

// Calls fn(out_index, a_index, b_index) over the broadcast output.
template <class Fn>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, Fn&& fn) {
  const std::int64_t n = numel(out);
  if (n == 0) return;
  const std::size_t rank = out.size();
  if (rank == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0;
  std::int64_t ib = 0;
  const std::int64_t inner = out[rank - 1];
  const std::int64_t da = sa[rank - 1];
  const std::int64_t db = sb[rank - 1];
  std::int64_t i = 0;
  while (i < n) {
    for (std::int64_t k = 0; k < inner; ++k) {
      fn(i++, ia + k * da, ib + k * db);
    }
    // odometer over the leading dims
    std::int64_t d = static_cast<std::int64_t>(rank) - 2;
    for (; d >= 0; --d) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
    if (d < 0) break;
  }
}

Tensor new_tensor(Shape shape, std::vector<double> data) {
  return Tensor(std::move(shape), std::move(data));
}

void check_finite_shape(const Shape& shape) {
  for (auto e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
  }
}

template <class F, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  const Shape sa = broadcast_strides(a.shape(), out_shape);
  const Shape sb = broadcast_strides(b.shape(), out_shape);
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for_each_broadcast(out_shape, sa, sb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
    out[i] = f(pa[ia], pb[ib]);
  });
  Tensor result = new_tensor(out_shape, std::move(out));
  if (needs_record({&a, &b})) {
    ImplPtr ai = a.impl_ptr();
    ImplPtr bi = b.impl_ptr();
    ImplPtr oi = result.impl_ptr();
    active_tape()->record(
        {ai, bi}, result,
        [ai, bi, oi, out_shape, sa, sb, dfa, dfb](std::span<const double> g,
                                                  std::span<std::vector<double>*> gin) {
          const double* pa = ai->data.data();
          const double* pb = bi->data.data();
          const double* po = oi->data.data();
          std::vector<double>* ga = gin[0];
          std::vector<double>* gb = gin[1];
          for_each_broadcast(out_shape, sa, sb,
                             [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
                               if (ga) (*ga)[ia] += g[i] * dfa(pa[ia], pb[ib], po[i]);
                               if (gb) (*gb)[ib] += g[i] * dfb(pa[ia], pb[ib], po[i]);
                             });
        });
  }
  return result;
}

template <class F, class DF>
Tensor unary_op(const Tensor& x, F f, DF df) {
  std::vector<double> out(x.data().size());
  const double* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(px[i]);
  Tensor result = new_tensor(x.shape(), std::move(out));
  if (needs_record({&x})) {
    ImplPtr xi = x.impl_ptr();
    ImplPtr oi = result.impl_ptr();
    active_tape()->record({xi}, result,
                          [xi, oi, df](std::span<const double> g,
                                       std::span<std::vector<double>*> gin) {
                            auto& gx = *gin[0];
                            const double* px = xi->data.data();
                            const double* po = oi->data.data();
                            for (std::size_t i = 0; i < gx.size(); ++i) {
                              gx[i] += g[i] * df(px[i], po[i]);
                            }
                          });
  }
  return result;
}

// Output position for each input element when reducing over `dims`.
struct ReduceMap {
  Shape out_shape_keep;
  Shape out_shape;
  std::vector<std::int64_t> target;
  std::int64_t group = 1;
};

ReduceMap make_reduce_map(const Shape& shape, std::vector<std::int64_t> dims, bool keepdim) {
  const auto rank = static_cast<std::int64_t>(shape.size());
  std::vector<bool> reduced(shape.size(), false);
  if (dims.empty()) {
    std::fill(reduced.begin(), reduced.end(), true);
  }
  for (auto d : dims) {
    reduced[normalize_axis(d, rank)] = true;
  }
  ReduceMap m;
  for (std::int64_t i = 0; i < rank; ++i) {
    m.out_shape_keep.push_back(reduced[i] ? 1 : shape[i]);
    if (reduced[i]) {
      m.group *= shape[i];
      if (keepdim) m.out_shape.push_back(1);
    } else {
      m.out_shape.push_back(shape[i]);
    }
  }
  const Shape so = broadcast_strides(m.out_shape_keep, shape);
  m.target.resize(static_cast<std::size_t>(numel(shape)));
  for_each_broadcast(shape, so, so, [&](std::int64_t i, std::int64_t io, std::int64_t) {
    m.target[i] = io;
  });
  return m;
}

void record_if(std::initializer_list<const Tensor*> inputs, const Tensor& out, BackwardFn fn) {
  if (!needs_record(inputs)) return;
  std::vector<ImplPtr> impls;
  for (const Tensor* t : inputs) impls.push_back(t->impl_ptr());
  active_tape()->record(std::move(impls), out, std::move(fn));
}

std::string axes_str(const std::vector<std::int64_t>& v) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ")";
  return os.str();
}

}  // namespace

Tensor make_tensor_from_impl(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

// ---------------------------------------------------------------------------
// Shapes

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) { return axes_str(shape); }

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcastable");
    }
    out[i] = ea == 1 ? eb : ea;
  }
  return out;
}

std::int64_t normalize_axis(std::int64_t axis, std::int64_t rank) {
  const std::int64_t a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return a;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {
  impl_->shape = {};
  impl_->data = {0.0};
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  check_finite_shape(shape);
  if (numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("shape " + shape_str(shape) + " holds " + std::to_string(numel(shape)) +
                     " elements but " + std::to_string(data.size()) + " were given");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_finite_shape(shape);
  const auto n = static_cast<std::size_t>(numel(shape));
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return Tensor({static_cast<std::int64_t>(values.size())}, std::vector<double>(values),
                requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  std::vector<double> data;
  std::int64_t cols = -1;
  for (const auto& r : rows) {
    if (cols >= 0 && static_cast<std::int64_t>(r.size()) != cols) {
      throw ShapeError("ragged matrix literal");
    }
    cols = static_cast<std::int64_t>(r.size());
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({static_cast<std::int64_t>(rows.size()), std::max<std::int64_t>(cols, 0)},
                std::move(data), requires_grad);
}

std::int64_t Tensor::dim(std::int64_t axis) const {
  return impl_->shape[static_cast<std::size_t>(normalize_axis(axis, rank()))];
}

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw ContractError("item() requires a one-element tensor, got shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

Tensor Tensor::grad() const {
  if (!impl_->grad) throw ContractError("tensor has no gradient");
  return Tensor(shape(), *impl_->grad);
}

std::span<const double> Tensor::grad_data() const {
  if (!impl_->grad) throw ContractError("tensor has no gradient");
  return *impl_->grad;
}

void Tensor::zero_grad() { impl_->grad = std::vector<double>(impl_->data.size(), 0.0); }

void Tensor::clear_grad() { impl_->grad.reset(); }

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data); }

void Tensor::backward() const { hyp::backward(*this); }

// ---------------------------------------------------------------------------
// Tape

Tape::~Tape() { clear(); }

void Tape::clear() {
  for (auto& r : records_) {
    if (r.output && r.output->tape == this) r.output->tape = nullptr;
  }
  records_.clear();
}

void Tape::record(std::vector<std::shared_ptr<TensorImpl>> inputs, const Tensor& output,
                  BackwardFn backward) {
  TensorImpl& o = output.impl();
  o.requires_grad = true;
  o.is_leaf = false;
  o.tape = this;
  o.record = records_.size();
  records_.push_back({std::move(inputs), output.impl_ptr(), std::move(backward)});
}

void Tape::backward(const Tensor& loss) const {
  if (loss.size() != 1) {
    throw ContractError("backward requires a one-element loss, got shape " +
                        shape_str(loss.shape()));
  }
  const TensorImpl& li = loss.impl();
  if (li.tape != this || li.record >= records_.size() ||
      records_[li.record].output.get() != &li) {
    throw ContractError("loss was not recorded on this tape");
  }
  std::unordered_map<TensorImpl*, std::vector<double>> grads;
  grads[loss.impl_ptr().get()] = {1.0};
  std::vector<std::vector<double>*> gin;
  for (std::size_t r = li.record + 1; r-- > 0;) {
    const Record& rec = records_[r];
    auto it = grads.find(rec.output.get());
    if (it == grads.end()) continue;
    gin.assign(rec.inputs.size(), nullptr);
    bool any = false;
    for (std::size_t k = 0; k < rec.inputs.size(); ++k) {
      TensorImpl* in = rec.inputs[k].get();
      if (!in->requires_grad) continue;
      auto [gi, inserted] = grads.try_emplace(in);
      if (inserted) gi->second.assign(in->data.size(), 0.0);
      gin[k] = &gi->second;
      any = true;
    }
    if (any) {
      // `it` stays valid: unordered_map never invalidates element references.
      rec.backward(it->second, gin);
    }
  }
  for (auto& [impl, g] : grads) {
    if (impl->is_leaf) {
      if (!impl->grad) {
        impl->grad = std::move(g);
      } else {
        auto& acc = *impl->grad;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
      }
    } else {
      impl->grad = std::move(g);
    }
  }
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  const Tape* tape = loss.impl().tape;
  if (tape == nullptr) throw ContractError("loss does not belong to a live differentiation tape");
  tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw ContractError("division by exact zero");
  }
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Tensor safe_div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return y == 0.0 ? 0.0 : x / y; },
      [](double, double y, double) { return y == 0.0 ? 0.0 : 1.0 / y; },
      [](double, double y, double o) { return y == 0.0 ? 0.0 : -o / y; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); }, [](double, double o) { return 1.0 - o * o; });
}

Tensor artanh(const Tensor& x) {
  static constexpr double lo = -1.0 + kArtanhClamp;
  static constexpr double hi = 1.0 - kArtanhClamp;
  return unary_op(
      x, [](double v) { return std::atanh(std::clamp(v, lo, hi)); },
      [](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0 / (1.0 - v * v); });
}

Tensor asinh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::asinh(v); },
      [](double v, double) { return 1.0 / std::sqrt(1.0 + v * v); });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::sqrt(v); }, [](double, double o) { return 0.5 / o; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); }, [](double, double o) { return o; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor pow(const Tensor& x, double p) {
  return unary_op(
      x, [p](double v) { return std::pow(v, p); },
      [p](double v, double) { return p == 0.0 ? 0.0 : p * std::pow(v, p - 1.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary_op(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

Tensor clamp_min(const Tensor& x, double lo) {
  return unary_op(
      x, [lo](double v) { return std::max(v, lo); },
      [lo](double v, double) { return v < lo ? 0.0 : 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      x,
      [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& x) { return neg(x); }
Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
Tensor operator/(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::int64_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::int64_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  Tensor result = new_tensor({m, n}, std::move(out));
  ImplPtr ai = a.impl_ptr(), bi = b.impl_ptr();
  record_if({&a, &b}, result,
            [ai, bi, m, k, n](std::span<const double> g, std::span<std::vector<double>*> gin) {
              const double* pa = ai->data.data();
              const double* pb = bi->data.data();
              if (gin[0]) {
                // dA = dC * B^T
                auto& ga = *gin[0];
                for (std::int64_t i = 0; i < m; ++i) {
                  for (std::int64_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::int64_t j = 0; j < n; ++j) s += g[i * n + j] * pb[p * n + j];
                    ga[i * k + p] += s;
                  }
                }
              }
              if (gin[1]) {
                // dB = A^T * dC
                auto& gb = *gin[1];
                for (std::int64_t i = 0; i < m; ++i) {
                  for (std::int64_t p = 0; p < k; ++p) {
                    const double av = pa[i * k + p];
                    for (std::int64_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
                  }
                }
              }
            });
  return result;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x, std::vector<std::int64_t> dims, bool keepdim) {
  auto m = std::make_shared<ReduceMap>(make_reduce_map(x.shape(), std::move(dims), keepdim));
  std::vector<double> out(static_cast<std::size_t>(numel(m->out_shape)), 0.0);
  const double* px = x.data().data();
  for (std::size_t i = 0; i < m->target.size(); ++i) out[m->target[i]] += px[i];
  Tensor result = new_tensor(m->out_shape, std::move(out));
  record_if({&x}, result, [m](std::span<const double> g, std::span<std::vector<double>*> gin) {
    auto& gx = *gin[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[m->target[i]];
  });
  return result;
}

Tensor sum(const Tensor& x) { return sum(x, {}, false); }

Tensor mean(const Tensor& x, std::vector<std::int64_t> dims, bool keepdim) {
  auto m = make_reduce_map(x.shape(), dims, keepdim);
  if (m.group == 0) throw ContractError("mean over an empty axis");
  return sum(x, std::move(dims), keepdim) * (1.0 / static_cast<double>(m.group));
}

Tensor mean(const Tensor& x) { return mean(x, {}, false); }

Tensor norm2(const Tensor& x, std::vector<std::int64_t> dims, bool keepdim) {
  auto m = std::make_shared<ReduceMap>(make_reduce_map(x.shape(), std::move(dims), keepdim));
  std::vector<double> out(static_cast<std::size_t>(numel(m->out_shape)), 0.0);
  const double* px = x.data().data();
  for (std::size_t i = 0; i < m->target.size(); ++i) out[m->target[i]] += px[i] * px[i];
  for (double& v : out) v = std::sqrt(v);
  Tensor result = new_tensor(m->out_shape, std::move(out));
  ImplPtr xi = x.impl_ptr(), oi = result.impl_ptr();
  record_if({&x}, result,
            [m, xi, oi](std::span<const double> g, std::span<std::vector<double>*> gin) {
              auto& gx = *gin[0];
              const double* px = xi->data.data();
              const double* po = oi->data.data();
              for (std::size_t i = 0; i < gx.size(); ++i) {
                const double n = po[m->target[i]];
                if (n != 0.0) gx[i] += g[m->target[i]] * px[i] / n;
              }
            });
  return result;
}

Tensor amax(const Tensor& x, std::int64_t dim, bool keepdim) {
  auto m = std::make_shared<ReduceMap>(make_reduce_map(x.shape(), {dim}, keepdim));
  if (m->group == 0) throw ContractError("amax over an empty axis");
  const auto n_out = static_cast<std::size_t>(numel(m->out_shape));
  std::vector<double> out(n_out, 0.0);
  auto arg = std::make_shared<std::vector<std::int64_t>>(n_out, -1);
  const double* px = x.data().data();
  for (std::size_t i = 0; i < m->target.size(); ++i) {
    const auto t = m->target[i];
    if ((*arg)[t] < 0 || px[i] > out[t]) {
      out[t] = px[i];
      (*arg)[t] = static_cast<std::int64_t>(i);
    }
  }
  Tensor result = new_tensor(m->out_shape, std::move(out));
  record_if({&x}, result, [arg](std::span<const double> g, std::span<std::vector<double>*> gin) {
    auto& gx = *gin[0];
    for (std::size_t t = 0; t < arg->size(); ++t) gx[(*arg)[t]] += g[t];
  });
  return result;
}

// ---------------------------------------------------------------------------
// Restructuring

Tensor reshape(const Tensor& x, Shape shape) {
  std::int64_t infer = -1;
  std::int64_t known = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape allows at most one inferred extent");
      infer = static_cast<std::int64_t>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known != 0) shape[infer] = x.size() / known;
  if (numel(shape) != x.size()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " into " + shape_str(shape));
  }
  Tensor result = new_tensor(shape, std::vector<double>(x.data().begin(), x.data().end()));
  record_if({&x}, result, [](std::span<const double> g, std::span<std::vector<double>*> gin) {
    auto& gx = *gin[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
  return result;
}

Tensor unsqueeze(const Tensor& x, std::int64_t axis) {
  Shape s = x.shape();
  const std::int64_t a = normalize_axis(axis, x.rank() + 1);
  s.insert(s.begin() + a, 1);
  return reshape(x, std::move(s));
}

Tensor squeeze(const Tensor& x, std::int64_t axis) {
  Shape s = x.shape();
  const std::int64_t a = normalize_axis(axis, x.rank());
  if (s[a] != 1) throw ShapeError("squeeze of axis with extent " + std::to_string(s[a]));
  s.erase(s.begin() + a);
  return reshape(x, std::move(s));
}

Tensor permute(const Tensor& x, std::vector<std::int64_t> order) {
  const std::int64_t rank = x.rank();
  if (static_cast<std::int64_t>(order.size()) != rank) {
    throw ShapeError("permutation " + axes_str(order) + " does not match rank " +
                     std::to_string(rank));
  }
  std::vector<bool> seen(order.size(), false);
  for (auto& o : order) {
    o = normalize_axis(o, rank);
    if (seen[o]) throw ShapeError("permutation " + axes_str(order) + " repeats an axis");
    seen[o] = true;
  }
  const Shape& in = x.shape();
  Shape out_shape(order.size());
  const Shape in_strides = strides_of(in);
  Shape src_strides(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out_shape[i] = in[order[i]];
    src_strides[i] = in_strides[order[i]];
  }
  auto src = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(x.size()));
  for_each_broadcast(out_shape, src_strides, src_strides,
                     [&](std::int64_t i, std::int64_t s, std::int64_t) { (*src)[i] = s; });
  std::vector<double> out(src->size());
  const double* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[(*src)[i]];
  Tensor result = new_tensor(out_shape, std::move(out));
  record_if({&x}, result, [src](std::span<const double> g, std::span<std::vector<double>*> gin) {
    auto& gx = *gin[0];
    for (std::size_t i = 0; i < src->size(); ++i) gx[(*src)[i]] += g[i];
  });
  return result;
}

Tensor transpose(const Tensor& x, std::int64_t d0, std::int64_t d1) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(x.rank()));
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[normalize_axis(d0, x.rank())], order[normalize_axis(d1, x.rank())]);
  return permute(x, std::move(order));
}

Tensor concat(std::span<const Tensor> parts, std::int64_t axis) {
  if (parts.empty()) throw ContractError("concat of an empty list");
  const std::int64_t rank = parts[0].rank();
  const std::int64_t a = normalize_axis(axis, rank);
  Shape out_shape = parts[0].shape();
  out_shape[a] = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat operands differ in rank");
    for (std::int64_t d = 0; d < rank; ++d) {
      if (d != a && p.shape()[d] != parts[0].shape()[d]) {
        throw ShapeError("concat operands " + shape_str(parts[0].shape()) + " and " +
                         shape_str(p.shape()) + " differ off the concat axis");
      }
    }
    out_shape[a] += p.shape()[a];
  }
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < a; ++d) outer *= out_shape[d];
  for (std::int64_t d = a + 1; d < rank; ++d) inner *= out_shape[d];
  const std::int64_t out_row = out_shape[a] * inner;
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::int64_t row = p.shape()[a] * inner;
    const double* pp = p.data().data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy(pp + o * row, pp + (o + 1) * row, out.begin() + o * out_row + off);
    }
    off += row;
  }
  Tensor result = new_tensor(out_shape, std::move(out));
  bool record = false;
  for (const auto& p : parts) record = record || p.requires_grad();
  if (record && active_tape()) {
    std::vector<ImplPtr> impls;
    std::vector<std::int64_t> rows;
    for (const auto& p : parts) {
      impls.push_back(p.impl_ptr());
      rows.push_back(p.shape()[a] * inner);
    }
    active_tape()->record(
        std::move(impls), result,
        [offsets, rows, outer, out_row](std::span<const double> g,
                                        std::span<std::vector<double>*> gin) {
          for (std::size_t k = 0; k < gin.size(); ++k) {
            if (!gin[k]) continue;
            auto& gp = *gin[k];
            for (std::int64_t o = 0; o < outer; ++o) {
              for (std::int64_t j = 0; j < rows[k]; ++j) {
                gp[o * rows[k] + j] += g[o * out_row + offsets[k] + j];
              }
            }
          }
        });
  }
  return result;
}

Tensor concat(std::initializer_list<Tensor> parts, std::int64_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t stop) {
  const std::int64_t a = normalize_axis(axis, x.rank());
  const std::int64_t extent = x.shape()[a];
  if (start < 0) start += extent;
  if (stop < 0) stop += extent;
  if (start < 0 || stop > extent || start > stop) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(stop) +
                     ") out of range for extent " + std::to_string(extent));
  }
  Shape out_shape = x.shape();
  out_shape[a] = stop - start;
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < a; ++d) outer *= out_shape[d];
  for (std::int64_t d = a + 1; d < x.rank(); ++d) inner *= out_shape[d];
  const std::int64_t in_row = extent * inner;
  const std::int64_t out_row = (stop - start) * inner;
  const std::int64_t off = start * inner;
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  const double* px = x.data().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy(px + o * in_row + off, px + o * in_row + off + out_row, out.begin() + o * out_row);
  }
  Tensor result = new_tensor(out_shape, std::move(out));
  record_if({&x}, result,
            [outer, in_row, out_row, off](std::span<const double> g,
                                          std::span<std::vector<double>*> gin) {
              auto& gx = *gin[0];
              for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t j = 0; j < out_row; ++j) gx[o * in_row + off + j] += g[o * out_row + j];
              }
            });
  return result;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (broadcast_shapes(x.shape(), shape) != shape) {
    throw ShapeError("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const Shape sx = broadcast_strides(x.shape(), shape);
  auto src = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(numel(shape)));
  for_each_broadcast(shape, sx, sx, [&](std::int64_t i, std::int64_t s, std::int64_t) { (*src)[i] = s; });
  std::vector<double> out(src->size());
  const double* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[(*src)[i]];
  Tensor result = new_tensor(shape, std::move(out));
  record_if({&x}, result, [src](std::span<const double> g, std::span<std::vector<double>*> gin) {
    auto& gx = *gin[0];
    for (std::size_t i = 0; i < src->size(); ++i) gx[(*src)[i]] += g[i];
  });
  return result;
}

Tensor index_select(const Tensor& x, std::int64_t axis, std::span<const std::int64_t> indices) {
  const std::int64_t a = normalize_axis(axis, x.rank());
  const std::int64_t extent = x.shape()[a];
  for (auto i : indices) {
    if (i < 0 || i >= extent) {
      throw ShapeError("index " + std::to_string(i) + " out of range for extent " +
                       std::to_string(extent));
    }
  }
  Shape out_shape = x.shape();
  out_shape[a] = static_cast<std::int64_t>(indices.size());
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < a; ++d) outer *= out_shape[d];
  for (std::int64_t d = a + 1; d < x.rank(); ++d) inner *= out_shape[d];
  auto idx = std::make_shared<std::vector<std::int64_t>>(indices.begin(), indices.end());
  const auto count = static_cast<std::int64_t>(idx->size());
  std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
  const double* px = x.data().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t k = 0; k < count; ++k) {
      const double* src = px + (o * extent + (*idx)[k]) * inner;
      std::copy(src, src + inner, out.begin() + (o * count + k) * inner);
    }
  }
  Tensor result = new_tensor(out_shape, std::move(out));
  record_if({&x}, result,
            [idx, outer, inner, extent, count](std::span<const double> g,
                                               std::span<std::vector<double>*> gin) {
              auto& gx = *gin[0];
              for (std::int64_t o = 0; o < outer; ++o) {
                for (std::int64_t k = 0; k < count; ++k) {
                  const std::int64_t dst = (o * extent + (*idx)[k]) * inner;
                  const std::int64_t src = (o * count + k) * inner;
                  for (std::int64_t j = 0; j < inner; ++j) gx[dst + j] += g[src + j];
                }
              }
            });
  return result;
}

Tensor unfold2d(const Tensor& x, Size2 kernel, Size2 stride, Size2 padding) {
  if (x.rank() != 4) throw ShapeError("unfold2d expects N x C x H x W, got " + shape_str(x.shape()));
  if (kernel.h <= 0 || kernel.w <= 0 || stride.h <= 0 || stride.w <= 0 || padding.h < 0 ||
      padding.w < 0) {
    throw ShapeError("unfold2d requires positive kernel/stride and nonnegative padding");
  }
  const std::int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::int64_t ph = h + 2 * padding.h, pw = w + 2 * padding.w;
  if (kernel.h > ph || kernel.w > pw) {
    throw ShapeError("kernel larger than padded input " + shape_str(x.shape()));
  }
  const std::int64_t oh = (ph - kernel.h) / stride.h + 1;
  const std::int64_t ow = (pw - kernel.w) / stride.w + 1;
  const std::int64_t rows = c * kernel.h * kernel.w;
  const std::int64_t l = oh * ow;
  // Source index per output element, -1 for padding.
  auto src = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n * rows * l), -1);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t ki = 0; ki < kernel.h; ++ki) {
        for (std::int64_t kj = 0; kj < kernel.w; ++kj) {
          const std::int64_t row = (ch * kernel.h + ki) * kernel.w + kj;
          for (std::int64_t oi = 0; oi < oh; ++oi) {
            const std::int64_t yi = oi * stride.h + ki - padding.h;
            for (std::int64_t oj = 0; oj < ow; ++oj) {
              const std::int64_t xj = oj * stride.w + kj - padding.w;
              if (yi < 0 || yi >= h || xj < 0 || xj >= w) continue;
              (*src)[(b * rows + row) * l + oi * ow + oj] = ((b * c + ch) * h + yi) * w + xj;
            }
          }
        }
      }
    }
  }
  std::vector<double> out(src->size(), 0.0);
  const double* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if ((*src)[i] >= 0) out[i] = px[(*src)[i]];
  }
  Tensor result = new_tensor({n, rows, l}, std::move(out));
  record_if({&x}, result, [src](std::span<const double> g, std::span<std::vector<double>*> gin) {
    auto& gx = *gin[0];
    for (std::size_t i = 0; i < src->size(); ++i) {
      if ((*src)[i] >= 0) gx[(*src)[i]] += g[i];
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult gradient_check_inplace(const std::function<Tensor()>& f, Tensor& param, double h,
                                       double floor) {
  if (!param.requires_grad()) throw ContractError("gradient_check needs a tensor requiring grad");
  GradCheckResult res;
  {
    Tape tape;
    TapeScope scope(tape);
    param.clear_grad();
    Tensor y = f();
    if (y.size() != 1) throw ContractError("gradient_check needs a scalar-valued function");
    if (y.requires_grad()) {
      tape.backward(y);
    }
    res.analytic = param.has_grad() ? std::vector<double>(param.grad_data().begin(),
                                                          param.grad_data().end())
                                    : std::vector<double>(static_cast<std::size_t>(param.size()), 0.0);
    param.clear_grad();
  }
  NoGradScope no_grad;
  auto values = param.mutable_data();
  res.numeric.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double fp = f().item();
    values[i] = orig - h;
    const double fm = f().item();
    values[i] = orig;
    res.numeric[i] = (fp - fm) / (2.0 * h);
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double a = res.analytic[i], n = res.numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(a - n) / denom);
  }
  return res;
}

GradCheckResult gradient_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double h, double floor) {
  Tensor probe = x.detach();
  probe.set_requires_grad(true);
  return gradient_check_inplace([&]() { return f(probe); }, probe, h, floor);
}

}  // namespace hyp
