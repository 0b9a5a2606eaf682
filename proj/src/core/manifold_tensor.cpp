#include "hyptk/manifold_tensor.hpp"

#include <sstream>

namespace hyp {

namespace {

std::int64_t checked_man_dim(std::int64_t man_dim, std::int64_t rank) {
  const std::int64_t d = man_dim < 0 ? man_dim + rank : man_dim;
  if (d < 0 || d >= rank) {
    throw DimensionError("man_dim " + std::to_string(man_dim) + " invalid for rank " +
                         std::to_string(rank));
  }
  return d;
}

struct View {
  const Shape* shape;
  const Manifold* manifold;
  std::int64_t man_dim;
  const char* what;
};

std::string describe(const View& v) {
  std::ostringstream os;
  os << v.what << " on " << (v.manifold ? v.manifold->name() : "<none>") << " with shape "
     << shape_str(*v.shape) << " and man_dim " << v.man_dim;
  return os.str();
}

void check_views(const View& a, const View& b) {
  if (a.manifold != b.manifold) {
    throw ManifoldMismatchError("manifold mismatch: " + describe(a) + " vs " + describe(b));
  }
  const auto ra = static_cast<std::int64_t>(a.shape->size());
  const auto rb = static_cast<std::int64_t>(b.shape->size());
  if (ra - a.man_dim != rb - b.man_dim) {
    throw DimensionError("manifold dimensions do not align: " + describe(a) + " vs " +
                         describe(b));
  }
  if ((*a.shape)[a.man_dim] != (*b.shape)[b.man_dim]) {
    throw DimensionError("manifold dimension extents differ: " + describe(a) + " vs " +
                         describe(b));
  }
  try {
    broadcast_shapes(*a.shape, *b.shape);
  } catch (const ShapeError&) {
    throw ShapeError("shapes not broadcastable: " + describe(a) + " vs " + describe(b));
  }
}

View view(const ManifoldTensor& t) {
  return {&t.shape(), t.manifold().get(), t.man_dim(), "manifold tensor"};
}
View view(const TangentTensor& t) {
  return {&t.shape(), t.manifold().get(), t.man_dim(), "tangent tensor"};
}

// Projected copy of `tensor` that owns its own gradient slot.
Tensor parameter_data(const Tensor& tensor, const ManifoldPtr& manifold, std::int64_t man_dim) {
  if (!manifold) throw ContractError("manifold parameter requires a manifold");
  const std::int64_t d = checked_man_dim(man_dim, tensor.rank());
  NoGradScope no_grad;
  Tensor projected = manifold->project(tensor.detach(), d);
  return Tensor(projected.shape(),
                std::vector<double>(projected.data().begin(), projected.data().end()), true);
}

std::int64_t trailing(const ManifoldTensor& t) { return t.man_dim() - t.tensor().rank(); }

}  // namespace

ManifoldTensor::ManifoldTensor(Tensor tensor, ManifoldPtr manifold, std::int64_t man_dim)
    : tensor_(std::move(tensor)), manifold_(std::move(manifold)) {
  if (!manifold_) throw ContractError("manifold tensor requires a manifold");
  man_dim_ = checked_man_dim(man_dim, tensor_.rank());
  tensor_ = manifold_->project(tensor_, man_dim_);
}

ManifoldTensor::ManifoldTensor(Trusted, Tensor tensor, ManifoldPtr manifold, std::int64_t man_dim)
    : tensor_(std::move(tensor)), manifold_(std::move(manifold)) {
  man_dim_ = checked_man_dim(man_dim, tensor_.rank());
}

ManifoldTensor ManifoldTensor::trusted(Tensor tensor, ManifoldPtr manifold, std::int64_t man_dim) {
  return ManifoldTensor(Trusted{}, std::move(tensor), std::move(manifold), man_dim);
}

ManifoldParameter::ManifoldParameter(Tensor tensor, ManifoldPtr manifold, std::int64_t man_dim)
    : ManifoldTensor(Trusted{}, parameter_data(tensor, manifold, man_dim), manifold, man_dim) {}

TangentTensor::TangentTensor(Tensor vectors, ManifoldPtr manifold,
                             std::optional<ManifoldTensor> base, std::int64_t man_dim)
    : vectors_(std::move(vectors)), manifold_(std::move(manifold)), base_(std::move(base)) {
  if (!manifold_) throw ContractError("tangent tensor requires a manifold");
  man_dim_ = checked_man_dim(man_dim, vectors_.rank());
  if (base_) check_views(view(*base_), view(*this));
}

void check_compatible(const ManifoldTensor& a, const ManifoldTensor& b) { check_views(view(a), view(b)); }
void check_compatible(const ManifoldTensor& a, const TangentTensor& b) { check_views(view(a), view(b)); }
void check_compatible(const TangentTensor& a, const ManifoldTensor& b) { check_views(view(a), view(b)); }
void check_compatible(const TangentTensor& a, const TangentTensor& b) { check_views(view(a), view(b)); }

// ---------------------------------------------------------------------------

ManifoldTensor mobius_add(const ManifoldTensor& x, const ManifoldTensor& y) {
  check_compatible(x, y);
  const std::int64_t d = trailing(x);
  Tensor out = x.manifold()->mobius_add(x.tensor(), y.tensor(), d);
  return ManifoldTensor::trusted(out, x.manifold(), out.rank() + d);
}

ManifoldTensor expmap(const TangentTensor& v) {
  const std::int64_t d = v.man_dim() - v.tensor().rank();
  Tensor out = v.base() ? v.manifold()->expmap(v.base()->tensor(), v.tensor(), d)
                        : v.manifold()->expmap0(v.tensor(), d);
  return ManifoldTensor::trusted(out, v.manifold(), out.rank() + d);
}

TangentTensor logmap0(const ManifoldTensor& y) {
  return TangentTensor(y.manifold()->logmap0(y.tensor(), y.man_dim()), y.manifold(), std::nullopt,
                       y.man_dim());
}

TangentTensor logmap(const ManifoldTensor& base, const ManifoldTensor& y) {
  check_compatible(base, y);
  const std::int64_t d = trailing(y);
  Tensor out = y.manifold()->logmap(base.tensor(), y.tensor(), d);
  return TangentTensor(out, y.manifold(), base, out.rank() + d);
}

Tensor distance(const ManifoldTensor& x, const ManifoldTensor& y) {
  check_compatible(x, y);
  return x.manifold()->distance(x.tensor(), y.tensor(), trailing(x), false);
}

Tensor conformal_factor(const ManifoldTensor& x) {
  return x.manifold()->conformal_factor(x.tensor(), x.man_dim());
}

TangentTensor parallel_transport(const TangentTensor& v, const ManifoldTensor& to) {
  check_compatible(v, to);
  const std::int64_t d = v.man_dim() - v.tensor().rank();
  Tensor from = v.base() ? v.base()->tensor() : Tensor::zeros({v.shape()[v.man_dim()]});
  if (!v.base()) {
    Shape s(static_cast<std::size_t>(-d), 1);
    s[0] = v.shape()[v.man_dim()];
    from = reshape(from, s);
  }
  Tensor out = v.manifold()->parallel_transport(from, to.tensor(), v.tensor(), d);
  return TangentTensor(out, v.manifold(), to, out.rank() + d);
}

ManifoldTensor frechet_mean(const ManifoldTensor& x, std::int64_t batch_axis,
                            std::span<const double> weights, double tol, int max_iter) {
  const std::int64_t b = normalize_axis(batch_axis, x.tensor().rank());
  if (b == x.man_dim()) {
    throw DimensionError("frechet_mean: batch axis coincides with the manifold dimension");
  }
  Tensor mu = x.manifold()->frechet_mean(x.tensor(), b, x.man_dim(), weights, tol, max_iter);
  return ManifoldTensor::trusted(mu, x.manifold(), x.man_dim());
}

Tensor frechet_variance(const ManifoldTensor& x, const ManifoldTensor& mu, std::int64_t batch_axis) {
  check_compatible(x, mu);
  return x.manifold()->frechet_variance(x.tensor(), mu.tensor(), batch_axis, x.man_dim());
}

ManifoldTensor mobius_matvec(const Tensor& m, const ManifoldTensor& x) {
  Tensor out = x.manifold()->mobius_matvec(m, x.tensor(), x.man_dim());
  return ManifoldTensor::trusted(out, x.manifold(), x.man_dim());
}

Tensor mlr_logits(const ManifoldTensor& x, const ManifoldTensor& p, const Tensor& a) {
  if (x.manifold() != p.manifold()) {
    throw ManifoldMismatchError("manifold mismatch: input on " + x.manifold()->name() +
                                " vs hyperplanes on " + p.manifold()->name());
  }
  if (x.tensor().rank() != 2 || x.man_dim() != 1 || p.tensor().rank() != 2 || p.man_dim() != 1) {
    throw DimensionError("mlr_logits expects rank-2 inputs with man_dim 1");
  }
  if (x.point_dim() != p.point_dim()) {
    throw DimensionError("mlr_logits: point dimension " + std::to_string(x.point_dim()) +
                         " vs hyperplane dimension " + std::to_string(p.point_dim()));
  }
  return x.manifold()->mlr_logits(x.tensor(), p.tensor(), a);
}

ManifoldTensor beta_concat(std::span<const ManifoldTensor> parts) {
  if (parts.empty()) throw ContractError("beta_concat of an empty list");
  std::vector<Tensor> tensors;
  const auto& first = parts[0];
  for (const auto& p : parts) {
    if (p.manifold() != first.manifold()) {
      throw ManifoldMismatchError("beta_concat: " + p.manifold()->name() + " vs " +
                                  first.manifold()->name());
    }
    if (p.man_dim() != first.man_dim() || p.tensor().rank() != first.tensor().rank()) {
      throw DimensionError("beta_concat: manifold dimensions do not align");
    }
    tensors.push_back(p.tensor());
  }
  Tensor out = first.manifold()->beta_concat(tensors, first.man_dim());
  return ManifoldTensor::trusted(out, first.manifold(), first.man_dim());
}

}  // namespace hyp
