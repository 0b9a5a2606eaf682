#pragma once

// Tensors that know which manifold their data lives on.
//
// A ManifoldTensor stores points along its manifold dimension; a TangentTensor
// stores tangent vectors, optionally anchored at broadcastable base points
// (no base means every vector sits at the origin). Every operation between two
// of these objects checks that they share the same manifold instance and that
// their manifold dimensions line up.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hyptk/manifold.hpp"
#include "hyptk/tensor.hpp"

namespace hyp {

class ManifoldTensor {
 public:
  // Validates man_dim and projects the data onto the manifold.
  ManifoldTensor(Tensor tensor, ManifoldPtr manifold, std::int64_t man_dim = -1);

  // Wraps data already produced by a manifold operation, skipping projection.
  static ManifoldTensor trusted(Tensor tensor, ManifoldPtr manifold, std::int64_t man_dim);

  const Tensor& tensor() const { return tensor_; }
  const ManifoldPtr& manifold() const { return manifold_; }
  // Normalized to [0, rank).
  std::int64_t man_dim() const { return man_dim_; }
  std::int64_t point_dim() const { return tensor_.shape()[static_cast<std::size_t>(man_dim_)]; }
  const Shape& shape() const { return tensor_.shape(); }

  ManifoldTensor detach() const { return trusted(tensor_.detach(), manifold_, man_dim_); }

 protected:
  struct Trusted {};
  ManifoldTensor(Trusted, Tensor tensor, ManifoldPtr manifold, std::int64_t man_dim);

  Tensor tensor_;
  ManifoldPtr manifold_;
  std::int64_t man_dim_;
};

// Trainable ManifoldTensor; the tensor requires a gradient and is updated in
// place by one optimizer at a time.
class ManifoldParameter : public ManifoldTensor {
 public:
  ManifoldParameter(Tensor tensor, ManifoldPtr manifold, std::int64_t man_dim = -1);

  Tensor& tensor_mut() { return tensor_; }
};

class TangentTensor {
 public:
  TangentTensor(Tensor vectors, ManifoldPtr manifold, std::optional<ManifoldTensor> base = {},
                std::int64_t man_dim = -1);

  const Tensor& tensor() const { return vectors_; }
  const ManifoldPtr& manifold() const { return manifold_; }
  const std::optional<ManifoldTensor>& base() const { return base_; }
  std::int64_t man_dim() const { return man_dim_; }
  const Shape& shape() const { return vectors_.shape(); }

 private:
  Tensor vectors_;
  ManifoldPtr manifold_;
  std::optional<ManifoldTensor> base_;
  std::int64_t man_dim_;
};

// Throws ManifoldMismatchError unless both reference the same manifold
// instance, DimensionError unless their manifold dimensions align under
// broadcasting, ShapeError unless the shapes broadcast.
void check_compatible(const ManifoldTensor& a, const ManifoldTensor& b);
void check_compatible(const ManifoldTensor& a, const TangentTensor& b);
void check_compatible(const TangentTensor& a, const ManifoldTensor& b);
void check_compatible(const TangentTensor& a, const TangentTensor& b);

// ---------------------------------------------------------------------------
// Checked geometric operations.

ManifoldTensor mobius_add(const ManifoldTensor& x, const ManifoldTensor& y);
ManifoldTensor expmap(const TangentTensor& v);
TangentTensor logmap0(const ManifoldTensor& y);
TangentTensor logmap(const ManifoldTensor& base, const ManifoldTensor& y);
// Plain tensor with the manifold dimension removed.
Tensor distance(const ManifoldTensor& x, const ManifoldTensor& y);
Tensor conformal_factor(const ManifoldTensor& x);
// Moves tangent vectors from their base (or the origin) to `to`.
TangentTensor parallel_transport(const TangentTensor& v, const ManifoldTensor& to);
ManifoldTensor frechet_mean(const ManifoldTensor& x, std::int64_t batch_axis,
                            std::span<const double> weights = {}, double tol = 1e-9,
                            int max_iter = 100);
Tensor frechet_variance(const ManifoldTensor& x, const ManifoldTensor& mu, std::int64_t batch_axis);
ManifoldTensor mobius_matvec(const Tensor& m, const ManifoldTensor& x);
Tensor mlr_logits(const ManifoldTensor& x, const ManifoldTensor& p, const Tensor& a);
ManifoldTensor beta_concat(std::span<const ManifoldTensor> parts);

}  // namespace hyp
