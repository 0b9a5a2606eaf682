#pragma once

// Euclidean space and the Poincare ball behind one operation interface.
//
// Every operation acts along `dim`, the axis holding the coordinates of each
// point or vector. Operands broadcast over the remaining axes, so `dim` is
// interpreted relative to the trailing dimensions (-1 is the last axis).

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hyptk/tensor.hpp"

namespace hyp {

// Points are kept at sqrt(c) * |x| <= 1 - kBallEps.
inline constexpr double kBallEps = 1e-5;

enum class ManifoldKind { kEuclidean, kPoincareBall };

// Absolute curvature c = softplus(raw) > 0; the ball has curvature -c.
class Curvature {
 public:
  explicit Curvature(double c = 1.0, bool learnable = false);
  static std::shared_ptr<Curvature> from_raw(double raw, bool learnable);

  // c as a tensor on the active tape (carries gradient when learnable).
  Tensor value() const;
  double c() const;
  Tensor& raw() { return raw_; }
  const Tensor& raw() const { return raw_; }
  bool learnable() const { return learnable_; }

 private:
  Curvature(Tensor raw, bool learnable);

  Tensor raw_;
  bool learnable_;
};

class Manifold {
 public:
  virtual ~Manifold() = default;

  virtual ManifoldKind kind() const = 0;
  virtual std::string name() const = 0;

  // Radial projection into the ball (identity in Euclidean space).
  virtual Tensor project(const Tensor& x, std::int64_t dim) const = 0;
  virtual bool contains(const Tensor& x, std::int64_t dim, double tol = 1e-12) const = 0;

  virtual Tensor mobius_add(const Tensor& x, const Tensor& y, std::int64_t dim) const = 0;
  virtual Tensor gyration(const Tensor& u, const Tensor& v, const Tensor& w,
                          std::int64_t dim) const = 0;
  // Keeps `dim` with extent 1.
  virtual Tensor conformal_factor(const Tensor& x, std::int64_t dim) const = 0;

  virtual Tensor expmap0(const Tensor& v, std::int64_t dim) const = 0;
  virtual Tensor logmap0(const Tensor& y, std::int64_t dim) const = 0;
  virtual Tensor expmap(const Tensor& x, const Tensor& v, std::int64_t dim) const = 0;
  virtual Tensor logmap(const Tensor& x, const Tensor& y, std::int64_t dim) const = 0;
  virtual Tensor distance(const Tensor& x, const Tensor& y, std::int64_t dim,
                          bool keepdim = false) const = 0;
  virtual Tensor parallel_transport(const Tensor& x, const Tensor& y, const Tensor& v,
                                    std::int64_t dim) const = 0;

  virtual Tensor egrad_to_rgrad(const Tensor& x, const Tensor& g, std::int64_t dim) const = 0;
  // Metric inner product <u, v>_x, scaled as (lambda_x / 2)^2 <u, v> on the ball.
  virtual Tensor inner(const Tensor& x, const Tensor& u, const Tensor& v, std::int64_t dim,
                       bool keepdim = false) const = 0;

  // M (out x in) applied along dim.
  virtual Tensor mobius_matvec(const Tensor& m, const Tensor& x, std::int64_t dim) const = 0;
  // x: N x D, p: K x D points, a: K x D normals -> N x K logits.
  virtual Tensor mlr_logits(const Tensor& x, const Tensor& p, const Tensor& a) const = 0;
  virtual Tensor beta_concat(std::span<const Tensor> parts, std::int64_t dim) const = 0;
  // Tangent-space factor applied when concatenating `part`-dim vectors into a
  // `total`-dim one.
  virtual double concat_scale(std::int64_t total, std::int64_t part) const = 0;

  // Weighted Frechet mean over batch_axis (kept with extent 1).
  virtual Tensor frechet_mean(const Tensor& x, std::int64_t batch_axis, std::int64_t dim,
                              std::span<const double> weights = {}, double tol = 1e-9,
                              int max_iter = 100) const = 0;
  // Mean squared distance to mu over batch_axis; both batch_axis and dim are dropped.
  Tensor frechet_variance(const Tensor& x, const Tensor& mu, std::int64_t batch_axis,
                          std::int64_t dim) const;

  // Iterations executed by the last frechet_mean call on this thread.
  static int last_frechet_iterations();

 protected:
  static void set_last_frechet_iterations(int n);
};

using ManifoldPtr = std::shared_ptr<const Manifold>;

class Euclidean final : public Manifold {
 public:
  ManifoldKind kind() const override { return ManifoldKind::kEuclidean; }
  std::string name() const override { return "euclidean"; }

  Tensor project(const Tensor& x, std::int64_t dim) const override;
  bool contains(const Tensor& x, std::int64_t dim, double tol) const override;
  Tensor mobius_add(const Tensor& x, const Tensor& y, std::int64_t dim) const override;
  Tensor gyration(const Tensor& u, const Tensor& v, const Tensor& w,
                  std::int64_t dim) const override;
  Tensor conformal_factor(const Tensor& x, std::int64_t dim) const override;
  Tensor expmap0(const Tensor& v, std::int64_t dim) const override;
  Tensor logmap0(const Tensor& y, std::int64_t dim) const override;
  Tensor expmap(const Tensor& x, const Tensor& v, std::int64_t dim) const override;
  Tensor logmap(const Tensor& x, const Tensor& y, std::int64_t dim) const override;
  Tensor distance(const Tensor& x, const Tensor& y, std::int64_t dim,
                  bool keepdim) const override;
  Tensor parallel_transport(const Tensor& x, const Tensor& y, const Tensor& v,
                            std::int64_t dim) const override;
  Tensor egrad_to_rgrad(const Tensor& x, const Tensor& g, std::int64_t dim) const override;
  Tensor inner(const Tensor& x, const Tensor& u, const Tensor& v, std::int64_t dim,
               bool keepdim) const override;
  Tensor mobius_matvec(const Tensor& m, const Tensor& x, std::int64_t dim) const override;
  Tensor mlr_logits(const Tensor& x, const Tensor& p, const Tensor& a) const override;
  Tensor beta_concat(std::span<const Tensor> parts, std::int64_t dim) const override;
  double concat_scale(std::int64_t, std::int64_t) const override { return 1.0; }
  Tensor frechet_mean(const Tensor& x, std::int64_t batch_axis, std::int64_t dim,
                      std::span<const double> weights, double tol,
                      int max_iter) const override;
};

class PoincareBall final : public Manifold {
 public:
  explicit PoincareBall(std::shared_ptr<Curvature> curvature);

  ManifoldKind kind() const override { return ManifoldKind::kPoincareBall; }
  std::string name() const override;
  const std::shared_ptr<Curvature>& curvature() const { return curvature_; }

  Tensor project(const Tensor& x, std::int64_t dim) const override;
  bool contains(const Tensor& x, std::int64_t dim, double tol) const override;
  Tensor mobius_add(const Tensor& x, const Tensor& y, std::int64_t dim) const override;
  // Mobius addition without the final projection.
  Tensor mobius_add_raw(const Tensor& x, const Tensor& y, std::int64_t dim) const;
  Tensor gyration(const Tensor& u, const Tensor& v, const Tensor& w,
                  std::int64_t dim) const override;
  Tensor conformal_factor(const Tensor& x, std::int64_t dim) const override;
  Tensor expmap0(const Tensor& v, std::int64_t dim) const override;
  Tensor logmap0(const Tensor& y, std::int64_t dim) const override;
  Tensor expmap(const Tensor& x, const Tensor& v, std::int64_t dim) const override;
  Tensor logmap(const Tensor& x, const Tensor& y, std::int64_t dim) const override;
  Tensor distance(const Tensor& x, const Tensor& y, std::int64_t dim,
                  bool keepdim) const override;
  Tensor parallel_transport(const Tensor& x, const Tensor& y, const Tensor& v,
                            std::int64_t dim) const override;
  Tensor egrad_to_rgrad(const Tensor& x, const Tensor& g, std::int64_t dim) const override;
  Tensor inner(const Tensor& x, const Tensor& u, const Tensor& v, std::int64_t dim,
               bool keepdim) const override;
  Tensor mobius_matvec(const Tensor& m, const Tensor& x, std::int64_t dim) const override;
  Tensor mlr_logits(const Tensor& x, const Tensor& p, const Tensor& a) const override;
  Tensor beta_concat(std::span<const Tensor> parts, std::int64_t dim) const override;
  double concat_scale(std::int64_t total, std::int64_t part) const override;
  Tensor frechet_mean(const Tensor& x, std::int64_t batch_axis, std::int64_t dim,
                      std::span<const double> weights, double tol,
                      int max_iter) const override;

 private:
  std::shared_ptr<Curvature> curvature_;
};

ManifoldPtr make_euclidean();
ManifoldPtr make_poincare_ball(double c = 1.0, bool learnable = false);
ManifoldPtr make_poincare_ball(std::shared_ptr<Curvature> curvature);

// B(n/2, 1/2) through log-gamma.
double beta_half(std::int64_t n);

// Applies a (out x in) matrix along `dim` of t.
Tensor apply_along(const Tensor& m, const Tensor& t, std::int64_t dim);

}  // namespace hyp
