#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hyptk/manifold.hpp"

namespace hyp {

namespace {

thread_local int g_last_frechet_iterations = 0;

// Relative slack before a point counts as outside the projection radius; keeps
// projection bitwise idempotent on its own outputs.
constexpr double kProjectSlack = 1e-13;

std::int64_t neg_axis(std::int64_t dim, std::int64_t rank) {
  return normalize_axis(dim, rank) - rank;
}

Tensor dot(const Tensor& a, const Tensor& b, std::int64_t d) { return sum(a * b, {d}, true); }
Tensor sqnorm(const Tensor& a, std::int64_t d) { return sum(a * a, {d}, true); }

std::vector<double> uniform_or(std::span<const double> weights, std::int64_t n) {
  if (weights.empty()) return std::vector<double>(static_cast<std::size_t>(n), 1.0);
  if (static_cast<std::int64_t>(weights.size()) != n) {
    throw ShapeError("frechet_mean: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(n) + " points");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractError("frechet_mean: weights must be nonnegative");
    total += w;
  }
  if (total <= 0.0) throw ContractError("frechet_mean: weights are all zero");
  return {weights.begin(), weights.end()};
}

Tensor weight_tensor(const std::vector<double>& w, std::int64_t rank, std::int64_t axis) {
  Shape s(static_cast<std::size_t>(rank), 1);
  s[axis] = static_cast<std::int64_t>(w.size());
  return Tensor(std::move(s), w);
}

}  // namespace

// ---------------------------------------------------------------------------
// Curvature

Curvature::Curvature(double c, bool learnable) : learnable_(learnable) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw ContractError("curvature magnitude must be positive and finite");
  }
  // inverse softplus
  raw_ = Tensor::scalar(std::log(std::expm1(c)), learnable);
}

Curvature::Curvature(Tensor raw, bool learnable) : raw_(std::move(raw)), learnable_(learnable) {}

std::shared_ptr<Curvature> Curvature::from_raw(double raw, bool learnable) {
  return std::shared_ptr<Curvature>(new Curvature(Tensor::scalar(raw, learnable), learnable));
}

Tensor Curvature::value() const { return softplus(raw_); }

double Curvature::c() const {
  NoGradScope no_grad;
  return softplus(raw_).item();
}

// ---------------------------------------------------------------------------
// Shared

int Manifold::last_frechet_iterations() { return g_last_frechet_iterations; }
void Manifold::set_last_frechet_iterations(int n) { g_last_frechet_iterations = n; }

Tensor Manifold::frechet_variance(const Tensor& x, const Tensor& mu, std::int64_t batch_axis,
                                  std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, x.rank());
  const std::int64_t b = neg_axis(batch_axis, x.rank());
  Tensor dist = distance(x, mu, d, true);
  return mean(dist * dist, {b, d}, false);
}

double beta_half(std::int64_t n) {
  const double a = static_cast<double>(n) / 2.0;
  return std::exp(std::lgamma(a) + std::lgamma(0.5) - std::lgamma(a + 0.5));
}

Tensor apply_along(const Tensor& m, const Tensor& t, std::int64_t dim) {
  if (m.rank() != 2) throw ShapeError("matrix must be rank 2, got " + shape_str(m.shape()));
  const std::int64_t rank = t.rank();
  const std::int64_t d = normalize_axis(dim, rank);
  if (t.shape()[d] != m.shape()[1]) {
    throw ShapeError("matrix " + shape_str(m.shape()) + " does not match extent " +
                     std::to_string(t.shape()[d]) + " of " + shape_str(t.shape()));
  }
  const std::int64_t out_dim = m.shape()[0];
  if (d == rank - 1) {
    Shape out_shape = t.shape();
    out_shape[d] = out_dim;
    Tensor flat = reshape(t, {-1, t.shape()[d]});
    return reshape(matmul(flat, transpose(m, 0, 1)), out_shape);
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(rank));
  std::iota(order.begin(), order.end(), 0);
  order.erase(order.begin() + d);
  order.push_back(d);
  Tensor moved = permute(t, order);
  Shape moved_shape = moved.shape();
  moved_shape.back() = out_dim;
  Tensor y = reshape(matmul(reshape(moved, {-1, t.shape()[d]}), transpose(m, 0, 1)), moved_shape);
  std::vector<std::int64_t> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = static_cast<std::int64_t>(i);
  return permute(y, inverse);
}

// ---------------------------------------------------------------------------
// Euclidean

Tensor Euclidean::project(const Tensor& x, std::int64_t) const { return x; }

bool Euclidean::contains(const Tensor& x, std::int64_t, double) const {
  return std::all_of(x.data().begin(), x.data().end(), [](double v) { return std::isfinite(v); });
}

Tensor Euclidean::mobius_add(const Tensor& x, const Tensor& y, std::int64_t) const { return x + y; }

Tensor Euclidean::gyration(const Tensor& u, const Tensor& v, const Tensor& w, std::int64_t) const {
  // Shape check only; addition is commutative so the gyration is the identity.
  broadcast_shapes(broadcast_shapes(u.shape(), v.shape()), w.shape());
  return w;
}

Tensor Euclidean::conformal_factor(const Tensor& x, std::int64_t dim) const {
  Shape s = x.shape();
  s[normalize_axis(dim, x.rank())] = 1;
  return Tensor::full(std::move(s), 1.0);
}

Tensor Euclidean::expmap0(const Tensor& v, std::int64_t) const { return v; }
Tensor Euclidean::logmap0(const Tensor& y, std::int64_t) const { return y; }
Tensor Euclidean::expmap(const Tensor& x, const Tensor& v, std::int64_t) const { return x + v; }
Tensor Euclidean::logmap(const Tensor& x, const Tensor& y, std::int64_t) const { return y - x; }

Tensor Euclidean::distance(const Tensor& x, const Tensor& y, std::int64_t dim, bool keepdim) const {
  Tensor diff = x - y;
  return norm2(diff, {neg_axis(dim, diff.rank())}, keepdim);
}

Tensor Euclidean::parallel_transport(const Tensor&, const Tensor&, const Tensor& v,
                                     std::int64_t) const {
  return v;
}

Tensor Euclidean::egrad_to_rgrad(const Tensor&, const Tensor& g, std::int64_t) const { return g; }

Tensor Euclidean::inner(const Tensor&, const Tensor& u, const Tensor& v, std::int64_t dim,
                        bool keepdim) const {
  Tensor p = u * v;
  return sum(p, {neg_axis(dim, p.rank())}, keepdim);
}

Tensor Euclidean::mobius_matvec(const Tensor& m, const Tensor& x, std::int64_t dim) const {
  return apply_along(m, x, dim);
}

Tensor Euclidean::mlr_logits(const Tensor& x, const Tensor& p, const Tensor& a) const {
  if (x.rank() != 2 || p.rank() != 2 || a.shape() != p.shape() || x.shape()[1] != p.shape()[1]) {
    throw ShapeError("mlr_logits expects x: N x D, p and a: K x D");
  }
  const Tensor a_norm = norm2(a, {1}, false);
  for (double v : a_norm.data()) {
    if (v == 0.0) throw ContractError("mlr_logits: hyperplane normal has zero norm");
  }
  Tensor diff = unsqueeze(x, 1) - unsqueeze(p, 0);
  return sum(diff * unsqueeze(a, 0), {2}, false);
}

Tensor Euclidean::beta_concat(std::span<const Tensor> parts, std::int64_t dim) const {
  if (parts.empty()) throw ContractError("beta_concat of an empty list");
  return concat(parts, normalize_axis(dim, parts[0].rank()));
}

Tensor Euclidean::frechet_mean(const Tensor& x, std::int64_t batch_axis, std::int64_t dim,
                               std::span<const double> weights, double, int) const {
  const std::int64_t b = normalize_axis(batch_axis, x.rank());
  normalize_axis(dim, x.rank());
  if (x.shape()[b] == 0) throw ContractError("frechet_mean of an empty set");
  const auto w = uniform_or(weights, x.shape()[b]);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  set_last_frechet_iterations(1);
  return sum(x * weight_tensor(w, x.rank(), b), {b}, true) / total;
}

// ---------------------------------------------------------------------------
// Poincare ball

PoincareBall::PoincareBall(std::shared_ptr<Curvature> curvature)
    : curvature_(std::move(curvature)) {
  if (!curvature_) throw ContractError("PoincareBall requires a curvature object");
}

std::string PoincareBall::name() const {
  std::ostringstream os;
  os << "poincare(c=" << curvature_->c() << (curvature_->learnable() ? ", learnable" : "") << ")@"
     << static_cast<const void*>(this);
  return os.str();
}

Tensor PoincareBall::project(const Tensor& x, std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, x.rank());
  Tensor n = norm2(x, {d}, true);
  Tensor c = curvature_->value();
  Tensor max_norm = (1.0 - kBallEps) / sqrt(c);
  const double limit = max_norm.item() * (1.0 + kProjectSlack);
  std::vector<double> mask(n.data().size());
  bool any = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = n[static_cast<std::int64_t>(i)] > limit ? 1.0 : 0.0;
    any = any || mask[i] != 0.0;
  }
  if (!any) return x;
  Tensor m(n.shape(), std::move(mask));
  Tensor ratio = m * safe_div(max_norm, n) + (1.0 - m);
  return x * ratio;
}

bool PoincareBall::contains(const Tensor& x, std::int64_t dim, double tol) const {
  NoGradScope no_grad;
  const double sc = std::sqrt(curvature_->c());
  Tensor n = norm2(x, {neg_axis(dim, x.rank())}, false);
  return std::all_of(n.data().begin(), n.data().end(), [&](double v) {
    return std::isfinite(v) && sc * v <= 1.0 - kBallEps + tol;
  });
}

Tensor PoincareBall::mobius_add_raw(const Tensor& x, const Tensor& y, std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, std::max(x.rank(), y.rank()));
  Tensor c = curvature_->value();
  Tensor xy = dot(x, y, d);
  Tensor x2 = sqnorm(x, d);
  Tensor y2 = sqnorm(y, d);
  Tensor two_c_xy = 2.0 * c * xy;
  Tensor num = (1.0 + two_c_xy + c * y2) * x + (1.0 - c * x2) * y;
  Tensor den = 1.0 + two_c_xy + c * c * x2 * y2;
  return num / den;
}

Tensor PoincareBall::mobius_add(const Tensor& x, const Tensor& y, std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, std::max(x.rank(), y.rank()));
  return project(mobius_add_raw(x, y, d), d);
}

Tensor PoincareBall::gyration(const Tensor& u, const Tensor& v, const Tensor& w,
                              std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, std::max({u.rank(), v.rank(), w.rank()}));
  Tensor c = curvature_->value();
  Tensor c2 = c * c;
  Tensor u2 = sqnorm(u, d);
  Tensor v2 = sqnorm(v, d);
  Tensor uv = dot(u, v, d);
  Tensor uw = dot(u, w, d);
  Tensor vw = dot(v, w, d);
  Tensor a = c * vw - c2 * uw * v2 + 2.0 * c2 * uv * vw;
  Tensor b = -(c2 * vw * u2) - c * uw;
  Tensor den = 1.0 + 2.0 * c * uv + c2 * u2 * v2;
  return w + 2.0 * (a * u + b * v) / den;
}

Tensor PoincareBall::conformal_factor(const Tensor& x, std::int64_t dim) const {
  Tensor c = curvature_->value();
  return 2.0 / (1.0 - c * sqnorm(x, neg_axis(dim, x.rank())));
}

Tensor PoincareBall::expmap0(const Tensor& v, std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, v.rank());
  Tensor sc = sqrt(curvature_->value());
  Tensor scaled = sc * norm2(v, {d}, true);
  return project(tanh(scaled) * safe_div(v, scaled), d);
}

Tensor PoincareBall::logmap0(const Tensor& y, std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, y.rank());
  Tensor sc = sqrt(curvature_->value());
  Tensor scaled = sc * norm2(y, {d}, true);
  return artanh(scaled) * safe_div(y, scaled);
}

Tensor PoincareBall::expmap(const Tensor& x, const Tensor& v, std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, std::max(x.rank(), v.rank()));
  Tensor sc = sqrt(curvature_->value());
  Tensor scaled = sc * norm2(v, {d}, true);
  Tensor lam = conformal_factor(x, d);
  Tensor second = tanh(lam * scaled / 2.0) * safe_div(v, scaled);
  return mobius_add(x, second, d);
}

Tensor PoincareBall::logmap(const Tensor& x, const Tensor& y, std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, std::max(x.rank(), y.rank()));
  Tensor sc = sqrt(curvature_->value());
  Tensor u = mobius_add_raw(-x, y, d);
  Tensor n = norm2(u, {d}, true);
  Tensor lam = conformal_factor(x, d);
  return (2.0 / (sc * lam)) * artanh(sc * n) * safe_div(u, n);
}

Tensor PoincareBall::distance(const Tensor& x, const Tensor& y, std::int64_t dim,
                              bool keepdim) const {
  const std::int64_t d = neg_axis(dim, std::max(x.rank(), y.rank()));
  Tensor sc = sqrt(curvature_->value());
  Tensor n = norm2(mobius_add_raw(-x, y, d), {d}, keepdim);
  return (2.0 / sc) * artanh(sc * n);
}

Tensor PoincareBall::parallel_transport(const Tensor& x, const Tensor& y, const Tensor& v,
                                        std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, std::max({x.rank(), y.rank(), v.rank()}));
  return gyration(y, -x, v, d) * (conformal_factor(x, d) / conformal_factor(y, d));
}

Tensor PoincareBall::egrad_to_rgrad(const Tensor& x, const Tensor& g, std::int64_t dim) const {
  Tensor c = curvature_->value();
  Tensor shrink = 1.0 - c * sqnorm(x, neg_axis(dim, x.rank()));
  return g * (shrink * shrink / 4.0);
}

Tensor PoincareBall::inner(const Tensor& x, const Tensor& u, const Tensor& v, std::int64_t dim,
                           bool keepdim) const {
  const std::int64_t d = neg_axis(dim, std::max({x.rank(), u.rank(), v.rank()}));
  Tensor half_lam = conformal_factor(x, d) / 2.0;
  Tensor r = half_lam * half_lam * dot(u, v, d);
  return keepdim ? r : squeeze(r, d);
}

Tensor PoincareBall::mobius_matvec(const Tensor& m, const Tensor& x, std::int64_t dim) const {
  const std::int64_t d = neg_axis(dim, x.rank());
  return expmap0(apply_along(m, logmap0(x, d), d), d);
}

Tensor PoincareBall::mlr_logits(const Tensor& x, const Tensor& p, const Tensor& a) const {
  if (x.rank() != 2 || p.rank() != 2 || a.shape() != p.shape() || x.shape()[1] != p.shape()[1]) {
    throw ShapeError("mlr_logits expects x: N x D, p and a: K x D");
  }
  Tensor a_norm = norm2(a, {1}, false);
  for (double v : a_norm.data()) {
    if (v == 0.0) throw ContractError("mlr_logits: hyperplane normal has zero norm");
  }
  Tensor c = curvature_->value();
  Tensor sc = sqrt(c);
  Tensor u = mobius_add_raw(-unsqueeze(p, 0), unsqueeze(x, 1), -1);  // N x K x D
  Tensor u2 = sum(u * u, {2}, false);
  Tensor ua = sum(u * unsqueeze(a, 0), {2}, false);
  Tensor lam_p = 2.0 / (1.0 - c * sum(p * p, {1}, false));
  Tensor arg = 2.0 * sc * ua / ((1.0 - c * u2) * a_norm);
  return (lam_p * a_norm / sc) * asinh(arg);
}

double PoincareBall::concat_scale(std::int64_t total, std::int64_t part) const {
  return beta_half(total) / beta_half(part);
}

Tensor PoincareBall::beta_concat(std::span<const Tensor> parts, std::int64_t dim) const {
  if (parts.empty()) throw ContractError("beta_concat of an empty list");
  const std::int64_t d = normalize_axis(dim, parts[0].rank());
  std::int64_t total = 0;
  for (const auto& p : parts) total += p.dim(d);
  std::vector<Tensor> scaled;
  scaled.reserve(parts.size());
  for (const auto& p : parts) {
    const double s = concat_scale(total, p.dim(d));
    scaled.push_back(logmap0(p, d) * s);
  }
  return expmap0(concat(scaled, d), d);
}

Tensor PoincareBall::frechet_mean(const Tensor& x, std::int64_t batch_axis, std::int64_t dim,
                                  std::span<const double> weights, double tol,
                                  int max_iter) const {
  const std::int64_t b = neg_axis(batch_axis, x.rank());
  const std::int64_t d = neg_axis(dim, x.rank());
  if (b == d) throw DimensionError("frechet_mean: batch axis equals the manifold dimension");
  const std::int64_t n = x.shape()[static_cast<std::size_t>(x.rank() + b)];
  if (n == 0) throw ContractError("frechet_mean of an empty set");
  const auto w = uniform_or(weights, n);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  Tensor wt = weight_tensor(w, x.rank(), x.rank() + b);
  Tensor mu = slice(x, b, 0, 1);
  int iters = 0;
  for (; iters < max_iter;) {
    Tensor step = sum(wt * logmap(mu, x, d), {b}, true) / total;
    mu = expmap(mu, step, d);
    ++iters;
    Tensor step_norm = norm2(step.detach(), {d}, false);
    const double largest = *std::max_element(step_norm.data().begin(), step_norm.data().end());
    if (largest < tol) break;
  }
  set_last_frechet_iterations(iters);
  return mu;
}

// ---------------------------------------------------------------------------

ManifoldPtr make_euclidean() { return std::make_shared<const Euclidean>(); }

ManifoldPtr make_poincare_ball(double c, bool learnable) {
  return std::make_shared<const PoincareBall>(std::make_shared<Curvature>(c, learnable));
}

ManifoldPtr make_poincare_ball(std::shared_ptr<Curvature> curvature) {
  return std::make_shared<const PoincareBall>(std::move(curvature));
}

}  // namespace hyp
