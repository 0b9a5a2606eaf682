#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hyptk/manifold.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace hyp;
using oracle::Vec;
using testing::random_ball_points;
using testing::random_tensor;
using testing::values;

namespace {

Tensor vec(const Vec& v) { return Tensor({static_cast<std::int64_t>(v.size())}, v); }

Vec row(const Tensor& t, std::int64_t i) {
  const std::int64_t d = t.shape().back();
  return {t.data().begin() + i * d, t.data().begin() + (i + 1) * d};
}

double max_abs(const Vec& a, const Vec& b) { return testing::max_abs_diff(a, b); }

double rel(const Vec& a, const Vec& b) {
  Vec d = oracle::add(a, oracle::neg(b));
  return oracle::norm(d) / std::max(oracle::norm(b), 1e-300);
}

bool inside(const Tensor& t, double c) {
  const std::int64_t d = t.shape().back();
  for (std::int64_t i = 0; i < t.size() / d; ++i) {
    if (std::sqrt(c) * oracle::norm(row(t, i)) > 1.0 - kBallEps + 1e-15) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("curvature is a softplus of a raw parameter") {
  Curvature k(1.0);
  CHECK(k.c() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(k.raw().item() == doctest::Approx(std::log(std::expm1(1.0))));
  CHECK_FALSE(k.raw().requires_grad());
  Curvature learn(0.5, true);
  CHECK(learn.raw().requires_grad());
  CHECK(Curvature::from_raw(0.0, false)->c() == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(Curvature(0.0), ContractError);
  CHECK_THROWS_AS(Curvature(-1.0), ContractError);
}

TEST_CASE("ball operations at closed-form values") {
  const auto ball = make_poincare_ball(1.0);
  const auto& b = *ball;

  CHECK(b.mobius_add(vec({0.3, 0}), vec({0.4, 0}), -1)[0] == doctest::Approx(0.625).epsilon(1e-14));
  CHECK(values(b.mobius_add(vec({0, 0}), vec({0.2, -0.1}), -1)) == Vec{0.2, -0.1});
  CHECK(max_abs(values(b.mobius_add(vec({-0.2, 0.1}), vec({0.2, -0.1}), -1)), {0, 0}) < 1e-16);

  CHECK(b.conformal_factor(vec({0, 0}), -1).item() == 2.0);
  CHECK(b.conformal_factor(vec({0.5, 0}), -1).item() == doctest::Approx(8.0 / 3.0).epsilon(1e-14));

  CHECK(b.expmap0(vec({1, 0}), -1)[0] == doctest::Approx(0.761594155955765).epsilon(1e-13));
  CHECK(b.logmap0(vec({0.5, 0}), -1)[0] == doctest::Approx(0.549306144334055).epsilon(1e-13));
  CHECK(values(b.expmap0(vec({0, 0}), -1)) == Vec{0, 0});
  CHECK(values(b.logmap0(vec({0, 0}), -1)) == Vec{0, 0});
  const Tensor x = vec({0.1, -0.3});
  CHECK(values(b.expmap(x, vec({0, 0}), -1)) == values(x));
  CHECK(max_abs(values(b.logmap(x, x, -1)), {0, 0}) < 1e-15);

  CHECK(b.distance(vec({0, 0}), vec({0.5, 0}), -1).item() ==
        doctest::Approx(1.09861228866811).epsilon(1e-13));
  CHECK(b.distance(x, x, -1).item() == doctest::Approx(0.0));

  CHECK(b.project(vec({2, 0}), -1)[0] == doctest::Approx(0.99999).epsilon(1e-14));
  CHECK(values(b.project(x, -1)) == values(x));
  CHECK(values(b.project(vec({0, 0}), -1)) == Vec{0, 0});
  CHECK(b.project(vec({0.9999999, 0}), -1)[0] == doctest::Approx(1 - 1e-5).epsilon(1e-14));
}

TEST_CASE("Euclidean definitions") {
  const auto e = make_euclidean();
  CHECK(values(e->expmap(vec({1, 2}), vec({0.5, 0.5}), -1)) == Vec{1.5, 2.5});
  CHECK(values(e->logmap(vec({1, 2}), vec({1.5, 2.5}), -1)) == Vec{0.5, 0.5});
  CHECK(e->distance(vec({0, 0}), vec({3, 4}), -1).item() == doctest::Approx(5.0));
  CHECK(e->conformal_factor(vec({7, 8}), -1).item() == 1.0);
  CHECK(values(e->parallel_transport(vec({1, 1}), vec({2, 3}), vec({4, 5}), -1)) == Vec{4, 5});
  CHECK(values(e->egrad_to_rgrad(vec({1, 1}), vec({4, 5}), -1)) == Vec{4, 5});
  CHECK(values(e->mobius_add(vec({1, 1}), vec({4, 5}), -1)) == Vec{5, 6});
  const Tensor logits = e->mlr_logits(Tensor({1, 2}, {2, 5}), Tensor({1, 2}, {0, 0}),
                                      Tensor({1, 2}, {1, 0}));
  CHECK(logits.item() == 2.0);
  const std::vector<Tensor> parts{vec({1, 2}), vec({3})};
  CHECK(values(e->beta_concat(parts, -1)) == Vec{1, 2, 3});
  const Tensor pts({2, 1}, {0, 2});
  const Tensor mu = e->frechet_mean(pts, 0, 1);
  CHECK(mu.item() == 1.0);
  CHECK(e->frechet_variance(pts, mu, 0, 1).item() == 1.0);
}

TEST_CASE("beta function values") {
  CHECK(beta_half(1) == doctest::Approx(std::numbers::pi).epsilon(1e-13));
  CHECK(beta_half(2) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(beta_half(3) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-13));
  CHECK(beta_half(4) == doctest::Approx(4.0 / 3.0).epsilon(1e-13));
  const auto ball = make_poincare_ball(1.0);
  const std::vector<Tensor> parts{vec({0.5}), vec({0.0})};
  const Tensor y = ball->beta_concat(parts, -1);
  const double expected = std::tanh(2.0 / std::numbers::pi * std::atanh(0.5));
  CHECK(y[0] == doctest::Approx(expected).epsilon(1e-13));
  CHECK(y[0] == doctest::Approx(0.3361).epsilon(1e-3));
  CHECK(y[1] == 0.0);
  const std::vector<Tensor> single{vec({0.2, -0.4})};
  CHECK(max_abs(values(ball->beta_concat(single, -1)), {0.2, -0.4}) < 1e-15);
}

TEST_CASE("ball operations agree with the textbook oracle") {
  std::mt19937_64 rng(21);
  for (double c : {0.1, 1.0, 2.0}) {
    const auto ball = make_poincare_ball(c);
    const Tensor xs = random_ball_points({50, 3}, c, 0.9, rng);
    const Tensor ys = random_ball_points({50, 3}, c, 0.9, rng);
    const Tensor vs = random_tensor({50, 3}, rng);
    const Tensor sum_xy = ball->mobius_add(xs, ys, -1);
    const Tensor ex = ball->expmap(xs, vs, -1);
    const Tensor lg = ball->logmap(xs, ys, -1);
    const Tensor d = ball->distance(xs, ys, -1);
    const Tensor pt = ball->parallel_transport(xs, ys, vs, -1);
    double worst = 0.0;
    for (std::int64_t i = 0; i < 50; ++i) {
      const Vec x = row(xs, i), y = row(ys, i), v = row(vs, i);
      worst = std::max(worst, rel(row(sum_xy, i), oracle::mobius_add(x, y, c)));
      worst = std::max(worst, rel(row(lg, i), oracle::logmap(x, y, c)));
      worst = std::max(worst, std::abs(d[i] - oracle::distance(x, y, c)) / oracle::distance(x, y, c));
      worst = std::max(worst, rel(row(pt, i), oracle::parallel_transport(x, y, v, c)));
      const Vec ev = oracle::expmap(x, v, c);
      if (std::sqrt(c) * oracle::norm(ev) < 1 - 1e-4) worst = std::max(worst, rel(row(ex, i), ev));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("gyration: closed form matches its defining composition") {
  std::mt19937_64 rng(22);
  for (double c : {0.1, 1.0, 2.0}) {
    const auto ball = make_poincare_ball(c);
    const Tensor us = random_ball_points({100, 3}, c, 0.9, rng);
    const Tensor vs = random_ball_points({100, 3}, c, 0.9, rng);
    const Tensor ws = random_ball_points({100, 3}, c, 0.3, rng);
    const Tensor g = ball->gyration(us, vs, ws, -1);
    double worst = 0.0, worst_norm = 0.0;
    for (std::int64_t i = 0; i < 100; ++i) {
      const Vec gi = row(g, i);
      worst = std::max(worst, rel(gi, oracle::gyration(row(us, i), row(vs, i), row(ws, i), c)));
      worst_norm = std::max(worst_norm, std::abs(oracle::norm(gi) / oracle::norm(row(ws, i)) - 1));
    }
    CHECK(worst < 1e-9);
    CHECK(worst_norm < 1e-9);
    const Tensor zeros = Tensor::zeros({100, 3});
    CHECK(testing::max_abs_diff(ball->gyration(zeros, vs, ws, -1).data(), ws.data()) < 1e-15);
    CHECK(testing::max_abs_diff(ball->gyration(us, -us, ws, -1).data(), ws.data()) < 1e-12);
  }
}

TEST_CASE("gyrogroup laws") {
  std::mt19937_64 rng(23);
  for (double c : {0.1, 1.0, 2.0}) {
    const auto ball = make_poincare_ball(c);
    const Tensor xs = random_ball_points({1000, 3}, c, 0.95, rng);
    const Tensor ys = random_ball_points({1000, 3}, c, 0.95, rng);
    const Tensor zero = Tensor::zeros({1000, 3});
    CHECK(testing::max_abs_diff(ball->mobius_add(zero, ys, -1).data(), ys.data()) < 1e-9);
    CHECK(testing::max_abs_diff(ball->mobius_add(-xs, xs, -1).data(), zero.data()) < 1e-9);
    const Tensor cancel = ball->mobius_add(-xs, ball->mobius_add(xs, ys, -1), -1);
    CHECK(testing::max_abs_diff(cancel.data(), ys.data()) < 1e-9);
  }
}

namespace {

// Tangent vectors at xs with lengths uniform in [0, 3]; measured with the
// Riemannian metric at each base point when `riemannian`, else Euclidean.
Tensor tangent_sample(const Manifold& ball, const Tensor& xs, bool riemannian,
                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> len(0.0, 3.0);
  Tensor vs = random_tensor(xs.shape(), rng);
  const std::int64_t d = xs.shape().back();
  const Tensor lam = ball.conformal_factor(xs, -1);
  auto v = vs.mutable_data();
  for (std::int64_t i = 0; i < xs.size() / d; ++i) {
    const double n = oracle::norm(row(vs, i)) * (riemannian ? lam[i] : 1.0);
    const double target = len(rng);
    for (std::int64_t j = 0; j < d; ++j) v[i * d + j] *= target / n;
  }
  return vs;
}

double roundtrip_error(const Manifold& ball, const Tensor& xs, const Tensor& vs,
                       const Tensor& ys) {
  const Tensor back = ball.logmap(xs, ball.expmap(xs, vs, -1), -1);
  const Tensor again = ball.expmap(xs, ball.logmap(xs, ys, -1), -1);
  double worst = 0.0;
  for (std::int64_t i = 0; i < xs.shape()[0]; ++i) {
    worst = std::max(worst, rel(row(back, i), row(vs, i)));
    worst = std::max(worst, rel(row(again, i), row(ys, i)));
  }
  return worst;
}

}  // namespace

TEST_CASE("exp and log are inverse in both orders") {
  std::mt19937_64 rng(24);
  for (double c : {0.1, 1.0, 2.0}) {
    const auto ball = make_poincare_ball(c);
    // Riemannian length up to 3 from base points anywhere up to radius 0.9.
    const Tensor xs = random_ball_points({1000, 3}, c, 0.9, rng);
    const Tensor ys = random_ball_points({1000, 3}, c, 0.9, rng);
    CHECK(roundtrip_error(*ball, xs, tangent_sample(*ball, xs, true, rng), ys) < 1e-8);
    // Euclidean length up to 3 from interior base points.
    const Tensor inner = random_ball_points({1000, 3}, c, 0.3, rng);
    CHECK(roundtrip_error(*ball, inner, tangent_sample(*ball, inner, false, rng), ys) < 1e-8);
  }
}

TEST_CASE("distance is a metric on sampled triples") {
  std::mt19937_64 rng(25);
  const auto ball = make_poincare_ball(1.0);
  const Tensor xs = random_ball_points({1000, 2}, 1.0, 0.99, rng);
  const Tensor ys = random_ball_points({1000, 2}, 1.0, 0.99, rng);
  const Tensor zs = random_ball_points({1000, 2}, 1.0, 0.99, rng);
  const Tensor dxy = ball->distance(xs, ys, -1);
  const Tensor dyx = ball->distance(ys, xs, -1);
  const Tensor dyz = ball->distance(ys, zs, -1);
  const Tensor dxz = ball->distance(xs, zs, -1);
  double asym = 0.0;
  int violations = 0;
  for (std::int64_t i = 0; i < 1000; ++i) {
    asym = std::max(asym, std::abs(dxy[i] - dyx[i]));
    if (dxz[i] > dxy[i] + dyz[i] + 1e-12) ++violations;
    if (dxy[i] < 0) ++violations;
  }
  CHECK(asym < 1e-12);
  CHECK(violations == 0);
}

TEST_CASE("flat limit at tiny curvature") {
  std::mt19937_64 rng(26);
  const double c = 1e-8;
  const auto ball = make_poincare_ball(c);
  Tensor xs = random_ball_points({500, 3}, 1.0, 0.1, rng);
  Tensor ys = random_ball_points({500, 3}, 1.0, 0.1, rng);
  CHECK(testing::max_abs_diff(ball->mobius_add(xs, ys, -1).data(), (xs + ys).data()) < 1e-5);
  const Tensor d = ball->distance(xs, ys, -1);
  const Tensor flat = norm2(xs - ys, {1});
  double worst = 0.0;
  for (std::int64_t i = 0; i < 500; ++i) worst = std::max(worst, std::abs(d[i] - 2 * flat[i]));
  CHECK(worst < 1e-5);
  const Tensor p = random_ball_points({4, 3}, 1.0, 0.1, rng);
  const Tensor a = random_tensor({4, 3}, rng);
  const Tensor logits = ball->mlr_logits(xs, p, a);
  const Tensor affine = make_euclidean()->mlr_logits(xs, p, a);
  CHECK(testing::max_abs_diff(logits.data(), (affine * 4.0).data()) < 1e-4);
}

TEST_CASE("conformal factor, transport and gradient conversion") {
  std::mt19937_64 rng(27);
  const double c = 1.5;
  const auto ball = make_poincare_ball(c);
  const Tensor xs = random_ball_points({200, 3}, c, 0.95, rng);
  const Tensor ys = random_ball_points({200, 3}, c, 0.95, rng);
  const Tensor vs = random_tensor({200, 3}, rng);
  const Tensor lx = ball->conformal_factor(xs, -1);
  const Tensor ly = ball->conformal_factor(ys, -1);
  const Tensor pt = ball->parallel_transport(xs, ys, vs, -1);
  const Tensor g = ball->egrad_to_rgrad(xs, vs, -1);
  double worst_norm = 0.0, worst_rgrad = 0.0;
  for (std::int64_t i = 0; i < 200; ++i) {
    const Vec x = row(xs, i);
    worst_norm = std::max(worst_norm, std::abs(ly[i] * oracle::norm(row(pt, i)) /
                                                   (lx[i] * oracle::norm(row(vs, i))) - 1));
    const double factor = std::pow(1 - c * oracle::dot(x, x), 2) / 4;
    worst_rgrad = std::max(worst_rgrad, rel(row(g, i), oracle::scale(row(vs, i), factor)));
  }
  CHECK(worst_norm < 1e-9);
  CHECK(worst_rgrad < 1e-12);
  CHECK(testing::max_abs_diff(ball->parallel_transport(xs, xs, vs, -1).data(), vs.data()) < 1e-12);
  const auto unit = make_poincare_ball(1.0);
  CHECK(values(unit->egrad_to_rgrad(vec({0, 0}), vec({1, -2}), -1)) == Vec{0.25, -0.5});
  const Tensor in = unit->inner(vec({0.5, 0}), vec({1, 0}), vec({2, 0}), -1);
  CHECK(in.item() == doctest::Approx(std::pow(4.0 / 3.0, 2) * 2.0).epsilon(1e-14));
}

TEST_CASE("mobius matrix-vector product") {
  std::mt19937_64 rng(28);
  const auto ball = make_poincare_ball(1.0);
  const Tensor xs = random_ball_points({20, 2}, 1.0, 0.9, rng);
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(testing::max_abs_diff(ball->mobius_matvec(eye, xs, -1).data(), xs.data()) < 1e-12);
  const Tensor zero = Tensor::zeros({2, 2});
  CHECK(testing::max_abs_diff(ball->mobius_matvec(zero, xs, -1).data(),
                              Tensor::zeros({20, 2}).data()) == 0.0);
  const double th = 0.7;
  const Tensor rot = Tensor::matrix({{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}});
  const Tensor rx = ball->mobius_matvec(rot, xs, -1);
  const Tensor direct = matmul(xs, transpose(rot, 0, 1));
  double worst = 0.0;
  for (std::int64_t i = 0; i < 20; ++i) worst = std::max(worst, rel(row(rx, i), row(direct, i)));
  CHECK(worst < 1e-9);
  CHECK_THROWS_AS(ball->mobius_matvec(Tensor::zeros({2, 3}), xs, -1), ShapeError);
}

TEST_CASE("hyperbolic MLR logits") {
  std::mt19937_64 rng(29);
  for (double c : {0.5, 1.0}) {
    const auto ball = make_poincare_ball(c);
    const Tensor xs = random_ball_points({6, 3}, c, 0.9, rng);
    const Tensor ps = random_ball_points({4, 3}, c, 0.9, rng);
    const Tensor as = random_tensor({4, 3}, rng);
    const Tensor logits = ball->mlr_logits(xs, ps, as);
    double worst = 0.0;
    for (std::int64_t i = 0; i < 6; ++i)
      for (std::int64_t k = 0; k < 4; ++k) {
        const double want = oracle::mlr_logit(row(xs, i), row(ps, k), row(as, k), c);
        worst = std::max(worst, std::abs(logits[i * 4 + k] - want) / std::abs(want));
      }
    CHECK(worst < 1e-10);
    const Tensor at_p = ball->mlr_logits(ps, ps, as);
    for (std::int64_t k = 0; k < 4; ++k) CHECK(std::abs(at_p[k * 4 + k]) < 1e-12);
  }
  const auto ball = make_poincare_ball(1.0);
  CHECK_THROWS_AS(ball->mlr_logits(Tensor::zeros({1, 2}), Tensor::zeros({1, 2}),
                                   Tensor::zeros({1, 2})),
                  ContractError);
}

TEST_CASE("Frechet mean and variance") {
  const auto ball = make_poincare_ball(1.0);
  const Tensor pair({2, 2}, {0, 0, 0.5, 0});
  const Tensor mu = ball->frechet_mean(pair, 0, 1);
  CHECK(mu.shape() == Shape{1, 2});
  const Vec mid = oracle::midpoint({0, 0}, {0.5, 0}, 1.0);
  CHECK(mu[0] == doctest::Approx(2 - std::sqrt(3.0)).epsilon(1e-9));
  CHECK(mu[0] == doctest::Approx(mid[0]).epsilon(1e-9));
  CHECK(std::abs(mu[1]) < 1e-15);
  const Tensor var = ball->frechet_variance(pair, mu, 0, 1);
  CHECK(var.item() == doctest::Approx(0.301737).epsilon(1e-5));
  CHECK(var.item() == doctest::Approx(std::pow(std::atanh(0.5), 2)).epsilon(1e-9));

  const Tensor same({2, 2}, {0.3, -0.2, 0.3, -0.2});
  CHECK(testing::max_abs_diff(ball->frechet_mean(same, 0, 1).data(), Vec{0.3, -0.2}) < 1e-15);
  CHECK(ball->frechet_variance(same, ball->frechet_mean(same, 0, 1), 0, 1).item() < 1e-20);
  const Tensor sym({2, 2}, {0.6, 0, -0.6, 0});
  CHECK(testing::max_abs_diff(ball->frechet_mean(sym, 0, 1).data(), Vec{0, 0}) < 1e-12);

  // Weighted mean of two points lies at the weighted position on the geodesic.
  const std::vector<double> w{1.0, 3.0};
  const Tensor wm = ball->frechet_mean(pair, 0, 1, w);
  const Vec expected = oracle::expmap({0, 0}, oracle::scale(oracle::logmap({0, 0}, {0.5, 0}, 1), 0.75), 1);
  CHECK(wm[0] == doctest::Approx(expected[0]).epsilon(1e-9));

  // The mean is a stationary point of the weighted squared distance.
  std::mt19937_64 rng(30);
  const Tensor cloud = random_ball_points({7, 3}, 1.0, 0.8, rng);
  const Tensor m = ball->frechet_mean(cloud, 0, 1);
  CHECK(Manifold::last_frechet_iterations() < 100);
  Vec grad(3, 0.0);
  for (std::int64_t i = 0; i < 7; ++i) grad = oracle::add(grad, oracle::logmap(row(m, 0), row(cloud, i), 1));
  CHECK(oracle::norm(grad) < 1e-8);

  CHECK_THROWS_AS(ball->frechet_mean(Tensor::zeros({0, 2}), 0, 1), ContractError);
  const std::vector<double> bad{1.0, -1.0};
  CHECK_THROWS_AS(ball->frechet_mean(pair, 0, 1, bad), ContractError);
}

TEST_CASE("outputs of ball operations stay inside the ball") {
  std::mt19937_64 rng(31);
  const double c = 2.0;
  const auto ball = make_poincare_ball(c);
  const Tensor xs = random_ball_points({300, 4}, c, 0.99999, rng);
  const Tensor ys = random_ball_points({300, 4}, c, 0.99999, rng);
  const Tensor vs = random_tensor({300, 4}, rng, 20.0);
  CHECK(inside(ball->mobius_add(xs, ys, -1), c));
  CHECK(inside(ball->expmap(xs, vs, -1), c));
  CHECK(inside(ball->expmap0(vs, -1), c));
  CHECK(inside(ball->project(vs, -1), c));
  CHECK(inside(ball->mobius_matvec(random_tensor({4, 4}, rng, 10.0), xs, -1), c));
  const std::vector<Tensor> parts{xs, ys};
  CHECK(inside(ball->beta_concat(parts, -1), c));
  CHECK(inside(ball->frechet_mean(reshape(xs, {10, 30, 4}), 0, 2), c));
  CHECK(ball->contains(ball->project(vs, -1), -1));
  CHECK_FALSE(ball->contains(vs, -1));
  const Tensor once = ball->project(vs, -1);
  CHECK(values(ball->project(once, -1)) == values(once));
}

TEST_CASE("operations act along the requested dimension") {
  std::mt19937_64 rng(32);
  const auto ball = make_poincare_ball(1.0);
  const Tensor xs = random_ball_points({5, 3}, 1.0, 0.9, rng);
  const Tensor ys = random_ball_points({5, 3}, 1.0, 0.9, rng);
  const Tensor xt = transpose(xs, 0, 1);
  const Tensor yt = transpose(ys, 0, 1);
  CHECK(testing::max_abs_diff(transpose(ball->mobius_add(xt, yt, 0), 0, 1).data(),
                              ball->mobius_add(xs, ys, 1).data()) < 1e-15);
  CHECK(testing::max_abs_diff(ball->distance(xt, yt, 0).data(), ball->distance(xs, ys, -1).data()) <
        1e-15);
  CHECK(testing::max_abs_diff(transpose(ball->logmap(xt, yt, 0), 0, 1).data(),
                              ball->logmap(xs, ys, -1).data()) < 1e-15);
}

TEST_CASE("gradient checks through ball operations") {
  std::mt19937_64 rng(33);
  const double c = 0.8;
  const auto ball = make_poincare_ball(c);
  const Tensor x = random_ball_points({3, 4}, c, 0.7, rng);
  const Tensor y = random_ball_points({3, 4}, c, 0.7, rng);
  const Tensor v = random_tensor({3, 4}, rng, 0.5);
  const Tensor m = random_tensor({2, 4}, rng, 0.5);
  const Tensor p = random_ball_points({2, 4}, c, 0.5, rng);
  const Tensor a = random_tensor({2, 4}, rng);
  const auto& b = *ball;
  auto ok = [](const std::function<Tensor(const Tensor&)>& f, const Tensor& at) {
    return gradient_check(f, at).max_rel_error < 1e-5;
  };
  CHECK(ok([&](const Tensor& t) { return sum(b.mobius_add(t, y, -1) * v); }, x));
  CHECK(ok([&](const Tensor& t) { return sum(b.mobius_add(x, t, -1) * v); }, y));
  CHECK(ok([&](const Tensor& t) { return sum(b.gyration(t, y, v * 0.1, -1) * v); }, x));
  CHECK(ok([&](const Tensor& t) { return sum(b.conformal_factor(t, -1)); }, x));
  CHECK(ok([&](const Tensor& t) { return sum(b.expmap0(t, -1) * v); }, v));
  CHECK(ok([&](const Tensor& t) { return sum(b.logmap0(t, -1) * v); }, x));
  CHECK(ok([&](const Tensor& t) { return sum(b.expmap(t, v, -1) * y); }, x));
  CHECK(ok([&](const Tensor& t) { return sum(b.expmap(x, t, -1) * y); }, v));
  CHECK(ok([&](const Tensor& t) { return sum(b.logmap(t, y, -1) * v); }, x));
  CHECK(ok([&](const Tensor& t) { return sum(b.logmap(x, t, -1) * v); }, y));
  CHECK(ok([&](const Tensor& t) { return sum(b.distance(t, y, -1)); }, x));
  CHECK(ok([&](const Tensor& t) {
    const Tensor d = b.distance(Tensor::zeros({4}), b.expmap0(t, -1), -1);
    return sum(d * d);
  }, v));
  CHECK(ok([&](const Tensor& t) { return sum(b.parallel_transport(t, y, v, -1) * v); }, x));
  CHECK(ok([&](const Tensor& t) { return sum(b.parallel_transport(x, t, v, -1) * v); }, y));
  CHECK(ok([&](const Tensor& t) { return sum(b.inner(x, t, v, -1)); }, v));
  CHECK(ok([&](const Tensor& t) { return sum(b.mobius_matvec(t, x, -1) * y.detach().data()[0]); }, m));
  CHECK(ok([&](const Tensor& t) { return sum(b.mobius_matvec(m, t, -1)); }, x));
  CHECK(ok([&](const Tensor& t) { return sum(b.mlr_logits(t, p, a)); }, x));
  CHECK(ok([&](const Tensor& t) { return sum(b.mlr_logits(x, t, a)); }, p));
  CHECK(ok([&](const Tensor& t) { return sum(b.mlr_logits(x, p, t)); }, a));
  CHECK(ok([&](const Tensor& t) {
    const std::vector<Tensor> parts{t, y};
    return sum(b.beta_concat(parts, -1));
  }, x));
  CHECK(ok([&](const Tensor& t) { return sum(b.frechet_mean(t, 0, 1, {}, 1e-13) * v); }, x));
  CHECK(ok([&](const Tensor& t) {
    const Tensor mu = b.frechet_mean(t, 0, 1, {}, 1e-13);
    return b.frechet_variance(t, mu, 0, 1);
  }, x));
}

TEST_CASE("learnable curvature receives gradients") {
  auto curv = std::make_shared<Curvature>(0.7, true);
  const auto ball = make_poincare_ball(curv);
  std::mt19937_64 rng(34);
  const Tensor x = random_ball_points({3, 2}, 0.7, 0.6, rng);
  const Tensor y = random_ball_points({3, 2}, 0.7, 0.6, rng);
  const Tensor v = random_tensor({3, 2}, rng);
  const Tensor p = random_ball_points({2, 2}, 0.7, 0.5, rng);
  const Tensor a = random_tensor({2, 2}, rng);
  const std::vector<std::function<Tensor()>> losses{
      [&] { return sum(ball->distance(x, y, -1)); },
      [&] { return sum(ball->expmap(x, v, -1) * v); },
      [&] { return sum(ball->logmap(x, y, -1) * v); },
      [&] { return sum(ball->mlr_logits(x, p, a)); },
      [&] { return sum(ball->mobius_add(x, y, -1) * v); },
  };
  for (const auto& f : losses) {
    CHECK(gradient_check_inplace(f, curv->raw()).max_rel_error < 1e-5);
  }
  const auto fixed = make_poincare_ball(0.7);
  Tape tape;
  TapeScope scope(tape);
  const Tensor loss = sum(fixed->distance(x, y, -1));
  CHECK_FALSE(loss.requires_grad());
}
