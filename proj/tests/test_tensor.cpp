#include <doctest.h>

#include <cmath>
#include <random>

#include "hyptk/tensor.hpp"
#include "support.hpp"

using namespace hyp;
using testing::random_tensor;
using testing::values;

namespace {

constexpr double kGradTol = 1e-4;

double check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  return gradient_check(f, x).max_rel_error;
}

}  // namespace

TEST_CASE("broadcasting follows trailing dimensions") {
  const Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  const Tensor b = Tensor::vector({10, 20, 30});
  const Tensor c = a + b;
  CHECK(c.shape() == Shape{2, 3});
  CHECK(values(c) == std::vector<double>{11, 22, 33, 14, 25, 36});
  const Tensor col = Tensor({2, 1}, {100, 200});
  CHECK(values(a * col) == std::vector<double>{100, 200, 300, 800, 1000, 1200});
  CHECK_THROWS_AS(a + Tensor::vector({1, 2}), ShapeError);
  CHECK(broadcast_shapes({4, 1, 3}, {2, 1}) == Shape{4, 2, 3});
}

TEST_CASE("matmul against hand-computed product") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b = Tensor::matrix({{5, 6}, {7, 8}});
  CHECK(values(matmul(a, b)) == std::vector<double>{19, 22, 43, 50});
  CHECK_THROWS_AS(matmul(a, Tensor::matrix({{1, 2, 3}})), ShapeError);
}

TEST_CASE("reductions and restructuring") {
  const Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(values(sum(x, {0})) == std::vector<double>{5, 7, 9});
  CHECK(values(sum(x, {1}, true)) == std::vector<double>{6, 15});
  CHECK(sum(x, {1}, true).shape() == Shape{2, 1});
  CHECK(mean(x).item() == doctest::Approx(3.5));
  CHECK(values(amax(x, 1)) == std::vector<double>{3, 6});
  CHECK(values(transpose(x, 0, 1)) == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(reshape(x, {3, -1}).shape() == Shape{3, 2});
  CHECK(values(slice(x, 1, 1, 3)) == std::vector<double>{2, 3, 5, 6});
  CHECK(values(concat({x, x}, 0)).size() == 12);
  const std::vector<std::int64_t> idx{1, 1, 0};
  CHECK(values(index_select(x, 0, idx)) == std::vector<double>{4, 5, 6, 4, 5, 6, 1, 2, 3});
  CHECK(norm2(Tensor::vector({3, 4}), {0}).item() == doctest::Approx(5.0));
  CHECK(unsqueeze(x, 0).shape() == Shape{1, 2, 3});
  CHECK(squeeze(unsqueeze(x, 2), 2).shape() == Shape{2, 3});
}

TEST_CASE("unfold2d matches direct patch extraction") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 3, 5, 4}, rng);
  const std::int64_t kh = 3, kw = 2, sh = 2, sw = 1, ph = 1, pw = 0;
  const Tensor cols = unfold2d(x, {kh, kw}, {sh, sw}, {ph, pw});
  const std::int64_t oh = (5 + 2 * ph - kh) / sh + 1;
  const std::int64_t ow = (4 + 2 * pw - kw) / sw + 1;
  REQUIRE(cols.shape() == Shape{2, 3 * kh * kw, oh * ow});
  auto at = [&](std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    if (h < 0 || h >= 5 || w < 0 || w >= 4) return 0.0;
    return x[((n * 3 + c) * 5 + h) * 4 + w];
  };
  double worst = 0.0;
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t i = 0; i < kh; ++i)
        for (std::int64_t j = 0; j < kw; ++j)
          for (std::int64_t oy = 0; oy < oh; ++oy)
            for (std::int64_t ox = 0; ox < ow; ++ox) {
              const std::int64_t row = (c * kh + i) * kw + j;
              const double got = cols[(n * 3 * kh * kw + row) * oh * ow + oy * ow + ox];
              worst = std::max(worst, std::abs(got - at(n, c, oy * sh + i - ph, ox * sw + j - pw)));
            }
  CHECK(worst == 0.0);
}

TEST_CASE("operations record only under an active tape") {
  const Tensor x = Tensor::vector({1.0, 2.0}, true);
  Tensor y = x * x;
  CHECK_THROWS_AS(backward(sum(y)), ContractError);
  Tape tape;
  {
    TapeScope scope(tape);
    const Tensor loss = sum(x * x);
    {
      NoGradScope no_grad;
      (void)(x * 3.0);
    }
    tape.backward(loss);
  }
  CHECK(values(x.grad()) == std::vector<double>{2.0, 4.0});
}

TEST_CASE("a second backward doubles leaf gradients") {
  const Tensor x = Tensor::vector({0.5, -1.5, 2.0}, true);
  Tape tape;
  TapeScope scope(tape);
  const Tensor loss = sum(tanh(x) * exp(x));
  tape.backward(loss);
  const auto once = values(x.grad());
  tape.backward(loss);
  const auto twice = values(x.grad());
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == 2.0 * once[i]);
}

TEST_CASE("backward needs a one-element loss from this tape") {
  const Tensor x = Tensor::vector({1.0, 2.0}, true);
  Tape tape;
  TapeScope scope(tape);
  const Tensor y = x * 2.0;
  CHECK_THROWS_AS(tape.backward(y), ContractError);
  Tape other;
  CHECK_THROWS_AS(other.backward(sum(y)), ContractError);
}

TEST_CASE("numeric edge conventions") {
  CHECK_THROWS_AS(div(Tensor::vector({1.0}), Tensor::vector({0.0})), ContractError);
  const Tensor q = safe_div(Tensor::vector({1.0, 2.0}), Tensor::vector({0.0, 4.0}));
  CHECK(values(q) == std::vector<double>{0.0, 0.5});

  const Tensor z = Tensor::vector({0.0, 0.0}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(norm2(z, {0}));
  }
  CHECK(values(z.grad()) == std::vector<double>{0.0, 0.0});

  CHECK(std::isfinite(artanh(Tensor::scalar(1.0)).item()));
  CHECK(artanh(Tensor::scalar(2.0)).item() == doctest::Approx(std::atanh(1.0 - kArtanhClamp)));
  CHECK(softplus(Tensor::scalar(800.0)).item() == doctest::Approx(800.0));
  CHECK(softplus(Tensor::scalar(-800.0)).item() >= 0.0);
  CHECK(softplus(Tensor::scalar(0.0)).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("gradient checks: elementwise operations") {
  std::mt19937_64 rng(11);
  const Tensor x = random_tensor({3, 4}, rng, 0.5);
  const Tensor pos = Tensor({3, 4}, [&] {
    auto v = values(x);
    for (double& e : v) e = std::abs(e) + 0.5;
    return v;
  }());
  const Tensor other = random_tensor({4}, rng);
  const Tensor denom = other * other + 1.0;

  CHECK(check([&](const Tensor& t) { return sum(t * other + t); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum((t - other) * (t - other)); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(t / denom); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(denom / t); }, pos) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(safe_div(t, denom)); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(maximum(t, other * 0.1)); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(tanh(t) * t); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(artanh(t * 0.5)); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(asinh(t * 3.0)); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(sqrt(t)); }, pos) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(exp(t)); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(log(t)); }, pos) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(pow(t, 2.5)); }, pos) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(clamp(t, -0.3, 0.3) * t); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(relu(t) * t); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(softplus(t * 4.0)); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(-t * t); }, x) < kGradTol);
}

TEST_CASE("gradient checks: linear algebra, reductions, restructuring") {
  std::mt19937_64 rng(12);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor w = random_tensor({4, 2}, rng);
  const Tensor img = random_tensor({2, 2, 5, 5}, rng);
  const std::vector<std::int64_t> idx{2, 0, 2};

  CHECK(check([&](const Tensor& t) { return sum(tanh(matmul(t, w))); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(tanh(matmul(x, t))); }, w) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(exp(mean(t, {0}))); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(norm2(t, {1}, true) * t); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(amax(t, 1, true) * amax(t, 0, true)); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(tanh(reshape(t, {2, 6})) * 2.0); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(tanh(matmul(permute(t, {1, 0}), x))); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(exp(concat({t, t * 2.0}, 1))); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(exp(slice(t, 1, 1, 3))); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(exp(index_select(t, 0, idx))); }, x) < kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(exp(broadcast_to(t, {2, 3, 4}))); }, x) <
        kGradTol);
  CHECK(check([&](const Tensor& t) { return sum(tanh(unfold2d(t, {3, 3}, {2, 1}, {1, 1}))); },
              img) < kGradTol);
}

TEST_CASE("gradient_check restores the probed tensor") {
  Tensor p = Tensor::vector({0.25, -0.5}, true);
  const auto before = values(p);
  const auto res = gradient_check_inplace([&] { return sum(p * p * p); }, p);
  CHECK(values(p) == before);
  CHECK(res.max_rel_error < kGradTol);
  CHECK(res.analytic[0] == doctest::Approx(3 * 0.25 * 0.25));
}
