#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "hyptk/hyptk.h"
#include "oracles.hpp"

namespace fs = std::filesystem;
using oracle::Vec;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("hyptk_capi_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& f) const { return (dir / f).string(); }
};

std::string get(const hyptk_config* c, const char* key) {
  char buf[256];
  size_t length = 0;
  REQUIRE(hyptk_config_get(c, key, buf, sizeof buf, &length) == HYPTK_OK);
  CHECK(length == std::strlen(buf));
  return buf;
}

hyptk_config* embed_config(std::int64_t epochs) {
  hyptk_config* c = nullptr;
  REQUIRE(hyptk_config_create(&c) == HYPTK_OK);
  REQUIRE(hyptk_config_set(c, "epochs", std::to_string(epochs).c_str()) == HYPTK_OK);
  return c;
}

Vec ball_point(std::mt19937_64& rng, std::size_t dim, double radius) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec v(dim);
  for (double& e : v) e = n(rng);
  return oracle::scale(v, radius * u(rng) / oracle::norm(v));
}

}  // namespace

TEST_CASE("version and error reporting") {
  CHECK(std::string(hyptk_version()).size() > 0);
  hyptk_config* c = nullptr;
  REQUIRE(hyptk_config_create(&c) == HYPTK_OK);
  CHECK(hyptk_config_set(c, "no-such-key", "1") == HYPTK_CONFIG_ERROR);
  CHECK(std::string(hyptk_last_error()).find("no-such-key") != std::string::npos);
  CHECK(hyptk_config_set(c, "lr", "abc") == HYPTK_CONFIG_ERROR);
  CHECK(hyptk_config_set(nullptr, "lr", "1") == HYPTK_ERROR);
  CHECK(hyptk_config_load_file(c, "/nonexistent/run.conf") != HYPTK_OK);
  hyptk_config_destroy(c);
  hyptk_config_destroy(nullptr);
  hyptk_run_destroy(nullptr);
  hyptk_manifold_destroy(nullptr);
}

TEST_CASE("config get, set and files") {
  Scratch s;
  hyptk_config* c = nullptr;
  REQUIRE(hyptk_config_create(&c) == HYPTK_OK);
  CHECK(get(c, "manifold") == "poincare");
  CHECK(hyptk_config_set(c, "lr", "0.25") == HYPTK_OK);
  CHECK(get(c, "lr") == "0.25");
  {
    std::ofstream(s / "run.conf") << "# test\nmanifold = euclidean\nepochs = 4\n";
  }
  CHECK(hyptk_config_load_file(c, (s / "run.conf").c_str()) == HYPTK_OK);
  CHECK(get(c, "manifold") == "euclidean");
  CHECK(get(c, "epochs") == "4");
  CHECK(get(c, "lr") == "0.25");

  char tiny[4];
  size_t length = 0;
  CHECK(hyptk_config_get(c, "manifold", tiny, sizeof tiny, &length) == HYPTK_OK);
  CHECK(length == 9);
  CHECK(std::string(tiny) == "euc");
  CHECK(hyptk_config_get(c, "bogus", tiny, sizeof tiny, &length) == HYPTK_CONFIG_ERROR);
  hyptk_config_destroy(c);
}

TEST_CASE("geometry entry points agree with closed forms") {
  std::mt19937_64 rng(91);
  hyptk_manifold* ball = nullptr;
  REQUIRE(hyptk_manifold_create("poincare", 0.7, &ball) == HYPTK_OK);
  const std::size_t n = 50, dim = 3;
  const double c = 0.7, r = 0.95 / std::sqrt(c);
  Vec x, y, v;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec a = ball_point(rng, dim, r), b = ball_point(rng, dim, r), t = ball_point(rng, dim, 2.0);
    x.insert(x.end(), a.begin(), a.end());
    y.insert(y.end(), b.begin(), b.end());
    v.insert(v.end(), t.begin(), t.end());
  }
  Vec sum(n * dim), dist(n), ex(n * dim), lg(n * dim);
  REQUIRE(hyptk_mobius_add(ball, x.data(), y.data(), n, dim, sum.data()) == HYPTK_OK);
  REQUIRE(hyptk_distance(ball, x.data(), y.data(), n, dim, dist.data()) == HYPTK_OK);
  REQUIRE(hyptk_expmap0(ball, v.data(), n, dim, ex.data()) == HYPTK_OK);
  REQUIRE(hyptk_logmap0(ball, x.data(), n, dim, lg.data()) == HYPTK_OK);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = [&](const Vec& m) { return Vec(m.begin() + i * dim, m.begin() + (i + 1) * dim); };
    const Vec xs = row(x), ys = row(y);
    const auto diff = [&](const Vec& got, const Vec& want) {
      double d = 0.0;
      for (std::size_t k = 0; k < dim; ++k) d = std::max(d, std::abs(got[k] - want[k]));
      return d;
    };
    worst = std::max({worst, diff(row(sum), oracle::mobius_add(xs, ys, c)),
                      std::abs(dist[i] - oracle::distance(xs, ys, c)) / std::max(1.0, dist[i]),
                      diff(row(ex), oracle::expmap0(row(v), c)), diff(row(lg), oracle::logmap0(xs, c))});
  }
  CHECK(worst < 1e-10);

  Vec outside{2.0, 0.0, 0.0};
  CHECK(hyptk_logmap0(ball, outside.data(), 1, dim, lg.data()) == HYPTK_ERROR);
  CHECK(std::string(hyptk_last_error()).size() > 0);
  CHECK(hyptk_logmap0(nullptr, outside.data(), 1, dim, lg.data()) == HYPTK_ERROR);

  hyptk_manifold* flat = nullptr;
  REQUIRE(hyptk_manifold_create("euclidean", 1.0, &flat) == HYPTK_OK);
  Vec p{1.0, 2.0}, q{4.0, 6.0}, d(1), e(2);
  REQUIRE(hyptk_distance(flat, p.data(), q.data(), 1, 2, d.data()) == HYPTK_OK);
  CHECK(d[0] == doctest::Approx(5.0));
  REQUIRE(hyptk_mobius_add(flat, p.data(), q.data(), 1, 2, e.data()) == HYPTK_OK);
  CHECK(e == Vec{5.0, 8.0});

  hyptk_manifold* bad = nullptr;
  CHECK(hyptk_manifold_create("poincare", -1.0, &bad) == HYPTK_CONFIG_ERROR);
  CHECK(hyptk_manifold_create("hyperboloid", 1.0, &bad) == HYPTK_CONFIG_ERROR);
  hyptk_manifold_destroy(flat);
  hyptk_manifold_destroy(ball);
}

namespace {
struct Seen {
  std::vector<std::int64_t> epochs;
  bool accuracy_nan = true;
};
void record(std::int64_t epoch, std::int64_t, double, double accuracy, void* user) {
  auto* seen = static_cast<Seen*>(user);
  seen->epochs.push_back(epoch);
  seen->accuracy_nan = seen->accuracy_nan && std::isnan(accuracy);
}
}  // namespace

TEST_CASE("runs train, checkpoint, resume and export") {
  Scratch s;
  hyptk_config* c = embed_config(10);
  REQUIRE(hyptk_config_set(c, "checkpoint-out", (s / "ck.json").c_str()) == HYPTK_OK);
  hyptk_run* run = nullptr;
  REQUIRE(hyptk_run_create(c, &run) == HYPTK_OK);
  CHECK(hyptk_run_target_epochs(run) == 10);
  Seen seen;
  REQUIRE(hyptk_run_train(run, &record, &seen) == HYPTK_OK);
  CHECK(seen.epochs.size() == 11);
  CHECK(seen.epochs.back() == 10);
  CHECK(seen.accuracy_nan);
  CHECK(hyptk_run_epoch(run) == 10);
  CHECK(std::isfinite(hyptk_run_loss(run)));
  CHECK(hyptk_run_distortion(run) > 0.0);
  CHECK(std::isnan(hyptk_run_accuracy(run)));
  CHECK(hyptk_run_curvature(run) == doctest::Approx(1.0));
  CHECK(fs::exists(s / "ck.json"));
  CHECK(hyptk_run_export_disk(run, (s / "d.csv").c_str(), "csv") == HYPTK_OK);
  CHECK(hyptk_run_export_disk(run, (s / "d.bmp").c_str(), "bmp") == HYPTK_CONFIG_ERROR);

  hyptk_config* more = nullptr;
  REQUIRE(hyptk_config_create(&more) == HYPTK_OK);
  REQUIRE(hyptk_config_set(more, "epochs", "12") == HYPTK_OK);
  hyptk_run* resumed = nullptr;
  REQUIRE(hyptk_run_resume((s / "ck.json").c_str(), more, &resumed) == HYPTK_OK);
  CHECK(hyptk_run_epoch(resumed) == 10);
  CHECK(hyptk_run_loss(resumed) == hyptk_run_loss(run));
  REQUIRE(hyptk_run_train(resumed, nullptr, nullptr) == HYPTK_OK);
  CHECK(hyptk_run_epoch(resumed) == 12);

  REQUIRE(hyptk_config_set(more, "lr", "0.1") == HYPTK_OK);
  hyptk_run* refused = nullptr;
  CHECK(hyptk_run_resume((s / "ck.json").c_str(), more, &refused) == HYPTK_CONFIG_ERROR);
  CHECK(refused == nullptr);
  CHECK(hyptk_run_resume((s / "missing.json").c_str(), nullptr, &refused) == HYPTK_DATA_ERROR);
  {
    std::ofstream(s / "broken.json") << "{\"format_version\": 99}";
  }
  CHECK(hyptk_run_resume((s / "broken.json").c_str(), nullptr, &refused) == HYPTK_DATA_ERROR);

  hyptk_run_destroy(resumed);
  hyptk_config_destroy(more);
  hyptk_run_destroy(run);
  hyptk_config_destroy(c);
}

TEST_CASE("run creation validates the configuration") {
  hyptk_config* c = embed_config(5);
  hyptk_run* run = nullptr;
  REQUIRE(hyptk_config_set(c, "curvature", "-2") == HYPTK_OK);
  CHECK(hyptk_run_create(c, &run) == HYPTK_CONFIG_ERROR);
  CHECK(run == nullptr);
  REQUIRE(hyptk_config_set(c, "curvature", "1") == HYPTK_OK);
  REQUIRE(hyptk_config_set(c, "command", "train-image") == HYPTK_OK);
  REQUIRE(hyptk_config_set(c, "train-images", "/nonexistent/images.idx") == HYPTK_OK);
  REQUIRE(hyptk_config_set(c, "train-labels", "/nonexistent/labels.idx") == HYPTK_OK);
  CHECK(hyptk_run_create(c, &run) == HYPTK_DATA_ERROR);

  REQUIRE(hyptk_config_set(c, "command", "embed-tree") == HYPTK_OK);
  REQUIRE(hyptk_config_set(c, "manifold", "euclidean") == HYPTK_OK);
  REQUIRE(hyptk_config_set(c, "optimizer", "rsgd") == HYPTK_OK);
  REQUIRE(hyptk_config_set(c, "momentum", "0") == HYPTK_OK);
  REQUIRE(hyptk_config_set(c, "lr", "1e200") == HYPTK_OK);
  REQUIRE(hyptk_run_create(c, &run) == HYPTK_OK);
  CHECK(hyptk_run_train(run, nullptr, nullptr) == HYPTK_NUMERIC_ERROR);
  hyptk_run_destroy(run);
  hyptk_config_destroy(c);
}
