#include "hyptk/hyptk.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "hyptk/app/runs.hpp"
#include "hyptk/errors.hpp"
#include "hyptk/manifold_tensor.hpp"

struct hyptk_config {
  hyp::app::RunConfig config;
  std::vector<hyp::app::Setting> assigned;
};

struct hyptk_run {
  std::unique_ptr<hyp::app::Run> run;
};

struct hyptk_manifold {
  hyp::ManifoldPtr manifold;
};

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

thread_local std::string last_error;

hyptk_status fail(hyptk_status status, const char* message) {
  last_error = message;
  return status;
}

template <class F>
hyptk_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return HYPTK_OK;
  } catch (const hyp::ConfigError& e) {
    return fail(HYPTK_CONFIG_ERROR, e.what());
  } catch (const hyp::DataError& e) {
    return fail(HYPTK_DATA_ERROR, e.what());
  } catch (const hyp::NumericError& e) {
    return fail(HYPTK_NUMERIC_ERROR, e.what());
  } catch (const std::bad_alloc&) {
    return fail(HYPTK_ERROR, "out of memory");
  } catch (const std::exception& e) {
    return fail(HYPTK_ERROR, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw hyp::ContractError(what);
}

hyp::Tensor points(const hyptk_manifold* m, const double* x, size_t n, size_t dim) {
  require(m != nullptr && x != nullptr, "null argument");
  require(n > 0 && dim > 0, "empty point batch");
  const std::vector<double> data(x, x + n * dim);
  hyp::Tensor t({static_cast<std::int64_t>(n), static_cast<std::int64_t>(dim)}, data);
  if (!m->manifold->contains(t, 1)) throw hyp::ContractError("point outside the Poincare ball");
  return t;
}

void copy_out(const hyp::Tensor& t, double* out) {
  require(out != nullptr, "null output buffer");
  std::memcpy(out, t.data().data(), t.data().size() * sizeof(double));
}

}  // namespace

extern "C" {

const char* hyptk_version(void) { return HYPTK_VERSION_STRING; }

const char* hyptk_last_error(void) { return last_error.c_str(); }

hyptk_status hyptk_config_create(hyptk_config** out) {
  if (!out) return fail(HYPTK_ERROR, "null output handle");
  return guarded([&] { *out = new hyptk_config{}; });
}

void hyptk_config_destroy(hyptk_config* config) { delete config; }

hyptk_status hyptk_config_set(hyptk_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return fail(HYPTK_ERROR, "null argument");
  return guarded([&] {
    hyp::app::apply_setting(config->config, key, value);
    config->assigned.emplace_back(key, value);
  });
}

hyptk_status hyptk_config_load_file(hyptk_config* config, const char* path) {
  if (!config || !path) return fail(HYPTK_ERROR, "null argument");
  return guarded([&] {
    const auto settings = hyp::app::read_config_file(path);
    auto updated = config->config;
    for (const auto& [k, v] : settings) hyp::app::apply_setting(updated, k, v);
    config->config = updated;
    config->assigned.insert(config->assigned.end(), settings.begin(), settings.end());
  });
}

hyptk_status hyptk_config_get(const hyptk_config* config, const char* key, char* buf, size_t cap,
                              size_t* length) {
  if (!config || !key) return fail(HYPTK_ERROR, "null argument");
  return guarded([&] {
    for (const auto& [k, v] : hyp::app::to_settings(config->config)) {
      if (k != key) continue;
      if (length) *length = v.size();
      if (buf && cap > 0) {
        const size_t n = std::min(cap - 1, v.size());
        std::memcpy(buf, v.data(), n);
        buf[n] = '\0';
      }
      return;
    }
    throw hyp::ConfigError(std::string("unknown config key '") + key + "'");
  });
}

hyptk_status hyptk_run_create(const hyptk_config* config, hyptk_run** out) {
  if (!config || !out) return fail(HYPTK_ERROR, "null argument");
  return guarded([&] { *out = new hyptk_run{hyp::app::make_run(config->config)}; });
}

hyptk_status hyptk_run_resume(const char* checkpoint, const hyptk_config* overrides,
                              hyptk_run** out) {
  if (!checkpoint || !out) return fail(HYPTK_ERROR, "null argument");
  return guarded([&] {
    const std::vector<hyp::app::Setting> none;
    const auto& settings = overrides ? overrides->assigned : none;
    *out = new hyptk_run{hyp::app::load_run(checkpoint, settings)};
  });
}

void hyptk_run_destroy(hyptk_run* run) { delete run; }

hyptk_status hyptk_run_train(hyptk_run* run, hyptk_epoch_callback callback, void* user) {
  if (!run) return fail(HYPTK_ERROR, "null run handle");
  return guarded([&] {
    run->run->train([&](const hyp::app::MetricRow& row) {
      if (callback) callback(row.epoch, row.step, row.loss, row.accuracy.value_or(kNaN), user);
    });
    const auto& cfg = run->run->config();
    if (auto* e = dynamic_cast<hyp::app::EmbeddingRun*>(run->run.get());
        e && !cfg.export_disk.empty()) {
      e->export_disk(cfg.export_disk, cfg.export_format);
    }
  });
}

hyptk_status hyptk_run_save(const hyptk_run* run, const char* path) {
  if (!run || !path) return fail(HYPTK_ERROR, "null argument");
  return guarded([&] { run->run->save(path); });
}

hyptk_status hyptk_run_export_disk(const hyptk_run* run, const char* path, const char* format) {
  if (!run || !path || !format) return fail(HYPTK_ERROR, "null argument");
  return guarded([&] {
    const auto* e = dynamic_cast<const hyp::app::EmbeddingRun*>(run->run.get());
    if (!e) throw hyp::ConfigError("disk export needs an embed-tree checkpoint");
    e->export_disk(path, format);
  });
}

int64_t hyptk_run_epoch(const hyptk_run* run) { return run ? run->run->epoch() : -1; }

int64_t hyptk_run_target_epochs(const hyptk_run* run) {
  return run ? run->run->config().epochs : -1;
}

double hyptk_run_loss(const hyptk_run* run) {
  if (!run || run->run->history().empty()) return kNaN;
  return run->run->history().back().loss;
}

double hyptk_run_accuracy(const hyptk_run* run) {
  if (!run || run->run->history().empty()) return kNaN;
  return run->run->history().back().accuracy.value_or(kNaN);
}

double hyptk_run_distortion(const hyptk_run* run) {
  const auto* e = run ? dynamic_cast<const hyp::app::EmbeddingRun*>(run->run.get()) : nullptr;
  return e ? e->distortion() : kNaN;
}

double hyptk_run_curvature(const hyptk_run* run) { return run ? run->run->curvature() : kNaN; }

hyptk_status hyptk_manifold_create(const char* kind, double c, hyptk_manifold** out) {
  if (!kind || !out) return fail(HYPTK_ERROR, "null argument");
  return guarded([&] {
    const std::string k = kind;
    if (k == "poincare") {
      if (!(c > 0.0) || !std::isfinite(c)) throw hyp::ConfigError("curvature must be positive");
      *out = new hyptk_manifold{hyp::make_poincare_ball(c)};
    } else if (k == "euclidean") {
      *out = new hyptk_manifold{hyp::make_euclidean()};
    } else {
      throw hyp::ConfigError("manifold kind must be poincare or euclidean");
    }
  });
}

void hyptk_manifold_destroy(hyptk_manifold* manifold) { delete manifold; }

hyptk_status hyptk_mobius_add(const hyptk_manifold* m, const double* x, const double* y, size_t n,
                              size_t dim, double* out) {
  return guarded([&] {
    const auto a = points(m, x, n, dim), b = points(m, y, n, dim);
    copy_out(m->manifold->mobius_add(a, b, 1), out);
  });
}

hyptk_status hyptk_distance(const hyptk_manifold* m, const double* x, const double* y, size_t n,
                            size_t dim, double* out) {
  return guarded([&] {
    const auto a = points(m, x, n, dim), b = points(m, y, n, dim);
    copy_out(m->manifold->distance(a, b, 1, false), out);
  });
}

hyptk_status hyptk_expmap0(const hyptk_manifold* m, const double* v, size_t n, size_t dim,
                           double* out) {
  return guarded([&] {
    require(m != nullptr && v != nullptr && n > 0 && dim > 0, "null or empty argument");
    const hyp::Tensor t({static_cast<std::int64_t>(n), static_cast<std::int64_t>(dim)},
                        std::vector<double>(v, v + n * dim));
    copy_out(m->manifold->expmap0(t, 1), out);
  });
}

hyptk_status hyptk_logmap0(const hyptk_manifold* m, const double* x, size_t n, size_t dim,
                           double* out) {
  return guarded([&] {
    const auto t = points(m, x, n, dim);
    copy_out(m->manifold->logmap0(t, 1), out);
  });
}

}  // extern "C"
