// Command-line front end: hierarchy embedding into the Poincare disk and small
// image classification, driven entirely through the C interface.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hyptk/hyptk.h"

namespace {

struct ConfigDeleter {
  void operator()(hyptk_config* c) const { hyptk_config_destroy(c); }
};
struct RunDeleter {
  void operator()(hyptk_run* r) const { hyptk_run_destroy(r); }
};
using ConfigHandle = std::unique_ptr<hyptk_config, ConfigDeleter>;
using RunHandle = std::unique_ptr<hyptk_run, RunDeleter>;

struct Failure {
  int code;
};

void check(hyptk_status status) {
  if (status != HYPTK_OK) {
    std::fprintf(stderr, "hypcli: error: %s\n", hyptk_last_error());
    throw Failure{static_cast<int>(status)};
  }
}

// String-valued options keyed by config name, plus boolean switches.
struct Flags {
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  std::vector<std::pair<std::string, CLI::Option*>> order;

  void option(CLI::App* app, const std::string& key, const std::string& help) {
    order.emplace_back(key, app->add_option("--" + key, values[key], help));
  }
  void flag(CLI::App* app, const std::string& key, const std::string& help) {
    order.emplace_back(key, app->add_flag("--" + key, switches[key], help));
  }

  void apply(hyptk_config* config) const {
    for (const auto& [key, opt] : order) {
      if (opt->count() == 0) continue;
      const auto sw = switches.find(key);
      const std::string value = sw != switches.end() ? (sw->second ? "true" : "false") : values.at(key);
      check(hyptk_config_set(config, key.c_str(), value.c_str()));
    }
  }
};

void add_shared(CLI::App* app, Flags& f) {
  f.option(app, "manifold", "poincare or euclidean");
  f.option(app, "curvature", "initial curvature c > 0 of the ball (curvature -c)");
  f.flag(app, "learnable-curvature", "train the curvature together with the model");
  f.option(app, "dim", "embedding dimension");
  f.option(app, "epochs", "number of training epochs");
  f.option(app, "lr", "learning rate");
  f.option(app, "optimizer", "rsgd or radam");
  f.option(app, "momentum", "RSGD momentum in [0, 1)");
  f.option(app, "lr-decay", "multiply the learning rate by this factor ...");
  f.option(app, "lr-decay-every", "... once every this many epochs");
  f.option(app, "batch-size", "minibatch size");
  f.option(app, "seed", "random seed");
  f.option(app, "checkpoint-out", "write a checkpoint here when training ends");
  f.option(app, "checkpoint-every", "also checkpoint every N epochs (0: only at the end)");
  f.option(app, "metrics-out", "write per-epoch metrics CSV here");
}

void add_export(CLI::App* app, Flags& f) {
  f.option(app, "export-disk", "write the 2-D embedding to this file");
  f.option(app, "export-format", "csv or svg");
}

struct Progress {
  std::int64_t every;
  bool image;
};

void report(std::int64_t epoch, std::int64_t step, double loss, double accuracy, void* user) {
  const auto* p = static_cast<const Progress*>(user);
  if (epoch % p->every != 0) return;
  if (p->image) {
    std::printf("epoch %lld  step %lld  loss %.6f  accuracy %.4f\n", static_cast<long long>(epoch),
                static_cast<long long>(step), loss, accuracy);
  } else {
    std::printf("epoch %lld  loss %.6f\n", static_cast<long long>(epoch), loss);
  }
  std::fflush(stdout);
}

std::string get(const hyptk_config* config, const char* key) {
  size_t length = 0;
  check(hyptk_config_get(config, key, nullptr, 0, &length));
  std::string out(length + 1, '\0');
  check(hyptk_config_get(config, key, out.data(), out.size(), nullptr));
  out.resize(length);
  return out;
}

void summarize(hyptk_run* run) {
  std::printf("final loss %.6f", hyptk_run_loss(run));
  if (const double d = hyptk_run_distortion(run); !std::isnan(d)) std::printf("  distortion %.6f", d);
  if (const double a = hyptk_run_accuracy(run); !std::isnan(a)) std::printf("  accuracy %.4f", a);
  std::printf("  curvature %.6g\n", hyptk_run_curvature(run));
}

void train(hyptk_run* run) {
  const bool image = std::isnan(hyptk_run_distortion(run));
  Progress progress{std::max<std::int64_t>(1, hyptk_run_target_epochs(run) / 10), image};
  check(hyptk_run_train(run, &report, &progress));
  summarize(run);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperbolic learning toolkit: embed hierarchies and train hyperbolic convnets"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hyptk_version());

  std::string config_path, checkpoint_in;

  Flags embed_flags;
  auto* embed = app.add_subcommand("embed-tree", "embed a balanced tree into the Poincare disk");
  embed->add_option("--config", config_path, "config file of key = value lines");
  add_shared(embed, embed_flags);
  embed_flags.option(embed, "depth", "tree depth");
  embed_flags.option(embed, "branching", "children per node");
  embed_flags.option(embed, "tau", "scale of graph distances in the target");
  add_export(embed, embed_flags);

  Flags image_flags;
  auto* image = app.add_subcommand("train-image", "train the hyperbolic convnet on images");
  image->add_option("--config", config_path, "config file of key = value lines");
  add_shared(image, image_flags);
  image_flags.option(image, "train-images", "IDX image file (magic 2051)");
  image_flags.option(image, "train-labels", "IDX label file (magic 2049)");
  image_flags.flag(image, "synthetic", "use the built-in horizontal/vertical bars task");
  image_flags.option(image, "classes", "number of classes");
  image_flags.option(image, "samples", "synthetic sample count");
  image_flags.option(image, "image-size", "synthetic image side length");
  image_flags.option(image, "crop", "center-crop IDX images to this size");
  image_flags.option(image, "downscale", "average-pool IDX images by this factor");

  Flags export_flags;
  auto* exporter = app.add_subcommand("export-disk", "export an embedding checkpoint to csv or svg");
  exporter->add_option("--checkpoint-in", checkpoint_in, "embedding checkpoint")->required();
  add_export(exporter, export_flags);

  Flags resume_flags;
  auto* resume = app.add_subcommand("resume", "continue training from a checkpoint");
  resume->add_option("--checkpoint-in", checkpoint_in, "checkpoint to resume from")->required();
  add_shared(resume, resume_flags);
  add_export(resume, resume_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return HYPTK_CONFIG_ERROR;
  }

  try {
    hyptk_config* raw = nullptr;
    check(hyptk_config_create(&raw));
    ConfigHandle config(raw);

    if (*embed || *image) {
      if (!config_path.empty()) check(hyptk_config_load_file(config.get(), config_path.c_str()));
      check(hyptk_config_set(config.get(), "command", *embed ? "embed-tree" : "train-image"));
      (*embed ? embed_flags : image_flags).apply(config.get());
      hyptk_run* run_raw = nullptr;
      check(hyptk_run_create(config.get(), &run_raw));
      RunHandle run(run_raw);
      train(run.get());
      return 0;
    }

    if (*exporter) {
      export_flags.apply(config.get());
      hyptk_run* run_raw = nullptr;
      check(hyptk_run_resume(checkpoint_in.c_str(), nullptr, &run_raw));
      RunHandle run(run_raw);
      const std::string path = get(config.get(), "export-disk");
      if (path.empty()) {
        std::fprintf(stderr, "hypcli: error: export-disk needs --export-disk <path>\n");
        return HYPTK_CONFIG_ERROR;
      }
      check(hyptk_run_export_disk(run.get(), path.c_str(), get(config.get(), "export-format").c_str()));
      std::printf("wrote %s\n", path.c_str());
      return 0;
    }

    resume_flags.apply(config.get());
    hyptk_run* run_raw = nullptr;
    check(hyptk_run_resume(checkpoint_in.c_str(), config.get(), &run_raw));
    RunHandle run(run_raw);
    std::printf("resuming at epoch %lld\n", static_cast<long long>(hyptk_run_epoch(run.get())));
    train(run.get());
    return 0;
  } catch (const Failure& f) {
    return f.code;
  }
}
