#include "hyptk/app/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "hyptk/app/export.hpp"
#include "hyptk/app/tree.hpp"
#include "hyptk/errors.hpp"

namespace hyp::app {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* what) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) +
                    ": expected " + what);
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

std::int64_t to_int(std::string_view key, std::string_view v) {
  std::int64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) bad_value(key, v, "a nonnegative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string choice(std::string_view key, std::string_view v,
                   std::initializer_list<std::string_view> allowed) {
  for (auto a : allowed) {
    if (v == a) return std::string(v);
  }
  std::string list;
  for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
  throw ConfigError("invalid value '" + std::string(v) + "' for " + std::string(key) +
                    ": expected one of " + list);
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string str(bool b) { return b ? "true" : "false"; }
std::string str(std::int64_t v) { return std::to_string(v); }
std::string str(std::uint64_t v) { return std::to_string(v); }
std::string str(double v) { return format_number(v); }

#define HYP_NUMBER(name, member, parse)                                                    \
  Field {                                                                                  \
    name, [](RunConfig& c, std::string_view v) { c.member = parse(name, v); },             \
        [](const RunConfig& c) { return str(c.member); }                                   \
  }
#define HYP_TEXT(name, member)                                                             \
  Field {                                                                                  \
    name, [](RunConfig& c, std::string_view v) { c.member = std::string(v); },             \
        [](const RunConfig& c) { return c.member; }                                        \
  }
#define HYP_CHOICE(name, member, ...)                                                      \
  Field {                                                                                  \
    name, [](RunConfig& c, std::string_view v) { c.member = choice(name, v, {__VA_ARGS__}); }, \
        [](const RunConfig& c) { return c.member; }                                        \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      HYP_CHOICE("command", command, "embed-tree", "train-image"),
      HYP_CHOICE("manifold", manifold, "poincare", "euclidean"),
      HYP_NUMBER("curvature", curvature, to_double),
      HYP_NUMBER("learnable-curvature", learnable_curvature, to_bool),
      HYP_NUMBER("dim", dim, to_int),
      HYP_NUMBER("epochs", epochs, to_int),
      HYP_NUMBER("lr", lr, to_double),
      HYP_CHOICE("optimizer", optimizer, "rsgd", "radam"),
      HYP_NUMBER("momentum", momentum, to_double),
      HYP_NUMBER("lr-decay", lr_decay, to_double),
      HYP_NUMBER("lr-decay-every", lr_decay_every, to_int),
      HYP_NUMBER("batch-size", batch_size, to_int),
      HYP_NUMBER("seed", seed, to_uint),
      HYP_TEXT("checkpoint-out", checkpoint_out),
      HYP_NUMBER("checkpoint-every", checkpoint_every, to_int),
      HYP_TEXT("metrics-out", metrics_out),
      HYP_NUMBER("depth", depth, to_int),
      HYP_NUMBER("branching", branching, to_int),
      HYP_NUMBER("tau", tau, to_double),
      HYP_TEXT("export-disk", export_disk),
      HYP_CHOICE("export-format", export_format, "csv", "svg"),
      HYP_NUMBER("synthetic", synthetic, to_bool),
      HYP_TEXT("train-images", train_images),
      HYP_TEXT("train-labels", train_labels),
      HYP_NUMBER("classes", classes, to_int),
      HYP_NUMBER("samples", samples, to_int),
      HYP_NUMBER("image-size", image_size, to_int),
      HYP_NUMBER("crop", crop, to_int),
      HYP_NUMBER("downscale", downscale, to_int),
  };
  return table;
}

#undef HYP_NUMBER
#undef HYP_TEXT
#undef HYP_CHOICE

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::vector<Setting> parse_config_text(std::string_view text) {
  std::vector<Setting> out;
  std::istringstream in{std::string(text)};
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

std::vector<Setting> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

void validate(const RunConfig& c) {
  require(c.curvature > 0.0, "curvature must be positive");
  require(!(c.learnable_curvature && c.manifold != "poincare"),
          "learnable curvature needs the poincare manifold");
  require(c.epochs >= 1, "epochs must be at least 1");
  require(c.lr > 0.0, "lr must be positive");
  require(c.momentum >= 0.0 && c.momentum < 1.0, "momentum must lie in [0, 1)");
  require(c.lr_decay > 0.0 && c.lr_decay <= 1.0, "lr-decay must lie in (0, 1]");
  require(c.lr_decay_every >= 1, "lr-decay-every must be at least 1");
  require(c.checkpoint_every >= 0, "checkpoint-every must be nonnegative");
  if (c.command == "embed-tree") {
    require(c.dim >= 2, "dim must be at least 2");
    require(c.depth >= 1, "depth must be at least 1");
    require(c.branching >= 2, "branching must be at least 2");
    require(c.depth <= 20 && tree_size(c.depth, c.branching) <= 4096,
            "tree too large: at most 4096 nodes");
    require(c.tau > 0.0, "tau must be positive");
    require(c.export_disk.empty() || c.dim == 2, "disk export needs dim = 2");
    require(c.export_disk.empty() || c.manifold == "poincare",
            "disk export needs the poincare manifold");
  } else {
    require(c.batch_size >= 1, "batch-size must be at least 1");
    require(c.classes >= 2, "classes must be at least 2");
    require(c.synthetic != (!c.train_images.empty() || !c.train_labels.empty()),
            "train-image needs either --synthetic or --train-images/--train-labels");
    require(c.synthetic || (!c.train_images.empty() && !c.train_labels.empty()),
            "both --train-images and --train-labels are required");
    require(!c.synthetic || c.classes == 2, "the synthetic task has 2 classes");
    require(c.samples >= 2, "samples must be at least 2");
    require(c.image_size >= 4, "image-size must be at least 4");
    require(c.crop >= 0 && c.downscale >= 1, "crop must be >= 0 and downscale >= 1");
  }
}

std::vector<Setting> to_settings(const RunConfig& config) {
  std::vector<Setting> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

}  // namespace hyp::app
