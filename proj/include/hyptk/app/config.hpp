#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hyp::app {

using Setting = std::pair<std::string, std::string>;

// Every key doubles as a command-line flag name (without the leading dashes)
// and as a config-file key.
struct RunConfig {
  std::string command = "embed-tree";
  std::string manifold = "poincare";
  double curvature = 1.0;
  bool learnable_curvature = false;
  std::int64_t dim = 2;
  std::int64_t epochs = 100;
  double lr = 0.03;
  std::string optimizer = "radam";
  double momentum = 0.9;
  double lr_decay = 1.0;
  std::int64_t lr_decay_every = 1;
  std::int64_t batch_size = 32;
  std::uint64_t seed = 7;
  std::string checkpoint_out;
  std::int64_t checkpoint_every = 0;
  std::string metrics_out;

  std::int64_t depth = 3;
  std::int64_t branching = 2;
  double tau = 0.3;
  std::string export_disk;
  std::string export_format = "csv";

  bool synthetic = false;
  std::string train_images;
  std::string train_labels;
  std::int64_t classes = 2;
  std::int64_t samples = 512;
  std::int64_t image_size = 16;
  std::int64_t crop = 0;
  std::int64_t downscale = 1;
};

const std::vector<std::string>& config_keys();

// Throws ConfigError for unknown keys and unparsable values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

// "key = value" lines; blank lines and lines starting with '#' are ignored.
std::vector<Setting> parse_config_text(std::string_view text);
std::vector<Setting> read_config_file(const std::filesystem::path& path);

// Range checks for the selected command. Throws ConfigError.
void validate(const RunConfig& config);

// Every key with its current value, in config_keys() order.
std::vector<Setting> to_settings(const RunConfig& config);

}  // namespace hyp::app
