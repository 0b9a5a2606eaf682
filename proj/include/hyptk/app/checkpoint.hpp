#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hyptk/app/config.hpp"
#include "hyptk/optim.hpp"

namespace hyp::app {

inline constexpr int kCheckpointVersion = 1;

struct ParamRecord {
  std::string name;
  std::string manifold;  // "poincare", "euclidean" or "none" for plain tensors
  std::int64_t man_dim = -1;
  Shape shape;
  std::vector<double> data;
};

struct MetricRow {
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;
  std::optional<double> accuracy;
};

struct Checkpoint {
  double curvature_raw = 0.0;
  bool curvature_learnable = false;
  std::vector<ParamRecord> params;

  std::vector<Setting> config;
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  std::string rng_state;
  double lr = 0.0;
  std::vector<optim::SlotState> slots;
  std::vector<MetricRow> history;
};

std::string to_json(const Checkpoint& checkpoint);
// Throws DataError on a missing or unsupported format_version, malformed
// records, inconsistent shapes and ball points outside the ball.
Checkpoint from_json(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<ParamRecord> capture(const std::vector<nn::ParamRef>& params);
// Copies recorded values into matching parameters; names, manifolds, man_dims
// and shapes must agree. Throws DataError otherwise.
void restore(const std::vector<ParamRecord>& records, const std::vector<nn::ParamRef>& params);

}  // namespace hyp::app
