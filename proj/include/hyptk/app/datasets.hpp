#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hyptk/tensor.hpp"

namespace hyp::app {

// Single-channel images with pixel values in [0, 1].
struct ImageDataset {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t classes = 0;
  std::vector<double> pixels;  // size() x height x width
  std::vector<std::int64_t> labels;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  // Stacks the selected images into an N x 1 x H x W tensor.
  Tensor images(std::span<const std::int64_t> indices) const;
  std::vector<std::int64_t> labels_of(std::span<const std::int64_t> indices) const;
};

// Horizontal (label 0) versus vertical (label 1) bars on size x size grids,
// label-balanced and fully determined by the seed.
ImageDataset synthetic_bars(std::int64_t count, std::int64_t size, std::uint64_t seed);

struct IdxOptions {
  std::int64_t crop = 0;       // center crop to crop x crop; 0 keeps the full image
  std::int64_t downscale = 1;  // average non-overlapping blocks of this size
};

// Reads an IDX image file (magic 2051) and its label file (magic 2049).
// Throws DataError on bad magic, truncated payloads, count mismatches and
// labels outside [0, classes).
ImageDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                      std::int64_t classes, IdxOptions options = {});

}  // namespace hyp::app
