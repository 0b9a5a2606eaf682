#include "hyptk/app/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <random>

#include "hyptk/errors.hpp"

namespace hyp::app {

Tensor ImageDataset::images(std::span<const std::int64_t> indices) const {
  const std::int64_t plane = height * width;
  std::vector<double> out;
  out.reserve(indices.size() * static_cast<std::size_t>(plane));
  for (std::int64_t i : indices) {
    if (i < 0 || i >= size()) throw ContractError("image index out of range");
    const auto first = pixels.begin() + i * plane;
    out.insert(out.end(), first, first + plane);
  }
  return Tensor({static_cast<std::int64_t>(indices.size()), 1, height, width}, std::move(out));
}

std::vector<std::int64_t> ImageDataset::labels_of(std::span<const std::int64_t> indices) const {
  std::vector<std::int64_t> out;
  out.reserve(indices.size());
  for (std::int64_t i : indices) out.push_back(labels.at(static_cast<std::size_t>(i)));
  return out;
}

ImageDataset synthetic_bars(std::int64_t count, std::int64_t size, std::uint64_t seed) {
  if (count < 2) throw ConfigError("synthetic data needs at least 2 samples");
  if (size < 4) throw ConfigError("synthetic images must be at least 4 x 4");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0.0, 0.1), intensity(0.7, 1.0);
  std::uniform_int_distribution<std::int64_t> position(0, size - 1), bars(1, 2),
      length(size / 2, size);

  ImageDataset d;
  d.height = d.width = size;
  d.classes = 2;
  d.pixels.resize(static_cast<std::size_t>(count * size * size));
  d.labels.resize(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t label = i % 2;
    d.labels[i] = label;
    double* img = d.pixels.data() + i * size * size;
    for (std::int64_t p = 0; p < size * size; ++p) img[p] = noise(rng);
    const std::int64_t n = bars(rng);
    for (std::int64_t b = 0; b < n; ++b) {
      const std::int64_t line = position(rng);
      const std::int64_t len = length(rng);
      const std::int64_t start = std::uniform_int_distribution<std::int64_t>(0, size - len)(rng);
      const double v = intensity(rng);
      for (std::int64_t k = start; k < start + len; ++k) {
        // label 0: horizontal bar along row `line`; label 1: vertical along column `line`
        img[label == 0 ? line * size + k : k * size + line] = v;
      }
    }
  }
  return d;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t big_endian(const std::vector<unsigned char>& bytes, std::size_t offset,
                         const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw DataError("truncated IDX header in " + path.string());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

ImageDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                      std::int64_t classes, IdxOptions options) {
  if (classes < 2) throw ConfigError("classes must be at least 2");
  if (options.downscale < 1) throw ConfigError("downscale must be at least 1");
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  if (const auto magic = big_endian(img, 0, images); magic != 2051) {
    throw DataError("bad IDX image magic " + std::to_string(magic) + " in " + images.string());
  }
  if (const auto magic = big_endian(lab, 0, labels); magic != 2049) {
    throw DataError("bad IDX label magic " + std::to_string(magic) + " in " + labels.string());
  }
  const std::int64_t count = big_endian(img, 4, images);
  const std::int64_t rows = big_endian(img, 8, images);
  const std::int64_t cols = big_endian(img, 12, images);
  const std::int64_t label_count = big_endian(lab, 4, labels);
  if (count != label_count) {
    throw DataError("image count " + std::to_string(count) + " does not match label count " +
                    std::to_string(label_count));
  }
  if (img.size() < 16 + static_cast<std::size_t>(count * rows * cols)) {
    throw DataError("truncated IDX image payload in " + images.string());
  }
  if (lab.size() < 8 + static_cast<std::size_t>(count)) {
    throw DataError("truncated IDX label payload in " + labels.string());
  }

  const std::int64_t crop = options.crop > 0 ? options.crop : std::min(rows, cols);
  if (crop > rows || crop > cols) throw ConfigError("crop exceeds the image size");
  const std::int64_t f = options.downscale;
  if (crop % f != 0) throw ConfigError("downscale must divide the (cropped) image size");
  const std::int64_t top = (rows - crop) / 2, left = (cols - crop) / 2;

  ImageDataset d;
  d.height = d.width = crop / f;
  d.classes = classes;
  d.pixels.reserve(static_cast<std::size_t>(count * d.height * d.width));
  for (std::int64_t i = 0; i < count; ++i) {
    const unsigned char* src = img.data() + 16 + i * rows * cols;
    for (std::int64_t y = 0; y < d.height; ++y) {
      for (std::int64_t x = 0; x < d.width; ++x) {
        double acc = 0.0;
        for (std::int64_t dy = 0; dy < f; ++dy) {
          for (std::int64_t dx = 0; dx < f; ++dx) {
            acc += src[(top + y * f + dy) * cols + left + x * f + dx];
          }
        }
        d.pixels.push_back(acc / (255.0 * static_cast<double>(f * f)));
      }
    }
    const std::int64_t label = lab[8 + i];
    if (label >= classes) {
      throw DataError("label " + std::to_string(label) + " of sample " + std::to_string(i) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace hyp::app
