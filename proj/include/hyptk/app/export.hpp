#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>

#include "hyptk/tensor.hpp"

namespace hyp::app {

// points: N x 2 ball coordinates. Rows are "node_id,label,x,y".
void write_disk_csv(std::ostream& out, const Tensor& points, std::span<const std::string> labels);
// Boundary circle plus one marker per point, scaled so the ball of radius
// 1/sqrt(c) fills the unit circle.
void write_disk_svg(std::ostream& out, const Tensor& points, std::span<const std::string> labels,
                    double c);

// format is "csv" or "svg". Throws DimensionError unless points are N x 2.
void export_disk(const std::filesystem::path& path, const Tensor& points,
                 std::span<const std::string> labels, const std::string& format, double c);

// Shortest decimal that reads back to the same double, always with a decimal
// point or exponent ("0.0", "0.25", "1e-07").
std::string format_number(double value);

}  // namespace hyp::app
