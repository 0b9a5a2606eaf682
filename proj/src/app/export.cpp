#include "hyptk/app/export.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "hyptk/errors.hpp"

namespace hyp::app {

std::string format_number(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  std::string s(buf, end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

namespace {

void check_points(const Tensor& points, std::span<const std::string> labels) {
  if (points.rank() != 2 || points.shape()[1] != 2) {
    throw DimensionError("disk export needs N x 2 points");
  }
  if (static_cast<std::int64_t>(labels.size()) != points.shape()[0]) {
    throw ShapeError("disk export: label count does not match point count");
  }
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

void write_disk_csv(std::ostream& out, const Tensor& points, std::span<const std::string> labels) {
  check_points(points, labels);
  out << "node_id,label,x,y\n";
  for (std::int64_t i = 0; i < points.shape()[0]; ++i) {
    out << i << ',' << labels[i] << ',' << format_number(points[2 * i]) << ','
        << format_number(points[2 * i + 1]) << '\n';
  }
}

void write_disk_svg(std::ostream& out, const Tensor& points, std::span<const std::string> labels,
                    double c) {
  check_points(points, labels);
  constexpr double kSize = 512.0, kMargin = 16.0;
  const double r = (kSize - 2 * kMargin) / 2, center = kSize / 2;
  const double unit = r * std::sqrt(c);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n";
  out << "  <circle cx=\"" << center << "\" cy=\"" << center << "\" r=\"" << r
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (std::int64_t i = 0; i < points.shape()[0]; ++i) {
    const double x = center + unit * points[2 * i];
    const double y = center - unit * points[2 * i + 1];
    out << "  <circle cx=\"" << format_number(x) << "\" cy=\"" << format_number(y)
        << "\" r=\"3\" fill=\"steelblue\"><title>" << escape_xml(labels[i])
        << "</title></circle>\n";
  }
  out << "</svg>\n";
}

void export_disk(const std::filesystem::path& path, const Tensor& points,
                 std::span<const std::string> labels, const std::string& format, double c) {
  if (format != "csv" && format != "svg") throw ConfigError("export format must be csv or svg");
  check_points(points, labels);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  if (format == "csv") {
    write_disk_csv(out, points, labels);
  } else {
    write_disk_svg(out, points, labels, c);
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace hyp::app
