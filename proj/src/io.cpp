#include "bgf/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace bgf {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

CsvBuilder::CsvBuilder(const std::vector<std::string>& header) { append_line(header); }

void CsvBuilder::add_row(const std::vector<std::string>& cells) { append_line(cells); }

void CsvBuilder::append_line(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) buf_ += ',';
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\r\n") != std::string::npos) {
      buf_ += '"';
      for (char ch : c) {
        if (ch == '"') buf_ += '"';
        buf_ += ch;
      }
      buf_ += '"';
    } else {
      buf_ += c;
    }
  }
  buf_ += "\r\n";
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& pixels) {
  if (static_cast<std::size_t>(width) * height != pixels.size())
    throw std::invalid_argument("write_pgm: pixel buffer size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

std::vector<std::uint8_t> rasterize_field(const TriangleMesh& mesh, const Eigen::VectorXd& values,
                                          int width, int height, double lo, double hi) {
  if (values.size() != mesh.node_count())
    throw std::invalid_argument("rasterize_field: value count != node count");
  const Rect box = mesh.bounding_box();
  std::vector<Point> pts;
  pts.reserve(static_cast<std::size_t>(width) * height);
  for (int row = 0; row < height; ++row) {
    const double y = box.ymax - (row + 0.5) * box.height() / height;
    for (int col = 0; col < width; ++col)
      pts.push_back({box.xmin + (col + 0.5) * box.width() / width, y});
  }
  const Projector proj = project_points(mesh, pts);
  std::vector<std::uint8_t> img(pts.size(), 0);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int i = 0; i < proj.rows(); ++i) {
    if (!proj.valid[i]) continue;
    double v = 0.0;
    for (int k = 0; k < 3; ++k) v += proj.weights[i][k] * values[proj.nodes[i][k]];
    if (v < lo) continue;  // below-cutoff pixels stay black
    const double f = std::clamp((v - lo) / span, 0.0, 1.0);
    img[i] = static_cast<std::uint8_t>(1 + std::lround(f * 254.0));
  }
  return img;
}

std::string node_field_csv(const TriangleMesh& mesh, const Eigen::VectorXd& values) {
  if (values.size() != mesh.node_count())
    throw std::invalid_argument("node_field_csv: value count != node count");
  CsvBuilder csv({"node", "x", "y", "value"});
  for (int i = 0; i < mesh.node_count(); ++i)
    csv.add_row({std::to_string(i), format_double(mesh.vertices[i][0]),
                 format_double(mesh.vertices[i][1]), format_double(values[i])});
  return csv.str();
}

}  // namespace bgf
