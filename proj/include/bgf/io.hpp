#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bgf/mesh.hpp"

namespace bgf {

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// RFC-4180 CSV: CRLF row endings, fields quoted only when needed.
class CsvBuilder {
 public:
  explicit CsvBuilder(const std::vector<std::string>& header);
  void add_row(const std::vector<std::string>& cells);
  const std::string& str() const { return buf_; }

 private:
  void append_line(const std::vector<std::string>& cells);
  std::string buf_;
};

void write_text_file(const std::string& path, const std::string& contents);

/// Binary portable graymap (P5, maxval 255).
void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& pixels);

/// Sample a nodal field on a width x height raster over the mesh bounding
/// box, mapping [lo, hi] to [1, 255]; pixels outside the mesh or below lo
/// are 0. Row 0 is the top of the image (ymax).
std::vector<std::uint8_t> rasterize_field(const TriangleMesh& mesh, const Eigen::VectorXd& values,
                                          int width, int height, double lo, double hi);

/// "node,x,y,value" per-node CSV.
std::string node_field_csv(const TriangleMesh& mesh, const Eigen::VectorXd& values);

}  // namespace bgf
