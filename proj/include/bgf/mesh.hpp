#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Sparse>

namespace bgf {

using Point = std::array<double, 2>;

struct Rect {
  double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
};

/// Piecewise-linear triangle mesh with per-triangle subdomain labels.
/// Label 1 is the normal terrain (water), labels >= 2 are barriers (land).
struct TriangleMesh {
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<int> subdomain;                 // one label per triangle, 1-based

  int node_count() const { return static_cast<int>(vertices.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }
  int subdomain_count() const;
  double triangle_area(int t) const;
  Point centroid(int t) const;
  double total_area() const;
  Rect bounding_box() const;
  std::string id() const;  // content fingerprint, used for provenance
  void validate() const;   // throws std::runtime_error on a broken invariant
};

struct Polygon {
  std::vector<Point> points;  // closed implicitly (last point connects to first)
  bool contains(double x, double y) const;  // even-odd rule
  double signed_area() const;
};

struct BarrierGeometry {
  std::vector<Polygon> polygons;
  bool contains(double x, double y) const;
  void normalize_orientation();  // reorder all polygons counter-clockwise
};

/// Barycentric evaluation weights of query points against mesh nodes.
/// Each valid row has up to three weights in [0,1] summing to 1; rows for
/// points outside the mesh are flagged invalid and left all-zero.
struct Projector {
  std::vector<std::array<int, 3>> nodes;
  std::vector<std::array<double, 3>> weights;
  std::vector<std::uint8_t> valid;

  int rows() const { return static_cast<int>(valid.size()); }
  std::vector<int> invalid_rows() const;
  Eigen::SparseMatrix<double> matrix(int node_count) const;
};

/// Regular crisscross triangulation of `bbox` enlarged by `extension` on all
/// sides. Cells are bbox.width/nx by bbox.height/ny; each cell is split into
/// two triangles along the diagonal from its lower-left to its upper-right
/// corner. The extension is rounded up to whole cells. All triangles are
/// labeled subdomain 1.
TriangleMesh build_regular_mesh(const Rect& bbox, int nx, int ny, double extension);

/// Triangles whose centroid lies inside any barrier polygon get subdomain 2,
/// all others subdomain 1. Vertices are unchanged.
TriangleMesh mark_barrier(const TriangleMesh& mesh, const BarrierGeometry& barrier);
TriangleMesh mark_by_predicate(const TriangleMesh& mesh,
                               const std::function<bool(double, double)>& inside_barrier);

struct RestrictedMesh {
  TriangleMesh mesh;             // labels renumbered to 1
  std::vector<int> parent_node;  // node i of the restriction -> node of the parent mesh
};
RestrictedMesh restrict_to_subdomain(const TriangleMesh& mesh, int label);

/// Point-in-triangle ties on shared edges are broken by lowest triangle index.
Projector project_points(const TriangleMesh& mesh, const std::vector<Point>& points);

void save_mesh_json(const TriangleMesh& mesh, const std::string& path);
TriangleMesh load_mesh_json(const std::string& path);
BarrierGeometry load_polygons_json(const std::string& path);

}  // namespace bgf
