#include "bgf/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace bgf {

namespace {

double signed_area(const Point& a, const Point& b, const Point& c) {
  return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

int TriangleMesh::subdomain_count() const {
  int k = 1;
  for (int q : subdomain) k = std::max(k, q);
  return k;
}

double TriangleMesh::triangle_area(int t) const {
  const auto& tri = triangles[t];
  return signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
}

Point TriangleMesh::centroid(int t) const {
  const auto& tri = triangles[t];
  return {(vertices[tri[0]][0] + vertices[tri[1]][0] + vertices[tri[2]][0]) / 3.0,
          (vertices[tri[0]][1] + vertices[tri[1]][1] + vertices[tri[2]][1]) / 3.0};
}

double TriangleMesh::total_area() const {
  double a = 0.0;
  for (int t = 0; t < triangle_count(); ++t) a += triangle_area(t);
  return a;
}

Rect TriangleMesh::bounding_box() const {
  if (vertices.empty()) return {};
  Rect r{vertices[0][0], vertices[0][1], vertices[0][0], vertices[0][1]};
  for (const auto& v : vertices) {
    r.xmin = std::min(r.xmin, v[0]);
    r.ymin = std::min(r.ymin, v[1]);
    r.xmax = std::max(r.xmax, v[0]);
    r.ymax = std::max(r.ymax, v[1]);
  }
  return r;
}

std::string TriangleMesh::id() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(vertices.data(), vertices.size() * sizeof(Point), h);
  h = fnv1a(triangles.data(), triangles.size() * sizeof(std::array<int, 3>), h);
  h = fnv1a(subdomain.data(), subdomain.size() * sizeof(int), h);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "n%d-t%d-%016llx", node_count(), triangle_count(),
                static_cast<unsigned long long>(h));
  return buf;
}

void TriangleMesh::validate() const {
  if (subdomain.size() != triangles.size())
    throw std::runtime_error("mesh: subdomain labels and triangles differ in length");
  for (const auto& v : vertices)
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]))
      throw std::runtime_error("mesh: non-finite vertex coordinate");
  std::map<std::pair<int, int>, int> edge_use;
  for (int t = 0; t < triangle_count(); ++t) {
    const auto& tri = triangles[t];
    for (int i = 0; i < 3; ++i) {
      if (tri[i] < 0 || tri[i] >= node_count())
        throw std::runtime_error("mesh: triangle index out of range");
      int a = tri[i], b = tri[(i + 1) % 3];
      ++edge_use[{std::min(a, b), std::max(a, b)}];
    }
    if (triangle_area(t) <= 0.0)
      throw std::runtime_error("mesh: triangle with non-positive area");
    if (subdomain[t] < 1) throw std::runtime_error("mesh: subdomain label must be >= 1");
  }
  for (const auto& [edge, uses] : edge_use)
    if (uses > 2) throw std::runtime_error("mesh: edge shared by more than two triangles");
}

bool Polygon::contains(double x, double y) const {
  // even-odd ray cast towards +x
  bool in = false;
  const int n = static_cast<int>(points.size());
  for (int i = 0, j = n - 1; i < n; j = i++) {
    const double xi = points[i][0], yi = points[i][1];
    const double xj = points[j][0], yj = points[j][1];
    if ((yi > y) != (yj > y)) {
      const double xc = xj + (y - yj) / (yi - yj) * (xi - xj);
      if (x < xc) in = !in;
    }
  }
  return in;
}

double Polygon::signed_area() const {
  double a = 0.0;
  const int n = static_cast<int>(points.size());
  for (int i = 0, j = n - 1; i < n; j = i++)
    a += (points[j][0] * points[i][1] - points[i][0] * points[j][1]);
  return 0.5 * a;
}

bool BarrierGeometry::contains(double x, double y) const {
  for (const auto& p : polygons)
    if (p.contains(x, y)) return true;
  return false;
}

void BarrierGeometry::normalize_orientation() {
  for (auto& p : polygons)
    if (p.signed_area() < 0.0) std::reverse(p.points.begin(), p.points.end());
}

std::vector<int> Projector::invalid_rows() const {
  std::vector<int> out;
  for (int i = 0; i < rows(); ++i)
    if (!valid[i]) out.push_back(i);
  return out;
}

Eigen::SparseMatrix<double> Projector::matrix(int node_count) const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(3 * rows());
  for (int i = 0; i < rows(); ++i) {
    if (!valid[i]) continue;
    for (int k = 0; k < 3; ++k)
      if (weights[i][k] != 0.0) trips.emplace_back(i, nodes[i][k], weights[i][k]);
  }
  Eigen::SparseMatrix<double> p(rows(), node_count);
  p.setFromTriplets(trips.begin(), trips.end());
  return p;
}

TriangleMesh build_regular_mesh(const Rect& bbox, int nx, int ny, double extension) {
  if (!(bbox.width() > 0.0) || !(bbox.height() > 0.0))
    throw std::invalid_argument("build_regular_mesh: degenerate bounding box");
  if (nx < 2 || ny < 2) throw std::invalid_argument("build_regular_mesh: nx and ny must be >= 2");
  if (extension < 0.0) throw std::invalid_argument("build_regular_mesh: negative extension");

  const double hx = bbox.width() / nx;
  const double hy = bbox.height() / ny;
  const int ex = extension > 0.0 ? static_cast<int>(std::ceil(extension / hx - 1e-9)) : 0;
  const int ey = extension > 0.0 ? static_cast<int>(std::ceil(extension / hy - 1e-9)) : 0;
  const int cx = nx + 2 * ex;
  const int cy = ny + 2 * ey;
  const double x0 = bbox.xmin - ex * hx;
  const double y0 = bbox.ymin - ey * hy;

  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(cx + 1) * (cy + 1));
  for (int iy = 0; iy <= cy; ++iy)
    for (int ix = 0; ix <= cx; ++ix) mesh.vertices.push_back({x0 + ix * hx, y0 + iy * hy});

  auto node = [cx](int ix, int iy) { return iy * (cx + 1) + ix; };
  mesh.triangles.reserve(static_cast<std::size_t>(2) * cx * cy);
  for (int iy = 0; iy < cy; ++iy) {
    for (int ix = 0; ix < cx; ++ix) {
      const int v00 = node(ix, iy), v10 = node(ix + 1, iy);
      const int v01 = node(ix, iy + 1), v11 = node(ix + 1, iy + 1);
      mesh.triangles.push_back({v00, v10, v11});
      mesh.triangles.push_back({v00, v11, v01});
    }
  }
  mesh.subdomain.assign(mesh.triangles.size(), 1);
  return mesh;
}

TriangleMesh mark_by_predicate(const TriangleMesh& mesh,
                               const std::function<bool(double, double)>& inside_barrier) {
  TriangleMesh out = mesh;
  for (int t = 0; t < out.triangle_count(); ++t) {
    const Point c = out.centroid(t);
    out.subdomain[t] = inside_barrier(c[0], c[1]) ? 2 : 1;
  }
  return out;
}

TriangleMesh mark_barrier(const TriangleMesh& mesh, const BarrierGeometry& barrier) {
  return mark_by_predicate(mesh, [&](double x, double y) { return barrier.contains(x, y); });
}

RestrictedMesh restrict_to_subdomain(const TriangleMesh& mesh, int label) {
  std::vector<int> kept;
  for (int t = 0; t < mesh.triangle_count(); ++t)
    if (mesh.subdomain[t] == label) kept.push_back(t);
  if (kept.empty())
    throw std::invalid_argument("restrict_to_subdomain: subdomain " + std::to_string(label) +
                                " is empty");

  RestrictedMesh out;
  std::vector<int> new_index(mesh.node_count(), -1);
  // compact re-indexing in ascending parent order (identity when nothing is
  // dropped)
  for (int t : kept)
    for (int v : mesh.triangles[t]) new_index[v] = 0;
  for (int v = 0; v < mesh.node_count(); ++v) {
    if (new_index[v] < 0) continue;
    new_index[v] = static_cast<int>(out.parent_node.size());
    out.parent_node.push_back(v);
  }
  out.mesh.vertices.reserve(out.parent_node.size());
  for (int v : out.parent_node) out.mesh.vertices.push_back(mesh.vertices[v]);
  out.mesh.triangles.reserve(kept.size());
  for (int t : kept) {
    const auto& tri = mesh.triangles[t];
    out.mesh.triangles.push_back({new_index[tri[0]], new_index[tri[1]], new_index[tri[2]]});
  }
  out.mesh.subdomain.assign(kept.size(), 1);
  return out;
}

namespace {

// Uniform bucket index over the mesh bounding box for point location.
struct TriangleIndex {
  Rect box;
  int nbx = 1, nby = 1;
  std::vector<std::vector<int>> buckets;

  explicit TriangleIndex(const TriangleMesh& mesh) {
    box = mesh.bounding_box();
    const int target = std::max(1, static_cast<int>(std::sqrt(mesh.triangle_count() / 2.0)));
    nbx = std::clamp(target, 1, 512);
    nby = std::clamp(target, 1, 512);
    buckets.resize(static_cast<std::size_t>(nbx) * nby);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangles[t];
      double txmin = box.xmax, txmax = box.xmin, tymin = box.ymax, tymax = box.ymin;
      for (int v : tri) {
        txmin = std::min(txmin, mesh.vertices[v][0]);
        txmax = std::max(txmax, mesh.vertices[v][0]);
        tymin = std::min(tymin, mesh.vertices[v][1]);
        tymax = std::max(tymax, mesh.vertices[v][1]);
      }
      const auto [i0, j0] = cell(txmin, tymin);
      const auto [i1, j1] = cell(txmax, tymax);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) buckets[static_cast<std::size_t>(j) * nbx + i].push_back(t);
    }
  }

  std::pair<int, int> cell(double x, double y) const {
    const double fx = box.width() > 0.0 ? (x - box.xmin) / box.width() : 0.0;
    const double fy = box.height() > 0.0 ? (y - box.ymin) / box.height() : 0.0;
    const int i = std::clamp(static_cast<int>(fx * nbx), 0, nbx - 1);
    const int j = std::clamp(static_cast<int>(fy * nby), 0, nby - 1);
    return {i, j};
  }

  const std::vector<int>& candidates(double x, double y) const {
    const auto [i, j] = cell(x, y);
    return buckets[static_cast<std::size_t>(j) * nbx + i];
  }
};

}  // namespace

Projector project_points(const TriangleMesh& mesh, const std::vector<Point>& points) {
  constexpr double kTol = 1e-12;
  const TriangleIndex index(mesh);
  const Rect box = index.box;

  Projector proj;
  proj.nodes.assign(points.size(), {-1, -1, -1});
  proj.weights.assign(points.size(), {0.0, 0.0, 0.0});
  proj.valid.assign(points.size(), 0);

  for (std::size_t p = 0; p < points.size(); ++p) {
    const double x = points[p][0], y = points[p][1];
    if (x < box.xmin - kTol || x > box.xmax + kTol || y < box.ymin - kTol || y > box.ymax + kTol)
      continue;
    // bucket lists hold ascending triangle indices, so the first hit is the
    // lowest-index containing triangle
    for (int t : index.candidates(x, y)) {
      const auto& tri = mesh.triangles[t];
      const Point& a = mesh.vertices[tri[0]];
      const Point& b = mesh.vertices[tri[1]];
      const Point& c = mesh.vertices[tri[2]];
      const double area2 = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
      double l0 = ((b[0] - x) * (c[1] - y) - (c[0] - x) * (b[1] - y)) / area2;
      double l1 = ((c[0] - x) * (a[1] - y) - (a[0] - x) * (c[1] - y)) / area2;
      double l2 = 1.0 - l0 - l1;
      if (l0 < -kTol || l1 < -kTol || l2 < -kTol) continue;
      l0 = std::max(l0, 0.0);
      l1 = std::max(l1, 0.0);
      l2 = std::max(l2, 0.0);
      const double s = l0 + l1 + l2;
      proj.nodes[p] = {tri[0], tri[1], tri[2]};
      proj.weights[p] = {l0 / s, l1 / s, l2 / s};
      proj.valid[p] = 1;
      break;
    }
  }
  return proj;
}

void save_mesh_json(const TriangleMesh& mesh, const std::string& path) {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (const auto& v : mesh.vertices) j["vertices"].push_back({v[0], v[1]});
  j["triangles"] = nlohmann::json::array();
  for (const auto& t : mesh.triangles) j["triangles"].push_back({t[0], t[1], t[2]});
  j["subdomain"] = mesh.subdomain;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump();
  out << '\n';
}

TriangleMesh load_mesh_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open mesh file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed mesh JSON in " + path + ": " + e.what());
  }
  if (!j.contains("vertices") || !j.contains("triangles"))
    throw std::runtime_error("mesh JSON missing \"vertices\" or \"triangles\": " + path);

  TriangleMesh mesh;
  for (const auto& v : j["vertices"]) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw std::runtime_error("mesh JSON: vertex is not a pair of numbers");
    const double x = v[0].get<double>(), y = v[1].get<double>();
    if (!std::isfinite(x) || !std::isfinite(y))
      throw std::runtime_error("mesh JSON: non-finite vertex coordinate");
    mesh.vertices.push_back({x, y});
  }
  for (const auto& t : j["triangles"]) {
    if (!t.is_array() || t.size() != 3)
      throw std::runtime_error("mesh JSON: triangle is not an index triple");
    std::array<int, 3> tri{t[0].get<int>(), t[1].get<int>(), t[2].get<int>()};
    for (int v : tri)
      if (v < 0 || v >= mesh.node_count())
        throw std::runtime_error("mesh JSON: triangle index out of range");
    mesh.triangles.push_back(tri);
  }
  if (j.contains("subdomain")) {
    mesh.subdomain = j["subdomain"].get<std::vector<int>>();
    if (mesh.subdomain.size() != mesh.triangles.size())
      throw std::runtime_error("mesh JSON: subdomain length does not match triangles");
  } else {
    mesh.subdomain.assign(mesh.triangles.size(), 1);
  }
  // normalize orientation, reject degenerate triangles
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const double a = mesh.triangle_area(t);
    if (a == 0.0) throw std::runtime_error("mesh JSON: degenerate (zero-area) triangle");
    if (a < 0.0) std::swap(mesh.triangles[t][1], mesh.triangles[t][2]);
  }
  mesh.validate();
  return mesh;
}

BarrierGeometry load_polygons_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open polygon file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed polygon JSON in " + path + ": " + e.what());
  }
  if (!j.contains("polygons")) throw std::runtime_error("polygon JSON missing \"polygons\"");
  BarrierGeometry geom;
  for (const auto& poly : j["polygons"]) {
    Polygon p;
    for (const auto& pt : poly) {
      const double x = pt[0].get<double>(), y = pt[1].get<double>();
      if (!std::isfinite(x) || !std::isfinite(y))
        throw std::runtime_error("polygon JSON: non-finite coordinate");
      p.points.push_back({x, y});
    }
    if (p.points.size() < 3) throw std::runtime_error("polygon JSON: polygon with < 3 points");
    geom.polygons.push_back(std::move(p));
  }
  geom.normalize_orientation();
  return geom;
}

}  // namespace bgf
