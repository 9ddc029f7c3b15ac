#include "bgf/fem.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace bgf {

FemMatrices assemble(const TriangleMesh& mesh, int min_subdomains) {
  const int n = mesh.node_count();
  const int k = std::max(mesh.subdomain_count(), std::max(min_subdomains, 1));

  std::vector<Eigen::Triplet<double>> mass_trips;
  std::vector<std::vector<Eigen::Triplet<double>>> stiff_trips(k);
  mass_trips.reserve(9 * mesh.triangles.size());

  FemMatrices fem;
  fem.node_count = n;
  fem.subdomain_count = k;
  fem.lumped_mass.assign(k, Eigen::VectorXd::Zero(n));

  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point& p0 = mesh.vertices[tri[0]];
    const Point& p1 = mesh.vertices[tri[1]];
    const Point& p2 = mesh.vertices[tri[2]];
    const double area =
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
    if (!(area > 0.0) || !std::isfinite(area))
      throw std::runtime_error("assemble: degenerate triangle " + std::to_string(t));
    const int q = mesh.subdomain[t] - 1;

    // exact linear-element integrals: mass block area/12 * [[2,1,1],[1,2,1],[1,1,2]],
    // stiffness block (b_i b_j + c_i c_j)/(4 area) with b_i = y_j - y_k, c_i = x_k - x_j
    const double b[3] = {p1[1] - p2[1], p2[1] - p0[1], p0[1] - p1[1]};
    const double c[3] = {p2[0] - p1[0], p0[0] - p2[0], p1[0] - p0[0]};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        mass_trips.emplace_back(tri[i], tri[j], area / 12.0 * (i == j ? 2.0 : 1.0));
        stiff_trips[q].emplace_back(tri[i], tri[j], (b[i] * b[j] + c[i] * c[j]) / (4.0 * area));
      }
      fem.lumped_mass[q][tri[i]] += area / 3.0;
    }
  }

  fem.mass.resize(n, n);
  fem.mass.setFromTriplets(mass_trips.begin(), mass_trips.end());
  fem.stiffness.reserve(k);
  for (int q = 0; q < k; ++q) {
    Eigen::SparseMatrix<double> d(n, n);
    d.setFromTriplets(stiff_trips[q].begin(), stiff_trips[q].end());
    fem.stiffness.push_back(std::move(d));
  }
  return fem;
}

Eigen::SparseMatrix<double> stiffness_total(const FemMatrices& fem) {
  Eigen::SparseMatrix<double> total = fem.stiffness.at(0);
  for (int q = 1; q < fem.subdomain_count; ++q) total += fem.stiffness[q];
  return total;
}

void dump_coordinate_format(const Eigen::SparseMatrix<double>& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.precision(17);
  for (int col = 0; col < m.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, col); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace bgf
