#pragma once

// Shared test helpers: independent oracles kept away from the library code
// they check.

#include <array>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "bgf/mesh.hpp"

namespace test_support {

// Exact integrals of linear-element products by the edge-midpoint rule
// (exact for polynomials of degree <= 2). Basis-function planes are found by
// a linear solve, independent of the assembly formulas.
struct ElementOracle {
  Eigen::Matrix3d mass;       // integrals of psi_i psi_j
  Eigen::Matrix3d stiffness;  // integrals of grad psi_i . grad psi_j
  Eigen::Vector3d lumped;     // integrals of psi_i

  explicit ElementOracle(const std::array<bgf::Point, 3>& v) {
    Eigen::Matrix3d vand;
    for (int i = 0; i < 3; ++i) vand.row(i) << 1.0, v[i][0], v[i][1];
    // column i of coef: (c0, cx, cy) with psi_i = c0 + cx x + cy y
    const Eigen::Matrix3d coef = vand.inverse();
    const double area =
        0.5 * std::abs((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) -
                       (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]));
    const std::array<bgf::Point, 3> mid = {
        bgf::Point{(v[0][0] + v[1][0]) / 2, (v[0][1] + v[1][1]) / 2},
        bgf::Point{(v[1][0] + v[2][0]) / 2, (v[1][1] + v[2][1]) / 2},
        bgf::Point{(v[2][0] + v[0][0]) / 2, (v[2][1] + v[0][1]) / 2}};
    auto psi = [&](int i, const bgf::Point& p) {
      return coef(0, i) + coef(1, i) * p[0] + coef(2, i) * p[1];
    };
    for (int i = 0; i < 3; ++i) {
      lumped[i] = 0.0;
      for (const auto& m : mid) lumped[i] += area / 3.0 * psi(i, m);
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (const auto& m : mid) acc += area / 3.0 * psi(i, m) * psi(j, m);
        mass(i, j) = acc;
        stiffness(i, j) =
            area * (coef(1, i) * coef(1, j) + coef(2, i) * coef(2, j));
      }
    }
  }
};

inline std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace test_support
