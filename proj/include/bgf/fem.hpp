#pragma once

#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "bgf/mesh.hpp"

namespace bgf {

/// Linear-element matrices of a labeled mesh: the consistent mass matrix,
/// one stiffness block per subdomain, and per-subdomain lumped-mass
/// diagonals. All element integrals are exact closed forms; assembly
/// accumulates in triangle order.
struct FemMatrices {
  int node_count = 0;
  int subdomain_count = 0;
  Eigen::SparseMatrix<double> mass;                    // <psi_i, psi_j>
  std::vector<Eigen::SparseMatrix<double>> stiffness;  // <grad psi_i, grad psi_j> per subdomain
  std::vector<Eigen::VectorXd> lumped_mass;            // integral of psi_i over the subdomain
};

/// `min_subdomains` forces trailing empty subdomains (zero stiffness, zero
/// lumped mass); 0 means use the largest label present in the mesh.
FemMatrices assemble(const TriangleMesh& mesh, int min_subdomains = 0);

Eigen::SparseMatrix<double> stiffness_total(const FemMatrices& fem);

/// "row col value" per line, zero-based, for cross-checks with external tools.
void dump_coordinate_format(const Eigen::SparseMatrix<double>& m, const std::string& path);

}  // namespace bgf
