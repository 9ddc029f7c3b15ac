#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "bgf/mesh.hpp"
#include "bgf/rng.hpp"

namespace bgf {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Weakly-informative Gaussian precision on flat effects (the intercept).
inline constexpr double kFlatPrecision = 1e-6;

class NotSpdError : public std::runtime_error {
 public:
  NotSpdError(const std::string& what, int pivot) : std::runtime_error(what), pivot_(pivot) {}
  int pivot() const { return pivot_; }

 private:
  int pivot_;
};

/// Sparse LDL^T factorization with AMD fill-reducing ordering. Immutable
/// after construction; concurrent solves from parallel workers are safe.
class Factorization {
 public:
  explicit Factorization(const SparseMatrix& q);

  int size() const { return n_; }
  double log_determinant() const { return logdet_; }

  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;

  /// One draw from N(0, Q^-1); identical output for identical seeds.
  Vector sample(std::uint64_t seed) const;
  /// `count` independent draws as columns; column c uses substream (seed, c),
  /// so the result does not depend on the number of threads.
  Matrix sample_many(std::uint64_t seed, int count) const;

  /// diag(Q^-1), one triangular solve per node, OpenMP over nodes.
  Vector marginal_variances() const;
  /// Serial reference: full solves against unit vectors.
  Vector marginal_variances_reference() const;

  /// P^T (L D L^T) P; reproduces the input matrix up to rounding.
  SparseMatrix reconstruct() const;

 private:
  using Solver = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;
  void sample_into(std::uint64_t seed, std::uint64_t stream, double* out) const;

  Solver solver_;
  double logdet_ = 0.0;
  int n_ = 0;
};

/// Re-usable numeric refactorization: the symbolic analysis is done once and
/// kept across calls, which requires every matrix passed to `refactor` to
/// share one sparsity pattern.
class RefactorSolver {
 public:
  void refactor(const SparseMatrix& q);
  double log_determinant() const { return logdet_; }
  Vector solve(const Vector& b) const { return solver_.solve(b); }

 private:
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> solver_;
  double logdet_ = 0.0;
  bool analyzed_ = false;
};

struct Posterior {
  Vector mean;          // field nodes first, then flat effects
  SparseMatrix precision;
  std::shared_ptr<const Factorization> factorization;
  int field_dim = 0;
  int flat_count = 0;
};

/// Gaussian conditioning of a latent field plus `extra_flat_effects` constant
/// columns (the intercept) on observations y with iid noise variance
/// `noise_variance`. Posterior precision is
///   blockdiag(prior, kFlatPrecision*I) + P'P / noise_variance
/// with P the projector extended by a ones-column per flat effect.
Posterior condition(const SparseMatrix& prior, const Projector& proj, double noise_variance,
                    const Vector& y, int extra_flat_effects);

}  // namespace bgf
