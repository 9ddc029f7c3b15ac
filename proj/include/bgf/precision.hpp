#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "bgf/fem.hpp"
#include "bgf/gmrf.hpp"

namespace bgf {

/// Modified Bessel function of the second kind, order 1.
double bessel_k1(double x);

/// Matern correlation with smoothness 1: (d*sqrt(8)/r) * K1(d*sqrt(8)/r),
/// with the d = 0 limit handled. Equals C(d)/sigma_u^2.
double matern_correlation(double d, double r);

enum class ModelKind { Stationary, Barrier, Neumann };
std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct BarrierSpec {
  double range = 1.0;             // r in the normal subdomain
  double barrier_fraction = 0.1;  // r_b = barrier_fraction * r
  double sigma_u = 1.0;
  // Optional explicit per-subdomain ranges; overrides range/barrier_fraction.
  std::vector<double> ranges;

  std::vector<double> subdomain_ranges(int subdomain_count) const;
  void validate() const;
};

struct Provenance {
  ModelKind kind = ModelKind::Stationary;
  double range = 0.0;
  double barrier_fraction = 1.0;
  double sigma_u = 1.0;
  bool rescaled = false;
  std::string mesh_id;
};

/// Sparse SPD precision matrix plus its (lazily built) factorization.
/// Immutable after construction; marginal variances are cached.
class PrecisionOperator {
 public:
  PrecisionOperator(SparseMatrix q, Provenance provenance);

  int node_count() const { return static_cast<int>(q_.rows()); }
  const SparseMatrix& matrix() const { return q_; }
  const Provenance& provenance() const { return provenance_; }

  const Factorization& factorization() const;
  Vector marginal_variances() const;

  /// corr(i, node) for every node i, from one solve plus marginal variances.
  Vector correlation_surface(int node) const;
  double correlation(int node_a, int node_b) const;
  Vector marginal_sd() const;
  PrecisionOperator rescaled_to_unit_variance() const;

 private:
  SparseMatrix q_;
  Provenance provenance_;
  std::shared_ptr<std::mutex> lock_;
  mutable std::shared_ptr<const Factorization> fact_;
  mutable std::shared_ptr<const Vector> marg_var_;
};

/// A = J + (1/8) sum_q r_q^2 D_q  (the discretized SPDE operator).
SparseMatrix assemble_A(const FemMatrices& fem, const BarrierSpec& spec);

/// Diagonal of C~ = (pi/2) sum_q r_q^2 C~_q.
Vector combined_lumped_mass(const FemMatrices& fem, const BarrierSpec& spec);

/// Q = (1/sigma_u^2) A C~^-1 A.
PrecisionOperator assemble_Q(const FemMatrices& fem, const BarrierSpec& spec,
                             ModelKind kind = ModelKind::Barrier,
                             const std::string& mesh_id = "");

}  // namespace bgf
