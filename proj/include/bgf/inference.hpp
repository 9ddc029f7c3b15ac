#pragma once

#include <cmath>
#include <memory>
#include <variant>
#include <vector>

#include "bgf/precision.hpp"

namespace bgf {

struct ObservationSet {
  std::vector<Point> locations;
  Vector values;
  void validate() const;
};

/// Exponential rates of the penalized-complexity priors on
/// (sigma_eps, sigma_u, 1/range).
struct PcPriors {
  double rate_noise_sd = 1.5;
  double rate_field_sd = 1.5;
  double rate_inv_range = std::log(2.0);  // prior median range = rate / ln 2

  static PcPriors horseshoe_defaults() { return PcPriors{}; }
  void validate() const;
};

/// log pi(sigma_eps) + log pi(sigma_u) + log pi(r), the last with the 1/r^2
/// Jacobian of the 1/r parameterization.
double pc_log_prior(const PcPriors& priors, double range, double sigma_u, double sigma_eps);

struct Hyper {
  double range = 1.0;
  double sigma_u = 1.0;
  double sigma_eps = 0.1;
};

/// Log-spaced hyperparameter grid for MAP selection; the range bracket is
/// multiplied by `length_scale`. A single refinement pass lays
/// `refine_points` per axis across one coarse step either side of the
/// coarse maximizer. The noise axis can use its own counts (sigma_eps is
/// far better identified than range or sigma_u); 0 means same as the
/// main counts.
struct GridSpec {
  int coarse_points = 15;
  int refine_points = 5;
  double length_scale = 1.0;
  double range_lo = 0.1, range_hi = 10.0;
  double sigma_u_lo = 0.01, sigma_u_hi = 10.0;
  double sigma_eps_lo = 0.01, sigma_eps_hi = 10.0;
  int coarse_points_noise = 0;
  int refine_points_noise = 0;
};

struct MapOptions {
  PcPriors priors;
  GridSpec grid;
};

using HyperMode = std::variant<Hyper, MapOptions>;

struct FitResult {
  ModelKind kind = ModelKind::Stationary;
  Hyper hyper;
  double log_evidence = 0.0;
  Vector mean;  // field nodes
  Vector sd;
  double intercept_mean = 0.0;
  double intercept_sd = 0.0;
  std::shared_ptr<const Posterior> posterior;
};

/// Exact Gaussian evidence ln p(y | r, sigma_u, sigma_eps) of the model
/// y_i = beta0 + u(s_i) + eps_i, intercept included with precision
/// kFlatPrecision. Zero observations give 0.
double log_marginal_likelihood(const TriangleMesh& mesh, const FemMatrices& fem,
                               const BarrierSpec& spec, const ObservationSet& obs,
                               double sigma_eps);

/// Evidence plus PC prior at fixed hyperparameters; bit-identical to the
/// objective scanned by map-mode fit().
double map_objective(const TriangleMesh& mesh, const FemMatrices& fem, ModelKind kind,
                     double barrier_fraction, const ObservationSet& obs, const PcPriors& priors,
                     const Hyper& hyper);

/// Fit one of the three models. For Neumann the caller passes the restricted
/// (water-only) mesh and its FemMatrices; observations must project into it.
/// `with_sd = false` skips the per-node posterior sd (FitResult.sd stays
/// empty); predictions are unaffected.
FitResult fit(const TriangleMesh& mesh, const FemMatrices& fem, ModelKind kind,
              double barrier_fraction, const ObservationSet& obs, const HyperMode& mode,
              bool with_sd = true);

struct Prediction {
  Vector mean;
  Vector sd;  // empty when with_sd is false
  std::vector<std::uint8_t> valid;
};

Prediction predict(const FitResult& fit, const TriangleMesh& mesh,
                   const std::vector<Point>& locations, bool with_sd = true);
Prediction predict(const FitResult& fit, const Projector& proj, bool with_sd = true);

}  // namespace bgf
