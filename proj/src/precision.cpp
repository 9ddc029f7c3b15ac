#include "bgf/precision.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace bgf {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEulerGamma = 0.57721566490153286061;

// Power series: K1(x) = ln(x/2) I1(x) + 1/x - (x/4) sum_k [psi(k+1)+psi(k+2)] q^k / (k!(k+1)!)
// with q = x^2/4. Accurate to machine precision for x < 2 (no cancellation:
// every factor is well scaled there).
double k1_series(double x) {
  const double lx = std::log(0.5 * x);
  const double q = 0.25 * x * x;
  double term = 1.0;          // q^k / (k! (k+1)!)
  double i1_sum = term;       // I1(x) = (x/2) * sum
  double psi_a = -kEulerGamma;
  double psi_b = 1.0 - kEulerGamma;
  double s = (psi_a + psi_b) * term;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * (k + 1));
    psi_a += 1.0 / k;
    psi_b += 1.0 / (k + 1);
    i1_sum += term;
    const double ds = (psi_a + psi_b) * term;
    s += ds;
    if (std::abs(ds) < 1e-18 * std::abs(s) && term < 1e-18 * i1_sum) break;
  }
  const double i1 = 0.5 * x * i1_sum;
  return lx * i1 + 1.0 / x - 0.25 * x * s;
}

// Trapezoidal quadrature of K1(x) = int_0^inf exp(-x cosh t) cosh t dt.
// The integrand decays double-exponentially and is analytic in a strip, so
// the trapezoid rule converges geometrically; step 0.18 reaches ~1e-15
// relative for x in [2, 20].
double k1_quadrature(double x) {
  const double h = 0.18;
  const double tmax = std::acosh(1.0 + 45.0 / x);
  const int steps = static_cast<int>(std::ceil(tmax / h));
  double s = 0.5;  // t = 0 term: exp(0) * cosh(0) / 2
  for (int k = 1; k <= steps; ++k) {
    const double t = k * h;
    const double c = std::cosh(t);
    s += std::exp(-x * (c - 1.0)) * c;
  }
  return std::exp(-x) * h * s;
}

// Divergent asymptotic series, truncated at the smallest term; below 1e-15
// relative for x >= 16.
double k1_asymptotic(double x) {
  double s = 1.0;
  double a = 1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 60; ++k) {
    a *= (4.0 - (2.0 * k - 1.0) * (2.0 * k - 1.0)) / (8.0 * k);
    const double t = a / std::pow(x, k);
    if (std::abs(t) >= prev) break;
    s += t;
    prev = std::abs(t);
    if (std::abs(t) < 1e-18 * std::abs(s)) break;
  }
  return std::sqrt(kPi / (2.0 * x)) * std::exp(-x) * s;
}

}  // namespace

double bessel_k1(double x) {
  if (x < 0.0) throw std::invalid_argument("bessel_k1: negative argument");
  if (x == 0.0) return std::numeric_limits<double>::infinity();
  if (x < 2.0) return k1_series(x);
  if (x < 16.0) return k1_quadrature(x);
  return k1_asymptotic(x);
}

double matern_correlation(double d, double r) {
  if (d < 0.0) throw std::invalid_argument("matern_correlation: negative distance");
  if (!(r > 0.0)) throw std::invalid_argument("matern_correlation: range must be positive");
  const double x = d * std::sqrt(8.0) / r;
  if (x < 1e-12) return 1.0;  // x K1(x) -> 1 with error O(x^2 log x)
  return x * bessel_k1(x);
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Stationary: return "ms";
    case ModelKind::Barrier: return "mb";
    case ModelKind::Neumann: return "mn";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "ms") return ModelKind::Stationary;
  if (s == "mb") return ModelKind::Barrier;
  if (s == "mn") return ModelKind::Neumann;
  throw std::invalid_argument("unknown model kind: " + s + " (expected ms, mb, or mn)");
}

void BarrierSpec::validate() const {
  if (!(range > 0.0)) throw std::invalid_argument("BarrierSpec: range must be positive");
  if (!(barrier_fraction > 0.0) || barrier_fraction > 1.0)
    throw std::invalid_argument("BarrierSpec: barrier fraction must be in (0, 1]");
  if (!(sigma_u > 0.0)) throw std::invalid_argument("BarrierSpec: sigma_u must be positive");
  for (double r : ranges)
    if (!(r >= 0.0)) throw std::invalid_argument("BarrierSpec: negative subdomain range");
}

std::vector<double> BarrierSpec::subdomain_ranges(int subdomain_count) const {
  validate();
  if (!ranges.empty()) {
    if (static_cast<int>(ranges.size()) != subdomain_count)
      throw std::invalid_argument("BarrierSpec: explicit range list length (" +
                                  std::to_string(ranges.size()) + ") does not match subdomain count (" +
                                  std::to_string(subdomain_count) + ")");
    return ranges;
  }
  std::vector<double> out(subdomain_count, barrier_fraction * range);
  out[0] = range;
  return out;
}

PrecisionOperator::PrecisionOperator(SparseMatrix q, Provenance provenance)
    : q_(std::move(q)), provenance_(std::move(provenance)), lock_(std::make_shared<std::mutex>()) {}

const Factorization& PrecisionOperator::factorization() const {
  std::lock_guard<std::mutex> guard(*lock_);
  if (!fact_) fact_ = std::make_shared<const Factorization>(q_);
  return *fact_;
}

Vector PrecisionOperator::marginal_variances() const {
  const Factorization& f = factorization();
  std::lock_guard<std::mutex> guard(*lock_);
  if (!marg_var_) marg_var_ = std::make_shared<const Vector>(f.marginal_variances());
  return *marg_var_;
}

Vector PrecisionOperator::correlation_surface(int node) const {
  if (node < 0 || node >= node_count())
    throw std::invalid_argument("correlation_surface: node out of range");
  const Factorization& f = factorization();
  Vector e = Vector::Zero(node_count());
  e[node] = 1.0;
  const Vector col = f.solve(e);
  const Vector var = marginal_variances();
  Vector corr(node_count());
  const double vn = var[node];
  for (int i = 0; i < node_count(); ++i) corr[i] = col[i] / std::sqrt(var[i] * vn);
  return corr;
}

double PrecisionOperator::correlation(int node_a, int node_b) const {
  if (node_a < 0 || node_a >= node_count() || node_b < 0 || node_b >= node_count())
    throw std::invalid_argument("correlation: node out of range");
  const Factorization& f = factorization();
  Vector e = Vector::Zero(node_count());
  e[node_b] = 1.0;
  const Vector col = f.solve(e);
  const double cov_ab = col[node_a];
  const double var_b = col[node_b];
  e[node_b] = 0.0;
  e[node_a] = 1.0;
  const double var_a = f.solve(e)[node_a];
  return cov_ab / std::sqrt(var_a * var_b);
}

Vector PrecisionOperator::marginal_sd() const { return marginal_variances().cwiseSqrt(); }

PrecisionOperator PrecisionOperator::rescaled_to_unit_variance() const {
  const Vector sd = marginal_sd();
  SparseMatrix q = q_;
  for (int col = 0; col < q.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(q, col); it; ++it)
      it.valueRef() *= sd[it.row()] * sd[it.col()];
  Provenance prov = provenance_;
  prov.rescaled = true;
  return PrecisionOperator(std::move(q), std::move(prov));
}

SparseMatrix assemble_A(const FemMatrices& fem, const BarrierSpec& spec) {
  const auto ranges = spec.subdomain_ranges(fem.subdomain_count);
  SparseMatrix a = fem.mass;
  for (int q = 0; q < fem.subdomain_count; ++q)
    a += (ranges[q] * ranges[q] / 8.0) * fem.stiffness[q];
  return a;
}

Vector combined_lumped_mass(const FemMatrices& fem, const BarrierSpec& spec) {
  const auto ranges = spec.subdomain_ranges(fem.subdomain_count);
  Vector c = Vector::Zero(fem.node_count);
  for (int q = 0; q < fem.subdomain_count; ++q)
    c += (kPi / 2.0 * ranges[q] * ranges[q]) * fem.lumped_mass[q];
  return c;
}

PrecisionOperator assemble_Q(const FemMatrices& fem, const BarrierSpec& spec, ModelKind kind,
                             const std::string& mesh_id) {
  const SparseMatrix a = assemble_A(fem, spec);
  const Vector c = combined_lumped_mass(fem, spec);
  for (int i = 0; i < fem.node_count; ++i) {
    if (!(c[i] > 0.0)) {
      std::ostringstream msg;
      msg << "assemble_Q: node " << i << " has non-positive lumped mass " << c[i]
          << " (disconnected node or zero range everywhere)";
      throw std::runtime_error(msg.str());
    }
  }
  SparseMatrix q = a * c.cwiseInverse().asDiagonal() * a;
  q *= 1.0 / (spec.sigma_u * spec.sigma_u);

  Provenance prov;
  prov.kind = kind;
  prov.range = spec.range;
  prov.barrier_fraction = spec.barrier_fraction;
  prov.sigma_u = spec.sigma_u;
  prov.mesh_id = mesh_id;
  return PrecisionOperator(std::move(q), std::move(prov));
}

}  // namespace bgf
