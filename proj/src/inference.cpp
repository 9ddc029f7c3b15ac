#include "bgf/inference.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bgf {

namespace {

constexpr double kPi = 3.14159265358979323846;

void throw_invalid_rows(const std::vector<int>& bad, const char* what) {
  std::ostringstream msg;
  msg << what << ": " << bad.size() << " observation(s) outside the mesh:";
  for (std::size_t i = 0; i < bad.size() && i < 20; ++i) msg << ' ' << bad[i];
  if (bad.size() > 20) msg << " ...";
  throw std::invalid_argument(msg.str());
}

std::vector<double> log_spaced(double lo, double hi, int count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = std::sqrt(lo * hi);
    return out;
  }
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < count; ++i)
    out[i] = std::exp(llo + (lhi - llo) * i / static_cast<double>(count - 1));
  return out;
}

// Per-range cache: log-determinants of A(r) and C~(r), and the values of
// Q0(r) = A C~^-1 A at sigma_u = 1 (fixed sparsity pattern across r).
struct PerRange {
  double range = 0.0;
  double logdet_a = 0.0;
  double logdet_ct = 0.0;
  std::vector<double> q0_values;
};

// Everything that is fixed across hyperparameter evaluations for one
// (fem, range shape, observation set): the data cross-products and the
// posterior-precision pattern with value maps into it. The evidence is
//   ln p(y) = -m/2 ln(2 pi s_e^2) + 1/2 ln|Q_aug| - 1/2 ln|Q_post|
//             - 1/2 (y'y/s_e^2 - b'mu),
// with ln|Q| = 2 ln|A| - ln|C~| - 2 n ln(s_u).
class EvidenceContext {
 public:
  EvidenceContext(const FemMatrices& fem, std::vector<double> shape, const Projector& proj,
                  const Vector& y)
      : fem_(&fem), shape_(std::move(shape)), n_(fem.node_count), m_(proj.rows()) {
    const auto bad = proj.invalid_rows();
    if (!bad.empty()) throw_invalid_rows(bad, "inference");

    const int naug = n_ + 1;
    std::vector<Eigen::Triplet<double>> ptrips;
    ptrips.reserve(static_cast<std::size_t>(m_) * 4);
    for (int r = 0; r < m_; ++r) {
      for (int c = 0; c < 3; ++c)
        if (proj.weights[r][c] != 0.0) ptrips.emplace_back(r, proj.nodes[r][c], proj.weights[r][c]);
      ptrips.emplace_back(r, n_, 1.0);
    }
    SparseMatrix p(m_, naug);
    p.setFromTriplets(ptrips.begin(), ptrips.end());
    ptp_ = SparseMatrix(p.transpose() * p);
    pty_ = p.transpose() * y;
    yty_ = y.dot(y);

    q0_template_ = q0_matrix(1.0);

    std::vector<Eigen::Triplet<double>> utrips;
    utrips.reserve(q0_template_.nonZeros() + ptp_.nonZeros() + 1);
    for (int col = 0; col < q0_template_.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(q0_template_, col); it; ++it)
        utrips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), 0.0);
    utrips.emplace_back(n_, n_, 0.0);
    for (int col = 0; col < ptp_.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(ptp_, col); it; ++it)
        utrips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), 0.0);
    pattern_.resize(naug, naug);
    pattern_.setFromTriplets(utrips.begin(), utrips.end());
    pattern_.makeCompressed();

    map_prior_ = build_map(q0_template_);
    map_data_ = build_map(ptp_);
    flat_slot_ = slot_of(n_, n_);
  }

  int field_dim() const { return n_; }
  int obs_count() const { return m_; }

  PerRange build_range(double r) {
    PerRange pr;
    pr.range = r;
    const Vector c = lumped(r);
    for (int i = 0; i < n_; ++i)
      if (!(c[i] > 0.0))
        throw std::runtime_error("inference: node " + std::to_string(i) +
                                 " has non-positive lumped mass");
    a_solver_.refactor(operator_matrix(r));
    pr.logdet_a = a_solver_.log_determinant();
    pr.logdet_ct = c.array().log().sum();

    const SparseMatrix q0 = q0_matrix(r);
    if (q0.nonZeros() != q0_template_.nonZeros())
      throw std::logic_error("inference: Q0 sparsity pattern changed with range");
    pr.q0_values.assign(q0.valuePtr(), q0.valuePtr() + q0.nonZeros());
    return pr;
  }

  struct Workspace {
    RefactorSolver solver;
    SparseMatrix qpost;
    bool init = false;
  };

  double evidence(const PerRange& pr, double sigma_u, double sigma_eps, Workspace& ws) const {
    if (m_ == 0) return 0.0;
    if (!ws.init) {
      ws.qpost = pattern_;
      ws.init = true;
    }
    double* vals = ws.qpost.valuePtr();
    std::fill(vals, vals + ws.qpost.nonZeros(), 0.0);
    const double inv_su2 = 1.0 / (sigma_u * sigma_u);
    const double inv_se2 = 1.0 / (sigma_eps * sigma_eps);
    for (std::size_t i = 0; i < pr.q0_values.size(); ++i)
      vals[map_prior_[i]] += pr.q0_values[i] * inv_su2;
    vals[flat_slot_] += kFlatPrecision;
    const double* dvals = ptp_.valuePtr();
    for (std::size_t i = 0; i < map_data_.size(); ++i) vals[map_data_[i]] += dvals[i] * inv_se2;

    ws.solver.refactor(ws.qpost);
    const double logdet_prior_aug =
        2.0 * pr.logdet_a - pr.logdet_ct - 2.0 * n_ * std::log(sigma_u) + std::log(kFlatPrecision);
    const Vector b = pty_ * inv_se2;
    const Vector mu = ws.solver.solve(b);
    const double quad = yty_ * inv_se2 - b.dot(mu);
    return -0.5 * m_ * std::log(2.0 * kPi * sigma_eps * sigma_eps) + 0.5 * logdet_prior_aug -
           0.5 * ws.solver.log_determinant() - 0.5 * quad;
  }

  // Field-block prior precision at the given hyperparameters.
  SparseMatrix prior_matrix(const PerRange& pr, double sigma_u) const {
    SparseMatrix q = q0_template_;
    const double inv_su2 = 1.0 / (sigma_u * sigma_u);
    double* vals = q.valuePtr();
    for (std::size_t i = 0; i < pr.q0_values.size(); ++i) vals[i] = pr.q0_values[i] * inv_su2;
    return q;
  }

 private:
  SparseMatrix operator_matrix(double r) const {
    SparseMatrix a = fem_->mass;
    for (int q = 0; q < fem_->subdomain_count; ++q) {
      const double rq = shape_[q] * r;
      a += (rq * rq / 8.0) * fem_->stiffness[q];
    }
    return a;
  }

  Vector lumped(double r) const {
    Vector c = Vector::Zero(n_);
    for (int q = 0; q < fem_->subdomain_count; ++q) {
      const double rq = shape_[q] * r;
      c += (kPi / 2.0 * rq * rq) * fem_->lumped_mass[q];
    }
    return c;
  }

  SparseMatrix q0_matrix(double r) const {
    const SparseMatrix a = operator_matrix(r);
    return a * lumped(r).cwiseInverse().asDiagonal() * a;
  }

  int slot_of(int row, int col) const {
    const int* outer = pattern_.outerIndexPtr();
    const int* inner = pattern_.innerIndexPtr();
    for (int idx = outer[col]; idx < outer[col + 1]; ++idx)
      if (inner[idx] == row) return idx;
    throw std::logic_error("inference: missing slot in posterior pattern");
  }

  std::vector<int> build_map(const SparseMatrix& m) const {
    std::vector<int> map;
    map.reserve(m.nonZeros());
    for (int col = 0; col < m.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(m, col); it; ++it)
        map.push_back(slot_of(static_cast<int>(it.row()), static_cast<int>(it.col())));
    return map;
  }

  const FemMatrices* fem_;
  std::vector<double> shape_;
  int n_ = 0;
  int m_ = 0;
  SparseMatrix ptp_;
  Vector pty_;
  double yty_ = 0.0;
  SparseMatrix q0_template_;
  SparseMatrix pattern_;
  std::vector<int> map_prior_;
  std::vector<int> map_data_;
  int flat_slot_ = -1;
  RefactorSolver a_solver_;
};

std::vector<double> range_shape(const FemMatrices& fem, ModelKind kind, double barrier_fraction) {
  const int k = fem.subdomain_count;
  switch (kind) {
    case ModelKind::Stationary:
      return std::vector<double>(k, 1.0);
    case ModelKind::Barrier: {
      if (!(barrier_fraction > 0.0) || barrier_fraction > 1.0)
        throw std::invalid_argument("fit: barrier fraction must be in (0, 1]");
      std::vector<double> s(k, barrier_fraction);
      s[0] = 1.0;
      return s;
    }
    case ModelKind::Neumann:
      if (k != 1)
        throw std::invalid_argument(
            "fit: the Neumann model expects a mesh restricted to subdomain 1");
      return {1.0};
  }
  throw std::logic_error("unreachable");
}

}  // namespace

void ObservationSet::validate() const {
  if (static_cast<int>(locations.size()) != values.size())
    throw std::invalid_argument("ObservationSet: locations and values differ in length");
  for (int i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw std::invalid_argument("ObservationSet: non-finite value at row " + std::to_string(i));
}

void PcPriors::validate() const {
  if (!(rate_noise_sd > 0.0) || !(rate_field_sd > 0.0) || !(rate_inv_range > 0.0))
    throw std::invalid_argument("PcPriors: all rates must be positive");
}

double pc_log_prior(const PcPriors& priors, double range, double sigma_u, double sigma_eps) {
  priors.validate();
  if (!(range > 0.0) || !(sigma_u > 0.0) || !(sigma_eps > 0.0))
    throw std::invalid_argument("pc_log_prior: nonpositive argument");
  const double le = std::log(priors.rate_noise_sd) - priors.rate_noise_sd * sigma_eps;
  const double lu = std::log(priors.rate_field_sd) - priors.rate_field_sd * sigma_u;
  // 1/r ~ Exp(rate): density in r carries the 1/r^2 Jacobian
  const double lr = std::log(priors.rate_inv_range) - priors.rate_inv_range / range -
                    2.0 * std::log(range);
  return le + lu + lr;
}

double log_marginal_likelihood(const TriangleMesh& mesh, const FemMatrices& fem,
                               const BarrierSpec& spec, const ObservationSet& obs,
                               double sigma_eps) {
  obs.validate();
  if (!(sigma_eps > 0.0)) throw std::invalid_argument("log_marginal_likelihood: sigma_eps <= 0");
  const auto ranges = spec.subdomain_ranges(fem.subdomain_count);
  std::vector<double> shape(ranges.size());
  for (std::size_t q = 0; q < ranges.size(); ++q) shape[q] = ranges[q] / spec.range;

  const Projector proj = project_points(mesh, obs.locations);
  EvidenceContext ctx(fem, shape, proj, obs.values);
  const PerRange pr = ctx.build_range(spec.range);
  EvidenceContext::Workspace ws;
  return ctx.evidence(pr, spec.sigma_u, sigma_eps, ws);
}

double map_objective(const TriangleMesh& mesh, const FemMatrices& fem, ModelKind kind,
                     double barrier_fraction, const ObservationSet& obs, const PcPriors& priors,
                     const Hyper& hyper) {
  obs.validate();
  const Projector proj = project_points(mesh, obs.locations);
  EvidenceContext ctx(fem, range_shape(fem, kind, barrier_fraction), proj, obs.values);
  const PerRange pr = ctx.build_range(hyper.range);
  EvidenceContext::Workspace ws;
  return ctx.evidence(pr, hyper.sigma_u, hyper.sigma_eps, ws) +
         pc_log_prior(priors, hyper.range, hyper.sigma_u, hyper.sigma_eps);
}

FitResult fit(const TriangleMesh& mesh, const FemMatrices& fem, ModelKind kind,
              double barrier_fraction, const ObservationSet& obs, const HyperMode& mode,
              bool with_sd) {
  obs.validate();
  const Projector proj = project_points(mesh, obs.locations);
  EvidenceContext ctx(fem, range_shape(fem, kind, barrier_fraction), proj, obs.values);

  Hyper best;
  double best_evidence = 0.0;

  if (const Hyper* fixed = std::get_if<Hyper>(&mode)) {
    if (!(fixed->range > 0.0) || !(fixed->sigma_u > 0.0) || !(fixed->sigma_eps > 0.0))
      throw std::invalid_argument("fit: fixed hyperparameters must be positive");
    best = *fixed;
    const PerRange pr = ctx.build_range(best.range);
    EvidenceContext::Workspace ws;
    best_evidence = ctx.evidence(pr, best.sigma_u, best.sigma_eps, ws);
  } else {
    const MapOptions& opt = std::get<MapOptions>(mode);
    opt.priors.validate();
    const GridSpec& g = opt.grid;
    if (g.coarse_points < 2) throw std::invalid_argument("fit: grid needs >= 2 points per axis");

    auto scan = [&](const std::vector<double>& rs, const std::vector<double>& sus,
                    const std::vector<double>& ses, Hyper& arg_best, double& obj_best,
                    double& ev_best) {
      std::vector<PerRange> per_r;
      per_r.reserve(rs.size());
      for (double r : rs) per_r.push_back(ctx.build_range(r));
      const int total = static_cast<int>(rs.size() * sus.size() * ses.size());
      std::vector<double> obj(total), ev(total);
#pragma omp parallel
      {
        EvidenceContext::Workspace ws;
#pragma omp for schedule(dynamic)
        for (int idx = 0; idx < total; ++idx) {
          const int ir = idx / static_cast<int>(sus.size() * ses.size());
          const int iu = (idx / static_cast<int>(ses.size())) % static_cast<int>(sus.size());
          const int ie = idx % static_cast<int>(ses.size());
          ev[idx] = ctx.evidence(per_r[ir], sus[iu], ses[ie], ws);
          obj[idx] = ev[idx] + pc_log_prior(opt.priors, rs[ir], sus[iu], ses[ie]);
        }
      }
      int ibest = 0;
      for (int idx = 1; idx < total; ++idx)
        if (obj[idx] > obj[ibest]) ibest = idx;
      const int ir = ibest / static_cast<int>(sus.size() * ses.size());
      const int iu = (ibest / static_cast<int>(ses.size())) % static_cast<int>(sus.size());
      const int ie = ibest % static_cast<int>(ses.size());
      arg_best = Hyper{rs[ir], sus[iu], ses[ie]};
      obj_best = obj[ibest];
      ev_best = ev[ibest];
      return std::array<int, 3>{ir, iu, ie};
    };

    const int coarse_noise = g.coarse_points_noise > 0 ? g.coarse_points_noise : g.coarse_points;
    const int refine_noise = g.refine_points_noise > 0 ? g.refine_points_noise : g.refine_points;
    if (coarse_noise < 2) throw std::invalid_argument("fit: grid needs >= 2 points per axis");

    const auto rs = log_spaced(g.range_lo * g.length_scale, g.range_hi * g.length_scale,
                               g.coarse_points);
    const auto sus = log_spaced(g.sigma_u_lo, g.sigma_u_hi, g.coarse_points);
    const auto ses = log_spaced(g.sigma_eps_lo, g.sigma_eps_hi, coarse_noise);

    double best_obj = 0.0;
    const auto at = scan(rs, sus, ses, best, best_obj, best_evidence);

    if (g.refine_points >= 2) {
      auto bracket = [](const std::vector<double>& v, int i, int count) {
        const double lo = v[std::max(0, i - 1)];
        const double hi = v[std::min(static_cast<int>(v.size()) - 1, i + 1)];
        return log_spaced(lo, hi, count);
      };
      const auto rs2 = bracket(rs, at[0], g.refine_points);
      const auto sus2 = bracket(sus, at[1], g.refine_points);
      const auto ses2 = bracket(ses, at[2], std::max(refine_noise, 2));
      Hyper refined;
      double refined_obj = 0.0, refined_ev = 0.0;
      scan(rs2, sus2, ses2, refined, refined_obj, refined_ev);
      if (refined_obj > best_obj) {
        best = refined;
        best_evidence = refined_ev;
      }
    }
  }

  const PerRange pr = ctx.build_range(best.range);
  const SparseMatrix q = ctx.prior_matrix(pr, best.sigma_u);
  const Posterior post =
      condition(q, proj, best.sigma_eps * best.sigma_eps, obs.values, 1);

  const int n = ctx.field_dim();

  FitResult result;
  result.kind = kind;
  result.hyper = best;
  result.log_evidence = best_evidence;
  result.mean = post.mean.head(n);
  result.intercept_mean = post.mean[n];
  if (with_sd) {
    const Vector var = post.factorization->marginal_variances();
    result.sd = var.head(n).cwiseSqrt();
    result.intercept_sd = std::sqrt(var[n]);
  }
  result.posterior = std::make_shared<const Posterior>(post);
  return result;
}

Prediction predict(const FitResult& fit, const Projector& proj, bool with_sd) {
  if (!fit.posterior) throw std::invalid_argument("predict: fit result has no posterior");
  const Posterior& post = *fit.posterior;
  const int n = post.field_dim;
  const int m = proj.rows();

  Prediction out;
  out.valid = proj.valid;
  out.mean.resize(m);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < m; ++i) {
    if (!proj.valid[i]) {
      out.mean[i] = nan;
      continue;
    }
    double v = fit.intercept_mean;
    for (int k = 0; k < 3; ++k)
      if (proj.weights[i][k] != 0.0) v += proj.weights[i][k] * post.mean[proj.nodes[i][k]];
    out.mean[i] = v;
  }

  if (with_sd) {
    out.sd.resize(m);
    const int naug = n + post.flat_count;
#pragma omp parallel
    {
      Vector e = Vector::Zero(naug);
#pragma omp for schedule(dynamic, 16)
      for (int i = 0; i < m; ++i) {
        if (!proj.valid[i]) {
          out.sd[i] = nan;
          continue;
        }
        for (int k = 0; k < 3; ++k) e[proj.nodes[i][k]] = proj.weights[i][k];
        if (post.flat_count > 0) e[n] = 1.0;
        const Vector x = post.factorization->solve(e);
        double var = post.flat_count > 0 ? x[n] : 0.0;
        for (int k = 0; k < 3; ++k) var += proj.weights[i][k] * x[proj.nodes[i][k]];
        out.sd[i] = std::sqrt(std::max(var, 0.0));
        for (int k = 0; k < 3; ++k) e[proj.nodes[i][k]] = 0.0;
        if (post.flat_count > 0) e[n] = 0.0;
      }
    }
  }
  return out;
}

Prediction predict(const FitResult& fit, const TriangleMesh& mesh,
                   const std::vector<Point>& locations, bool with_sd) {
  return predict(fit, project_points(mesh, locations), with_sd);
}

}  // namespace bgf
