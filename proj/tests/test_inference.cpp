#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "bgf/inference.hpp"
#include "bgf/rng.hpp"

using namespace bgf;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Simpson's rule in log space; the integrand decays exponentially in log r
// on both sides for all three prior marginals.
template <class F>
double logspace_integral(F&& density, double lo, double hi, int intervals) {
  const double a = std::log(lo), b = std::log(hi);
  const double h = (b - a) / intervals;
  auto g = [&](double t) {
    const double x = std::exp(t);
    return density(x) * x;
  };
  double acc = g(a) + g(b);
  for (int i = 1; i < intervals; ++i) acc += g(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

struct SmallProblem {
  TriangleMesh mesh;
  FemMatrices fem;
  ObservationSet obs;

  explicit SmallProblem(int n_obs = 40, std::uint64_t seed = 5, double noise = 0.3) {
    mesh = build_regular_mesh(Rect{0, 0, 2, 2}, 8, 8, 0.5);
    fem = assemble(mesh);
    RngStream rng(seed);
    obs.values.resize(n_obs);
    for (int i = 0; i < n_obs; ++i) {
      obs.locations.push_back({rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)});
      obs.values[i] = std::sin(obs.locations[i][0]) + noise * rng.normal();
    }
  }
};

}  // namespace

TEST_CASE("pc prior marginals integrate to one and hit their medians") {
  const PcPriors p = PcPriors::horseshoe_defaults();
  CHECK(p.rate_noise_sd == 1.5);
  CHECK(p.rate_field_sd == 1.5);
  CHECK(p.rate_inv_range == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  // the three marginal densities, integrated numerically
  auto de = [&](double s) { return p.rate_noise_sd * std::exp(-p.rate_noise_sd * s); };
  auto du = [&](double s) { return p.rate_field_sd * std::exp(-p.rate_field_sd * s); };
  auto dr = [&](double r) {
    return p.rate_inv_range * std::exp(-p.rate_inv_range / r) / (r * r);
  };
  CHECK(std::abs(logspace_integral(de, 1e-9, 60.0, 4000) - 1.0) <= 1e-6);
  CHECK(std::abs(logspace_integral(du, 1e-9, 60.0, 4000) - 1.0) <= 1e-6);
  CHECK(std::abs(logspace_integral(dr, 1e-7, 1e9, 6000) - 1.0) <= 1e-6);

  // medians: sigma at ln2/rate, range at rate/ln2 = 1 for the horseshoe rates
  CHECK(std::abs(logspace_integral(de, 1e-9, std::log(2.0) / 1.5, 4000) - 0.5) <= 1e-8);
  CHECK(std::abs(logspace_integral(dr, 1e-7, 1.0, 6000) - 0.5) <= 1e-8);
  CHECK(std::log(2.0) / 1.5 == doctest::Approx(0.46209812).epsilon(1e-7));

  // log density value decomposes as stated
  const double v = pc_log_prior(p, 2.0, 0.7, 0.3);
  const double expect = std::log(de(0.3)) + std::log(du(0.7)) + std::log(dr(2.0));
  CHECK(v == doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS(pc_log_prior(p, 0.0, 1.0, 1.0));
  CHECK_THROWS(pc_log_prior(p, 1.0, -1.0, 1.0));
  CHECK_THROWS(pc_log_prior(PcPriors{0.0, 1.0, 1.0}, 1.0, 1.0, 1.0));
}

TEST_CASE("evidence: empty, dense oracle, permutation invariance") {
  const SmallProblem prob;
  const BarrierSpec spec{1.0, 1.0, 0.8, {}};

  SUBCASE("zero observations give zero") {
    ObservationSet empty;
    empty.values.resize(0);
    CHECK(log_marginal_likelihood(prob.mesh, prob.fem, spec, empty, 0.3) == 0.0);
  }

  SUBCASE("matches the dense marginal-covariance oracle") {
    const double se = 0.3;
    const double ev = log_marginal_likelihood(prob.mesh, prob.fem, spec, prob.obs, se);

    const PrecisionOperator op = assemble_Q(prob.fem, spec);
    const int n = op.node_count();
    const int m = static_cast<int>(prob.obs.values.size());
    Eigen::MatrixXd qx = Eigen::MatrixXd::Zero(n + 1, n + 1);
    qx.topLeftCorner(n, n) = Eigen::MatrixXd(op.matrix());
    qx(n, n) = kFlatPrecision;
    const Projector proj = project_points(prob.mesh, prob.obs.locations);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(m, n + 1);
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k < 3; ++k) p(i, proj.nodes[i][k]) += proj.weights[i][k];
      p(i, n) = 1.0;
    }
    const Eigen::MatrixXd cov =
        p * qx.inverse() * p.transpose() + se * se * Eigen::MatrixXd::Identity(m, m);
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::MatrixXd l = llt.matrixL();
    const double oracle = -0.5 * m * std::log(2.0 * kPi) -
                          l.diagonal().array().log().sum() -
                          0.5 * prob.obs.values.dot(llt.solve(prob.obs.values));
    CHECK(ev == doctest::Approx(oracle).epsilon(1e-6));
  }

  SUBCASE("invariant under observation permutation") {
    const double base = log_marginal_likelihood(prob.mesh, prob.fem, spec, prob.obs, 0.3);
    ObservationSet shuffled = prob.obs;
    std::reverse(shuffled.locations.begin(), shuffled.locations.end());
    shuffled.values.reverseInPlace();
    const double rev = log_marginal_likelihood(prob.mesh, prob.fem, spec, shuffled, 0.3);
    CHECK(rev == doctest::Approx(base).epsilon(1e-8));
  }
}

TEST_CASE("evidence: single observation matches the scalar density") {
  TriangleMesh mesh;
  mesh.vertices = {{0, 0}, {1, 0}, {0, 1}};
  mesh.triangles = {{0, 1, 2}};
  mesh.subdomain = {1};
  const FemMatrices fem = assemble(mesh);
  const BarrierSpec spec{1.0, 1.0, 0.9, {}};
  const double se = 0.25, y = 1.7;

  ObservationSet obs;
  obs.locations = {{0.0, 0.0}};  // exactly at node 0
  obs.values.resize(1);
  obs.values[0] = y;
  const double ev = log_marginal_likelihood(mesh, fem, spec, obs, se);

  const PrecisionOperator op = assemble_Q(fem, spec);
  const double field_var = Eigen::MatrixXd(op.matrix()).inverse()(0, 0);
  const double total = field_var + 1.0 / kFlatPrecision + se * se;
  const double oracle = -0.5 * std::log(2.0 * kPi * total) - 0.5 * y * y / total;
  CHECK(ev == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("map objective decomposes exactly into evidence plus prior") {
  const SmallProblem prob;
  const PcPriors priors = PcPriors::horseshoe_defaults();
  const Hyper h{0.8, 1.1, 0.35};
  const double obj =
      map_objective(prob.mesh, prob.fem, ModelKind::Stationary, 1.0, prob.obs, priors, h);
  const double ev = log_marginal_likelihood(prob.mesh, prob.fem,
                                            BarrierSpec{h.range, 1.0, h.sigma_u, {}}, prob.obs,
                                            h.sigma_eps);
  const double lp = pc_log_prior(priors, h.range, h.sigma_u, h.sigma_eps);
  CHECK(obj == ev + lp);  // bit-identical by construction
}

TEST_CASE("fixed fit: simulation self-consistency") {
  const TriangleMesh mesh = build_regular_mesh(Rect{0, 0, 3, 3}, 12, 12, 1.0);
  const FemMatrices fem = assemble(mesh);
  const Hyper truth{1.0, 1.0, 0.01};
  const PrecisionOperator op = assemble_Q(fem, BarrierSpec{truth.range, 1.0, truth.sigma_u, {}});
  const Vector field = op.factorization().sample(99);

  RngStream rng(100);
  const int m = 150;
  ObservationSet obs;
  obs.values.resize(m);
  std::vector<int> obs_nodes;
  for (int i = 0; i < m; ++i) {
    const int node = static_cast<int>(rng.uniform() * mesh.node_count());
    obs_nodes.push_back(node);
    obs.locations.push_back(mesh.vertices[node]);
    obs.values[i] = field[node] + truth.sigma_eps * rng.normal();
  }

  const FitResult f = fit(mesh, fem, ModelKind::Stationary, 1.0, obs, truth);
  const Prediction pred = predict(f, mesh, obs.locations, true);
  int within = 0;
  for (int i = 0; i < m; ++i) {
    const double band = 3.0 * std::sqrt(pred.sd[i] * pred.sd[i] +
                                        truth.sigma_eps * truth.sigma_eps);
    within += std::abs(pred.mean[i] - obs.values[i]) <= band;
    CHECK(pred.sd[i] >= 0.0);
  }
  CHECK(within >= static_cast<int>(0.99 * m));
}

TEST_CASE("degeneracy: barrier fraction one equals stationary fit") {
  const TriangleMesh marked =
      mark_by_predicate(build_regular_mesh(Rect{0, 0, 2, 2}, 8, 8, 0.5),
                        [](double, double y) { return y > 0.8 && y < 1.2; });
  const FemMatrices fem = assemble(marked);
  SmallProblem prob;  // reuse observations only
  const Hyper h{0.7, 1.0, 0.2};
  const FitResult mb = fit(marked, fem, ModelKind::Barrier, 1.0, prob.obs, h);
  const FitResult ms = fit(marked, fem, ModelKind::Stationary, 1.0, prob.obs, h);
  CHECK((mb.mean - ms.mean).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((mb.sd - ms.sd).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(mb.log_evidence == doctest::Approx(ms.log_evidence).epsilon(1e-12));
}

TEST_CASE("map fit: grid maximizer within one step of a dense-grid scan") {
  // data simulated with r=1, sigma_u=1, sigma_eps=0.1
  const TriangleMesh mesh = build_regular_mesh(Rect{0, 0, 2, 2}, 8, 8, 0.5);
  const FemMatrices fem = assemble(mesh);
  const Hyper truth{1.0, 1.0, 0.1};
  const PrecisionOperator op = assemble_Q(fem, BarrierSpec{truth.range, 1.0, truth.sigma_u, {}});
  const Vector field = op.factorization().sample(7);

  RngStream rng(8);
  const int m = 600;
  ObservationSet obs;
  obs.values.resize(m);
  for (int i = 0; i < m; ++i) {
    obs.locations.push_back({rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)});
    const Projector p = project_points(mesh, {obs.locations.back()});
    double u = 0.0;
    for (int k = 0; k < 3; ++k) u += p.weights[0][k] * field[p.nodes[0][k]];
    obs.values[i] = u + truth.sigma_eps * rng.normal();
  }

  const PcPriors priors = PcPriors::horseshoe_defaults();
  GridSpec grid;
  grid.coarse_points = 5;
  grid.refine_points = 0;  // compare the raw coarse maximizer
  const FitResult f =
      fit(mesh, fem, ModelKind::Stationary, 1.0, obs, MapOptions{priors, grid});

  // oracle: exhaustive scan of the same objective on a 3x finer grid
  auto logspace = [](double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i)
      v[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1.0));
    return v;
  };
  const auto rs = logspace(0.1, 10.0, 13);
  const auto sus = logspace(0.01, 10.0, 13);
  const auto ses = logspace(0.01, 10.0, 13);
  Hyper best{};
  double best_obj = -1e300;
  for (double r : rs)
    for (double su : sus)
      for (double se : ses) {
        const double obj =
            map_objective(mesh, fem, ModelKind::Stationary, 1.0, obs, priors, Hyper{r, su, se});
        if (obj > best_obj) {
          best_obj = obj;
          best = Hyper{r, su, se};
        }
      }

  const double coarse_step = (std::log(10.0) - std::log(0.1)) / 4.0;  // r axis
  const double step_u = (std::log(10.0) - std::log(0.01)) / 4.0;
  CHECK(std::abs(std::log(f.hyper.range) - std::log(best.range)) <= coarse_step + 1e-9);
  CHECK(std::abs(std::log(f.hyper.sigma_u) - std::log(best.sigma_u)) <= step_u + 1e-9);
  CHECK(std::abs(std::log(f.hyper.sigma_eps) - std::log(best.sigma_eps)) <= step_u + 1e-9);
}

TEST_CASE("predict: pinned values, validity flags, reordering invariance") {
  const SmallProblem prob(30, 12, 0.0);
  const Hyper h{1.0, 1.0, 1e-4};
  const FitResult f = fit(prob.mesh, prob.fem, ModelKind::Stationary, 1.0, prob.obs, h);

  SUBCASE("prediction at an observation with tiny noise is the observation") {
    const Prediction pred = predict(f, prob.mesh, prob.obs.locations, true);
    for (int i = 0; i < 5; ++i) {
      CHECK(pred.mean[i] == doctest::Approx(prob.obs.values[i]).epsilon(1e-2));
      CHECK(pred.sd[i] >= 0.0);
    }
  }

  SUBCASE("outside locations flagged, means NaN") {
    const Prediction pred = predict(f, prob.mesh, {{-10.0, 0.0}, {1.0, 1.0}}, true);
    CHECK(!pred.valid[0]);
    CHECK(pred.valid[1]);
    CHECK(std::isnan(pred.mean[0]));
    CHECK(std::isfinite(pred.mean[1]));
  }

  SUBCASE("invariant under mesh node reordering") {
    // reverse node order; a well-conditioned fit keeps the comparison sharp
    const Hyper h2{1.0, 1.0, 0.05};
    TriangleMesh rev = prob.mesh;
    const int n = rev.node_count();
    std::reverse(rev.vertices.begin(), rev.vertices.end());
    for (auto& t : rev.triangles)
      for (int& v : t) v = n - 1 - v;
    const FemMatrices fem_rev = assemble(rev);
    const FitResult fa = fit(prob.mesh, prob.fem, ModelKind::Stationary, 1.0, prob.obs, h2);
    const FitResult fb = fit(rev, fem_rev, ModelKind::Stationary, 1.0, prob.obs, h2);
    const std::vector<Point> where = {{0.3, 0.4}, {1.7, 1.2}, {0.9, 0.9}};
    const Prediction a = predict(fa, prob.mesh, where, false);
    const Prediction b = predict(fb, rev, where, false);
    for (int i = 0; i < 3; ++i) CHECK(a.mean[i] == doctest::Approx(b.mean[i]).epsilon(1e-8));
  }
}

TEST_CASE("posterior sd decreases when an observation is added") {
  SmallProblem prob(25, 33, 0.2);
  const Hyper h{0.8, 1.0, 0.2};
  const FitResult base = fit(prob.mesh, prob.fem, ModelKind::Stationary, 1.0, prob.obs, h);

  ObservationSet more = prob.obs;
  more.locations.push_back({1.0, 1.0});
  Vector v(more.values.size() + 1);
  v.head(more.values.size()) = more.values;
  v[more.values.size()] = 0.5;
  more.values = v;
  const FitResult extra = fit(prob.mesh, prob.fem, ModelKind::Stationary, 1.0, more, h);

  for (int i = 0; i < base.sd.size(); ++i) CHECK(extra.sd[i] <= base.sd[i] + 1e-10);
}

TEST_CASE("barrier posterior sd exceeds stationary sd behind a barrier") {
  // data on one side of a full strip; probe on the other side
  const TriangleMesh marked =
      mark_by_predicate(build_regular_mesh(Rect{0, 0, 4, 4}, 16, 16, 1.0),
                        [](double, double y) { return y >= 2.0 && y <= 2.5; });
  const FemMatrices fem = assemble(marked);
  RngStream rng(55);
  ObservationSet obs;
  obs.values.resize(60);
  for (int i = 0; i < 60; ++i) {
    obs.locations.push_back({rng.uniform(0.2, 3.8), rng.uniform(0.2, 1.8)});  // below strip
    obs.values[i] = rng.normal();
  }
  const Hyper h{1.5, 1.0, 0.3};
  const FitResult mb = fit(marked, fem, ModelKind::Barrier, 0.1, obs, h);
  const FitResult ms = fit(marked, fem, ModelKind::Stationary, 1.0, obs, h);

  // probe node above the strip, center-ish
  int probe = -1;
  double best = 1e30;
  for (int i = 0; i < marked.node_count(); ++i) {
    const double dx = marked.vertices[i][0] - 2.0, dy = marked.vertices[i][1] - 3.0;
    if (dx * dx + dy * dy < best) {
      best = dx * dx + dy * dy;
      probe = i;
    }
  }
  CHECK(mb.sd[probe] >= ms.sd[probe]);
}

TEST_CASE("neumann fit requires a restricted mesh and inside observations") {
  const TriangleMesh marked =
      mark_by_predicate(build_regular_mesh(Rect{0, 0, 2, 2}, 8, 8, 0.0),
                        [](double, double y) { return y > 1.0; });
  const FemMatrices fem = assemble(marked);
  SmallProblem prob;
  CHECK_THROWS(fit(marked, fem, ModelKind::Neumann, 0.1, prob.obs, Hyper{1.0, 1.0, 0.1}));

  const RestrictedMesh water = restrict_to_subdomain(marked, 1);
  const FemMatrices fem_w = assemble(water.mesh);
  ObservationSet outside;
  outside.locations = {{1.0, 1.9}};  // in the removed part
  outside.values.resize(1);
  outside.values[0] = 1.0;
  CHECK_THROWS(fit(water.mesh, fem_w, ModelKind::Neumann, 0.1, outside, Hyper{1.0, 1.0, 0.1}));

  ObservationSet inside;
  inside.locations = {{1.0, 0.5}};
  inside.values.resize(1);
  inside.values[0] = 1.0;
  const FitResult f = fit(water.mesh, fem_w, ModelKind::Neumann, 0.1, inside, Hyper{1.0, 1.0, 0.1});
  CHECK(f.kind == ModelKind::Neumann);
  CHECK(std::isfinite(f.log_evidence));
}

TEST_CASE("observation set validation") {
  ObservationSet bad;
  bad.locations = {{0, 0}};
  bad.values.resize(2);
  CHECK_THROWS(bad.validate());
  ObservationSet nan;
  nan.locations = {{0, 0}};
  nan.values.resize(1);
  nan.values[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(nan.validate());
}
