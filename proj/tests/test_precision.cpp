#include <doctest.h>

#include <set>

#include <Eigen/Dense>

#include "bgf/precision.hpp"
#include "bgf/rng.hpp"

using namespace bgf;

namespace {

// 50-digit reference values (x, K1(x)), 20 log-spaced points in [1e-3, 30].
constexpr double kBesselOracle[20][2] = {
    {0.001, 999.996238156085574278},
    {0.0017204337784861751, 581.242754491833526838},
    {0.0029598923861562173, 337.840592031030061785},
    {0.0050922988418272017, 196.359951614660402943},
    {0.0087609629376255458, 114.119253432183788413},
    {0.015072656569956458, 66.3090481872635763644},
    {0.02593150749447466, 38.5077800885220833688},
    {0.044613441420561606, 22.3316374535265612362},
    {0.076754471594448433, 12.9062880842737290581},
    {0.13205098558094671, 7.39800396787201981986},
    {0.22718497607585157, 4.16129904384804865147},
    {0.39085670680546861, 2.24585545775011008528},
    {0.67244308093599546, 1.11231132249426374672},
    {1.1568937905515995, 0.465189049005797468564},
    {1.990359155385882, 0.141650590662713388363},
    {3.4242811222450849, 0.0242977272621313321828},
    {5.8912489097429914, 0.00151358449273819244462},
    {10.135503621791694, 0.0000161689048300192505167},
    {17.437462792899397, 8.19235643236771801301e-9},
    {30.0, 2.16773200189154942487e-14},
};

// (d, correlation) at range 1, 20 log-spaced distances in [0.01, 10].
constexpr double kMaternOracle[20][2] = {
    {0.01, 0.998327250365309277937},
    {0.014384498882876628, 0.996839383239493979565},
    {0.020691380811147897, 0.994081402079952787219},
    {0.029763514416313182, 0.989036207240109930438},
    {0.042813323987193939, 0.979958229148643676738},
    {0.061584821106602637, 0.963963734955375533017},
    {0.088586679041008263, 0.936540215379817819496},
    {0.12742749857031338, 0.89117996069264793688},
    {0.18329807108324359, 0.819679859798698285177},
    {0.26366508987303583, 0.714129058896716036593},
    {0.37926901907322497, 0.571773234140942731939},
    {0.54555947811685191, 0.402454170944993134654},
    {0.78475997035146127, 0.233544998638819959182},
    {1.1288378916846891, 0.101891793794629751418},
    {1.6237767391887218, 0.0292873455716522749877},
    {2.3357214690901223, 0.00459099559586713861895},
    {3.3598182862837821, 0.000299363554301478788376},
    {4.8329302385717532, 0.00000550571350540154407865},
    {6.951927961775606, 1.63464726042532029274e-8},
    {10.0, 3.51389451276364969228e-12},
};

TriangleMesh strip_mesh() {
  return mark_by_predicate(build_regular_mesh(Rect{0, 0, 6, 6}, 12, 12, 1.0),
                           [](double, double y) { return y >= 2.4 && y <= 3.3; });
}

}  // namespace

TEST_CASE("bessel_k1 against the high-precision oracle") {
  for (const auto& [x, expect] : kBesselOracle)
    CHECK(std::abs(bessel_k1(x) - expect) <= 1e-10 * expect);
  CHECK(std::isinf(bessel_k1(0.0)));
  CHECK_THROWS(bessel_k1(-1.0));
}

TEST_CASE("matern_correlation") {
  CHECK(matern_correlation(0.0, 2.0) == 1.0);
  // value at d = r, frozen from the oracle; also the paper's "near 0.1"
  CHECK(std::abs(matern_correlation(1.0, 1.0) - 0.13966747401529314) <= 1e-10);
  CHECK(matern_correlation(3.0, 3.0) == doctest::Approx(0.13966747401529314).epsilon(1e-12));
  CHECK(matern_correlation(10.0, 1.0) < 1e-6);
  for (const auto& [d, expect] : kMaternOracle)
    CHECK(std::abs(matern_correlation(d, 1.0) - expect) <= 1e-8 * std::max(expect, 1e-4));
  CHECK_THROWS(matern_correlation(-1.0, 1.0));
  CHECK_THROWS(matern_correlation(1.0, 0.0));
}

TEST_CASE("barrier spec validation and subdomain ranges") {
  BarrierSpec spec{2.0, 0.1, 1.5, {}};
  const auto r2 = spec.subdomain_ranges(2);
  CHECK(r2 == std::vector<double>{2.0, 0.2});
  const auto r3 = spec.subdomain_ranges(3);
  CHECK(r3 == std::vector<double>{2.0, 0.2, 0.2});

  CHECK_THROWS(BarrierSpec{0.0, 0.1, 1.0, {}}.validate());
  CHECK_THROWS(BarrierSpec{1.0, 0.0, 1.0, {}}.validate());
  CHECK_THROWS(BarrierSpec{1.0, 1.5, 1.0, {}}.validate());
  CHECK_THROWS(BarrierSpec{1.0, 0.1, -1.0, {}}.validate());
  CHECK_THROWS(BarrierSpec{1.0, 0.1, 1.0, {1.0}}.subdomain_ranges(2));
}

TEST_CASE("assemble_A: limits and linearity") {
  const TriangleMesh mesh = strip_mesh();
  const FemMatrices fem = assemble(mesh);

  // zero ranges give back the mass matrix
  const SparseMatrix a0 = assemble_A(fem, BarrierSpec{1.0, 0.5, 1.0, {0.0, 0.0}});
  CHECK((Eigen::MatrixXd(a0) - Eigen::MatrixXd(fem.mass)).cwiseAbs().maxCoeff() == 0.0);

  // doubling every range quadruples A - J
  const SparseMatrix a1 = assemble_A(fem, BarrierSpec{1.0, 0.5, 1.0, {}});
  const SparseMatrix a2 = assemble_A(fem, BarrierSpec{2.0, 0.5, 1.0, {}});
  const Eigen::MatrixXd d1 = Eigen::MatrixXd(a1) - Eigen::MatrixXd(fem.mass);
  const Eigen::MatrixXd d2 = Eigen::MatrixXd(a2) - Eigen::MatrixXd(fem.mass);
  CHECK((d2 - 4.0 * d1).cwiseAbs().maxCoeff() <= 1e-12 * d2.cwiseAbs().maxCoeff());

  // single subdomain equals the explicit one-range list
  TriangleMesh plain = mesh;
  plain.subdomain.assign(mesh.triangle_count(), 1);
  const FemMatrices fem1 = assemble(plain);
  const SparseMatrix b1 = assemble_A(fem1, BarrierSpec{1.7, 0.1, 1.0, {}});
  const SparseMatrix b2 = assemble_A(fem1, BarrierSpec{1.0, 0.1, 1.0, {1.7}});
  CHECK((Eigen::MatrixXd(b1) - Eigen::MatrixXd(b2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("assemble_Q: scale law, sparsity, degeneracy") {
  const TriangleMesh mesh = strip_mesh();
  const FemMatrices fem = assemble(mesh);

  SUBCASE("sigma_u is an exact global scale") {
    const PrecisionOperator q1 = assemble_Q(fem, BarrierSpec{1.5, 0.1, 1.0, {}});
    const PrecisionOperator q2 = assemble_Q(fem, BarrierSpec{1.5, 0.1, 2.0, {}});
    const Eigen::MatrixXd m1(q1.matrix());
    const Eigen::MatrixXd m2(q2.matrix());
    CHECK((m2 - m1 / 4.0).cwiseAbs().maxCoeff() <= 1e-14 * m1.cwiseAbs().maxCoeff());
  }

  SUBCASE("sparsity within the two-hop product pattern") {
    const PrecisionOperator op = assemble_Q(fem, BarrierSpec{1.5, 0.1, 1.0, {}});
    const SparseMatrix a = assemble_A(fem, BarrierSpec{1.5, 0.1, 1.0, {}});
    const SparseMatrix aa = a * a;
    std::set<std::pair<int, int>> pattern;
    for (int col = 0; col < aa.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(aa, col); it; ++it)
        pattern.insert({static_cast<int>(it.row()), static_cast<int>(it.col())});
    for (int col = 0; col < op.matrix().outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(op.matrix(), col); it; ++it)
        CHECK(pattern.count({static_cast<int>(it.row()), static_cast<int>(it.col())}) == 1);
  }

  SUBCASE("barrier fraction one reproduces the stationary matrix") {
    const PrecisionOperator mb = assemble_Q(fem, BarrierSpec{1.5, 1.0, 1.2, {}});
    TriangleMesh plain = mesh;
    plain.subdomain.assign(mesh.triangle_count(), 1);
    const FemMatrices fem1 = assemble(plain);
    const PrecisionOperator ms = assemble_Q(fem1, BarrierSpec{1.5, 1.0, 1.2, {}});
    const Eigen::MatrixXd diff = Eigen::MatrixXd(mb.matrix()) - Eigen::MatrixXd(ms.matrix());
    CHECK(diff.cwiseAbs().maxCoeff() <=
          1e-12 * Eigen::MatrixXd(ms.matrix()).cwiseAbs().maxCoeff());
  }

  SUBCASE("zero lumped mass is rejected with a node diagnostic") {
    CHECK_THROWS_AS((void)assemble_Q(fem, BarrierSpec{1.0, 0.5, 1.0, {0.0, 0.0}}),
                    std::runtime_error);
  }

  SUBCASE("SPD across a range sweep") {
    const double edge = 0.5;
    for (double factor : {0.5, 1.0, 2.0, 5.0}) {
      const PrecisionOperator op = assemble_Q(fem, BarrierSpec{factor * edge, 0.1, 1.0, {}});
      CHECK(std::isfinite(op.factorization().log_determinant()));
    }
  }
}

TEST_CASE("correlation and marginal sd against a dense inverse") {
  // fine stationary mesh, dense-inverse oracle
  const TriangleMesh mesh = build_regular_mesh(Rect{0, 0, 3, 3}, 20, 20, 1.5);
  const FemMatrices fem = assemble(mesh);
  const double range = 1.0, sigma_u = 1.1;
  const PrecisionOperator op =
      assemble_Q(fem, BarrierSpec{range, 1.0, sigma_u, {}}, ModelKind::Stationary, mesh.id());
  const int n = op.node_count();

  const Eigen::MatrixXd sigma = Eigen::MatrixXd(op.matrix()).inverse();

  int center = 0;
  double best = 1e30;
  for (int i = 0; i < n; ++i) {
    const double dx = mesh.vertices[i][0] - 1.5, dy = mesh.vertices[i][1] - 1.5;
    if (dx * dx + dy * dy < best) {
      best = dx * dx + dy * dy;
      center = i;
    }
  }

  const Vector surf = op.correlation_surface(center);
  const Vector sd = op.marginal_sd();
  CHECK(surf[center] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(surf.maxCoeff() <= 1.0 + 1e-12);
  CHECK(surf.minCoeff() >= -1.0 - 1e-12);

  double max_corr_err = 0.0, max_sd_err = 0.0;
  for (int i = 0; i < n; ++i) {
    const double oracle_corr = sigma(i, center) / std::sqrt(sigma(i, i) * sigma(center, center));
    max_corr_err = std::max(max_corr_err, std::abs(surf[i] - oracle_corr));
    max_sd_err = std::max(max_sd_err, std::abs(sd[i] - std::sqrt(sigma(i, i))));
  }
  CHECK(max_corr_err <= 1e-8);
  CHECK(max_sd_err <= 1e-8);

  // discrete field matches the analytic correlation in the band
  double max_band_err = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = mesh.vertices[i][0] - mesh.vertices[center][0];
    const double dy = mesh.vertices[i][1] - mesh.vertices[center][1];
    const double d = std::sqrt(dx * dx + dy * dy);
    if (d < 0.3 * range || d > 2.0 * range) continue;
    max_band_err = std::max(max_band_err, std::abs(surf[i] - matern_correlation(d, range)));
  }
  CHECK(max_band_err < 0.05);

  // interior marginal sd near sigma_u
  for (int i = 0; i < n; ++i) {
    const auto& v = mesh.vertices[i];
    if (v[0] < 0.0 || v[0] > 3.0 || v[1] < 0.0 || v[1] > 3.0) continue;
    CHECK(std::abs(sd[i] / sigma_u - 1.0) < 0.05);
  }

  SUBCASE("pair correlation equals the surface") {
    const int other = center + 3;
    CHECK(op.correlation(other, center) == doctest::Approx(surf[other]).epsilon(1e-10));
  }

  SUBCASE("rescale to unit variance") {
    const PrecisionOperator unit = op.rescaled_to_unit_variance();
    CHECK(unit.provenance().rescaled);
    CHECK((unit.marginal_sd() - Vector::Ones(n)).cwiseAbs().maxCoeff() <= 1e-10);
    const Vector surf2 = unit.correlation_surface(center);
    CHECK((surf2 - surf).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("model kind round trip") {
  CHECK(to_string(ModelKind::Stationary) == "ms");
  CHECK(to_string(ModelKind::Barrier) == "mb");
  CHECK(to_string(ModelKind::Neumann) == "mn");
  CHECK(model_kind_from_string("mb") == ModelKind::Barrier);
  CHECK_THROWS(model_kind_from_string("xx"));
}
