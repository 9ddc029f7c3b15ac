// Timing comparison of the OpenMP kernels against their serial references:
// marginal variances, batch sampling, and the MAP grid scan.

#include <chrono>
#include <cstdio>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bgf/experiments.hpp"

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

void set_threads(int t) {
#ifdef _OPENMP
  omp_set_num_threads(t);
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <class F>
double time_ms(F&& f) {
  const double t0 = now_ms();
  f();
  return now_ms() - t0;
}

}  // namespace

int main(int argc, char** argv) {
  int cells = 96;
  if (argc > 1) cells = std::atoi(argv[1]);
  const int hw = max_threads();

  std::printf("mesh: [0,10]^2, %d x %d cells, extension 3\n", cells, cells);
  const bgf::TriangleMesh mesh =
      bgf::build_regular_mesh(bgf::Rect{0, 0, 10, 10}, cells, cells, 3.0);
  const bgf::FemMatrices fem = bgf::assemble(mesh);
  const bgf::PrecisionOperator op =
      bgf::assemble_Q(fem, bgf::BarrierSpec{2.0, 1.0, 1.0, {}}, bgf::ModelKind::Stationary);
  const bgf::Factorization& fact = op.factorization();
  const int n = op.node_count();
  std::printf("nodes: %d, Q nonzeros: %ld, hardware threads: %d\n\n", n,
              static_cast<long>(op.matrix().nonZeros()), hw);

  {
    bgf::Vector ref, par1, parN;
    const double t_ref = time_ms([&] { ref = fact.marginal_variances_reference(); });
    set_threads(1);
    const double t1 = time_ms([&] { par1 = fact.marginal_variances(); });
    set_threads(hw);
    const double tN = time_ms([&] { parN = fact.marginal_variances(); });
    const double diff = (par1 - parN).cwiseAbs().maxCoeff();
    std::printf("marginal variances (n=%d)\n", n);
    std::printf("  serial reference (full solves): %9.1f ms\n", t_ref);
    std::printf("  kernel, 1 thread:               %9.1f ms\n", t1);
    std::printf("  kernel, %d threads:              %9.1f ms  (speedup %.2fx, max |1-N| = %g)\n\n",
                hw, tN, t1 / tN, diff);
  }

  {
    const int count = 256;
    bgf::Matrix s1, sN;
    set_threads(1);
    const double t1 = time_ms([&] { s1 = fact.sample_many(7, count); });
    set_threads(hw);
    const double tN = time_ms([&] { sN = fact.sample_many(7, count); });
    const double diff = (s1 - sN).cwiseAbs().maxCoeff();
    std::printf("batch sampling (%d draws)\n", count);
    std::printf("  1 thread:  %9.1f ms\n", t1);
    std::printf("  %d threads: %9.1f ms  (speedup %.2fx, max |1-N| = %g)\n\n", hw, tN, t1 / tN,
                diff);
  }

  {
    // one MAP fit on a small horseshoe replicate; grid scan is the parallel part
    bgf::HorseshoeConfig cfg;
    cfg.replicates = 1;
    cfg.n_obs = 300;
    cfg.mesh_edge = 0.15;
    cfg.hyper_mode = bgf::MapOptions{bgf::PcPriors::horseshoe_defaults(), bgf::GridSpec{7, 5, 1.0}};
    set_threads(1);
    const double t1 = time_ms([&] { (void)bgf::run_horseshoe(cfg); });
    set_threads(hw);
    const double tN = time_ms([&] { (void)bgf::run_horseshoe(cfg); });
    std::printf("horseshoe replicate, MAP grid 7^3 + 5^3\n");
    std::printf("  1 thread:  %9.1f ms\n", t1);
    std::printf("  %d threads: %9.1f ms  (speedup %.2fx)\n", hw, tN, t1 / tN);
  }
  return 0;
}
