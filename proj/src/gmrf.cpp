#include "bgf/gmrf.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bgf {

namespace {

// Throws NotSpdError with the original (un-permuted) pivot index.
template <class Solver>
double checked_log_determinant(const Solver& solver, int n) {
  if (solver.info() != Eigen::Success)
    throw NotSpdError("sparse factorization failed (matrix not SPD or structurally singular)", -1);
  const auto& d = solver.vectorD();
  for (int k = 0; k < n; ++k) {
    if (!(d[k] > 0.0) || !std::isfinite(d[k])) {
      const int original = solver.permutationPinv().indices()[k];
      std::ostringstream msg;
      msg << "matrix is not positive definite: pivot " << original << " has value " << d[k];
      throw NotSpdError(msg.str(), original);
    }
  }
  return d.array().log().sum();
}

}  // namespace

Factorization::Factorization(const SparseMatrix& q) {
  if (q.rows() != q.cols()) throw std::invalid_argument("Factorization: matrix not square");
  n_ = static_cast<int>(q.rows());
  solver_.compute(q);
  logdet_ = checked_log_determinant(solver_, n_);
}

Vector Factorization::solve(const Vector& b) const {
  if (b.size() != n_) throw std::invalid_argument("solve: dimension mismatch");
  return solver_.solve(b);
}

Matrix Factorization::solve(const Matrix& b) const {
  if (b.rows() != n_) throw std::invalid_argument("solve: dimension mismatch");
  return solver_.solve(b);
}

void Factorization::sample_into(std::uint64_t seed, std::uint64_t stream, double* out) const {
  RngStream rng = RngStream::substream(seed, stream);
  Vector w(n_);
  const auto& d = solver_.vectorD();
  for (int i = 0; i < n_; ++i) w[i] = rng.normal() / std::sqrt(d[i]);
  solver_.matrixU().solveInPlace(w);
  Eigen::Map<Vector>(out, n_) = solver_.permutationPinv() * w;
}

Vector Factorization::sample(std::uint64_t seed) const {
  Vector x(n_);
  sample_into(seed, 0, x.data());
  return x;
}

Matrix Factorization::sample_many(std::uint64_t seed, int count) const {
  Matrix x(n_, count);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < count; ++c) sample_into(seed, static_cast<std::uint64_t>(c), x.col(c).data());
  return x;
}

Vector Factorization::marginal_variances() const {
  const int n = n_;
  const auto& perm = solver_.permutationP().indices();
  const Vector dinv = solver_.vectorD().cwiseInverse();
  // underlying CSC factor; unit lower diagonal, entries with row > col only
  const SparseMatrix& lmat = solver_.matrixL().nestedExpression();
  Vector out(n);

#pragma omp parallel
  {
    Vector y = Vector::Zero(n);
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      const int k = perm[i];
      y[k] = 1.0;
      for (int j = k; j < n; ++j) {
        const double v = y[j];
        if (v == 0.0) continue;
        for (SparseMatrix::InnerIterator it(lmat, j); it; ++it)
          if (it.row() > j) y[it.row()] -= it.value() * v;
      }
      // Sigma_ii = || D^-1/2 L^-1 P e_i ||^2; the solve only touches y[k..n)
      double acc = 0.0;
      for (int j = k; j < n; ++j) {
        acc += y[j] * y[j] * dinv[j];
        y[j] = 0.0;
      }
      out[i] = acc;
    }
  }
  return out;
}

SparseMatrix Factorization::reconstruct() const {
  const SparseMatrix& stored = solver_.matrixL().nestedExpression();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(stored.nonZeros() + n_);
  for (int i = 0; i < n_; ++i) trips.emplace_back(i, i, 1.0);  // unit diagonal
  for (int col = 0; col < stored.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(stored, col); it; ++it)
      if (it.row() > it.col())
        trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  SparseMatrix l(n_, n_);
  l.setFromTriplets(trips.begin(), trips.end());
  SparseMatrix m = l * solver_.vectorD().asDiagonal() * SparseMatrix(l.transpose());
  SparseMatrix unperm = solver_.permutationPinv() * m;
  return unperm * solver_.permutationP();
}

Vector Factorization::marginal_variances_reference() const {
  Vector out(n_);
  Vector e = Vector::Zero(n_);
  for (int i = 0; i < n_; ++i) {
    e[i] = 1.0;
    out[i] = solver_.solve(e)[i];
    e[i] = 0.0;
  }
  return out;
}

void RefactorSolver::refactor(const SparseMatrix& q) {
  if (!analyzed_) {
    solver_.analyzePattern(q);
    analyzed_ = true;
  }
  solver_.factorize(q);
  logdet_ = checked_log_determinant(solver_, static_cast<int>(q.rows()));
}

Posterior condition(const SparseMatrix& prior, const Projector& proj, double noise_variance,
                    const Vector& y, int extra_flat_effects) {
  if (!(noise_variance > 0.0))
    throw std::invalid_argument("condition: noise variance must be positive");
  if (proj.rows() != y.size())
    throw std::invalid_argument("condition: y length does not match projector rows");
  if (extra_flat_effects < 0) throw std::invalid_argument("condition: negative flat effect count");

  const auto bad = proj.invalid_rows();
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "condition: " << bad.size() << " observation(s) outside the mesh:";
    for (std::size_t i = 0; i < bad.size() && i < 20; ++i) msg << ' ' << bad[i];
    if (bad.size() > 20) msg << " ...";
    throw std::invalid_argument(msg.str());
  }

  const int nf = static_cast<int>(prior.rows());
  const int kf = extra_flat_effects;
  const int n = nf + kf;
  const int m = proj.rows();

  std::vector<Eigen::Triplet<double>> ptrips;
  ptrips.reserve(static_cast<std::size_t>(m) * (3 + kf));
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < 3; ++c)
      if (proj.weights[r][c] != 0.0) ptrips.emplace_back(r, proj.nodes[r][c], proj.weights[r][c]);
    for (int t = 0; t < kf; ++t) ptrips.emplace_back(r, nf + t, 1.0);
  }
  SparseMatrix p(m, n);
  p.setFromTriplets(ptrips.begin(), ptrips.end());

  std::vector<Eigen::Triplet<double>> qtrips;
  qtrips.reserve(prior.nonZeros() + kf);
  for (int col = 0; col < prior.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(prior, col); it; ++it)
      qtrips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int t = 0; t < kf; ++t) qtrips.emplace_back(nf + t, nf + t, kFlatPrecision);
  SparseMatrix prior_aug(n, n);
  prior_aug.setFromTriplets(qtrips.begin(), qtrips.end());

  SparseMatrix qpost = prior_aug;
  if (m > 0) qpost += SparseMatrix(p.transpose() * p) / noise_variance;

  const Vector b = m > 0 ? Vector(p.transpose() * y / noise_variance) : Vector::Zero(n);
  auto fact = std::make_shared<const Factorization>(qpost);

  Posterior post;
  post.mean = fact->solve(b);
  post.precision = std::move(qpost);
  post.factorization = std::move(fact);
  post.field_dim = nf;
  post.flat_count = kf;
  return post;
}

}  // namespace bgf
