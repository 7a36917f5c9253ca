#include <doctest.h>

#include <cmath>
#include <random>

#include "mvpb/spectral.hpp"
#include "support.hpp"

using namespace mvpb;

TEST_CASE("mode operator") {
  const LinearModel& m = testing::small_model();
  for (int s : {0, 1}) CHECK((assemble_mode(m, 0.0, s).mat - m.sector(s).L.cast<cplx>()).norm() == 0.0);
  const VelocityBasis& b = m.op0.basis;
  std::mt19937_64 rng(5);
  const Vec g0 = testing::random_vec(b.n(), rng);
  const Vec g = g0 - project(b, g0, Part::P0_1);
  const double eta = 0.8;
  const CVec lhs = assemble_mode(m, eta, 0).mat * g.cast<cplx>();
  const CVec rhs = m.op0.L.cast<cplx>() * g - kI * eta * b.v1.cwiseProduct(g).cast<cplx>();
  CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
}

TEST_CASE("spectrum is dissipative") {
  const LinearModel& m = testing::small_model();
  for (double eta : {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0})
    for (int s : {0, 1}) CHECK(eig(assemble_mode(m, eta, s).mat, false).values.real().maxCoeff() <= 1e-12);
}

TEST_CASE("fluid branches") {
  const LinearModel& m = testing::small_model();
  CHECK_THROWS_AS(eigen_branches(m, 0.5, 8), BranchSwap);
  const BranchSet set = eigen_branches(m, 0.5, 32);
  CHECK(set.zero_count == 5);
  CHECK(std::abs(std::abs(set.of(1).beta_fit) - std::sqrt(8.0 / 3.0)) <= 2e-3);
  CHECK(set.of(1).beta_fit * set.of(-1).beta_fit < 0.0);
  for (size_t k = 0; k < set.etas.size(); ++k) CHECK(std::abs(set.of(2).lambdas[k] - set.of(3).lambdas[k]) <= 1e-8);
  for (int j = -1; j <= 3; ++j) CHECK(std::abs(set.of(j).a_fit - m.tc.a_of(j)) <= 0.01 * m.tc.a_of(j));
}

TEST_CASE("closed-form fluid speeds") {
  for (double eta : {0.0, 0.3, 1.0, 4.0}) {
    Eigen::EigenSolver<Eigen::Matrix<double, 5, 5>> es(fluid_matrix(eta), false);
    for (int j : {-1, 1}) {
      double best = 1e300;
      for (int i = 0; i < 5; ++i) best = std::min(best, std::abs(es.eigenvalues()(i).real() - u_closed(j, eta)));
      CHECK(best <= 1e-12);
    }
  }
  CHECK(std::abs(u_closed(1, 0.0) - std::sqrt(8.0 / 3.0)) <= 1e-15);
}

TEST_CASE("dispersion roots match tracked eigenvalues") {
  const LinearModel& m = testing::small_model();
  const std::vector<double> etas{0.05, 0.1, 0.2};
  DispersionRoots prev;
  for (int j = -1; j <= 1; ++j) {
    const TrackedMode t = track_branch(m, j, etas);
    for (size_t k = 0; k < etas.size(); ++k) {
      const DispersionRoots r = dispersion_roots(m, etas[k]);
      CHECK(std::abs(t.lambdas[k] + kI * etas[k] * r.sigma[j + 1]) <= 1e-6);
    }
  }
  // The reflection symmetry of the 16 x 8 grid holds only to ~1e-9.
  const ReflectionReport rr = reflection_check(testing::default_model(), 0.2);
  CHECK(rr.corrected <= 1e-10);
}

TEST_CASE("semigroup split at t = 0") {
  const LinearModel& m = testing::small_model();
  const SemigroupSplit s = semigroup_split(m, 0.0, 0.3, 0, 1.0);
  const int n = m.op0.basis.n();
  CHECK((s.S - CMat::Identity(n, n)).norm() <= 1e-10);
  CHECK(std::isfinite(operator_norm_eta(m.op0.basis, s.S2, 0.3)));
  CHECK_THROWS_AS(semigroup_split(m, -1.0, 0.3, 0, 1.0), ValidationError);
}

TEST_CASE("linear algebra kernels") {
  CMat A(2, 2);
  A << cplx(0, 0), cplx(1, 0), cplx(-1, 0), cplx(0, 0);
  const CMat E = expm(A);
  CHECK(std::abs(E(0, 0) - std::cos(1.0)) <= 1e-14);
  CHECK(std::abs(E(0, 1) - std::sin(1.0)) <= 1e-14);
  const Propagator p(A);
  CHECK((p.matrix(1.0) - E).norm() <= 1e-13);
}
