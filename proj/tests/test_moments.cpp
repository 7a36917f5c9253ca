#include <doctest.h>

#include <cmath>

#include "mvpb/moments.hpp"
#include "support.hpp"

using namespace mvpb;

TEST_CASE("moment extraction") {
  const VelocityBasis& b = testing::small_model().op0.basis;
  const SpaceGrid g(10.0, 64);
  Vec bump(g.nx);
  for (int j = 0; j < g.nx; ++j) bump(j) = std::exp(-g.x(j) * g.x(j));
  const Mat f0 = b.chi()[0] * bump.transpose(), f4 = b.chi()[2] * bump.transpose();
  const MomentState a = extract_moments(b, g, f0), c = extract_moments(b, g, f4);
  CHECK((a.n - bump).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(a.m1.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(a.q.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((c.q - bump).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(c.n.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(c.m1.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("closure acoustic speeds") {
  const TransportCoefficients& tc = testing::small_model().tc;
  const NspDispersion with = nsp_dispersion(tc, true, {0.1, 1.0, 10.0});
  const NspDispersion without = nsp_dispersion(tc, false, {0.1, 1.0, 10.0});
  CHECK(std::abs(with.speed[2] - std::sqrt(8.0 / 3.0)) <= 1e-6);
  CHECK(std::abs(with.speed[0] + std::sqrt(8.0 / 3.0)) <= 1e-6);
  // Oracle: direct eigensolve of the hyperbolic 3 x 3 symbol.
  Eigen::Matrix3d A;
  A << 0, 1, 0, 1, 0, std::sqrt(2.0 / 3.0), 0, std::sqrt(2.0 / 3.0), 0;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(A);
  CHECK(std::abs(without.speed[2] - es.eigenvalues()(2)) <= 1e-6);
  CHECK(std::abs(without.speed[0] - es.eigenvalues()(0)) <= 1e-6);
  CHECK(with.max_re <= 0.0);
  for (int j = -1; j <= 1; ++j) CHECK(std::abs(with.damping[j + 1] - tc.a_of(j)) <= 0.05 * tc.a_of(j));
}

TEST_CASE("closure conserves mass") {
  const TransportCoefficients& tc = testing::small_model().tc;
  const SpaceGrid g(40.0, 256);
  MomentState s;
  s.n = Vec::Zero(g.nx);
  for (int j = 0; j < g.nx; ++j) s.n(j) = 1e-3 * std::exp(-g.x(j) * g.x(j) / 8);
  s.m1 = 0.5 * s.n;
  s.m2 = s.m3 = Vec::Zero(g.nx);
  s.q = -s.n;
  s.phi = -poisson_inverse(g, s.n);
  const NspTrajectory tr = nsp_evolve(tc, g, s, {1.0, 2.0}, 0.05);
  CHECK(tr.states.size() == 2);
  CHECK(tr.mass_drift <= 1e-14);
  CHECK_THROWS_AS(nsp_evolve(tc, g, s, {1.0}, 2.0), CFLViolation);
}

TEST_CASE("energy functionals") {
  const VelocityBasis& b = testing::small_model().op0.basis;
  const SpaceGrid g(10.0, 64);
  const EnergyValues z = energy_functionals(b, g, Mat::Zero(b.n(), g.nx), Vec::Zero(g.nx), 2, 1.0);
  CHECK(z.E == 0.0);
  CHECK(z.H == 0.0);
  CHECK(z.D == 0.0);
  Mat f(b.n(), g.nx);
  for (int j = 0; j < g.nx; ++j) f.col(j) = std::exp(-g.x(j) * g.x(j)) * b.chi()[1];
  const EnergyValues e = energy_functionals(b, g, f, Vec::Zero(g.nx), 1, 0.0);
  CHECK(e.E > 0.0);
  CHECK(e.D >= e.H);
}

TEST_CASE("continuity along the linear flow") {
  const LinearModel& m = testing::default_model();
  const VelocityBasis& b = m.op0.basis;
  const SpaceGrid g(40.0, 128);
  Mat f(b.n(), g.nx);
  for (int j = 0; j < g.nx; ++j) f.col(j) = 1e-3 * std::exp(-g.x(j) * g.x(j) / 8) * (b.chi()[0] + b.chi()[1]);
  CHECK(continuity_residual(m, g, f, 1.0, 5e-4) <= 1e-8);
}
