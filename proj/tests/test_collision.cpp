#include <doctest.h>

#include <cmath>
#include <random>

#include "mvpb/collision.hpp"
#include "support.hpp"

using namespace mvpb;

TEST_CASE("collision frequency") {
  // Series limit 2 sqrt(2 pi) against the closed form at small speed.
  CHECK(std::abs(nu_of_speed(1e-4) - 5.013257) <= 1e-5);
  CHECK(std::abs(nu_of_speed(0.0) - 2.0 * std::sqrt(2.0 * kPi)) <= 1e-12);
  CHECK(std::abs(nu_of_speed(50.0) / 50.0 / kPi - 1.0) <= 0.01);
  const NuBounds nb = fit_nu_bounds(8.0);
  CHECK(nb.nu0 > 0.0);
  for (double r = 0.0; r <= 8.0; r += 0.01) {
    CHECK(nu_of_speed(r) >= nb.nu0 * (1.0 + r) * (1.0 - 1e-12));
    CHECK(nu_of_speed(r) <= nb.nu1 * (1.0 + r) * (1.0 + 1e-12));
  }
}

TEST_CASE("default operator structure") {
  const LinearModel& m = testing::default_model();
  const CollisionOperator& op = m.op0;
  CHECK(op.kchi0_error <= 1e-4);
  for (const CollisionOperator* o : {&m.op0, &m.op1}) {
    const Mat S = o->symmetric_form(o->K);
    CHECK((S - S.transpose()).norm() <= 1e-8 * S.norm());
    for (const Vec& c : o->basis.chi()) CHECK(o->basis.norm(Vec(o->L * c)) <= 1e-6 * o->basis.norm(c));
  }
  // Null space: three invariants in sector 0, the doublet in sector 1.
  std::vector<double> ev;
  for (const CollisionOperator* o : {&m.op0, &m.op1}) {
    const Mat S = o->symmetric_form(o->L);
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().maxCoeff() <= 1e-6);
    for (int i = 0; i < es.eigenvalues().size(); ++i) ev.push_back(es.eigenvalues()(i));
    if (o == &m.op1) ev.push_back(es.eigenvalues().maxCoeff());
  }
  std::sort(ev.begin(), ev.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  for (int i = 0; i < 5; ++i) CHECK(std::abs(ev[i]) <= 1e-4);
  CHECK(ev[5] <= -m.mu_hat() * (1.0 - 1e-12));
  CHECK(m.mu_hat() > 0.0);

  // Compactness proxy: K's spectrum decays away from its leading cluster.
  const Mat SK = op.symmetric_form(op.K_raw);
  Eigen::SelfAdjointEigenSolver<Mat> ek(0.5 * (SK + SK.transpose()), Eigen::EigenvaluesOnly);
  Vec mag = ek.eigenvalues().cwiseAbs();
  std::sort(mag.data(), mag.data() + mag.size(), std::greater<>());
  CHECK(mag(mag.size() / 2) <= 0.05 * mag(0));
}

TEST_CASE("coercivity on random vectors") {
  const LinearModel& m = testing::default_model();
  std::mt19937_64 rng(11);
  for (const CollisionOperator* o : {&m.op0, &m.op1}) {
    const VelocityBasis& b = o->basis;
    for (int r = 0; r < 1000; ++r) {
      Vec f = testing::random_vec(b.n(), rng);
      f /= b.norm(f);
      const Vec p1 = project(b, f, Part::P1);
      CHECK(b.inner(Vec(o->L * f), f) <= -o->mu_hat * b.inner(p1, p1) + 1e-12);
    }
  }
}

TEST_CASE("deflated inverse") {
  const CollisionOperator& op = testing::small_model().op0;
  const VelocityBasis& b = op.basis;
  CHECK(b.norm(op.linv_p1(b.chi()[0])) <= 1e-12);
  const Vec g = b.v1.cwiseProduct(b.chi()[1]);
  const Vec h = op.linv_p1(g);
  CHECK(b.norm(Vec(op.L * h - project(b, g, Part::P1))) <= 1e-8);
  for (const Vec& c : b.chi()) CHECK(std::abs(b.inner(h, c)) <= 1e-10);
}

TEST_CASE("transport coefficients") {
  const LinearModel& m = testing::default_model();
  const TransportCoefficients& tc = m.tc;
  CHECK(tc.a_of(2) == tc.kappa1);
  CHECK(std::abs(tc.a_of(2) - tc.a_of(3)) <= 1e-10);
  CHECK(std::abs(tc.a_of(1) - tc.a_of(-1)) <= 1e-10 * tc.a_of(1));
  for (double a : tc.a) CHECK(a > 0.0);
  CHECK(tc.kappa1 > 0.0);
  CHECK(tc.kappa2 > 0.0);
  for (int j = 0; j < 3; ++j) CHECK(tc.b[j][j] == cplx(0.0, 0.0));
  // Acoustic damping from the viscous and thermal parts.
  CHECK(std::abs(tc.a_of(1) - (2.0 / 3.0 * tc.kappa1 + tc.kappa2 / 8.0)) <= 1e-6 * tc.a_of(1));
  CHECK(std::abs(tc.a_of(0) - 0.75 * tc.kappa2) <= 1e-6 * tc.a_of(0));
}

TEST_CASE("kernel cache round trip") {
  const VelocityBasis b = build_basis(0, 8, 4, 8.0);
  const KernelQuadrature q;
  const Mat K = assemble_K(b, q);
  const std::string path = "kcache_test.bin";
  write_kernel_cache(path, b, q, K);
  Mat back;
  REQUIRE(read_kernel_cache(path, b, q, back));
  CHECK((back - K).norm() == 0.0);
  const VelocityBasis other = build_basis(0, 8, 5, 8.0);
  Mat none;
  CHECK_FALSE(read_kernel_cache(path, other, q, none));
  std::remove(path.c_str());
}
