#include <doctest.h>

#include <cmath>
#include <random>

#include "mvpb/nonlinear.hpp"
#include "support.hpp"

using namespace mvpb;

namespace {

const GammaTensor& small_gamma() {
  static const GammaTensor g = build_gamma(testing::small_model().op0.basis, {}, testing::cache_dir());
  return g;
}

Vec maxwellian_weighted(const VelocityBasis& b, std::mt19937_64& rng) {
  return b.sqrt_m.cwiseProduct(testing::random_vec(b.n(), rng));
}

}  // namespace

TEST_CASE("collision tensor structure") {
  const VelocityBasis tiny = build_basis(0, 8, 4, 8.0);
  const GammaTensor g = build_gamma(tiny);
  std::mt19937_64 rng(1);
  std::vector<int> all(tiny.n());
  for (int i = 0; i < tiny.n(); ++i) all[i] = i;
  for (int r = 0; r < 3; ++r) {
    const Vec f = maxwellian_weighted(tiny, rng), h = maxwellian_weighted(tiny, rng);
    const Vec a = g.apply(f, h, true);
    CHECK((a - g.apply(h, f, true)).cwiseAbs().maxCoeff() <= 1e-13 * a.cwiseAbs().maxCoeff());
    CHECK((a - gamma_direct(tiny, f, h, all)).cwiseAbs().maxCoeff() <= 1e-10 * a.cwiseAbs().maxCoeff());
    const Vec p = g.apply(f, h);
    for (const Vec& c : tiny.chi()) CHECK(std::abs(tiny.inner(p, c)) <= 1e-12 * tiny.norm(f) * tiny.norm(h));
  }
  GammaQuadrature coarse;
  coarse.polar = 6;
  CHECK_THROWS_AS(build_gamma(tiny, coarse), ValidationError);
  CHECK_THROWS_AS(build_gamma(tiny, {}, {}, 1024.0), MemoryBudget);
}

TEST_CASE("collision tensor at the nonlinear resolution") {
  const GammaTensor& g = small_gamma();
  const VelocityBasis& b = testing::small_model().op0.basis;
  // Equilibrium is a collision invariant: vmax truncation only.
  CHECK(g.apply(b.sqrt_m, b.sqrt_m, true).cwiseAbs().maxCoeff() <= 1e-6);
  std::mt19937_64 rng(2);
  const Vec f = maxwellian_weighted(b, rng), h = maxwellian_weighted(b, rng);
  std::vector<int> targets{0, 17, 40, 77, 127};
  const Vec d = gamma_direct(b, f, h, targets);
  const Vec a = g.apply(f, h, true);
  for (size_t i = 0; i < targets.size(); ++i) CHECK(std::abs(a(targets[i]) - d(i)) <= 1e-10 * a.cwiseAbs().maxCoeff());
}

TEST_CASE("nonlinear Poisson solve") {
  const SpaceGrid g(20.0, 128);
  const PoissonResult z = poisson_newton(g, Vec::Zero(g.nx));
  CHECK(z.phi.cwiseAbs().maxCoeff() == 0.0);
  Vec n(g.nx);
  for (int j = 0; j < g.nx; ++j) n(j) = 0.3 * std::exp(-g.x(j) * g.x(j));
  const PoissonResult r = poisson_newton(g, n);
  CHECK(r.residual <= 1e-12);
  CHECK(poisson_residual(g, n, r.phi) <= 1e-12);
  // Small data: the linear relation to first order.
  const PoissonResult s = poisson_newton(g, Vec(1e-6 * n));
  CHECK((s.phi + poisson_inverse(g, Vec(1e-6 * n))).cwiseAbs().maxCoeff() <= 1e-11);
  CHECK_THROWS_AS(poisson_newton(g, Vec(2.0 * n)), ValidationError);
}

TEST_CASE("linear stepper matches the mode exponential") {
  const LinearModel& m = testing::small_model();
  const VelocityBasis& b = m.op0.basis;
  const SpaceGrid g(20.0, 64);
  StepperOptions o;
  o.gamma = o.field = o.poisson_nonlinear = false;
  const double dt = 0.1;
  const Stepper st(m, g, dt, o);
  Mat f(b.n(), g.nx);
  for (int j = 0; j < g.nx; ++j) f.col(j) = 0.05 * std::exp(-g.x(j) * g.x(j) / 4) * (b.chi()[0] + b.chi()[2]);
  KineticState s = st.initial(f);
  CMat ref = s.f_hat;
  for (int k = 0; k < g.modes(); ++k) ref.col(k) = expm(CMat(dt * assemble_mode(m, g.eta(k), 0).mat)) * ref.col(k);
  st.step(s);
  CHECK((s.f_hat - ref).norm() <= 1e-10 * ref.norm());
}

TEST_CASE("full stepper: mass, Poisson residual and second order") {
  const LinearModel& m = testing::small_model();
  const VelocityBasis& b = m.op0.basis;
  const SpaceGrid g(20.0, 128);
  Mat f(b.n(), g.nx);
  const Vec prof = (b.chi()[0] + b.chi()[1] + b.chi()[2]) / std::sqrt(3.0);
  for (int j = 0; j < g.nx; ++j)
    f.col(j) = 0.05 * std::exp(-g.x(j) * g.x(j) / 4) * (prof + 0.3 * b.sqrt_m.cwiseProduct(b.v1.cwiseAbs2()));
  std::vector<Mat> out;
  for (double dt : {0.2, 0.1, 0.05}) {
    const Stepper st(m, g, dt, {}, &small_gamma());
    KineticState s = st.initial(f);
    const double m0 = st.density(st.physical(s)).sum() * g.dx;
    for (int i = 0; i < std::lround(1.0 / dt); ++i) st.step(s);
    const Mat F = st.physical(s);
    CHECK(std::abs(st.density(F).sum() * g.dx - m0) <= 1e-8);
    CHECK(poisson_residual(g, st.density(F), s.phi) <= 1e-10);
    out.push_back(F);
  }
  const double ratio = (out[0] - out[1]).norm() / (out[1] - out[2]).norm();
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
}

TEST_CASE("profiles and weighted norms") {
  CHECK(diffusive_profile(0.0, 0.0, 0.5) == 1.0);
  CHECK(std::abs(diffusive_profile(3.0, 2.0, 1.0) - 0.5) <= 1e-15);
  const VelocityBasis& b = testing::small_model().op0.basis;
  Mat f = Mat::Zero(b.n(), 2);
  f(5, 1) = -2.0;
  const Vec s = weighted_sup(b, f, 3.0);
  CHECK(s(0) == 0.0);
  CHECK(std::abs(s(1) - 2.0 * std::pow(1 + b.v1(5) * b.v1(5) + b.vr(5) * b.vr(5), 1.5)) <= 1e-12 * s(1));
}
