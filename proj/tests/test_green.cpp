#include <doctest.h>

#include <cmath>

#include "mvpb/green.hpp"
#include "support.hpp"

using namespace mvpb;

TEST_CASE("space grid transforms") {
  const SpaceGrid g(10.0, 64);
  Vec f(g.nx);
  for (int j = 0; j < g.nx; ++j) f(j) = std::exp(-g.x(j) * g.x(j)) + 0.1 * std::sin(3 * g.deta * g.x(j));
  CHECK((g.to_physical(g.to_spectral(f)) - f).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK_THROWS_AS(SpaceGrid(10.0, 100), ValidationError);
}

TEST_CASE("Poisson inverse symbol") {
  const SpaceGrid g(10.0, 128);
  const double eta = 5 * g.deta;
  Vec c(g.nx);
  for (int j = 0; j < g.nx; ++j) c(j) = std::cos(eta * g.x(j));
  CHECK((poisson_inverse(g, c) - c / (1 + eta * eta)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("Poisson inverse of a narrow Gaussian") {
  const SpaceGrid g(40.0, 4096);
  const double w = 0.02;
  Vec n(g.nx);
  for (int j = 0; j < g.nx; ++j) n(j) = std::exp(-0.5 * g.x(j) * g.x(j) / (w * w)) / (w * std::sqrt(2 * kPi));
  const Vec u = poisson_inverse(g, n);
  for (double x : {-1.0, 1.0}) {
    const int j = g.nearest_index(x);
    CHECK(std::abs(u(j) - 0.5 * std::exp(-std::abs(g.x(j)))) <= 0.02 * 0.5 * std::exp(-1.0));
  }
}

TEST_CASE("fits on synthetic data") {
  std::vector<double> t, p, w2, q;
  for (int i = 0; i < 10; ++i) {
    const double s = 10.0 * i;
    t.push_back(s);
    p.push_back(std::pow(1 + s, -0.5));
    q.push_back(3.0 / (1 + s));
  }
  const SpaceGrid g(400.0, 8192);
  for (double s : t) {
    Vec prof(g.nx);
    for (int j = 0; j < g.nx; ++j) prof(j) = std::pow(1 + s, -0.5) * std::exp(-g.x(j) * g.x(j) / (4 * (1 + s)));
    w2.push_back(profile_variance(g.x, prof, -g.L_dom, g.L_dom));
  }
  CHECK(std::abs(profile_fit(t, p).exponent + 0.5) <= 1e-3);
  CHECK(std::abs(profile_fit(t, q).exponent + 1.0) <= 1e-3);
  CHECK(std::abs(width_fit(t, w2).D - 4.0) <= 0.04);
  std::vector<double> noise{1, 5, 0.2, 3, 0.01, 9, 0.5, 2};
  CHECK_THROWS_AS(profile_fit(std::vector<double>(t.begin(), t.begin() + 8), noise), PoorFit);
  const LineFit lf = line_fit({0, 1, 2}, {1, 3, 5});
  CHECK(std::abs(lf.slope - 2.0) <= 1e-14);
  CHECK(std::abs(lf.r2 - 1.0) <= 1e-14);
}

TEST_CASE("hump centers") {
  const SpaceGrid g(50.0, 1024);
  Vec p(g.nx);
  for (int j = 0; j < g.nx; ++j) {
    const double x = g.x(j);
    p(j) = std::exp(-(x - 20.3) * (x - 20.3) / 8) + std::exp(-(x + 20.3) * (x + 20.3) / 8) + std::exp(-x * x / 8);
  }
  const std::vector<double> c = hump_centers(g.x, p);
  REQUIRE(c.size() == 3);
  CHECK(std::abs(c[0] + 20.3) <= g.dx);
  CHECK(std::abs(c[1]) <= g.dx);
  CHECK(std::abs(c[2] - 20.3) <= g.dx);
}

TEST_CASE("Green's function at t = 0 carries unit mass") {
  const LinearModel& m = testing::small_model();
  const SpaceGrid g(8.0, 64);
  const std::vector<Seed> seeds = default_seeds(m);
  const GreenSynthesis G = synthesize_green(m, {0.0, 0.5}, g, {seeds[0]}, 0.5);
  const VelocityBasis& b = m.op0.basis;
  const Mat& P = G.G.phys[0][0];
  double mass = 0.0;
  for (int j = 0; j < g.nx; ++j) mass += b.inner(Vec(P.col(j)), b.chi()[0]) * g.dx;
  CHECK(std::abs(mass - 1.0) <= 1e-8);
  CHECK(G.max_contraction <= 1.0 + 1e-10);
}

TEST_CASE("zeroth kinetic wave matches its closed form") {
  const LinearModel& m = testing::small_model();
  const SpaceGrid g(8.0, 32);
  const std::vector<Seed> seeds = default_seeds(m);
  const KineticWaveSet w = kinetic_waves(m, 2, {0.0, 0.5, 1.0}, g, {seeds[0], seeds[3]});
  CHECK(w.j0_error <= 1e-12);
}
