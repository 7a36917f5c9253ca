#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "mvpb/velocity.hpp"
#include "support.hpp"

using namespace mvpb;

namespace {

double simpson(int n, double lo, double hi, const std::function<double(double)>& f) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(lo + i * h);
  return s * h / 3.0;
}

// int_{|v| <= R} v1^a |v_perp|^c M dv in spherical coordinates.
double ball_moment(int a, int c, double R) {
  const double radial = simpson(4000, 0.0, R, [&](double r) {
    return std::pow(r, a + c + 2) * std::exp(-0.5 * r * r) / std::pow(2.0 * kPi, 1.5);
  });
  const double polar = simpson(4000, -1.0, 1.0, [&](double x) { return std::pow(x, a) * std::pow(1.0 - x * x, 0.5 * c); });
  return 2.0 * kPi * radial * polar;
}

// E[x^a] for a standard normal.
double normal_moment(int a) {
  return simpson(4000, -12.0, 12.0, [&](double x) { return std::pow(x, a) * std::exp(-0.5 * x * x); }) /
         std::sqrt(2.0 * kPi);
}

}  // namespace

TEST_CASE("default basis integrates the Maxwellian") {
  const VelocityBasis b = build_basis(0, 32, 16, 8.0);
  CHECK(b.n() == 32 * 16);
  CHECK(std::abs(b.maxwellian.dot(b.weights) - 1.0) <= 1e-10);
  CHECK(b.weights.minCoeff() > 0.0);
  CHECK(b.vr.minCoeff() >= 0.0);
  for (int i = 0; i < b.n(); ++i) CHECK(std::hypot(b.v1(i), b.vr(i)) <= 8.0);
}

TEST_CASE("invariants are orthonormal") {
  for (int m : {0, 1}) {
    const VelocityBasis b = build_basis(m, 32, 16, 8.0);
    const auto& chi = b.chi();
    for (size_t j = 0; j < chi.size(); ++j)
      for (size_t k = 0; k < chi.size(); ++k) CHECK(std::abs(b.inner(chi[j], chi[k]) - (j == k)) <= 1e-8);
  }
  const VelocityBasis b = build_basis(0, 32, 16, 8.0);
  const Vec c0 = chi_analytic(b, 0), c4 = chi_analytic(b, 4);
  CHECK(std::abs(b.inner(c0, c4)) <= 1e-9);
  CHECK(std::abs(b.inner(c4, c4) - 1.0) <= 1e-8);
}

TEST_CASE("small vmax is rejected") {
  CHECK_THROWS_AS(build_basis(0, 32, 16, 5.0), ValidationError);
  CHECK_THROWS_AS(build_basis(2, 32, 16, 8.0), ValidationError);
}

TEST_CASE("quadrature reproduces Gaussian moments") {
  const VelocityBasis b = build_basis(0, 32, 16, 8.0);
  for (int a = 0; a <= 9; ++a)
    for (int c = 0; c + a <= 9; c += 2) {
      Vec f = b.maxwellian;
      for (int i = 0; i < b.n(); ++i) f(i) *= std::pow(b.v1(i), a) * std::pow(b.vr(i), c);
      const double exact = ball_moment(a, c, 8.0);
      INFO("a = " << a << ", c = " << c << ", exact = " << exact);
      CHECK(std::abs(f.dot(b.weights) - exact) <= 1e-9 * std::max(1.0, std::abs(exact)));
    }
}

TEST_CASE("projections") {
  const VelocityBasis b = build_basis(0, 32, 16, 8.0);
  const Vec& chi4 = b.chi()[2];
  CHECK((project(b, chi4, Part::P0) - chi4).norm() <= 1e-12);
  CHECK(project(b, chi4, Part::P1).norm() <= 1e-12);

  // v1^2 sqrt(M): coefficients E[v1^2] = 1 on chi0 and (E[v1^2 |v|^2] - 3) / sqrt 6 on chi4.
  const double e4 = normal_moment(4) + 2.0 * normal_moment(2) * normal_moment(2);
  const Vec f = b.v1.cwiseAbs2().cwiseProduct(b.sqrt_m);
  const Vec expect = normal_moment(2) * b.chi()[0] + (e4 - 3.0) / std::sqrt(6.0) * b.chi()[2];
  CHECK(b.norm(Vec(project(b, f, Part::P0) - expect)) <= 1e-9);

  std::mt19937_64 rng(7);
  for (int r = 0; r < 20; ++r) {
    const Vec g = testing::random_vec(b.n(), rng);
    const Vec p0 = project(b, g, Part::P0), p1 = project(b, g, Part::P1);
    CHECK(b.norm(Vec(project(b, p0, Part::P0) - p0)) <= 1e-12 * b.norm(g));
    CHECK(b.norm(Vec(p0 + p1 - g)) <= 1e-12 * b.norm(g));
    CHECK(b.norm(Vec(project(b, p1, Part::P0))) <= 1e-12 * b.norm(g));
    const Vec s = project(b, g, Part::P0_1) + project(b, g, Part::P0_2) + project(b, g, Part::P0_3);
    CHECK(b.norm(Vec(s - p0)) <= 1e-12 * b.norm(g));
  }
}

TEST_CASE("eta pairing") {
  const VelocityBasis b = build_basis(0, 32, 16, 8.0);
  const CVec c0 = b.chi()[0].cast<cplx>(), c1 = b.chi()[1].cast<cplx>();
  CHECK(std::abs(inner_eta(b, c0, c0, 0.0) - 2.0) <= 1e-12);
  CHECK(std::abs(inner_eta(b, c0, c0, 1.0) - 1.5) <= 1e-12);
  for (double eta : {0.0, 0.7, 3.0}) CHECK(std::abs(inner_eta(b, c1, c1, eta) - 1.0) <= 1e-12);

  std::mt19937_64 rng(3);
  const Vec g = project(b, testing::random_vec(b.n(), rng), Part::P1);
  const CVec h = testing::random_vec(b.n(), rng).cast<cplx>();
  CHECK(std::abs(inner_eta(b, g.cast<cplx>(), h, 0.4) - b.bilinear(g.cast<cplx>(), h)) <= 1e-12);

  // Operator norm of the identity is one in any eta geometry.
  CHECK(std::abs(operator_norm_eta(b, CMat::Identity(b.n(), b.n()), 0.3) - 1.0) <= 1e-10);
}

TEST_CASE("d/dv1 of a smooth function") {
  const VelocityBasis b = build_basis(0, 32, 16, 8.0);
  const Mat D = dv1_matrix(b);
  Vec f(b.n()), df(b.n());
  for (int i = 0; i < b.n(); ++i) {
    const double e = std::exp(-0.25 * (b.v1(i) * b.v1(i) + b.vr(i) * b.vr(i)));
    f(i) = (1.0 + b.v1(i)) * e;
    df(i) = e - 0.5 * b.v1(i) * (1.0 + b.v1(i)) * e;
  }
  CHECK((D * f - df).cwiseAbs().maxCoeff() <= 5e-2);
  CHECK((weight_w(b).array() >= 1.0).all());
}
