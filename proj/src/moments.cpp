#include "mvpb/moments.hpp"

#include <algorithm>
#include <cmath>

#include "mvpb/parallel.hpp"
#include "mvpb/spectral.hpp"

namespace mvpb {

namespace {

const double kR23 = std::sqrt(2.0 / 3.0);

Vec dx_of(const SpaceGrid& grid, const Vec& f, int order = 1) {
  CVec h = grid.to_spectral(f);
  for (int k = 0; k < grid.modes(); ++k) {
    cplx s = std::pow(kI * grid.eta(k), order);
    if (k == grid.nx / 2 && order % 2 == 1) s = 0.0;
    h(k) *= s;
  }
  return grid.to_physical(h);
}

Mat dx_rows(const SpaceGrid& grid, const Mat& f, int order) {
  if (order == 0) return f;
  CMat h = grid.to_spectral(f);
  for (int k = 0; k < grid.modes(); ++k) {
    cplx s = std::pow(kI * grid.eta(k), order);
    if (k == grid.nx / 2 && order % 2 == 1) s = 0.0;
    h.col(k) *= s;
  }
  return grid.to_physical(h);
}

double field_norm2(const VelocityBasis& b, const SpaceGrid& grid, const Mat& g, const Vec& wpow) {
  const Vec w = b.weights.cwiseProduct(wpow.cwiseAbs2());
  return grid.dx * (w.asDiagonal() * g.cwiseAbs2()).sum();
}

Mat p0_of(const VelocityBasis& b, const Mat& f) {
  Mat out = Mat::Zero(f.rows(), f.cols());
  for (const Vec& c : b.chi()) out += c * (c.cwiseProduct(b.weights).transpose() * f);
  return out;
}

struct Fields {
  Vec n, m1, m2, m3, q;
};

}  // namespace

MomentState extract_moments(const VelocityBasis& b0, const SpaceGrid& grid, const Mat& f, bool nonlinear_poisson) {
  if (b0.sector != 0) throw ValidationError("extract_moments: sector 0 field expected");
  if (f.rows() != b0.n() || f.cols() != grid.nx) throw ValidationError("extract_moments: field shape mismatch");
  MomentState s;
  s.n = f.transpose() * b0.weights.cwiseProduct(b0.chi()[0]);
  s.m1 = f.transpose() * b0.weights.cwiseProduct(b0.chi()[1]);
  s.q = f.transpose() * b0.weights.cwiseProduct(b0.chi()[2]);
  s.m2 = Vec::Zero(grid.nx);
  s.m3 = Vec::Zero(grid.nx);
  s.phi = nonlinear_poisson ? poisson_newton(grid, s.n).phi : Vec(-poisson_inverse(grid, s.n));
  return s;
}

Eigen::Matrix3cd nsp_symbol(const TransportCoefficients& tc, double eta, bool poisson, bool viscous) {
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  A(0, 1) = 1.0;
  A(1, 0) = 1.0 + (poisson ? 1.0 / (1.0 + eta * eta) : 0.0);
  A(1, 2) = kR23;
  A(2, 1) = kR23;
  Eigen::Matrix3cd S = (-kI * eta) * A.cast<cplx>();
  if (viscous) {
    S(1, 1) -= eta * eta * 4.0 / 3.0 * tc.kappa1;
    S(2, 2) -= eta * eta * tc.kappa2;
  }
  return S;
}

NspDispersion nsp_dispersion(const TransportCoefficients& tc, bool poisson, const std::vector<double>& etas) {
  NspDispersion d;
  const double e = 1e-3;
  Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(nsp_symbol(tc, e, poisson));
  std::array<cplx, 3> lam{es.eigenvalues()(0), es.eigenvalues()(1), es.eigenvalues()(2)};
  // speed u = -Im lambda / eta; j = -1, 0, 1 in increasing u
  std::sort(lam.begin(), lam.end(), [](cplx a, cplx b) { return -a.imag() < -b.imag(); });
  for (int j = 0; j < 3; ++j) {
    d.speed[j] = -lam[j].imag() / e;
    d.damping[j] = -lam[j].real() / (e * e);
  }
  d.max_re = -1e300;
  for (double eta : etas) {
    Eigen::ComplexEigenSolver<Eigen::Matrix3cd> s(nsp_symbol(tc, eta, poisson));
    d.max_re = std::max(d.max_re, s.eigenvalues().real().maxCoeff());
  }
  return d;
}

NspTrajectory nsp_evolve(const TransportCoefficients& tc, const SpaceGrid& grid, const MomentState& s0,
                         const std::vector<double>& out_times, double dt, const NspOptions& opt) {
  if (!(dt > 0.0)) throw ValidationError("nsp_evolve: dt must be positive");
  if (dt * grid.eta_nyquist * std::sqrt(8.0 / 3.0) > 2.5)
    throw CFLViolation("nsp_evolve: dt eta_max c = " + std::to_string(dt * grid.eta_nyquist * std::sqrt(8.0 / 3.0)));
  for (size_t i = 1; i < out_times.size(); ++i)
    if (out_times[i] < out_times[i - 1]) throw ValidationError("nsp_evolve: output times must increase");

  auto phi_of = [&](const Vec& n) {
    return opt.nonlinear_poisson ? poisson_newton(grid, n).phi : Vec(-poisson_inverse(grid, n));
  };
  auto rhs = [&](const Fields& u) {
    Fields d;
    const Vec mx = dx_of(grid, u.m1);
    d.n = -mx;
    d.m1 = -dx_of(grid, u.n) - kR23 * dx_of(grid, u.q);
    d.q = -kR23 * mx;
    if (opt.poisson) {
      const Vec px = dx_of(grid, phi_of(u.n));
      d.m1 += px;
      if (opt.nonlinear) {
        d.m1 += u.n.cwiseProduct(px);
        d.q += kR23 * u.m1.cwiseProduct(px);
      }
    }
    d.m2 = Vec::Zero(grid.nx);
    d.m3 = Vec::Zero(grid.nx);
    return d;
  };
  auto axpy = [](const Fields& u, double a, const Fields& d) {
    return Fields{u.n + a * d.n, u.m1 + a * d.m1, u.m2 + a * d.m2, u.m3 + a * d.m3, u.q + a * d.q};
  };
  auto diffuse = [&](Fields& u, double h) {
    CVec m1 = grid.to_spectral(u.m1), m2 = grid.to_spectral(u.m2), m3 = grid.to_spectral(u.m3),
         q = grid.to_spectral(u.q);
    for (int k = 0; k < grid.modes(); ++k) {
      const double e2 = grid.eta(k) * grid.eta(k);
      m1(k) *= std::exp(-h * e2 * 4.0 / 3.0 * tc.kappa1);
      m2(k) *= std::exp(-h * e2 * tc.kappa1);
      m3(k) *= std::exp(-h * e2 * tc.kappa1);
      q(k) *= std::exp(-h * e2 * tc.kappa2);
    }
    u.m1 = grid.to_physical(m1);
    u.m2 = grid.to_physical(m2);
    u.m3 = grid.to_physical(m3);
    u.q = grid.to_physical(q);
  };
  auto size = [](const Fields& u) { return u.n.norm() + u.m1.norm() + u.m2.norm() + u.m3.norm() + u.q.norm(); };

  Fields u{s0.n, s0.m1, s0.m2.size() ? s0.m2 : Vec::Zero(grid.nx), s0.m3.size() ? s0.m3 : Vec::Zero(grid.nx), s0.q};
  const double size0 = std::max(size(u), 1e-300);
  const double mass0 = u.n.sum() * grid.dx;
  NspTrajectory tr;
  double t = s0.t;
  for (double tout : out_times) {
    if (tout < t - 1e-12) throw ValidationError("nsp_evolve: output time before the initial time");
    const int steps = static_cast<int>(std::ceil((tout - t) / dt - 1e-9));
    const double h = steps > 0 ? (tout - t) / steps : 0.0;
    for (int i = 0; i < steps; ++i) {
      diffuse(u, 0.5 * h);
      const Fields k1 = rhs(u);
      const Fields k2 = rhs(axpy(u, 0.5 * h, k1));
      const Fields k3 = rhs(axpy(u, 0.5 * h, k2));
      const Fields k4 = rhs(axpy(u, h, k3));
      u = axpy(u, h / 6.0, k1);
      u = axpy(u, h / 3.0, k2);
      u = axpy(u, h / 3.0, k3);
      u = axpy(u, h / 6.0, k4);
      diffuse(u, 0.5 * h);
      const double sz = size(u);
      if (!std::isfinite(sz) || sz > opt.blowup * size0)
        throw Instability("nsp_evolve: moment norm grew by " + std::to_string(sz / size0));
      tr.mass_drift = std::max(tr.mass_drift, std::abs(u.n.sum() * grid.dx - mass0));
    }
    t = tout;
    MomentState s;
    s.t = t;
    s.n = u.n;
    s.m1 = u.m1;
    s.m2 = u.m2;
    s.m3 = u.m3;
    s.q = u.q;
    s.phi = phi_of(u.n);
    tr.states.push_back(std::move(s));
  }
  return tr;
}

EnergyValues energy_functionals(const VelocityBasis& b0, const SpaceGrid& grid, const Mat& f, const Vec& phi, int N,
                                double k) {
  if (N < 0 || N > 2) throw ValidationError("energy_functionals: N must be 0, 1 or 2");
  if (k < 0.0 || k > 1.0) throw ValidationError("energy_functionals: k must lie in [0, 1]");
  const Vec w = weight_w(b0);
  const Vec wk = w.array().pow(k), wk2 = w.array().pow(k + 0.5), one = Vec::Ones(b0.n());
  const Mat D = dv1_matrix(b0);
  const Mat p0 = p0_of(b0, f), p1 = f - p0;
  auto phi2 = [&](int a) {
    const Vec d0 = dx_of(grid, phi, a), d1 = dx_of(grid, phi, a + 1);
    return grid.dx * (d0.squaredNorm() + d1.squaredNorm());
  };
  EnergyValues e;
  for (int a = 0; a <= N; ++a) {
    Mat fa = dx_rows(grid, f, a), pa = dx_rows(grid, p1, a);
    for (int bb = 0; a + bb <= N; ++bb) {
      e.E += field_norm2(b0, grid, fa, wk);
      e.H += field_norm2(b0, grid, pa, wk);
      e.D += field_norm2(b0, grid, pa, wk2);
      fa = D * fa;
      pa = D * pa;
    }
    e.E += phi2(a);
  }
  for (int a = 0; a <= N - 1; ++a) {
    const double macro = field_norm2(b0, grid, dx_rows(grid, p0, a + 1), one) + phi2(a + 1);
    e.H += macro;
    e.D += macro;
  }
  return e;
}

EnergyReport energy_trace(const Stepper& st, const LinearModel& model, const SpaceGrid& grid, KineticState s,
                          int steps, int every, int N, double k) {
  const VelocityBasis& b = model.op0.basis;
  EnergyReport r;
  r.N = N;
  r.k = k;
  for (int i = 0; i <= steps; ++i) {
    if (i > 0) st.step(s);
    if (i % every != 0) continue;
    const Mat F = st.physical(s);
    const EnergyValues e = energy_functionals(b, grid, F, s.phi, N, k);
    r.times.push_back(s.t);
    r.E.push_back(e.E);
    r.H.push_back(e.H);
    r.D.push_back(e.D);
    const Mat p0 = p0_of(b, F);
    r.p0_sup.push_back(b.weights.dot(p0.cwiseAbs2().rowwise().maxCoeff()));
  }
  // dE/dt by centered differences at interior samples
  std::vector<double> dE;
  for (size_t i = 1; i + 1 < r.times.size(); ++i)
    dE.push_back((r.E[i + 1] - r.E[i - 1]) / (r.times[i + 1] - r.times[i - 1]));
  double c = 1.0;
  for (size_t i = 0; i < dE.size(); ++i)
    if (r.D[i + 1] > 0.0) c = std::min(c, -dE[i] / r.D[i + 1]);
  r.c_fit = std::max(c, 0.0);
  for (size_t i = 0; i < dE.size(); ++i)
    r.max_slack = std::max(r.max_slack, (dE[i] + r.c_fit * r.D[i + 1]) / std::pow(r.E[i + 1], 1.5));
  return r;
}

NspComparison compare_kinetic_nsp(const LinearModel& model, const SpaceGrid& grid, const std::vector<double>& times,
                                  double width, double amplitude, double dt) {
  const VelocityBasis& b = model.op0.basis;
  const Vec prof = (b.chi()[0] + b.chi()[1] + b.chi()[2]) / std::sqrt(3.0);
  Mat f0(b.n(), grid.nx);
  for (int j = 0; j < grid.nx; ++j)
    f0.col(j) = amplitude * std::exp(-0.5 * grid.x(j) * grid.x(j) / (width * width)) * prof;
  const CMat h0 = grid.to_spectral(f0);
  const double hmax = h0.colwise().norm().maxCoeff();

  // kinetic moments per mode
  const int nt = static_cast<int>(times.size());
  std::vector<CMat> mom(nt, CMat::Zero(3, grid.modes()));
  Mat proj(3, b.n());
  for (int l = 0; l < 3; ++l) proj.row(l) = b.chi()[l].cwiseProduct(b.weights).transpose();
  parallel_for(0, grid.modes(), [&](int k) {
    if (h0.col(k).norm() < 1e-15 * hmax) return;
    const Propagator P(assemble_mode(model, grid.eta(k), 0).mat);
    for (int t = 0; t < nt; ++t) mom[t].col(k) = proj.cast<cplx>() * P.apply(times[t], CMat(h0.col(k)));
  });

  NspOptions opt;
  opt.nonlinear = false;
  opt.nonlinear_poisson = false;
  const MomentState s0 = extract_moments(b, grid, f0, false);
  const NspTrajectory tr = nsp_evolve(model.tc, grid, s0, times, dt, opt);

  NspComparison c;
  c.times = times;
  c.mass_drift = tr.mass_drift;
  for (int t = 0; t < nt; ++t) {
    const MomentState& s = tr.states[t];
    const Vec kn = grid.to_physical(CVec(mom[t].row(0).transpose()));
    const Vec km = grid.to_physical(CVec(mom[t].row(1).transpose()));
    const Vec kq = grid.to_physical(CVec(mom[t].row(2).transpose()));
    const double num = (kn - s.n).squaredNorm() + (km - s.m1).squaredNorm() + (kq - s.q).squaredNorm();
    const double den = kn.squaredNorm() + km.squaredNorm() + kq.squaredNorm();
    c.rel_error.push_back(std::sqrt(num / den));
  }
  return c;
}

double continuity_residual(const LinearModel& model, const SpaceGrid& grid, const Mat& f0, double t, double h) {
  const VelocityBasis& b = model.op0.basis;
  const CMat h0 = grid.to_spectral(f0);
  const Vec c0 = b.chi()[0].cwiseProduct(b.weights), c1 = b.chi()[1].cwiseProduct(b.weights);
  const double wt[4] = {1.0, -8.0, 8.0, -1.0};
  CVec nt = CVec::Zero(grid.modes()), m1 = CVec::Zero(grid.modes());
  parallel_for(0, grid.modes(), [&](int k) {
    const CMat B = assemble_mode(model, grid.eta(k), 0).mat;
    const CMat fp = expm(CMat(h * B)), fm = expm(CMat(-h * B));
    const CVec f = expm(CMat(t * B)) * h0.col(k);
    const CVec s[4] = {fm * (fm * f), fm * f, fp * f, fp * (fp * f)};
    for (int a = 0; a < 4; ++a) nt(k) += wt[a] * c0.cast<cplx>().dot(s[a]);
    nt(k) /= 12.0 * h;
    m1(k) = c1.cast<cplx>().dot(f);
  });
  const Vec ntx = grid.to_physical(nt);
  const Vec mx = dx_of(grid, grid.to_physical(m1));
  return (ntx + mx).cwiseAbs().maxCoeff() / mx.cwiseAbs().maxCoeff();
}

}  // namespace mvpb
