#pragma once

#include <array>
#include <vector>

#include "mvpb/nonlinear.hpp"

namespace mvpb {

struct MomentState {
  double t = 0.0;
  Vec n, m1, m2, m3, q, phi;
};

// n = (f, chi0), m1 = (f, chi1), q = (f, chi4) per x from a sector-0 field
// (n x nx); m2 = m3 = 0. Phi from the nonlinear Poisson relation when
// nonlinear_poisson is set, else -(I - d_xx)^{-1} n.
MomentState extract_moments(const VelocityBasis& b0, const SpaceGrid& grid, const Mat& f, bool nonlinear_poisson = false);

struct NspOptions {
  bool poisson = true;            // -d_x Phi in the momentum equation
  bool nonlinear = true;          // n d_x Phi and m1 d_x Phi sources
  bool nonlinear_poisson = true;  // exp(-Phi) + Phi - 1 in the Poisson relation
  double blowup = 1e3;
};

struct NspTrajectory {
  std::vector<MomentState> states;  // at the requested output times
  double mass_drift = 0.0;          // max |int n dx - int n0 dx|
};

// Strang splitting: exact half steps of the diffusion in frequency space
// around an RK4 step of transport and coupling. Throws CFLViolation when
// dt eta_max sqrt(8/3) > 2.5 and Instability on growth past blowup.
NspTrajectory nsp_evolve(const TransportCoefficients& tc, const SpaceGrid& grid, const MomentState& s0,
                         const std::vector<double>& out_times, double dt, const NspOptions& opt = {});

// Linear symbol on (n, m1, q): d/dt u_hat = S(eta) u_hat.
Eigen::Matrix3cd nsp_symbol(const TransportCoefficients& tc, double eta, bool poisson = true, bool viscous = true);

struct NspDispersion {
  std::array<double, 3> speed{};    // j = -1, 0, 1 at eta -> 0
  std::array<double, 3> damping{};  // -Re lambda / eta^2 at eta -> 0
  double max_re = 0.0;              // over the sampled etas
};
NspDispersion nsp_dispersion(const TransportCoefficients& tc, bool poisson, const std::vector<double>& etas);

struct EnergyValues {
  double E = 0.0, H = 0.0, D = 0.0;
};
// E_{N,k}, H_{N,k}, D_{N,k} with x-derivatives spectral and d_v1 by the
// finite-difference matrix; w = (1 + |v|^2)^{1/2}. N <= 2, k <= 1.
EnergyValues energy_functionals(const VelocityBasis& b0, const SpaceGrid& grid, const Mat& f, const Vec& phi, int N,
                                double k);

struct EnergyReport {
  int N = 0;
  double k = 0.0;
  std::vector<double> times, E, H, D;
  std::vector<double> p0_sup;  // |P0 f|^2 in L2_v(Linf_x)
  double c_fit = 0.0;          // largest c in (0, 1] with dE/dt + c D <= 0 where possible
  double max_slack = 0.0;      // max (dE/dt + c D) / E^{3/2}
};
EnergyReport energy_trace(const Stepper& st, const LinearModel& model, const SpaceGrid& grid, KineticState s,
                          int steps, int every, int N, double k);

struct NspComparison {
  std::vector<double> times;
  std::vector<double> rel_error;  // relative L2 of (n, m1, q), kinetic vs NSP
  double mass_drift = 0.0;
};
// Linear kinetic solution per mode vs the linear NSP closure from the same
// moments of f0 = amplitude exp(-x^2 / (2 width^2)) (chi0 + chi1 + chi4) / sqrt(3).
NspComparison compare_kinetic_nsp(const LinearModel& model, const SpaceGrid& grid, const std::vector<double>& times,
                                  double width, double amplitude = 1e-3, double dt = 0.05);

// Discrete residual of d_t n + d_x m1 = 0 along the linear kinetic flow,
// by centered differences in t at time t with step h.
double continuity_residual(const LinearModel& model, const SpaceGrid& grid, const Mat& f0, double t, double h);

}  // namespace mvpb
