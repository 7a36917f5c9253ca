#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "mvpb/spectral.hpp"

namespace mvpb {

// Periodic grid x_j = -L + j dx on [-L, L), with the nonnegative dual
// frequencies eta_k = k pi / L, k = 0..nx/2. Real fields are stored by their
// nx/2 + 1 nonnegative modes; the transform pair is
//   f_hat(eta) = dx sum_j f(x_j) exp(-i eta x_j),  f(x) = (1 / 2L) sum_k f_hat(eta_k) exp(i eta_k x).
// Transforms reuse one FFTW plan and must be called from one thread at a time.
class SpaceGrid {
 public:
  SpaceGrid(double L_dom, int nx);

  double L_dom = 0.0, dx = 0.0, deta = 0.0, eta_nyquist = 0.0;
  int nx = 0;
  Vec x;

  int modes() const { return nx / 2 + 1; }
  double eta(int k) const { return k * deta; }
  int nearest_index(double xv) const;

  Vec to_physical(const CVec& hat) const;
  CVec to_spectral(const Vec& f) const;
  // Row-wise versions: rows are velocity components.
  Mat to_physical(const CMat& hat) const;
  CMat to_spectral(const Mat& f) const;

 private:
  struct Plans;
  std::shared_ptr<Plans> plans_;
};

// Multiplies by (i eta)^derivative / (1 + eta^2).
Vec poisson_inverse(const SpaceGrid& grid, const Vec& field, int derivative = 0);
CVec poisson_inverse(const SpaceGrid& grid, const CVec& field, int derivative = 0);

// Per-point norms of a field of operators; index x.
struct ComponentNorms {
  Vec total;
  std::array<Vec, 3> p0;  // P0^1 (density), P0^2 (momentum), P0^3 (energy)
  Vec p0_all;
  Vec p1_left, p1_right, p1_both;  // |P1 G|, |G P1|, |P1 G P1|
};

struct Seed {
  DistCoeffs g;
  std::string name;
  bool micro = false;  // P1 g = g
};

// chi0, chi1, chi4 and two normalized microscopic profiles, all in sector 0.
std::vector<Seed> default_seeds(const LinearModel& model);

struct GreenField {
  std::vector<double> times;
  std::vector<Seed> seeds;
  std::string norm_mode;  // "seeds" or "blocks"
  // hat[t][s]: n x modes, phys[t][s]: n x nx
  std::vector<std::vector<CMat>> hat;
  std::vector<std::vector<Mat>> phys;
  std::vector<ComponentNorms> norms;
  std::vector<std::string> warnings;
};

// Physical fields and norms from the spectra (mask[k] == false drops mode k).
void finish_field(const LinearModel& model, const SpaceGrid& grid, GreenField& f,
                  const std::vector<bool>& mask = {});

struct GreenSynthesis {
  GreenField G, GL, GH;
  double cutoff = 0.0;  // |eta| < cutoff belongs to G_L
  // sup_t over sampled eta of |G_hat(t, eta) g|_eta / |g|_eta
  double max_contraction = 0.0;
  // |G_hat_H(t) g|_eta <= C exp(-kappa0 t): worst mode per time
  std::vector<double> high_sup;
  double kappa0 = 0.0, kappa0_r2 = 0.0;
  // |G_hat_L - G_hat_L0| per time, worst mode
  std::vector<double> low_kinetic_sup;
};

// exp(t B(eta)) on the seeds at every nonnegative mode, inverse transformed.
GreenSynthesis synthesize_green(const LinearModel& model, const std::vector<double>& times, const SpaceGrid& grid,
                                const std::vector<Seed>& seeds, double cutoff);

// Fluid part from tracked branches on |eta| < cutoff.
struct FluidField {
  std::vector<double> times;
  double cutoff = 0.0;
  bool mach_cutoff = true;
  std::vector<ComponentNorms> norms;  // exact block norms, reduced basis
  std::array<int, 2> rank{};          // reduced basis size per sector
  // Optional seed actions (sector 0), spectra without the Mach cutoff.
  std::vector<std::vector<CMat>> seed_hat;
};

FluidField fluid_part(const LinearModel& model, const std::vector<double>& times, const SpaceGrid& grid, double cutoff,
                      bool mach_cutoff = true, const std::vector<Seed>& seeds = {});

// The spectral fluid projection sum_j exp(lambda_j t) psi_j (G_eta psi_j)^T at one mode.
struct FluidModes {
  std::vector<double> etas;
  // [sector][k]: lambdas and psis of the fluid branches at etas[k]
  std::array<std::vector<std::vector<cplx>>, 2> lambdas;
  std::array<std::vector<std::vector<CVec>>, 2> psis;
};
FluidModes fluid_modes(const LinearModel& model, const std::vector<double>& etas);

struct KineticWaveSet {
  int k_max = 2;
  std::vector<double> times;
  std::vector<double> etas;  // sampled modes (indices into the grid)
  std::vector<int> modes;
  std::vector<Seed> seeds;
  // [t][s]: n x modes.size()
  std::vector<std::vector<CMat>> W_hat, J_last_hat;
  // |J_i(t, eta) g| for i = 0..3k: [i][t](mode, seed)
  std::vector<std::vector<Mat>> level_norms;
  // Theta_i(t, eta) for seed 0: [i][t](mode)
  std::vector<std::vector<CVec>> theta;
  double j0_error = 0.0;          // max relative deviation from the closed form
  double refinement_change = 0.0; // max relative change of W_hat under doubled time nodes
  std::vector<std::string> warnings;
};

struct WaveQuadrature {
  int nodes = 12;          // Gauss nodes per panel
  double max_phase = 6.0;  // max |nu + i v1 eta| * panel length
  double max_panel = 0.5;
};

// Picard recursion in frequency space on the chosen modes (all modes when
// `modes` is empty). QuadratureWarning is recorded when a doubled-node rerun
// at the check modes changes W_hat by more than 1e-6.
KineticWaveSet kinetic_waves(const LinearModel& model, int k_max, const std::vector<double>& times,
                             const SpaceGrid& grid, const std::vector<Seed>& seeds, std::vector<int> modes = {},
                             const WaveQuadrature& q = {}, const std::vector<int>& check_modes = {});

// Frequency-decay constant sup_t |J_3k(t, eta)| exp(nu0 t / 2) (1 + eta)^k per sampled mode.
Vec wave_decay_constants(const KineticWaveSet& w, double nu0);

struct RemainderField {
  std::vector<double> times;
  std::vector<ComponentNorms> norms;     // |R_k(t, x)| per seed maximum
  std::vector<Vec> phi;                  // potential remainder, seed 0
  std::vector<double> sup_inside, sup_outside;  // |x| <= 6t and |x| > 6t
  std::vector<double> r0_sup;            // sup_x |R_k(0, x)| when t = 0 is sampled
};

// R_k = G - W_k, phi_k = T - theta_k with T = -(I - d_xx)^{-1} (G, chi0).
RemainderField remainder(const LinearModel& model, const SpaceGrid& grid, const GreenField& green,
                         const KineticWaveSet& waves);

struct ProfileFit {
  double exponent = 0.0, log_constant = 0.0, r2 = 0.0;
};
// log peak ~ c + p log(1 + t); throws PoorFit when R^2 < 0.95 (or r2_min).
ProfileFit profile_fit(const std::vector<double>& t, const std::vector<double>& peak, double r2_min = 0.95);

struct WidthFit {
  double D = 0.0, r2 = 0.0;
};
// Second-moment width w^2 = var of the profile; fits w^2 = D (1 + t) / 2.
WidthFit width_fit(const std::vector<double>& t, const std::vector<double>& w2);
// Variance of |profile| around its center on [lo, hi].
double profile_variance(const Vec& x, const Vec& p, double lo, double hi);

struct LineFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
};
LineFit line_fit(const std::vector<double>& x, const std::vector<double>& y);

// Local maxima of p (strict, above frac * max) refined by parabolic interpolation.
std::vector<double> hump_centers(const Vec& x, const Vec& p, double frac = 0.05);

}  // namespace mvpb
