#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvpb/green.hpp"

namespace mvpb {

struct GammaQuadrature {
  int polar = 12;    // Gauss nodes in cos(alpha) on [0, 1], alpha measured from v - v*
  int azimuth = 24;  // periodic nodes around v - v*
  int star_azimuth = 6;  // midpoint nodes for the azimuth of v* on [0, pi]
};

// T[i](j, k): node-i value of Gamma(e_j, e_k), symmetric in (j, k). The e_j
// interpolate h = f / sqrt(M) with the tensor Lagrange basis and vanish for
// |v| > vmax. The output is P1-projected unless raw is requested.
struct GammaTensor {
  std::vector<Mat> T;        // raw quadrature
  std::vector<Mat> P;        // sum_i W_i chi_l(i) T[i], one per invariant
  std::vector<Vec> chi;
  std::string tag;
  double raw_leak = 0.0;     // sup |(Gamma_raw(f, g), chi_l)| / (|f| |g|)

  int n() const { return static_cast<int>(T.size()); }
  Vec apply(const Vec& f, const Vec& g, bool raw = false) const;
  // Column-wise Gamma(F_x, G_x) for n x nx fields.
  Mat apply(const Mat& F, const Mat& G, bool raw = false) const;
};

// Sector 0 only. MemoryBudget when 8 n^3 bytes exceed max_bytes.
GammaTensor build_gamma(const VelocityBasis& b, const GammaQuadrature& q = {}, const std::string& cache_dir = {},
                        double max_bytes = 1024.0 * 1024.0 * 1024.0);

// Gamma(f, g) at the listed target nodes by direct quadrature, without the tensor.
Vec gamma_direct(const VelocityBasis& b, const Vec& f, const Vec& g, const std::vector<int>& targets,
                 const GammaQuadrature& q = {});

// Solves (I - d_xx) Phi = -n + (exp(-Phi) + Phi - 1). Residual <= tol in the max norm.
struct PoissonResult {
  Vec phi;
  double residual = 0.0;
  int iterations = 0;
};
PoissonResult poisson_newton(const SpaceGrid& grid, const Vec& n, double tol = 1e-12, int max_iter = 25);
double poisson_residual(const SpaceGrid& grid, const Vec& n, const Vec& phi);

struct KineticState {
  CMat f_hat;  // n x modes, sector 0
  Vec phi;
  double t = 0.0;
};

struct StepperOptions {
  bool gamma = true;
  bool field = true;            // (v1 d_x Phi) f / 2 - d_x Phi d_v1 f
  bool poisson_nonlinear = true;
  double cfl = 0.5;             // dt max|d_x Phi| max row sum |D_v1|
  double blowup = 1e3;
};

class Stepper {
 public:
  Stepper(const LinearModel& model, const SpaceGrid& grid, double dt, const StepperOptions& opt = {},
          const GammaTensor* gamma = nullptr);

  KineticState initial(const Mat& f_phys) const;
  void step(KineticState& s) const;

  Mat physical(const KineticState& s) const { return grid_->to_physical(s.f_hat); }
  Vec density(const Mat& f_phys) const;
  Vec momentum(const Mat& f_phys) const;
  // d_t Phi from d_t n = -d_x m1 through the differentiated Poisson relation.
  Vec phi_t(const Mat& f_phys, const Vec& phi) const;
  double dt() const { return dt_; }
  const Mat& dv1() const { return D_; }

 private:
  Mat nonlinear(const Mat& f_phys) const;
  void half_linear(CMat& f_hat) const;

  const LinearModel* model_;
  const SpaceGrid* grid_;
  const GammaTensor* gamma_;
  double dt_;
  StepperOptions opt_;
  std::vector<CMat> half_;  // exp(dt B / 2) per mode
  Mat D_;
  double d_norm_ = 0.0;
  mutable double ref_norm_ = 0.0;
};

struct DecayOptions {
  double L_dom = 160.0;
  int nx = 1024;
  double dt = 0.1;
  double delta0 = 1e-3, gamma0 = 1.0;
  double t_end = 60.0, fit_from = 10.0, sample_every = 1.0;
  StepperOptions stepper;
};

// (1 + |x|^2 / (1 + t))^{-k}
double diffusive_profile(double t, double x, double k);

struct BootstrapReport {
  std::vector<double> times;
  // sup_x values: |f|_{inf,3}, |d_v1 f|_{inf,2}, |Phi|, |d_x Phi|, |d_t Phi|
  std::vector<double> f_sup, dvf_sup, phi_sup, phix_sup, phit_sup;
  std::vector<double> field_sup;  // sup_x (|d_x Phi| + |d_t Phi|)
  // sup_x of the same quantities over (1+t)^{-r} sum_i B_{1/2}(t, x - beta_i t)
  std::vector<double> f_ratio, dvf_ratio, phi_ratio, phix_ratio, phit_ratio;
  std::vector<double> q;  // running sup over s <= t of the largest ratio
  std::vector<double> mass;
  ProfileFit f_fit, dvf_fit, field_fit;
  LineFit q_trend;  // log q vs log(1 + t) on the fit window
  double max_mass_drift = 0.0;
  double runtime_s = 0.0;
  int steps = 0;
};

// Initial data delta0 (1 + x^2)^{-gamma0} (chi0 + chi1 + chi4) / sqrt(3).
BootstrapReport decay_study(const LinearModel& model, const GammaTensor& gamma, const DecayOptions& opt);

// sup_v (1 + |v|^2)^{beta / 2} |f(v)| per column.
Vec weighted_sup(const VelocityBasis& b, const Mat& f, double beta);

}  // namespace mvpb
