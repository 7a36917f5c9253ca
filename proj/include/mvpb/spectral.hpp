#pragma once

#include <array>
#include <vector>

#include "mvpb/collision.hpp"
#include "mvpb/linalg.hpp"

namespace mvpb {

// B(eta) = L - i eta V1 - (i eta / (1 + eta^2)) V1 Pi, Pi f = (f, chi0) chi0.
struct ModeOperator {
  double eta = 0.0;
  int sector = 0;
  CMat mat;
};

ModeOperator assemble_mode(const LinearModel& model, double eta, int sector);

// Bilinear eta-pairing Gram matrix: <f, g> = f^T G g.
Mat eta_gram(const VelocityBasis& b, double eta);

// Fluid branch labels: -1, 0, 1 (sector 0) and 2, 3 (sector 1, one shared
// eigenvalue). Index j + 1 in the arrays below.
inline int branch_sector(int j) { return j >= 2 ? 1 : 0; }

struct EigenBranch {
  int j = 0;
  std::vector<double> etas;
  std::vector<cplx> lambdas;
  std::vector<CVec> psis;  // bilinear eta-normalized
  double beta_fit = 0.0, a_fit = 0.0;
  double fit_r2_re = 0.0, fit_r2_im = 0.0;
  double min_overlap = 1.0;
  double r0_hat = 0.0;
};

struct BranchSet {
  std::array<EigenBranch, 5> branch;  // j = -1..3
  std::vector<double> etas;
  std::vector<int> slow_count;  // eigenvalues with Re > -mu_hat / 2 (sector 1 counted twice)
  double r0_hat = 0.0;
  double eta_max = 0.0;
  int zero_count = 0;  // eigenvalues within 1e-6 of 0 at eta = 0

  const EigenBranch& of(int j) const { return branch.at(j + 1); }
};

// Dense eigenvalues at every grid point, eigenvectors of the fluid candidates
// by inverse iteration, branches matched by maximal overlap. Fits
// Im lambda = -beta eta + c eta^3 and Re lambda = -a eta^2 + d eta^4 on
// eta <= fit_fraction * eta_max.
BranchSet eigen_branches(const LinearModel& model, double eta_max, int steps, double fit_fraction = 0.25);

// Continues one fluid branch along an increasing eta grid starting from its
// eta = 0 eigenvector, by Rayleigh quotient iteration in the bilinear pairing.
struct TrackedMode {
  std::vector<cplx> lambdas;
  std::vector<CVec> psis;
};
TrackedMode track_branch(const LinearModel& model, int j, const std::vector<double>& etas);

// Eigenpair refinement near (lambda, psi) for one mode operator.
void refine_eigenpair(const ModeOperator& B, const Mat& gram, cplx& lambda, CVec& psi, int max_iter = 20);

// Normalizes psi so that psi^T G psi = 1 and the largest invariant
// component has a positive real part.
void normalize_bilinear(const VelocityBasis& b, const Mat& gram, CVec& psi);

struct GapScan {
  std::vector<double> etas;
  std::vector<double> max_re;        // over both sectors
  std::vector<double> max_re_kinetic;  // excluding the fluid eigenvalues for eta < r0
  std::vector<double> slow_radius;   // largest |lambda| with Re > -mu_hat / 2
  double alpha_hat = 0.0;            // -max Re for eta >= r0
  double max_re_all = 0.0;
  int zero_count = 0;
};
GapScan spectral_gap_scan(const LinearModel& model, const std::vector<double>& etas, double r0);

// The 5x5 fluid matrix A(eta) on (chi0, chi1, chi4, chi2, chi3) from the exact
// Gaussian moments, and the same matrix from the discrete quadrature (which
// differs by the velocity truncation, ~1e-11 at vmax = 8).
Eigen::Matrix<double, 5, 5> fluid_matrix(double eta);
Eigen::Matrix<double, 5, 5> fluid_matrix_discrete(const LinearModel& model, double eta);

class DispersionFunctions {
 public:
  DispersionFunctions(const LinearModel& model, double eta);

  // 5x5 R(sigma) over E_{-1}..E_3, evaluated through the azimuthal lift.
  Eigen::Matrix<cplx, 5, 5> R(cplx sigma) const;
  cplx D1(cplx sigma) const;
  cplx D0(cplx sigma) const;
  double eta() const { return eta_; }

 private:
  // ((L + i eta sigma - i eta P1 v1)^{-1} P1 v1 g, v1 h) in one sector.
  CMat resolvent_block(int sector, cplx sigma, const std::vector<Vec>& g) const;
  const LinearModel* model_;
  double eta_;
  std::array<Vec, 3> E_;  // E_{-1}, E_0, E_1 at eta
  std::array<double, 3> u_;
};

struct DispersionRoots {
  double eta = 0.0;
  cplx sigma_shear;               // root of D0
  std::array<cplx, 3> sigma{};    // roots of D1, j = -1, 0, 1
  int iterations = 0;
};
// Secant iteration from u_j(0) (or from a previous root set, for continuation in eta).
DispersionRoots dispersion_roots(const LinearModel& model, double eta, const DispersionRoots* guess = nullptr);

struct ReflectionReport {
  double stated = 0.0;     // max |sigma_j(-eta) + sigma_j(eta)|, |sigma_{-j} - conj sigma_j|
  double corrected = 0.0;  // max |sigma_j(-eta) - conj sigma_j(eta)|, |sigma_{-j} + conj sigma_j|
};
ReflectionReport reflection_check(const LinearModel& model, double eta);

struct ExpansionReport {
  int j = 0;
  double eta = 0.0;
  double leading_error = 0.0;    // ||psi_j(eta) - E_j||
  double micro_slope_error = 0.0;  // relative, P1 psi / eta against i L^{-1} P1 v1 E_j
  double macro_slope_error = 0.0;  // P0 part of the slope against sum_k b^j_k E_k
  double b_measured = 0.0;
  double b_plus = 0.0;   // 1 + eta^2 ||h||^2 / 2
  double b_minus = 0.0;  // 1 - eta^2 ||h|| / 2
  double biorthogonality = 0.0;  // max |(psi_j, conj psi_k)_eta - delta_jk| over the branch grid
};
ExpansionReport eigenfunction_expansion_check(const LinearModel& model, const BranchSet& set, int j,
                                              double eta = 1e-3);

struct SemigroupSplit {
  CMat S, S1, S2;
};
SemigroupSplit semigroup_split(const LinearModel& model, double t, double eta, int sector, double r0);

// Same, with a prepared eigendecomposition reused across times.
class SemigroupSampler {
 public:
  SemigroupSampler(const LinearModel& model, double eta, int sector, double r0);
  SemigroupSplit at(double t) const;
  double norm_eta(const CMat& A) const;

 private:
  const LinearModel* model_;
  double eta_;
  int sector_;
  Propagator prop_;
  std::vector<cplx> lam_;
  std::vector<CVec> psi_;
  std::vector<int> fluid_index_;
  Mat gram_;
};

}  // namespace mvpb
