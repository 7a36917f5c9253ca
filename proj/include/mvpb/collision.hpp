#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>

#include "mvpb/velocity.hpp"

namespace mvpb {

// Hard-sphere collision frequency.
double nu_of_v(double v1, double vr);
double nu_of_speed(double r);

// Full-space kernel k(v, v*) for 3-D velocities.
double kernel_k(const double* v, const double* vs);

// Azimuthally reduced kernel: out[m] = int_0^{2pi} k cos(m phi) dphi, m = 0, 1.
void reduced_kernel(double a, double b, double as, double bs, int nodes, double out[2]);

struct NuBounds {
  double nu0 = 0.0, nu1 = 0.0;
};
// Tightest nu0, nu1 with nu0 (1+|v|) <= nu <= nu1 (1+|v|) on |v| <= vmax.
NuBounds fit_nu_bounds(double vmax, int samples = 4001);

struct KernelQuadrature {
  int angular = 32;       // azimuthal nodes (sinh-mapped Gauss)
  int boundary = 12;      // nodes per boundary panel
  int radial = 24;        // nodes along each ray
  double grading = 4.0;   // geometric panel ratio away from the target
  int smooth_degree = 12; // total degree of the subspace kept exact by symmetrization
};

class CollisionOperator {
 public:
  VelocityBasis basis;
  Vec nu;
  Mat K_raw;   // product-integrated, weighted-symmetrized
  Mat K;       // L + diag(nu)
  Mat L;       // P1 (K_raw - diag nu) P1
  double mu_hat = 0.0;
  double kchi0_error = 0.0;    // ||K_raw chi0 - nu chi0|| / ||chi0|| (m = 0)
  double raw_asymmetry = 0.0;  // before symmetrization
  double invariant_leak = 0.0; // max ||(K_raw - nu) chi_j|| / ||chi_j||

  // h with L h = P1 g, P0 h = 0.
  Vec linv_p1(const Vec& g) const;
  CVec linv_p1(const CVec& g) const;

  // Weighted-symmetric form W^{1/2} A W^{-1/2}.
  Mat symmetric_form(const Mat& A) const;

  void finalize();  // builds L, K, mu_hat and the deflated factorization

 private:
  Eigen::LLT<Mat> neg_deflated_;
  Vec sqrt_w_;
};

// Assembles the raw kernel matrix (product integration against the tensor
// Lagrange basis). Uses the on-disk cache when cache_dir is non-empty.
Mat assemble_K(const VelocityBasis& b, const KernelQuadrature& q = {}, const std::string& cache_dir = {},
               double* raw_asymmetry = nullptr);

CollisionOperator build_collision(const VelocityBasis& b, const KernelQuadrature& q = {},
                                  const std::string& cache_dir = {});

// Cache file naming and I/O.
std::string kernel_cache_path(const std::string& dir, const VelocityBasis& b, const KernelQuadrature& q);
bool read_kernel_cache(const std::string& path, const VelocityBasis& b, const KernelQuadrature& q, Mat& K);
void write_kernel_cache(const std::string& path, const VelocityBasis& b, const KernelQuadrature& q, const Mat& K);

// Labels j = -1, 0, 1, 2, 3 are stored at index j + 1.
struct TransportCoefficients {
  std::array<double, 5> a{};
  double kappa1 = 0.0, kappa2 = 0.0;
  std::array<std::array<cplx, 3>, 3> b{};  // b[j+1][k+1], j, k in {-1, 0, 1}
  std::array<double, 3> beta{};            // beta_j = u_j(0) for j = -1, 0, 1
  std::array<Vec, 5> E;                    // E_j at eta = 0 (sector 0 for |j| <= 1)

  double a_of(int j) const { return a.at(j + 1); }
};

// E_j(eta) coefficients on (chi0, chi1, chi4) for j = -1, 0, 1; eigenvectors of
// A(eta) normalized in the eta-pairing, with u_{+1} > 0.
std::array<double, 3> e_coeffs(int j, double eta);
double u_closed(int j, double eta);
Vec e_vector(const VelocityBasis& b0, int j, double eta);

TransportCoefficients transport_coefficients(const CollisionOperator& op0, const CollisionOperator& op1);

// Both sectors plus their transport coefficients; the shared input of the
// spectral, green and moments modules.
struct LinearModel {
  CollisionOperator op0, op1;
  TransportCoefficients tc;

  const CollisionOperator& sector(int m) const { return m == 0 ? op0 : op1; }
  double mu_hat() const { return std::min(op0.mu_hat, op1.mu_hat); }
};

LinearModel build_model(int ns, int na, double vmax, const KernelQuadrature& q = {},
                        const std::string& cache_dir = {});

}  // namespace mvpb
