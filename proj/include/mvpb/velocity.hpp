#pragma once

#include <string>
#include <vector>

#include "mvpb/common.hpp"
#include "mvpb/quadrature.hpp"

namespace mvpb {

enum class Part { P0, P1, P0_1, P0_2, P0_3 };

// Point values of a velocity function on one sector's nodes.
struct DistCoeffs {
  CVec values;
  int sector = 0;
};

// Tensor Gauss-Legendre rule on the box (s, theta) in [0, vmax] x [0, pi],
// mapped to the half-disk v1 = s cos(theta), vr = s sin(theta).
// Node index i = is * na + ia.
class VelocityBasis {
 public:
  int sector = 0;
  int ns = 0, na = 0;  // speed and polar-angle node counts
  double vmax = 0.0;
  Vec v1, vr, weights;  // weights include the azimuthal measure c_m * vr
  Vec speed, angle;
  Vec maxwellian, sqrt_m;
  Rule rule_s, rule_a;
  Lagrange1D lag_s, lag_a;

  int n() const { return static_cast<int>(v1.size()); }
  int index(int is, int ia) const { return is * na + ia; }

  // Discretely orthonormalized invariants of this sector, in the order
  // chi0, chi1, chi4 (m = 0) or the shear profile chi2 (m = 1).
  const std::vector<Vec>& chi() const { return chi_; }
  const std::vector<int>& chi_labels() const { return chi_labels_; }
  // Invariant by global label 0..4; throws if absent from this sector.
  const Vec& chi_by_label(int label) const;
  bool has_label(int label) const;

  double inner(const Vec& f, const Vec& g) const { return (weights.array() * f.array() * g.array()).sum(); }
  cplx inner(const CVec& f, const CVec& g) const;           // conjugates g
  cplx bilinear(const CVec& f, const CVec& g) const;        // no conjugation
  double norm(const CVec& f) const { return std::sqrt(std::abs(inner(f, f))); }
  double norm(const Vec& f) const { return std::sqrt(inner(f, f)); }

  // Gram matrix of the eta-pairing: W + W chi0 chi0^T W / (1 + eta^2).
  // Returned as the pieces needed for operator norms.
  double eta_factor(double eta) const { return 1.0 / (1.0 + eta * eta); }

 private:
  friend VelocityBasis build_basis(int, int, int, double);
  std::vector<Vec> chi_;
  std::vector<int> chi_labels_;
};

VelocityBasis build_basis(int sector, int ns, int na, double vmax);

// Invariants as analytic point values (before discrete orthonormalization).
Vec chi_analytic(const VelocityBasis& b, int label);

// P0 / P1 / P0^1 / P0^2 / P0^3 projections in the plain inner product.
CVec project(const VelocityBasis& b, const CVec& f, Part part);
Vec project(const VelocityBasis& b, const Vec& f, Part part);
DistCoeffs project(const VelocityBasis& b, const DistCoeffs& f, Part part);

// (f, g) + (P0^1 f, P0^1 g) / (1 + eta^2); bilinear unless conjugate is set.
cplx inner_eta(const VelocityBasis& b, const CVec& f, const CVec& g, double eta, bool conjugate = false);
double norm_eta(const VelocityBasis& b, const CVec& f, double eta);

// Matrix form of P0 (n x n) in point-value coordinates.
Mat projector_matrix(const VelocityBasis& b, Part part);

// Symmetric square root of the eta-Gram in W^{1/2} coordinates: returns
// (scale, u) such that G^{1/2} = W^{1/2} (I + scale u u^T) with u = W^{1/2} chi0.
struct EtaGramRoot {
  Vec sqrt_w;
  Vec u;
  double scale = 0.0;
};
EtaGramRoot eta_gram_root(const VelocityBasis& b, double eta);

// Operator norm of A (point-value coordinates) in the eta geometry.
double operator_norm_eta(const VelocityBasis& b, const CMat& A, double eta);

// d/dv1 = cos(theta) d/ds - sin(theta) / s d/dtheta with three-point
// finite differences on the node lines, one-sided at the grid ends.
Mat dv1_matrix(const VelocityBasis& b);

// (1 + |v|^2)^{1/2} at the nodes.
Vec weight_w(const VelocityBasis& b);

void write_basis_csv(const VelocityBasis& b, const std::string& path);

}  // namespace mvpb
