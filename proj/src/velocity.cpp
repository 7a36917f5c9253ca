#include "mvpb/velocity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "mvpb/linalg.hpp"

namespace mvpb {

namespace {

double maxwellian(double v1, double vr) {
  return std::pow(2.0 * kPi, -1.5) * std::exp(-0.5 * (v1 * v1 + vr * vr));
}

}  // namespace

VelocityBasis build_basis(int sector, int ns, int na, double vmax) {
  if (sector != 0 && sector != 1) throw ValidationError("build_basis: sector must be 0 or 1");
  if (ns < 4 || na < 4) throw ValidationError("build_basis: node counts must be at least 4");
  if (!(vmax >= 6.0)) throw ValidationError("build_basis: vmax must be >= 6 (Maxwellian mass loss)");

  VelocityBasis b;
  b.sector = sector;
  b.ns = ns;
  b.na = na;
  b.vmax = vmax;
  b.rule_s = gauss_legendre(ns, 0.0, vmax);
  b.rule_a = gauss_legendre(na, 0.0, kPi);
  b.lag_s = Lagrange1D(b.rule_s.x);
  b.lag_a = Lagrange1D(b.rule_a.x);

  const int n = ns * na;
  const double cm = sector == 0 ? 2.0 * kPi : kPi;
  b.v1.resize(n);
  b.vr.resize(n);
  b.speed.resize(n);
  b.angle.resize(n);
  b.weights.resize(n);
  b.maxwellian.resize(n);
  for (int is = 0; is < ns; ++is)
    for (int ia = 0; ia < na; ++ia) {
      const int i = b.index(is, ia);
      const double s = b.rule_s.x[is], th = b.rule_a.x[ia];
      b.speed(i) = s;
      b.angle(i) = th;
      b.v1(i) = s * std::cos(th);
      b.vr(i) = s * std::sin(th);
      // vr dv1 dvr = s^2 sin(theta) ds dtheta
      b.weights(i) = cm * s * s * std::sin(th) * b.rule_s.w[is] * b.rule_a.w[ia];
      b.maxwellian(i) = maxwellian(b.v1(i), b.vr(i));
    }
  b.sqrt_m = b.maxwellian.array().sqrt();

  b.chi_labels_ = sector == 0 ? std::vector<int>{0, 1, 4} : std::vector<int>{2};
  for (int label : b.chi_labels_) {
    Vec c = chi_analytic(b, label);
    for (const Vec& q : b.chi_) c -= b.inner(c, q) * q;
    c /= b.norm(c);
    b.chi_.push_back(c);
  }
  return b;
}

Vec chi_analytic(const VelocityBasis& b, int label) {
  const Vec& s = b.sqrt_m;
  switch (label) {
    case 0:
      return s;
    case 1:
      return b.v1.cwiseProduct(s);
    case 2:
    case 3:
      return b.vr.cwiseProduct(s);
    case 4: {
      Vec v2 = b.v1.array().square() + b.vr.array().square();
      return ((v2.array() - 3.0) * s.array() / std::sqrt(6.0)).matrix();
    }
    default:
      throw ValidationError("chi_analytic: label out of range");
  }
}

bool VelocityBasis::has_label(int label) const {
  if (sector == 1 && label == 3) return true;
  for (int l : chi_labels_)
    if (l == label) return true;
  return false;
}

const Vec& VelocityBasis::chi_by_label(int label) const {
  if (sector == 1 && label == 3) label = 2;
  for (size_t k = 0; k < chi_labels_.size(); ++k)
    if (chi_labels_[k] == label) return chi_[k];
  throw ValidationError("chi_by_label: invariant not present in this sector");
}

cplx VelocityBasis::inner(const CVec& f, const CVec& g) const {
  return (weights.array().cast<cplx>() * f.array() * g.array().conjugate()).sum();
}

cplx VelocityBasis::bilinear(const CVec& f, const CVec& g) const {
  return (weights.array().cast<cplx>() * f.array() * g.array()).sum();
}

namespace {

std::vector<int> part_labels(const VelocityBasis& b, Part part) {
  switch (part) {
    case Part::P0:
    case Part::P1:
      return b.chi_labels();
    case Part::P0_1:
      return b.sector == 0 ? std::vector<int>{0} : std::vector<int>{};
    case Part::P0_2:
      return b.sector == 0 ? std::vector<int>{1} : std::vector<int>{2};
    case Part::P0_3:
      return b.sector == 0 ? std::vector<int>{4} : std::vector<int>{};
  }
  return {};
}

}  // namespace

CVec project(const VelocityBasis& b, const CVec& f, Part part) {
  CVec p = CVec::Zero(f.size());
  for (int label : part_labels(b, part)) {
    const Vec& c = b.chi_by_label(label);
    p += b.bilinear(f, c.cast<cplx>()) * c.cast<cplx>();
  }
  if (part == Part::P1) return f - p;
  return p;
}

Vec project(const VelocityBasis& b, const Vec& f, Part part) {
  Vec p = Vec::Zero(f.size());
  for (int label : part_labels(b, part)) {
    const Vec& c = b.chi_by_label(label);
    p += b.inner(f, c) * c;
  }
  if (part == Part::P1) return f - p;
  return p;
}

DistCoeffs project(const VelocityBasis& b, const DistCoeffs& f, Part part) {
  if (f.sector != b.sector) throw ValidationError("project: sector mismatch");
  return {project(b, f.values, part), f.sector};
}

Mat projector_matrix(const VelocityBasis& b, Part part) {
  const int n = b.n();
  Mat P = Mat::Zero(n, n);
  for (int label : part_labels(b, part)) {
    const Vec& c = b.chi_by_label(label);
    P += c * c.cwiseProduct(b.weights).transpose();
  }
  if (part == Part::P1) return Mat::Identity(n, n) - P;
  return P;
}

cplx inner_eta(const VelocityBasis& b, const CVec& f, const CVec& g, double eta, bool conjugate) {
  if (b.sector != 0) return conjugate ? b.inner(f, g) : b.bilinear(f, g);
  const CVec c0 = b.chi()[0].cast<cplx>();
  const double s = b.eta_factor(eta);
  if (conjugate) return b.inner(f, g) + s * b.bilinear(f, c0) * std::conj(b.bilinear(g, c0));
  return b.bilinear(f, g) + s * b.bilinear(f, c0) * b.bilinear(g, c0);
}

double norm_eta(const VelocityBasis& b, const CVec& f, double eta) {
  return std::sqrt(std::abs(inner_eta(b, f, f, eta, true)));
}

EtaGramRoot eta_gram_root(const VelocityBasis& b, double eta) {
  EtaGramRoot r;
  r.sqrt_w = b.weights.array().sqrt();
  if (b.sector == 0) {
    r.u = r.sqrt_w.cwiseProduct(b.chi()[0]);
    r.scale = std::sqrt(1.0 + b.eta_factor(eta)) - 1.0;
  } else {
    r.u = Vec::Zero(b.n());
    r.scale = 0.0;
  }
  return r;
}

double operator_norm_eta(const VelocityBasis& b, const CMat& A, double eta) {
  const EtaGramRoot g = eta_gram_root(b, eta);
  const CVec u = g.u.cast<cplx>();
  const double sinv = 1.0 / (1.0 + g.scale) - 1.0;
  // B = (I + s uu^T) W^{1/2} A W^{-1/2} (I + s' uu^T)
  CMat B = g.sqrt_w.cast<cplx>().asDiagonal() * A * g.sqrt_w.cwiseInverse().cast<cplx>().asDiagonal();
  if (g.scale != 0.0) {
    B += g.scale * u * (u.transpose() * B);
    B += sinv * (B * u) * u.transpose();
  }
  return largest_singular_value(B);
}

namespace {

// Three-point derivative weights at x[i] on a nonuniform line.
Mat fd_matrix(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  Mat D = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const int c = std::clamp(i, 1, n - 2);
    const int idx[3] = {c - 1, c, c + 1};
    for (int a = 0; a < 3; ++a) {
      // l_a'(x_i) for the quadratic through idx
      double num = 0.0, den = 1.0;
      for (int p = 0; p < 3; ++p) {
        if (p == a) continue;
        den *= x[idx[a]] - x[idx[p]];
        double prod = 1.0;
        for (int q = 0; q < 3; ++q)
          if (q != a && q != p) prod *= x[i] - x[idx[q]];
        num += prod;
      }
      D(i, idx[a]) = num / den;
    }
  }
  return D;
}

}  // namespace

Mat dv1_matrix(const VelocityBasis& b) {
  const Mat Ds = fd_matrix(b.rule_s.x), Da = fd_matrix(b.rule_a.x);
  const int n = b.n();
  Mat D = Mat::Zero(n, n);
  for (int is = 0; is < b.ns; ++is)
    for (int ia = 0; ia < b.na; ++ia) {
      const int i = b.index(is, ia);
      const double s = b.rule_s.x[is], th = b.rule_a.x[ia];
      for (int js = 0; js < b.ns; ++js) D(i, b.index(js, ia)) += std::cos(th) * Ds(is, js);
      for (int ja = 0; ja < b.na; ++ja) D(i, b.index(is, ja)) -= std::sin(th) / s * Da(ia, ja);
    }
  return D;
}

Vec weight_w(const VelocityBasis& b) {
  return (1.0 + b.v1.array().square() + b.vr.array().square()).sqrt();
}

void write_basis_csv(const VelocityBasis& b, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot open " + path);
  os << std::setprecision(17);
  os << "node,v1,vr,weight\n";
  for (int i = 0; i < b.n(); ++i) os << i << ',' << b.v1(i) << ',' << b.vr(i) << ',' << b.weights(i) << '\n';
}

}  // namespace mvpb
