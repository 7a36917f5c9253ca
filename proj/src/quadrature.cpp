#include "mvpb/quadrature.hpp"

#include <cmath>

namespace mvpb {

Rule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw ValidationError("gauss_legendre: n must be positive");
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 0; k < n; ++k) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k + 1.0) * z * p1 - k * p2) / (k + 1.0);
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double wt = 2.0 / ((1.0 - z * z) * dp * dp);
    r.x[i] = mid - half * z;
    r.x[n - 1 - i] = mid + half * z;
    r.w[i] = r.w[n - 1 - i] = half * wt;
  }
  return r;
}

Lagrange1D::Lagrange1D(std::vector<double> nodes) : x_(std::move(nodes)), bw_(x_.size(), 1.0) {
  const int n = size();
  for (int j = 0; j < n; ++j) {
    double p = 1.0;
    for (int k = 0; k < n; ++k)
      if (k != j) p *= (x_[j] - x_[k]);
    bw_[j] = 1.0 / p;
  }
  // rescale to avoid overflow for large n
  double m = 0.0;
  for (double v : bw_) m = std::max(m, std::abs(v));
  for (double& v : bw_) v /= m;
}

void Lagrange1D::eval(double t, double* out) const {
  const int n = size();
  double s = 0.0;
  for (int j = 0; j < n; ++j) {
    double d = t - x_[j];
    if (d == 0.0) {
      for (int k = 0; k < n; ++k) out[k] = 0.0;
      out[j] = 1.0;
      return;
    }
    out[j] = bw_[j] / d;
    s += out[j];
  }
  for (int j = 0; j < n; ++j) out[j] /= s;
}

Mat Lagrange1D::derivative_matrix() const {
  const int n = size();
  Mat D = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      D(i, j) = (bw_[j] / bw_[i]) / (x_[i] - x_[j]);
      diag -= D(i, j);
    }
    D(i, i) = diag;
  }
  return D;
}

}  // namespace mvpb
