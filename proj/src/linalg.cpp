#include "mvpb/linalg.hpp"

#include <cmath>
#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

namespace mvpb {

EigenDecomp eig(const CMat& A, bool want_vectors) {
  const lapack_int n = static_cast<lapack_int>(A.rows());
  if (A.cols() != A.rows()) throw ValidationError("eig: matrix must be square");
  CMat a = A;
  EigenDecomp out;
  out.values.resize(n);
  if (want_vectors) out.vectors.resize(n, n);
  cplx dummy;
  lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', want_vectors ? 'V' : 'N', n, a.data(), n,
                                  out.values.data(), &dummy, 1, want_vectors ? out.vectors.data() : &dummy, n);
  if (info != 0) throw EigenFailure("zgeev returned info=" + std::to_string(info));
  return out;
}

CMat expm(const CMat& A) {
  static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                             1187353796428800.0,  129060195264000.0,   10559470521600.0,
                             670442572800.0,      33522128640.0,       1323241920.0,
                             40840800.0,          960960.0,            16380.0,
                             182.0,               1.0};
  const int n = static_cast<int>(A.rows());
  const double theta13 = 5.371920351148152;
  const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm1 > theta13) s = std::max(0, static_cast<int>(std::ceil(std::log2(norm1 / theta13))));
  const CMat X = A / std::ldexp(1.0, s);
  const CMat I = CMat::Identity(n, n);
  const CMat X2 = X * X, X4 = X2 * X2, X6 = X4 * X2;
  CMat U = X * (X6 * (b[13] * X6 + b[11] * X4 + b[9] * X2) + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * I);
  CMat V = X6 * (b[12] * X6 + b[10] * X4 + b[8] * X2) + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * I;
  CMat R = (V - U).partialPivLu().solve(V + U);
  for (int k = 0; k < s; ++k) R = R * R;
  return R;
}

double largest_singular_value(const CMat& B) {
  const int n = static_cast<int>(B.cols());
  if (n == 0) return 0.0;
  CVec x(n);
  for (int i = 0; i < n; ++i) x(i) = cplx(1.0 + 0.37 * std::sin(1.3 * i), 0.21 * std::cos(0.7 * i));
  x.normalize();
  double prev = 0.0, sigma2 = 0.0;
  for (int it = 0; it < 3000; ++it) {
    CVec y = B * x;
    CVec z = B.adjoint() * y;
    sigma2 = std::abs(x.dot(z));
    const double nz = z.norm();
    if (nz == 0.0) return 0.0;
    x = z / nz;
    if (it > 3 && std::abs(sigma2 - prev) <= 1e-13 * sigma2) return std::sqrt(sigma2);
    prev = sigma2;
  }
  // slow convergence: dense fallback
  Eigen::SelfAdjointEigenSolver<CMat> es(B.adjoint() * B, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

Propagator::Propagator(const CMat& A, double cond_limit) : A_(A) {
  EigenDecomp d = eig(A, true);
  lam_ = d.values;
  V_ = d.vectors;
  Eigen::PartialPivLU<CMat> lu(V_);
  Vinv_ = lu.inverse();
  cond_ = V_.cwiseAbs().colwise().sum().maxCoeff() * Vinv_.cwiseAbs().colwise().sum().maxCoeff();
  use_eigen_ = std::isfinite(cond_) && cond_ < cond_limit;
}

CMat Propagator::matrix(double t) const {
  if (!use_eigen_) return expm(t * A_);
  CVec e = (t * lam_).array().exp();
  return V_ * e.asDiagonal() * Vinv_;
}

CMat Propagator::apply(double t, const CMat& X) const {
  if (!use_eigen_) return expm(t * A_) * X;
  CVec e = (t * lam_).array().exp();
  return V_ * (e.asDiagonal() * (Vinv_ * X));
}

}  // namespace mvpb
