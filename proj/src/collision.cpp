#include "mvpb/collision.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvpb/parallel.hpp"

namespace mvpb {

namespace {

const double kSqrt2Pi = std::sqrt(2.0 * kPi);

}  // namespace

double nu_of_speed(double r) {
  r = std::abs(r);
  if (r < 1e-4) {
    // 2 + r^2/3 - r^4/60 + ...
    return kSqrt2Pi * (2.0 + r * r / 3.0 - r * r * r * r / 60.0);
  }
  const double integral = std::sqrt(kPi / 2.0) * std::erf(r / std::sqrt(2.0));
  return kSqrt2Pi * (std::exp(-0.5 * r * r) + (r + 1.0 / r) * integral);
}

double nu_of_v(double v1, double vr) { return nu_of_speed(std::hypot(v1, vr)); }

double kernel_k(const double* v, const double* vs) {
  double d2 = 0.0, v2 = 0.0, vs2 = 0.0;
  for (int i = 0; i < 3; ++i) {
    d2 += (v[i] - vs[i]) * (v[i] - vs[i]);
    v2 += v[i] * v[i];
    vs2 += vs[i] * vs[i];
  }
  const double d = std::sqrt(d2);
  const double delta = v2 - vs2;
  return 2.0 / (kSqrt2Pi * d) * std::exp(-delta * delta / (8.0 * d2) - d2 / 8.0) -
         d / (2.0 * kSqrt2Pi) * std::exp(-(v2 + vs2) / 4.0);
}

void reduced_kernel(double a, double b, double as, double bs, int nodes, double out[2]) {
  // |v - v*|^2 = d^2 + 4 b b* sin^2(phi/2); near-singular at phi = 0 when d is
  // small, resolved by phi = alpha sinh(u) with alpha = d / sqrt(b b*).
  static thread_local int cached_nodes = -1;
  static thread_local Rule unit;
  if (cached_nodes != nodes) {
    unit = gauss_legendre(nodes, 0.0, 1.0);
    cached_nodes = nodes;
  }
  const double d2 = (a - as) * (a - as) + (b - bs) * (b - bs);
  const double p = b * bs;
  const double delta = (a * a + b * b) - (as * as + bs * bs);
  const double tail = std::exp(-(a * a + b * b + as * as + bs * bs) / 4.0) / (2.0 * kSqrt2Pi);
  const double c1 = 2.0 / kSqrt2Pi;
  auto k_at = [&](double dd2) {
    const double dd = std::sqrt(dd2);
    return c1 / dd * std::exp(-delta * delta / (8.0 * dd2) - dd2 / 8.0) - dd * tail;
  };
  if (p <= 0.0) {
    out[0] = 2.0 * kPi * k_at(d2);
    out[1] = 0.0;
    return;
  }
  const double d = std::sqrt(d2);
  double s0 = 0.0, s1 = 0.0;
  if (d > 0.0) {
    const double alpha = d / std::sqrt(p);
    const double umax = std::asinh(kPi / alpha);
    for (int q = 0; q < nodes; ++q) {
      const double u = umax * unit.x[q];
      const double phi = alpha * std::sinh(u);
      const double jac = alpha * std::cosh(u) * umax * unit.w[q];
      const double sh = std::sin(0.5 * phi);
      const double k = k_at(d2 + 4.0 * p * sh * sh);
      s0 += jac * k;
      s1 += jac * k * std::cos(phi);
    }
  } else {
    throw NumericalError("NonFinite", "reduced_kernel: coincident points");
  }
  out[0] = 2.0 * s0;
  out[1] = 2.0 * s1;
}

NuBounds fit_nu_bounds(double vmax, int samples) {
  NuBounds nb{1e300, 0.0};
  for (int i = 0; i < samples; ++i) {
    const double r = vmax * i / (samples - 1);
    const double q = nu_of_speed(r) / (1.0 + r);
    nb.nu0 = std::min(nb.nu0, q);
    nb.nu1 = std::max(nb.nu1, q);
  }
  return nb;
}

// ---------------------------------------------------------------- assembly

namespace {

constexpr char kMagic[8] = {'M', 'V', 'P', 'B', 'K', 'M', 'A', 'T'};
constexpr std::uint32_t kCacheVersion = 2;

struct CacheHeader {
  char magic[8];
  std::uint32_t version;
  std::int32_t sector, ns, na;
  double vmax;
  std::int32_t angular, boundary, radial;
  double grading;
  std::uint64_t n;
};

// Product integration against the tensor Lagrange basis, in the rectangle
// (X, Y) = (s, s_i theta) where the metric is isotropic at the target. Polar
// coordinates centred on the target are parametrized by the exit point q(tau)
// on the rectangle boundary: rho = u^2 rho_max, rho d(rho) d(psi) =
// 2 u^3 h du d(tau) with h the distance from the target to that side. Side
// panels are graded geometrically away from the foot of the perpendicular.
Mat assemble_product_integration(const VelocityBasis& b, const KernelQuadrature& q) {
  const int n = b.n();
  const int m = b.sector;
  const double V = b.vmax;
  const Rule ur = gauss_legendre(q.radial, 0.0, 1.0);
  const Rule pr = gauss_legendre(q.boundary, 0.0, 1.0);
  Mat K(n, n);

  parallel_for(0, n, [&](int i) {
    const double si = b.speed(i), ti = b.angle(i);
    const double a = b.v1(i), c = b.vr(i);
    const double sig = si, H = si * kPi;
    const double X = si, Y = si * ti;
    struct Exit {
      double x, y, w;
    };
    std::vector<Exit> exits;
    auto side = [&](bool horizontal, double fixed, double hi, double foot, double h) {
      std::vector<double> cuts{0.0, hi, foot};
      for (double d = h; foot + d < hi; d *= q.grading) cuts.push_back(foot + d);
      for (double d = h; foot - d > 0.0; d *= q.grading) cuts.push_back(foot - d);
      std::sort(cuts.begin(), cuts.end());
      for (size_t p = 0; p + 1 < cuts.size(); ++p) {
        const double len = cuts[p + 1] - cuts[p];
        if (len <= 0.0) continue;
        for (int k = 0; k < q.boundary; ++k) {
          const double t = cuts[p] + len * pr.x[k];
          exits.push_back(horizontal ? Exit{t, fixed, pr.w[k] * len * h} : Exit{fixed, t, pr.w[k] * len * h});
        }
      }
    };
    side(true, 0.0, V, X, Y);
    side(false, V, H, Y, V - X);
    side(true, H, V, X, H - Y);
    side(false, 0.0, H, Y, X);

    const int nq = static_cast<int>(exits.size()) * q.radial;
    RowMat As(nq, b.ns), Aa(nq, b.na);
    Vec wk(nq);
    int idx = 0;
    for (const Exit& e : exits)
      for (int k = 0; k < q.radial; ++k) {
        const double u = ur.x[k], u2 = u * u;
        const double s = X + u2 * (e.x - X);
        const double th = (Y + u2 * (e.y - Y)) / sig;
        const double sn = std::sin(th);
        double km[2];
        reduced_kernel(a, c, s * std::cos(th), s * sn, q.angular, km);
        // vr* dv1* dvr* = s^2 sin(theta) dX dY / sig
        wk(idx) = e.w * 2.0 * u2 * u * ur.w[k] * km[m] * s * s * sn / sig;
        b.lag_s.eval(s, As.row(idx).data());
        b.lag_a.eval(th, Aa.row(idx).data());
        ++idx;
      }
    Mat row = As.transpose() * wk.asDiagonal() * Aa;  // ns x na
    for (int js = 0; js < b.ns; ++js)
      for (int ja = 0; ja < b.na; ++ja) K(i, b.index(js, ja)) = row(js, ja);
  });
  return K;
}

// W-orthonormal basis of smooth functions He_a(v1) He_{2c+m}(vr) sqrt(M),
// a + 2c + m <= degree, returned in W^{1/2} coordinates.
Mat smooth_subspace(const VelocityBasis& b, int degree) {
  const int n = b.n();
  const int m = b.sector;
  auto hermite = [](int k, double x) {
    double h0 = 1.0, h1 = x;
    if (k == 0) return h0;
    for (int j = 1; j < k; ++j) {
      const double h2 = x * h1 - j * h0;
      h0 = h1;
      h1 = h2;
    }
    return h1;
  };
  std::vector<Vec> cols;
  for (int a = 0; a <= degree; ++a)
    for (int c = 0; a + 2 * c + m <= degree; ++c) {
      Vec f(n);
      for (int i = 0; i < n; ++i) f(i) = hermite(a, b.v1(i)) * hermite(2 * c + m, b.vr(i)) * b.sqrt_m(i);
      cols.push_back(f.cwiseProduct(b.weights.cwiseSqrt()));
    }
  Mat F(n, cols.size());
  for (size_t k = 0; k < cols.size(); ++k) F.col(k) = cols[k] / cols[k].norm();
  Eigen::HouseholderQR<Mat> qr(F);
  return qr.householderQ() * Mat::Identity(n, F.cols());
}

}  // namespace

std::string kernel_cache_path(const std::string& dir, const VelocityBasis& b, const KernelQuadrature& q) {
  std::ostringstream os;
  os << dir << "/kmat_m" << b.sector << "_" << b.ns << "x" << b.na << "_v" << b.vmax << "_a" << q.angular << "_b"
     << q.boundary << "_r" << q.radial << "_g" << q.grading << ".bin";
  return os.str();
}

bool read_kernel_cache(const std::string& path, const VelocityBasis& b, const KernelQuadrature& q, Mat& K) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  CacheHeader h{};
  is.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!is || std::memcmp(h.magic, kMagic, 8) != 0 || h.version != kCacheVersion) return false;
  if (h.sector != b.sector || h.ns != b.ns || h.na != b.na || h.vmax != b.vmax || h.angular != q.angular ||
      h.boundary != q.boundary || h.radial != q.radial || h.grading != q.grading || h.n != static_cast<std::uint64_t>(b.n()))
    return false;
  RowMat R(b.n(), b.n());
  is.read(reinterpret_cast<char*>(R.data()), sizeof(double) * R.size());
  if (!is) return false;
  K = R;
  return true;
}

void write_kernel_cache(const std::string& path, const VelocityBasis& b, const KernelQuadrature& q, const Mat& K) {
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) return;
    CacheHeader h{};
    std::memcpy(h.magic, kMagic, 8);
    h.version = kCacheVersion;
    h.sector = b.sector;
    h.ns = b.ns;
    h.na = b.na;
    h.vmax = b.vmax;
    h.angular = q.angular;
    h.boundary = q.boundary;
    h.radial = q.radial;
    h.grading = q.grading;
    h.n = b.n();
    os.write(reinterpret_cast<const char*>(&h), sizeof(h));
    RowMat R = K;
    os.write(reinterpret_cast<const char*>(R.data()), sizeof(double) * R.size());
  }
  std::filesystem::rename(tmp, path);
}

Mat assemble_K(const VelocityBasis& b, const KernelQuadrature& q, const std::string& cache_dir,
               double* raw_asymmetry) {
  Mat K;
  const std::string path = cache_dir.empty() ? std::string() : kernel_cache_path(cache_dir, b, q);
  // the cache stores the unsymmetrized matrix so diagnostics survive reloads
  if (path.empty() || !read_kernel_cache(path, b, q, K)) {
    K = assemble_product_integration(b, q);
    if (!K.allFinite()) throw NumericalError("NonFinite", "assemble_K: non-finite kernel entries");
    if (!path.empty()) write_kernel_cache(path, b, q, K);
  }
  // Weighted symmetrization that keeps the accurate action on smooth
  // functions: in Q = W^{1/2} K W^{-1/2} with P the projector on the smooth
  // subspace, the blocks (I-P) Q P are kept and P Q (I-P) is set to their
  // transpose; the P-P and complement blocks take their symmetric parts.
  const Vec sw = b.weights.cwiseSqrt();
  const Mat Q = sw.asDiagonal() * K * sw.cwiseInverse().asDiagonal();
  if (raw_asymmetry) *raw_asymmetry = (Q - Q.transpose()).norm() / Q.norm();
  const Mat U = smooth_subspace(b, q.smooth_degree);
  const Mat A = Q * U;
  const Mat B = U.transpose() * A;
  const Mat C = A - U * B;
  const Mat QP = Q - A * U.transpose();
  Mat R = QP - U * (U.transpose() * QP);
  Mat S = U * (0.5 * (B + B.transpose())) * U.transpose() + C * U.transpose() + U * C.transpose() +
          0.5 * (R + R.transpose());
  S = 0.5 * (S + S.transpose());
  return sw.cwiseInverse().asDiagonal() * S * sw.asDiagonal();
}

// ---------------------------------------------------------------- operator

Mat CollisionOperator::symmetric_form(const Mat& A) const {
  return sqrt_w_.asDiagonal() * A * sqrt_w_.cwiseInverse().asDiagonal();
}

void CollisionOperator::finalize() {
  const int n = basis.n();
  sqrt_w_ = basis.weights.array().sqrt();
  const Mat P1 = projector_matrix(basis, Part::P1);
  const Mat P0 = projector_matrix(basis, Part::P0);
  Mat Lraw = K_raw;
  Lraw.diagonal() -= nu;
  invariant_leak = 0.0;
  for (const Vec& c : basis.chi()) invariant_leak = std::max(invariant_leak, basis.norm(Vec(Lraw * c)) / basis.norm(c));
  L = P1 * Lraw * P1;
  Mat S = symmetric_form(L);
  S = 0.5 * (S + S.transpose());
  L = sqrt_w_.cwiseInverse().asDiagonal() * S * sqrt_w_.asDiagonal();
  K = L;
  K.diagonal() += nu;

  Mat D = -(S - symmetric_form(P0));
  D = 0.5 * (D + D.transpose());
  neg_deflated_.compute(D);
  if (neg_deflated_.info() != Eigen::Success) throw IllConditioned("deflated collision operator is not definite");

  Eigen::SelfAdjointEigenSolver<Mat> es(-S, Eigen::EigenvaluesOnly);
  const int k = static_cast<int>(basis.chi().size());
  mu_hat = es.eigenvalues()(k);
  (void)n;
}

Vec CollisionOperator::linv_p1(const Vec& g) const {
  const Vec rhs = project(basis, g, Part::P1);
  // (L - P0) h = P1 g  <=>  -(S - P0~) (W^{1/2} h) = -W^{1/2} P1 g
  Vec y = neg_deflated_.solve(-sqrt_w_.cwiseProduct(rhs));
  Vec h = y.cwiseQuotient(sqrt_w_);
  const double res = basis.norm(Vec(L * h - rhs));
  const double scale = std::max(basis.norm(rhs), 1e-300);
  if (res > 1e-8 * scale && res > 1e-14) throw IllConditioned("linv_p1 residual " + std::to_string(res / scale));
  return h;
}

CVec CollisionOperator::linv_p1(const CVec& g) const {
  Vec re = linv_p1(Vec(g.real()));
  Vec im = linv_p1(Vec(g.imag()));
  CVec out(re.size());
  out.real() = re;
  out.imag() = im;
  return out;
}

CollisionOperator build_collision(const VelocityBasis& b, const KernelQuadrature& q, const std::string& cache_dir) {
  CollisionOperator op;
  op.basis = b;
  op.nu.resize(b.n());
  for (int i = 0; i < b.n(); ++i) op.nu(i) = nu_of_v(b.v1(i), b.vr(i));
  op.K_raw = assemble_K(b, q, cache_dir, &op.raw_asymmetry);
  if (b.sector == 0) {
    const Vec& c0 = b.chi()[0];
    op.kchi0_error = b.norm(Vec(op.K_raw * c0 - op.nu.cwiseProduct(c0))) / b.norm(c0);
  }
  op.finalize();
  return op;
}

// ---------------------------------------------------------------- transport

double u_closed(int j, double eta) {
  if (j == 0) return 0.0;
  const double u = std::sqrt(5.0 / 3.0 + 1.0 / (1.0 + eta * eta));
  return j > 0 ? u : -u;
}

std::array<double, 3> e_coeffs(int j, double eta) {
  const double s = 1.0 / (1.0 + eta * eta);
  if (j == 0) {
    const double c0 = 1.0 / std::sqrt((1.0 + s) * (1.0 + 1.5 * (1.0 + s)));
    return {c0, 0.0, -(1.0 + s) * c0 / std::sqrt(2.0 / 3.0)};
  }
  const double u = u_closed(j, eta);
  const double c0 = 1.0 / (std::sqrt(2.0) * std::abs(u));
  return {c0, u * c0, std::sqrt(2.0 / 3.0) * c0};
}

Vec e_vector(const VelocityBasis& b0, int j, double eta) {
  const auto c = e_coeffs(j, eta);
  return c[0] * b0.chi()[0] + c[1] * b0.chi()[1] + c[2] * b0.chi()[2];
}

TransportCoefficients transport_coefficients(const CollisionOperator& op0, const CollisionOperator& op1) {
  const VelocityBasis& b0 = op0.basis;
  const VelocityBasis& b1 = op1.basis;
  TransportCoefficients tc;
  std::array<Vec, 3> h, v1e;
  for (int j = -1; j <= 1; ++j) {
    tc.E[j + 1] = e_vector(b0, j, 0.0);
    v1e[j + 1] = b0.v1.cwiseProduct(tc.E[j + 1]);
    h[j + 1] = op0.linv_p1(v1e[j + 1]);
    tc.a[j + 1] = -b0.inner(h[j + 1], v1e[j + 1]);
    tc.beta[j + 1] = u_closed(j, 0.0);
  }
  const Vec& c2 = b1.chi()[0];
  tc.E[3] = c2;
  tc.E[4] = c2;
  const Vec v1c2 = b1.v1.cwiseProduct(c2);
  tc.kappa1 = -b1.inner(op1.linv_p1(v1c2), v1c2);
  tc.a[3] = tc.kappa1;
  tc.a[4] = tc.kappa1;
  const Vec v1c4 = b0.v1.cwiseProduct(b0.chi()[2]);
  tc.kappa2 = -b0.inner(op0.linv_p1(v1c4), v1c4);
  for (int j = -1; j <= 1; ++j)
    for (int k = -1; k <= 1; ++k) {
      if (j == k) {
        tc.b[j + 1][k + 1] = 0.0;
        continue;
      }
      tc.b[j + 1][k + 1] = kI * b0.inner(h[j + 1], v1e[k + 1]) / (tc.beta[j + 1] - tc.beta[k + 1]);
    }
  return tc;
}

LinearModel build_model(int ns, int na, double vmax, const KernelQuadrature& q, const std::string& cache_dir) {
  LinearModel m;
  m.op0 = build_collision(build_basis(0, ns, na, vmax), q, cache_dir);
  m.op1 = build_collision(build_basis(1, ns, na, vmax), q, cache_dir);
  m.tc = transport_coefficients(m.op0, m.op1);
  return m;
}

}  // namespace mvpb
