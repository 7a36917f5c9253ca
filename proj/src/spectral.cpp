#include "mvpb/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mvpb {

namespace {

double eta_s(double eta) { return 1.0 / (1.0 + eta * eta); }

Vec branch_start(const LinearModel& model, int j) {
  if (branch_sector(j) == 1) return model.op1.basis.chi()[0];
  return e_vector(model.op0.basis, j, 0.0);
}

// Least squares y ~ c0 x^p0 + c1 x^p1 with R^2.
struct TwoTermFit {
  double c0 = 0.0, c1 = 0.0, r2 = 0.0;
};

TwoTermFit fit_two(const std::vector<double>& x, const std::vector<double>& y, int p0, int p1) {
  const int n = static_cast<int>(x.size());
  Mat X(n, 2);
  Vec Y(n);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = std::pow(x[i], p0);
    X(i, 1) = std::pow(x[i], p1);
    Y(i) = y[i];
  }
  Vec c = X.colPivHouseholderQr().solve(Y);
  TwoTermFit f{c(0), c(1), 1.0};
  const double mean = Y.mean();
  const double ss_tot = (Y.array() - mean).square().sum();
  const double ss_res = (X * c - Y).squaredNorm();
  f.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

double overlap(const VelocityBasis& b, const CVec& f, const CVec& g, double eta) {
  const double nf = norm_eta(b, f, eta), ng = norm_eta(b, g, eta);
  if (nf == 0.0 || ng == 0.0) return 0.0;
  return std::abs(inner_eta(b, f, g, eta, true)) / (nf * ng);
}

// Eigenvector for a known eigenvalue by shifted inverse iteration.
CVec inverse_iteration(const CMat& A, cplx lambda, const CVec& start, int iters = 3) {
  const int n = static_cast<int>(A.rows());
  const double scale = std::max(1.0, std::abs(lambda));
  CMat M = A;
  M.diagonal().array() -= lambda + cplx(1e-13 * scale, 1e-13 * scale);
  Eigen::PartialPivLU<CMat> lu(M);
  CVec x = start;
  if (x.norm() == 0.0) x = CVec::Ones(n);
  x.normalize();
  for (int it = 0; it < iters; ++it) {
    x = lu.solve(x);
    x.normalize();
  }
  return x;
}

std::vector<int> order_by_real(const CVec& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v(a).real() > v(b).real(); });
  return idx;
}

}  // namespace

ModeOperator assemble_mode(const LinearModel& model, double eta, int sector) {
  const CollisionOperator& op = model.sector(sector);
  const VelocityBasis& b = op.basis;
  ModeOperator B;
  B.eta = eta;
  B.sector = sector;
  B.mat = op.L.cast<cplx>();
  B.mat.diagonal() -= kI * eta * b.v1.cast<cplx>();
  if (sector == 0 && eta != 0.0) {
    const Vec& c0 = b.chi()[0];
    const Vec left = b.v1.cwiseProduct(c0);
    const Vec right = b.weights.cwiseProduct(c0);
    B.mat -= (kI * eta * eta_s(eta)) * (left * right.transpose()).cast<cplx>();
  }
  return B;
}

Mat eta_gram(const VelocityBasis& b, double eta) {
  Mat G = b.weights.asDiagonal();
  if (b.sector == 0) {
    const Vec wc = b.weights.cwiseProduct(b.chi()[0]);
    G += eta_s(eta) * wc * wc.transpose();
  }
  return G;
}

void normalize_bilinear(const VelocityBasis& b, const Mat& gram, CVec& psi) {
  const cplx p = psi.transpose() * (gram * psi);
  if (p == cplx(0.0)) throw EigenFailure("eigenvector is self-orthogonal in the bilinear pairing");
  psi /= std::sqrt(p);
  cplx best = 0.0;
  for (const Vec& c : b.chi()) {
    const cplx comp = b.bilinear(psi, c.cast<cplx>());
    if (std::abs(comp) > std::abs(best)) best = comp;
  }
  if (best.real() < 0.0) psi = -psi;
}

void refine_eigenpair(const ModeOperator& B, const Mat& gram, cplx& lambda, CVec& psi, int max_iter) {
  const double scale = std::max(1.0, B.mat.cwiseAbs().rowwise().sum().maxCoeff());
  for (int it = 0; it < max_iter; ++it) {
    CMat M = B.mat;
    M.diagonal().array() -= lambda + cplx(1e-14 * scale, 0.0);
    CVec y = M.partialPivLu().solve(psi);
    psi = y / y.norm();
    const CVec Gpsi = gram * psi;
    const cplx num = Gpsi.transpose() * (B.mat * psi);
    const cplx den = Gpsi.transpose() * psi;
    const cplx next = num / den;
    const double res = (B.mat * psi - next * psi).norm();
    const double step = std::abs(next - lambda);
    lambda = next;
    if (res <= 1e-12 * scale || step <= 1e-15 * scale) return;
  }
}

BranchSet eigen_branches(const LinearModel& model, double eta_max, int steps, double fit_fraction) {
  if (steps < 32) throw BranchSwap("eigen_branches: " + std::to_string(steps) + " steps is below the 32-step minimum");
  if (!(eta_max > 0.0)) throw ValidationError("eigen_branches: eta_max must be positive");
  BranchSet set;
  set.eta_max = eta_max;
  const double half_gap = 0.5 * model.mu_hat();
  for (int k = 0; k <= steps; ++k) set.etas.push_back(eta_max * k / steps);

  std::array<std::vector<int>, 2> members{std::vector<int>{-1, 0, 1}, std::vector<int>{2}};
  for (int j = -1; j <= 3; ++j) set.branch[j + 1].j = j;
  std::vector<double> step_overlap(set.etas.size(), 1.0);

  for (int m = 0; m < 2; ++m) {
    const VelocityBasis& b = model.sector(m).basis;
    std::vector<CVec> prev;
    for (int j : members[m]) prev.push_back(branch_start(model, j).cast<cplx>());
    for (size_t k = 0; k < set.etas.size(); ++k) {
      const double eta = set.etas[k];
      const ModeOperator B = assemble_mode(model, eta, m);
      const Mat G = eta_gram(b, eta);
      const CVec ev = eig(B.mat, false).values;
      int slow = 0;
      for (int i = 0; i < ev.size(); ++i)
        if (ev(i).real() > -half_gap) ++slow;
      if (m == 0) set.slow_count.push_back(slow);
      else set.slow_count[k] += 2 * slow;
      if (k == 0) {
        int zeros = 0;
        for (int i = 0; i < ev.size(); ++i)
          if (std::abs(ev(i)) <= 1e-6) ++zeros;
        set.zero_count += (m == 0 ? 1 : 2) * zeros;
        for (size_t r = 0; r < members[m].size(); ++r) {
          CVec psi = prev[r];
          normalize_bilinear(b, G, psi);
          const CVec Gpsi = G * psi;
          const cplx lam = Gpsi.transpose() * (B.mat * psi);
          EigenBranch& br = set.branch[members[m][r] + 1];
          br.etas.push_back(eta);
          br.lambdas.push_back(lam);
          br.psis.push_back(psi);
        }
        continue;
      }
      const std::vector<int> ord = order_by_real(ev);
      const int ncand = static_cast<int>(members[m].size()) + 1;
      CVec start = CVec::Ones(b.n());
      for (const CVec& p : prev) start += p;
      std::vector<CVec> cand;
      for (int c = 0; c < ncand; ++c) cand.push_back(inverse_iteration(B.mat, ev(ord[c]), start));
      std::vector<int> used(ncand, 0);
      for (size_t r = 0; r < members[m].size(); ++r) {
        int best = -1;
        double best_ov = -1.0;
        for (int c = 0; c < ncand; ++c) {
          const double ov = overlap(b, prev[r], cand[c], eta);
          if (ov > best_ov) {
            best_ov = ov;
            best = c;
          }
        }
        if (best_ov < 0.5 || used[best])
          throw BranchSwap("eigen_branches: overlap " + std::to_string(best_ov) + " at eta " + std::to_string(eta));
        used[best] = 1;
        cplx lam = ev(ord[best]);
        CVec psi = cand[best];
        normalize_bilinear(b, G, psi);
        EigenBranch& br = set.branch[members[m][r] + 1];
        br.etas.push_back(eta);
        br.lambdas.push_back(lam);
        br.psis.push_back(psi);
        br.min_overlap = std::min(br.min_overlap, best_ov);
        step_overlap[k] = std::min(step_overlap[k], best_ov);
        prev[r] = psi;
      }
    }
  }
  // shear doublet: one computation, reported twice
  {
    EigenBranch copy = set.branch[3];
    copy.j = 3;
    set.branch[4] = copy;
  }

  set.r0_hat = 0.0;
  for (size_t k = 0; k < set.etas.size(); ++k) {
    if (set.slow_count[k] != 5 || step_overlap[k] < 0.9) break;
    set.r0_hat = set.etas[k];
  }

  for (EigenBranch& br : set.branch) {
    std::vector<double> x, re, im;
    for (size_t k = 1; k < br.etas.size(); ++k) {
      if (br.etas[k] > fit_fraction * eta_max + 1e-15) break;
      x.push_back(br.etas[k]);
      re.push_back(br.lambdas[k].real());
      im.push_back(br.lambdas[k].imag());
    }
    if (x.size() < 3) throw ValidationError("eigen_branches: fewer than three points in the fit window");
    const TwoTermFit fi = fit_two(x, im, 1, 3);
    const TwoTermFit fr = fit_two(x, re, 2, 4);
    br.beta_fit = -fi.c0;
    br.a_fit = -fr.c0;
    br.fit_r2_im = fi.r2;
    br.fit_r2_re = fr.r2;
    br.r0_hat = set.r0_hat;
  }
  return set;
}

TrackedMode track_branch(const LinearModel& model, int j, const std::vector<double>& etas) {
  const int m = branch_sector(j);
  const VelocityBasis& b = model.sector(m).basis;
  TrackedMode out;
  CVec psi = branch_start(model, j).cast<cplx>();
  const double beta = j >= 2 ? 0.0 : model.tc.beta[j + 1];
  const double a = model.tc.a_of(j);
  cplx lam_prev = 0.0, lam_prev2 = 0.0;
  double eta_prev = 0.0, eta_prev2 = 0.0;
  for (size_t k = 0; k < etas.size(); ++k) {
    const double eta = etas[k];
    const ModeOperator B = assemble_mode(model, eta, m);
    const Mat G = eta_gram(b, eta);
    cplx lam;
    if (k >= 2) {
      lam = lam_prev + (lam_prev - lam_prev2) * ((eta - eta_prev) / (eta_prev - eta_prev2));
    } else {
      lam = cplx(-a * eta * eta, -beta * eta);
    }
    const CVec before = psi;
    refine_eigenpair(B, G, lam, psi);
    normalize_bilinear(b, G, psi);
    if (overlap(b, before, psi, eta) < 0.9)
      throw BranchSwap("track_branch: branch " + std::to_string(j) + " lost at eta " + std::to_string(eta));
    out.lambdas.push_back(lam);
    out.psis.push_back(psi);
    lam_prev2 = lam_prev;
    eta_prev2 = eta_prev;
    lam_prev = lam;
    eta_prev = eta;
  }
  return out;
}

GapScan spectral_gap_scan(const LinearModel& model, const std::vector<double>& etas, double r0) {
  GapScan g;
  g.etas = etas;
  const double half_gap = 0.5 * model.mu_hat();
  g.alpha_hat = 1e300;
  g.max_re_all = -1e300;
  for (double eta : etas) {
    double mx = -1e300, mk = -1e300, radius = 0.0;
    for (int m = 0; m < 2; ++m) {
      const CVec ev = eig(assemble_mode(model, eta, m).mat, false).values;
      const std::vector<int> ord = order_by_real(ev);
      const int fluid = m == 0 ? 3 : 1;
      mx = std::max(mx, ev(ord[0]).real());
      mk = std::max(mk, ev(ord[std::abs(eta) < r0 ? fluid : 0]).real());
      for (int i = 0; i < ev.size(); ++i)
        if (ev(i).real() > -half_gap) radius = std::max(radius, std::abs(ev(i)));
      if (eta == 0.0)
        for (int i = 0; i < ev.size(); ++i)
          if (std::abs(ev(i)) <= 1e-6) g.zero_count += m == 0 ? 1 : 2;
    }
    g.max_re.push_back(mx);
    g.max_re_kinetic.push_back(mk);
    g.slow_radius.push_back(radius);
    g.max_re_all = std::max(g.max_re_all, mx);
    if (std::abs(eta) >= r0) g.alpha_hat = std::min(g.alpha_hat, -mx);
  }
  return g;
}

Eigen::Matrix<double, 5, 5> fluid_matrix(double eta) {
  // P0 v1 (I + s Pi) on (chi0, chi1, chi4, chi2, chi3): v1 chi0 = chi1,
  // P0 v1 chi1 = chi0 + sqrt(2/3) chi4, P0 v1 chi4 = sqrt(2/3) chi1.
  const double r = std::sqrt(2.0 / 3.0);
  Eigen::Matrix<double, 5, 5> A = Eigen::Matrix<double, 5, 5>::Zero();
  A(1, 0) = 1.0 + eta_s(eta);
  A(0, 1) = 1.0;
  A(2, 1) = r;
  A(1, 2) = r;
  return A;
}

Eigen::Matrix<double, 5, 5> fluid_matrix_discrete(const LinearModel& model, double eta) {
  Eigen::Matrix<double, 5, 5> A = Eigen::Matrix<double, 5, 5>::Zero();
  const VelocityBasis& b0 = model.op0.basis;
  const VelocityBasis& b1 = model.op1.basis;
  const double s = eta_s(eta);
  const std::vector<Vec>& c = b0.chi();
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 3; ++j) {
      A(k, j) = b0.inner(Vec(b0.v1.cwiseProduct(c[j])), c[k]);
      if (j == 0) A(k, j) += s * b0.inner(Vec(b0.v1.cwiseProduct(c[0])), c[k]);
    }
  const Vec& c2 = b1.chi()[0];
  const double d = b1.inner(Vec(b1.v1.cwiseProduct(c2)), c2);
  A(3, 3) = d;
  A(4, 4) = d;
  return A;
}

// ---------------------------------------------------------------- dispersion

DispersionFunctions::DispersionFunctions(const LinearModel& model, double eta) : model_(&model), eta_(eta) {
  for (int j = -1; j <= 1; ++j) {
    E_[j + 1] = e_vector(model.op0.basis, j, eta);
    u_[j + 1] = u_closed(j, eta);
  }
}

CMat DispersionFunctions::resolvent_block(int sector, cplx sigma, const std::vector<Vec>& g) const {
  const CollisionOperator& op = model_->sector(sector);
  const VelocityBasis& b = op.basis;
  const int n = b.n();
  const Mat P0 = projector_matrix(b, Part::P0);
  const Mat P1 = Mat::Identity(n, n) - P0;
  CMat M = op.L.cast<cplx>();
  M.diagonal().array() += kI * eta_ * sigma;
  M.diagonal() -= kI * eta_ * b.v1.cast<cplx>();
  CMat T = P1.cast<cplx>() * M * P1.cast<cplx>() - P0.cast<cplx>();
  Eigen::PartialPivLU<CMat> lu(T);
  CMat X(n, g.size());
  for (size_t a = 0; a < g.size(); ++a) X.col(a) = lu.solve((P1 * b.v1.cwiseProduct(g[a])).cast<cplx>());
  return X;
}

Eigen::Matrix<cplx, 5, 5> DispersionFunctions::R(cplx sigma) const {
  const VelocityBasis& b0 = model_->op0.basis;
  const VelocityBasis& b1 = model_->op1.basis;
  const std::vector<Vec> g0(E_.begin(), E_.end());
  const CMat X0 = resolvent_block(0, sigma, g0);
  const CMat X1 = resolvent_block(1, sigma, {b1.chi()[0]});
  // Lift to 3-D: profiles times 1, cos(phi), sin(phi), integrated over phi.
  const int nphi = 8;
  const int n = b0.n();
  const Vec base = b0.weights / (2.0 * kPi);
  Eigen::Matrix<cplx, 5, 5> out;
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 5; ++j) {
      cplx acc = 0.0;
      for (int q = 0; q < nphi; ++q) {
        const double phi = 2.0 * kPi * q / nphi;
        const double ang[3] = {1.0, std::cos(phi), std::sin(phi)};
        const int kk = k < 3 ? 0 : k - 2, jj = j < 3 ? 0 : j - 2;
        for (int i = 0; i < n; ++i) {
          const cplx x = k < 3 ? X0(i, k) : X1(i, 0);
          const double g = j < 3 ? E_[j](i) : b1.chi()[0](i);
          acc += base(i) * x * ang[kk] * b0.v1(i) * g * ang[jj];
        }
      }
      out(k, j) = acc * (2.0 * kPi / nphi);
    }
  return out;
}

cplx DispersionFunctions::D1(cplx sigma) const {
  const VelocityBasis& b0 = model_->op0.basis;
  const std::vector<Vec> g0(E_.begin(), E_.end());
  const CMat X = resolvent_block(0, sigma, g0);
  Eigen::Matrix3cd D;
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) {
      const cplx r = b0.bilinear(X.col(k), b0.v1.cwiseProduct(E_[j]).cast<cplx>());
      D(j, k) = (j == k ? sigma - u_[j] : cplx(0.0)) - kI * eta_ * r;
    }
  return D.determinant();
}

cplx DispersionFunctions::D0(cplx sigma) const {
  const VelocityBasis& b1 = model_->op1.basis;
  const Vec& c2 = b1.chi()[0];
  const CMat X = resolvent_block(1, sigma, {c2});
  const cplx r = b1.bilinear(X.col(0), b1.v1.cwiseProduct(c2).cast<cplx>());
  return sigma - kI * eta_ * r;
}

namespace {

template <class F>
cplx secant_root(F&& f, cplx x0, int& iterations) {
  cplx x1 = x0 + cplx(1e-4, 1e-4);
  cplx f0 = f(x0), f1 = f(x1);
  for (int it = 0; it < 50; ++it) {
    ++iterations;
    if (f1 == f0) return x1;
    const cplx x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
    if (std::abs(x2 - x1) <= 1e-14 * (1.0 + std::abs(x2))) return x2;
    x0 = x1;
    f0 = f1;
    x1 = x2;
    f1 = f(x1);
  }
  throw NoConvergence("dispersion root: 50 Newton steps without convergence");
}

}  // namespace

DispersionRoots dispersion_roots(const LinearModel& model, double eta, const DispersionRoots* guess) {
  DispersionRoots r;
  r.eta = eta;
  const DispersionFunctions D(model, eta);
  for (int j = -1; j <= 1; ++j) {
    const cplx s0 = guess ? guess->sigma[j + 1] : cplx(u_closed(j, 0.0), 0.0);
    r.sigma[j + 1] = secant_root([&](cplx s) { return D.D1(s); }, s0, r.iterations);
  }
  r.sigma_shear = secant_root([&](cplx s) { return D.D0(s); }, guess ? guess->sigma_shear : cplx(0.0, 0.0),
                              r.iterations);
  return r;
}

ReflectionReport reflection_check(const LinearModel& model, double eta) {
  const DispersionRoots p = dispersion_roots(model, eta);
  const DispersionRoots q = dispersion_roots(model, -eta);
  ReflectionReport rep;
  for (int j = -1; j <= 1; ++j) {
    const cplx s = p.sigma[j + 1], sm = q.sigma[j + 1], sj = p.sigma[-j + 1];
    rep.stated = std::max({rep.stated, std::abs(sm + s), std::abs(sj - std::conj(s))});
    rep.corrected = std::max({rep.corrected, std::abs(sm - std::conj(s)), std::abs(sj + std::conj(s))});
  }
  return rep;
}

// ---------------------------------------------------------------- expansions

ExpansionReport eigenfunction_expansion_check(const LinearModel& model, const BranchSet& set, int j, double eta) {
  ExpansionReport rep;
  rep.j = j;
  rep.eta = eta;
  const int m = branch_sector(j);
  const CollisionOperator& op = model.sector(m);
  const VelocityBasis& b = op.basis;
  const TrackedMode t = track_branch(model, j, {eta});
  CVec psi = t.psis[0];
  const Vec E = m == 0 ? e_vector(b, j, eta) : b.chi()[0];
  if (b.bilinear(psi, E.cast<cplx>()).real() < 0.0) psi = -psi;
  rep.leading_error = b.norm(CVec(psi - E.cast<cplx>()));

  const Vec h = op.linv_p1(Vec(b.v1.cwiseProduct(E)));
  const CVec micro = project(b, psi, Part::P1) / eta;
  rep.micro_slope_error = b.norm(CVec(micro - kI * h.cast<cplx>())) / b.norm(h);

  if (m == 0) {
    CVec macro = project(b, psi, Part::P0);
    CVec pred = CVec::Zero(b.n());
    for (int k = -1; k <= 1; ++k) {
      if (k == j) continue;
      const Vec Ek = e_vector(b, k, eta);
      pred += model.tc.b[j + 1][k + 1] * Ek.cast<cplx>();
    }
    const cplx cj = inner_eta(b, macro, E.cast<cplx>(), eta);
    const CVec slope = (macro - cj * E.cast<cplx>()) / eta;
    rep.macro_slope_error = b.norm(CVec(slope - pred)) / std::max(b.norm(pred), 1e-300);
  }
  rep.b_measured = inner_eta(b, psi, E.cast<cplx>(), eta).real();
  const double hn = b.norm(h);
  rep.b_plus = 1.0 + 0.5 * eta * eta * hn * hn;
  rep.b_minus = 1.0 - 0.5 * eta * eta * hn;

  for (size_t k = 0; k < set.etas.size(); ++k) {
    const Mat G = eta_gram(model.sector(m).basis, set.etas[k]);
    const std::vector<int> peers = m == 0 ? std::vector<int>{-1, 0, 1} : std::vector<int>{j};
    for (int p : peers) {
      const cplx v = set.of(j).psis[k].transpose() * (G * set.of(p).psis[k]);
      rep.biorthogonality = std::max(rep.biorthogonality, std::abs(v - cplx(p == j ? 1.0 : 0.0)));
    }
  }
  return rep;
}

// ---------------------------------------------------------------- semigroup

SemigroupSampler::SemigroupSampler(const LinearModel& model, double eta, int sector, double r0)
    : model_(&model), eta_(eta), sector_(sector) {
  const ModeOperator B = assemble_mode(model, eta, sector);
  prop_ = Propagator(B.mat);
  const VelocityBasis& b = model.sector(sector).basis;
  gram_ = eta_gram(b, eta);
  if (std::abs(eta) <= r0) {
    const CVec& ev = prop_.values();
    const std::vector<int> ord = order_by_real(ev);
    const int fluid = sector == 0 ? 3 : 1;
    for (int c = 0; c < fluid; ++c) {
      CVec psi = prop_.vectors().col(ord[c]);
      normalize_bilinear(b, gram_, psi);
      lam_.push_back(ev(ord[c]));
      fluid_index_.push_back(ord[c]);
      psi_.push_back(psi);
    }
  }
}

SemigroupSplit SemigroupSampler::at(double t) const {
  if (t < 0.0) throw ValidationError("semigroup_split: t must be nonnegative");
  SemigroupSplit s;
  s.S = prop_.matrix(t);
  s.S1 = CMat::Zero(s.S.rows(), s.S.cols());
  for (size_t c = 0; c < psi_.size(); ++c)
    s.S1 += std::exp(t * lam_[c]) * psi_[c] * (gram_ * psi_[c]).transpose();
  if (prop_.uses_eigen() && !fluid_index_.empty()) {
    // kinetic modes only, avoiding cancellation in S - S1
    CVec e = (t * prop_.values()).array().exp();
    for (int c : fluid_index_) e(c) = 0.0;
    s.S2 = prop_.vectors() * e.asDiagonal() * prop_.inverse_vectors();
  } else {
    s.S2 = s.S - s.S1;
  }
  return s;
}

double SemigroupSampler::norm_eta(const CMat& A) const {
  return operator_norm_eta(model_->sector(sector_).basis, A, eta_);
}

SemigroupSplit semigroup_split(const LinearModel& model, double t, double eta, int sector, double r0) {
  return SemigroupSampler(model, eta, sector, r0).at(t);
}

}  // namespace mvpb
