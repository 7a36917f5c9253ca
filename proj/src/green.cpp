#include "mvpb/green.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mvpb/parallel.hpp"

namespace mvpb {

// ---------------------------------------------------------------- grid

struct SpaceGrid::Plans {
  int nx = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan c2r = nullptr, r2c = nullptr;

  explicit Plans(int n) : nx(n) {
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
    c2r = fftw_plan_dft_c2r_1d(n, spec, real, FFTW_ESTIMATE);
    r2c = fftw_plan_dft_r2c_1d(n, real, spec, FFTW_ESTIMATE);
  }
  ~Plans() {
    fftw_destroy_plan(c2r);
    fftw_destroy_plan(r2c);
    fftw_free(real);
    fftw_free(spec);
  }
  Plans(const Plans&) = delete;
  Plans& operator=(const Plans&) = delete;
};

SpaceGrid::SpaceGrid(double L, int n) : L_dom(L), nx(n) {
  if (n < 8 || (n & (n - 1)) != 0) throw ValidationError("SpaceGrid: nx must be a power of two >= 8");
  if (!(L > 0.0)) throw ValidationError("SpaceGrid: L_dom must be positive");
  dx = 2.0 * L / n;
  deta = kPi / L;
  eta_nyquist = deta * (n / 2);
  x.resize(n);
  for (int j = 0; j < n; ++j) x(j) = -L + j * dx;
  plans_ = std::make_shared<Plans>(n);
}

int SpaceGrid::nearest_index(double xv) const {
  const int j = static_cast<int>(std::lround((xv + L_dom) / dx));
  return std::clamp(j, 0, nx - 1);
}

Vec SpaceGrid::to_physical(const CVec& hat) const {
  if (hat.size() != modes()) throw ValidationError("to_physical: spectrum size mismatch");
  const double scale = 1.0 / (2.0 * L_dom);
  for (int k = 0; k < modes(); ++k) {
    const double sg = (k % 2 == 0 ? 1.0 : -1.0) * scale;
    plans_->spec[k][0] = sg * hat(k).real();
    plans_->spec[k][1] = sg * hat(k).imag();
  }
  fftw_execute(plans_->c2r);
  return Eigen::Map<Vec>(plans_->real, nx);
}

CVec SpaceGrid::to_spectral(const Vec& f) const {
  if (f.size() != nx) throw ValidationError("to_spectral: field size mismatch");
  std::copy(f.data(), f.data() + nx, plans_->real);
  fftw_execute(plans_->r2c);
  CVec out(modes());
  for (int k = 0; k < modes(); ++k) {
    const double sg = (k % 2 == 0 ? 1.0 : -1.0) * dx;
    out(k) = sg * cplx(plans_->spec[k][0], plans_->spec[k][1]);
  }
  return out;
}

Mat SpaceGrid::to_physical(const CMat& hat) const {
  Mat out(hat.rows(), nx);
  for (int r = 0; r < hat.rows(); ++r) out.row(r) = to_physical(CVec(hat.row(r).transpose())).transpose();
  return out;
}

CMat SpaceGrid::to_spectral(const Mat& f) const {
  CMat out(f.rows(), modes());
  for (int r = 0; r < f.rows(); ++r) out.row(r) = to_spectral(Vec(f.row(r).transpose())).transpose();
  return out;
}

Vec poisson_inverse(const SpaceGrid& grid, const Vec& field, int derivative) {
  if (derivative != 0 && derivative != 1) throw ValidationError("poisson_inverse: derivative must be 0 or 1");
  CVec h = grid.to_spectral(field);
  for (int k = 0; k < grid.modes(); ++k) {
    const double eta = grid.eta(k);
    cplx sym = 1.0 / (1.0 + eta * eta);
    if (derivative == 1) sym *= (k == grid.nx / 2) ? cplx(0.0) : kI * eta;
    h(k) *= sym;
  }
  return grid.to_physical(h);
}

CVec poisson_inverse(const SpaceGrid& grid, const CVec& field, int derivative) {
  const Vec re = poisson_inverse(grid, Vec(field.real()), derivative);
  const Vec im = poisson_inverse(grid, Vec(field.imag()), derivative);
  CVec out(re.size());
  out.real() = re;
  out.imag() = im;
  return out;
}

// ---------------------------------------------------------------- seeds, norms

std::vector<Seed> default_seeds(const LinearModel& model) {
  const VelocityBasis& b = model.op0.basis;
  std::vector<Seed> s;
  auto add = [&](Vec v, const std::string& name, bool micro) {
    if (micro) v = project(b, v, Part::P1);
    v /= b.norm(v);
    s.push_back({{v.cast<cplx>(), 0}, name, micro});
  };
  add(b.chi_by_label(0), "chi0", false);
  add(b.chi_by_label(1), "chi1", false);
  add(b.chi_by_label(4), "chi4", false);
  const Vec v2 = b.v1.array().square() + b.vr.array().square();
  add((b.v1.array() * (v2.array() - 5.0) * b.sqrt_m.array()).matrix(), "heat_flux", true);
  add(((b.v1.array().square() - v2.array() / 3.0) * b.sqrt_m.array()).matrix(), "stress", true);
  return s;
}

namespace {

int label_group(int label) { return label == 0 ? 0 : (label == 4 ? 2 : 1); }

void init_norms(ComponentNorms& c, int nx) {
  c.total = Vec::Zero(nx);
  for (Vec& v : c.p0) v = Vec::Zero(nx);
  c.p0_all = Vec::Zero(nx);
  c.p1_left = Vec::Zero(nx);
  c.p1_right = Vec::Zero(nx);
  c.p1_both = Vec::Zero(nx);
}

// Seed-wise lower bounds of the block norms at every x.
void accumulate_seed_norms(const VelocityBasis& b, const Seed& seed, const Mat& phys, ComponentNorms& c) {
  const double gn = b.norm(seed.g.values);
  const int nx = static_cast<int>(phys.cols());
  const std::vector<Vec>& chi = b.chi();
  Mat wchi(b.n(), chi.size());
  for (size_t a = 0; a < chi.size(); ++a) wchi.col(a) = b.weights.cwiseProduct(chi[a]);
  const Mat coef = wchi.transpose() * phys;  // chi components per x
  const Vec tot2 = (phys.array().square().colwise() * b.weights.array()).colwise().sum().transpose();
  for (int j = 0; j < nx; ++j) {
    const double total = std::sqrt(std::max(tot2(j), 0.0));
    std::array<double, 3> grp{};
    double p0sq = 0.0;
    for (size_t a = 0; a < chi.size(); ++a) {
      const double v = coef(a, j) * coef(a, j);
      grp[label_group(b.chi_labels()[a])] += v;
      p0sq += v;
    }
    const double p1 = std::sqrt(std::max(tot2(j) - p0sq, 0.0));
    c.total(j) = std::max(c.total(j), total / gn);
    for (int g = 0; g < 3; ++g) c.p0[g](j) = std::max(c.p0[g](j), std::sqrt(grp[g]) / gn);
    c.p0_all(j) = std::max(c.p0_all(j), std::sqrt(p0sq) / gn);
    c.p1_left(j) = std::max(c.p1_left(j), p1 / gn);
    if (seed.micro) {
      c.p1_right(j) = std::max(c.p1_right(j), total / gn);
      c.p1_both(j) = std::max(c.p1_both(j), p1 / gn);
    }
  }
}

double seed_norm_eta(const VelocityBasis& b, const CVec& v, double eta) { return norm_eta(b, v, eta); }

std::vector<int> order_by_real(const CVec& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int c) { return v(a).real() > v(c).real(); });
  return idx;
}

// Common step h with every time an integer multiple of h, or 0.
double common_step(const std::vector<double>& times) {
  std::vector<double> t(times);
  std::sort(t.begin(), t.end());
  double h = 0.0;
  for (size_t i = 0; i < t.size(); ++i) {
    const double gap = t[i] - (i == 0 ? 0.0 : t[i - 1]);
    if (gap > 1e-12 && (h == 0.0 || gap < h)) h = gap;
  }
  if (h == 0.0) return 0.0;
  for (double v : t) {
    const double r = v / h;
    if (std::abs(r - std::round(r)) > 1e-9) return 0.0;
  }
  return h;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const int n = static_cast<int>(x.size());
  if (n < 2) throw ValidationError("line_fit: need at least two points");
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    ss_res += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

}  // namespace

LineFit line_fit(const std::vector<double>& x, const std::vector<double>& y) { return fit_line(x, y); }

void finish_field(const LinearModel& model, const SpaceGrid& grid, GreenField& f, const std::vector<bool>& mask) {
  f.phys.assign(f.times.size(), {});
  f.norms.assign(f.times.size(), {});
  for (size_t t = 0; t < f.times.size(); ++t) {
    init_norms(f.norms[t], grid.nx);
    for (size_t s = 0; s < f.seeds.size(); ++s) {
      CMat h = f.hat[t][s];
      if (!mask.empty())
        for (int k = 0; k < grid.modes(); ++k)
          if (!mask[k]) h.col(k).setZero();
      f.phys[t].push_back(grid.to_physical(h));
      accumulate_seed_norms(model.sector(f.seeds[s].g.sector).basis, f.seeds[s], f.phys[t].back(), f.norms[t]);
    }
  }
}

// ---------------------------------------------------------------- synthesis

GreenSynthesis synthesize_green(const LinearModel& model, const std::vector<double>& times, const SpaceGrid& grid,
                                const std::vector<Seed>& seeds, double cutoff) {
  if (seeds.empty()) throw ValidationError("synthesize_green: no seeds");
  for (const Seed& s : seeds)
    if (model.sector(s.g.sector).basis.norm(s.g.values) == 0.0)
      throw ValidationError("synthesize_green: zero seed " + s.name);
  for (double t : times)
    if (t < 0.0) throw ValidationError("synthesize_green: negative time");

  GreenSynthesis out;
  out.cutoff = cutoff;
  const int nt = static_cast<int>(times.size()), ns = static_cast<int>(seeds.size()), nm = grid.modes();
  GreenField& G = out.G;
  G.times = times;
  G.seeds = seeds;
  G.norm_mode = "seeds";
  G.hat.assign(nt, std::vector<CMat>(ns));
  for (int t = 0; t < nt; ++t)
    for (int s = 0; s < ns; ++s) G.hat[t][s] = CMat::Zero(model.sector(seeds[s].g.sector).basis.n(), nm);

  std::vector<std::vector<double>> contraction(nm, std::vector<double>(nt, 0.0));
  std::vector<std::vector<double>> lowkin(nm, std::vector<double>(nt, 0.0));
  const double h = common_step(times);

  parallel_for(0, nm, [&](int k) {
    const double eta = grid.eta(k);
    for (int m = 0; m < 2; ++m) {
      std::vector<int> idx;
      for (int s = 0; s < ns; ++s)
        if (seeds[s].g.sector == m) idx.push_back(s);
      if (idx.empty()) continue;
      const VelocityBasis& b = model.sector(m).basis;
      CMat X0(b.n(), idx.size());
      for (size_t a = 0; a < idx.size(); ++a) X0.col(a) = seeds[idx[a]].g.values;
      const CMat B = assemble_mode(model, eta, m).mat;
      std::vector<CMat> X(nt);
      if (eta < cutoff) {
        // eigen split only for the diagnostic; the field itself comes from expm below
        const Propagator prop(B);
        if (h == 0.0)
          for (int t = 0; t < nt; ++t) X[t] = prop.apply(times[t], X0);
        if (prop.uses_eigen()) {
          const std::vector<int> ord = order_by_real(prop.values());
          const int fluid = m == 0 ? 3 : 1;
          const CMat Y = prop.inverse_vectors() * X0;
          for (int t = 0; t < nt; ++t) {
            CVec e = (times[t] * prop.values()).array().exp();
            for (int c = 0; c < fluid; ++c) e(ord[c]) = 0.0;
            const CMat R = prop.vectors() * e.asDiagonal() * Y;
            for (size_t a = 0; a < idx.size(); ++a) {
              const double r = seed_norm_eta(b, R.col(a), eta) / seed_norm_eta(b, X0.col(a), eta);
              lowkin[k][t] = std::max(lowkin[k][t], r);
            }
          }
        }
      }
      if (h == 0.0 && eta >= cutoff) {
        const Propagator prop(B);
        for (int t = 0; t < nt; ++t) X[t] = prop.apply(times[t], X0);
      } else if (h != 0.0) {
        const CMat E = expm(h * B);
        std::vector<int> order(nt);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int c) { return times[a] < times[c]; });
        CMat cur = X0;
        long at = 0;
        for (int t : order) {
          const long target = std::lround(times[t] / h);
          for (; at < target; ++at) cur = E * cur;
          X[t] = cur;
        }
      }
      for (int t = 0; t < nt; ++t)
        for (size_t a = 0; a < idx.size(); ++a) {
          G.hat[t][idx[a]].col(k) = X[t].col(a);
          const double r = seed_norm_eta(b, X[t].col(a), eta) / seed_norm_eta(b, X0.col(a), eta);
          contraction[k][t] = std::max(contraction[k][t], r);
        }
    }
  });

  out.high_sup.assign(nt, 0.0);
  out.low_kinetic_sup.assign(nt, 0.0);
  for (int k = 0; k < nm; ++k)
    for (int t = 0; t < nt; ++t) {
      out.max_contraction = std::max(out.max_contraction, contraction[k][t]);
      if (grid.eta(k) >= cutoff) out.high_sup[t] = std::max(out.high_sup[t], contraction[k][t]);
      else out.low_kinetic_sup[t] = std::max(out.low_kinetic_sup[t], lowkin[k][t]);
    }
  {
    std::vector<double> x, y;
    for (int t = 0; t < nt; ++t)
      if (times[t] > 0.0 && out.high_sup[t] > 0.0) {
        x.push_back(times[t]);
        y.push_back(std::log(out.high_sup[t]));
      }
    if (x.size() >= 2) {
      const LineFit f = fit_line(x, y);
      out.kappa0 = -f.slope;
      out.kappa0_r2 = f.r2;
    }
  }

  // aliasing: velocity-weighted energy at the Nyquist mode
  for (int t = 0; t < nt; ++t)
    for (int s = 0; s < ns; ++s) {
      const Vec& w = model.sector(seeds[s].g.sector).basis.weights;
      const CMat& H = G.hat[t][s];
      double total = 0.0;
      for (int k = 0; k < nm; ++k) {
        const double e = (w.array() * H.col(k).array().abs2()).sum();
        total += (k == 0 || k == nm - 1) ? e : 2.0 * e;
      }
      const double nyq = (w.array() * H.col(nm - 1).array().abs2()).sum();
      if (total > 0.0 && nyq > 1e-6 * total) {
        G.warnings.push_back("AliasingWarning: t=" + std::to_string(times[t]) + " seed=" + seeds[s].name +
                             " Nyquist fraction " + std::to_string(nyq / total));
      }
    }

  finish_field(model, grid, G);
  std::vector<bool> low(nm), high(nm);
  for (int k = 0; k < nm; ++k) {
    low[k] = grid.eta(k) < cutoff;
    high[k] = !low[k];
  }
  out.GL = GreenField{times, seeds, "seeds", G.hat, {}, {}, {}};
  out.GH = GreenField{times, seeds, "seeds", G.hat, {}, {}, {}};
  for (int t = 0; t < nt; ++t)
    for (int s = 0; s < ns; ++s)
      for (int k = 0; k < nm; ++k) {
        if (low[k]) out.GH.hat[t][s].col(k).setZero();
        else out.GL.hat[t][s].col(k).setZero();
      }
  finish_field(model, grid, out.GL);
  finish_field(model, grid, out.GH);
  return out;
}

// ---------------------------------------------------------------- fluid part

FluidModes fluid_modes(const LinearModel& model, const std::vector<double>& etas) {
  FluidModes fm;
  fm.etas = etas;
  const std::array<std::vector<int>, 2> members{std::vector<int>{-1, 0, 1}, std::vector<int>{2}};
  std::vector<double> positive;
  for (double e : etas) {
    if (e < 0.0) throw ValidationError("fluid_modes: etas must be nonnegative");
    if (e > 0.0) positive.push_back(e);
  }
  if (!std::is_sorted(positive.begin(), positive.end()))
    throw ValidationError("fluid_modes: etas must be increasing");
  for (int m = 0; m < 2; ++m) {
    const VelocityBasis& b = model.sector(m).basis;
    fm.lambdas[m].assign(etas.size(), {});
    fm.psis[m].assign(etas.size(), {});
    for (int j : members[m]) {
      const TrackedMode tr = positive.empty() ? TrackedMode{} : track_branch(model, j, positive);
      size_t p = 0;
      for (size_t k = 0; k < etas.size(); ++k) {
        if (etas[k] == 0.0) {
          CVec psi = (m == 0 ? e_vector(b, j, 0.0) : b.chi()[0]).cast<cplx>();
          normalize_bilinear(b, eta_gram(b, 0.0), psi);
          fm.lambdas[m][k].push_back(0.0);
          fm.psis[m][k].push_back(psi);
        } else {
          fm.lambdas[m][k].push_back(tr.lambdas[p]);
          fm.psis[m][k].push_back(tr.psis[p]);
          ++p;
        }
      }
    }
  }
  return fm;
}

namespace {

double top_singular(const Mat& A) {
  if (A.size() == 0) return 0.0;
  const Mat S = A.rows() <= A.cols() ? Mat(A * A.transpose()) : Mat(A.transpose() * A);
  if (S.rows() == 1) return std::sqrt(std::max(S(0, 0), 0.0));
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
}

struct ReducedSector {
  Mat Q;                       // W^{1/2} frame, orthonormal columns
  std::array<Mat, 3> A;        // chi-group rows: U_g^T Q
  Mat Aall;                    // all chi rows
  Mat R1;                      // (I - P0) Q = Q1 R1
  std::vector<std::vector<CVec>> alpha, beta;  // [k][branch]
};

ReducedSector reduce_sector(const VelocityBasis& b, const FluidModes& fm, int m) {
  ReducedSector rs;
  const int n = b.n();
  const Vec sw = b.weights.array().sqrt();
  const size_t nk = fm.etas.size();
  const size_t nb = fm.psis[m].empty() ? 0 : fm.psis[m][0].size();
  Mat cols(n, 2 * nk * nb + b.chi().size());
  int c = 0;
  for (size_t k = 0; k < nk; ++k)
    for (size_t j = 0; j < nb; ++j) {
      const CVec v = sw.cast<cplx>().cwiseProduct(fm.psis[m][k][j]);
      cols.col(c++) = v.real();
      cols.col(c++) = v.imag();
    }
  for (const Vec& ch : b.chi()) cols.col(c++) = sw.cwiseProduct(ch);
  Eigen::BDCSVD<Mat> svd(cols, Eigen::ComputeThinU);
  const Vec& sv = svd.singularValues();
  int r = 0;
  while (r < sv.size() && sv(r) > 1e-12 * sv(0)) ++r;
  rs.Q = svd.matrixU().leftCols(r);
  // group rows
  std::array<std::vector<Vec>, 3> groups;
  for (size_t a = 0; a < b.chi().size(); ++a)
    groups[label_group(b.chi_labels()[a])].push_back(sw.cwiseProduct(b.chi()[a]));
  Mat U(n, b.chi().size());
  for (size_t a = 0; a < b.chi().size(); ++a) U.col(a) = sw.cwiseProduct(b.chi()[a]);
  for (int g = 0; g < 3; ++g) {
    rs.A[g] = Mat(groups[g].size(), r);
    for (size_t a = 0; a < groups[g].size(); ++a) rs.A[g].row(a) = groups[g][a].transpose() * rs.Q;
  }
  rs.Aall = U.transpose() * rs.Q;
  const Mat Qp = rs.Q - U * rs.Aall;
  Eigen::HouseholderQR<Mat> qr(Qp);
  rs.R1 = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();

  rs.alpha.assign(nk, {});
  rs.beta.assign(nk, {});
  for (size_t k = 0; k < nk; ++k) {
    const Mat G = eta_gram(b, fm.etas[k]);
    for (size_t j = 0; j < nb; ++j) {
      const CVec& psi = fm.psis[m][k][j];
      const CVec left = sw.cast<cplx>().cwiseProduct(psi);
      const CVec right = sw.cwiseInverse().cast<cplx>().cwiseProduct(G * psi);
      rs.alpha[k].push_back(rs.Q.transpose().cast<cplx>() * left);
      rs.beta[k].push_back(rs.Q.transpose().cast<cplx>() * right);
    }
  }
  return rs;
}

}  // namespace

FluidField fluid_part(const LinearModel& model, const std::vector<double>& times, const SpaceGrid& grid, double cutoff,
                      bool mach_cutoff, const std::vector<Seed>& seeds) {
  if (!(cutoff > 0.0)) throw ValidationError("fluid_part: cutoff must be positive");
  FluidField out;
  out.times = times;
  out.cutoff = cutoff;
  out.mach_cutoff = mach_cutoff;
  std::vector<double> etas;
  for (int k = 0; k < grid.modes() && grid.eta(k) < cutoff; ++k) etas.push_back(grid.eta(k));
  const int nk = static_cast<int>(etas.size());
  const FluidModes fm = fluid_modes(model, etas);

  std::array<ReducedSector, 2> rs{reduce_sector(model.op0.basis, fm, 0), reduce_sector(model.op1.basis, fm, 1)};
  for (int m = 0; m < 2; ++m) out.rank[m] = static_cast<int>(rs[m].Q.cols());

  out.norms.assign(times.size(), {});
  for (size_t t = 0; t < times.size(); ++t) {
    ComponentNorms& cn = out.norms[t];
    init_norms(cn, grid.nx);
    for (int m = 0; m < 2; ++m) {
      const int r = out.rank[m];
      CMat hat = CMat::Zero(r * r, grid.modes());
      for (int k = 0; k < nk; ++k) {
        CMat Ck = CMat::Zero(r, r);
        for (size_t j = 0; j < rs[m].alpha[k].size(); ++j)
          Ck += std::exp(fm.lambdas[m][k][j] * times[t]) * rs[m].alpha[k][j] * rs[m].beta[k][j].transpose();
        hat.col(k) = Eigen::Map<const CVec>(Ck.data(), r * r);
      }
      const Mat phys = grid.to_physical(hat);
      parallel_for(0, grid.nx, [&](int j) {
        if (mach_cutoff && std::abs(grid.x(j)) > 6.0 * times[t]) return;
        const Mat C = Eigen::Map<const Mat>(phys.col(j).data(), r, r);
        const double total = top_singular(C);
        cn.total(j) = std::max(cn.total(j), total);
        for (int g = 0; g < 3; ++g)
          if (rs[m].A[g].rows() > 0) cn.p0[g](j) = std::max(cn.p0[g](j), top_singular(Mat(rs[m].A[g] * C)));
        cn.p0_all(j) = std::max(cn.p0_all(j), top_singular(Mat(rs[m].Aall * C)));
        const Mat RC = rs[m].R1 * C;
        cn.p1_left(j) = std::max(cn.p1_left(j), top_singular(RC));
        cn.p1_right(j) = std::max(cn.p1_right(j), top_singular(Mat(C * rs[m].R1.transpose())));
        cn.p1_both(j) = std::max(cn.p1_both(j), top_singular(Mat(RC * rs[m].R1.transpose())));
      });
    }
  }

  if (!seeds.empty()) {
    out.seed_hat.assign(times.size(), {});
    for (size_t t = 0; t < times.size(); ++t)
      for (const Seed& s : seeds) {
        const int m = s.g.sector;
        const VelocityBasis& b = model.sector(m).basis;
        CMat H = CMat::Zero(b.n(), grid.modes());
        for (int k = 0; k < nk; ++k) {
          const Mat G = eta_gram(b, etas[k]);
          const CVec Gg = G.cast<cplx>() * s.g.values;
          for (size_t j = 0; j < fm.psis[m][k].size(); ++j) {
            const CVec& psi = fm.psis[m][k][j];
            H.col(k) += std::exp(fm.lambdas[m][k][j] * times[t]) * psi * cplx(psi.transpose() * Gg);
          }
        }
        out.seed_hat[t].push_back(H);
      }
  }
  return out;
}

// ---------------------------------------------------------------- kinetic waves

namespace {

// Exponential-polynomial weights on one panel of length h:
// c[r](i, q) = int_0^{tau_r} exp(-d_i (tau_r - s)) l_q(s) ds, targets tau_r = nodes, h.
struct PanelWeights {
  std::vector<double> tau;          // p nodes
  std::vector<CMat> c;              // p + 1 targets, each n x p
  std::vector<CVec> decay;          // exp(-d tau_r), p + 1 targets
};

PanelWeights panel_weights(const CVec& d, double h, int p) {
  PanelWeights pw;
  const Rule g = gauss_legendre(p, 0.0, h);
  pw.tau = g.x;
  const Lagrange1D lag(g.x);
  const int nq = 2 * p + 24;
  const int n = static_cast<int>(d.size());
  std::vector<double> targets(g.x);
  targets.push_back(h);
  std::vector<double> lq(p);
  for (double tr : targets) {
    const Rule sub = gauss_legendre(nq, 0.0, tr);
    Mat Lv(nq, p);
    for (int a = 0; a < nq; ++a) {
      lag.eval(sub.x[a], lq.data());
      for (int q = 0; q < p; ++q) Lv(a, q) = lq[q] * sub.w[a];
    }
    CMat E(n, nq);
    for (int a = 0; a < nq; ++a) E.col(a) = (-(tr - sub.x[a]) * d).array().exp();
    pw.c.push_back(E * Lv.cast<cplx>());
    pw.decay.push_back((-tr * d).array().exp());
  }
  return pw;
}

struct WaveRun {
  // [t]: n x seeds
  std::vector<CMat> W, Jlast;
  std::vector<std::vector<Vec>> level_norms;  // [i][t](seed)
  std::vector<std::vector<cplx>> theta;        // [i][t] seed 0
  double j0_error = 0.0;
};

WaveRun run_waves(const LinearModel& model, int sector, double eta, const CMat& X0, int levels,
                  const std::vector<double>& times, const WaveQuadrature& q, int refine) {
  const CollisionOperator& op = model.sector(sector);
  const VelocityBasis& b = op.basis;
  const int n = b.n(), S = static_cast<int>(X0.cols()), p = q.nodes;
  CVec d(n);
  for (int i = 0; i < n; ++i) d(i) = cplx(op.nu(i), b.v1(i) * eta);
  const double dmax = d.cwiseAbs().maxCoeff();
  const double htarget = std::min(q.max_panel, q.max_phase / dmax) / refine;
  const bool poisson = sector == 0;
  const Vec c0 = poisson ? b.chi()[0] : Vec();
  const Vec wc0 = poisson ? Vec(b.weights.cwiseProduct(c0)) : Vec();
  const CVec v1c0 = poisson ? CVec((b.v1.cwiseProduct(c0)).cast<cplx>()) : CVec();
  const double s = 1.0 / (1.0 + eta * eta);
  const CMat Kc = op.K.cast<cplx>();

  // source M f = K f + i eta v1 chi0 Theta, Theta = -(f, chi0) / (1 + eta^2)
  auto source = [&](const CMat& F) {
    CMat out = Kc * F;
    if (poisson && eta != 0.0) {
      const CVec th = -s * (F.transpose() * wc0.cast<cplx>());
      out += (kI * eta) * v1c0 * th.transpose();
    }
    return out;
  };
  auto theta_of = [&](const CVec& f) -> cplx {
    if (!poisson) return 0.0;
    return -s * cplx(f.transpose() * wc0.cast<cplx>());
  };

  const int nt = static_cast<int>(times.size());
  std::vector<int> order(nt);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int c) { return times[a] < times[c]; });

  WaveRun run;
  run.W.assign(nt, CMat());
  run.Jlast.assign(nt, CMat());
  run.level_norms.assign(levels + 1, std::vector<Vec>(nt, Vec::Zero(S)));
  run.theta.assign(levels + 1, std::vector<cplx>(nt, 0.0));

  std::vector<CMat> J(levels + 1, CMat::Zero(n, S));
  J[0] = X0;
  std::map<long, PanelWeights> cache;
  double tcur = 0.0;
  auto record = [&](int t) {
    CMat W = CMat::Zero(n, S);
    for (int i = 0; i <= levels; ++i) {
      W += J[i];
      for (int a = 0; a < S; ++a) run.level_norms[i][t](a) = b.norm(CVec(J[i].col(a)));
      run.theta[i][t] = theta_of(J[i].col(0));
    }
    run.W[t] = W;
    run.Jlast[t] = J[levels];
    const CMat closed = (-times[t] * d).array().exp().matrix().asDiagonal() * X0;
    const double den = std::max(closed.norm(), 1e-300);
    run.j0_error = std::max(run.j0_error, (J[0] - closed).norm() / den);
  };

  for (int t : order) {
    const double len = times[t] - tcur;
    if (len > 1e-14) {
      const long np = std::max(1L, static_cast<long>(std::ceil(len / htarget - 1e-9)));
      const double h = len / np;
      const long key = std::lround(h * 1e12);
      auto it = cache.find(key);
      if (it == cache.end()) it = cache.emplace(key, panel_weights(d, h, p)).first;
      const PanelWeights& pw = it->second;
      for (long panel = 0; panel < np; ++panel) {
        // level values at the panel nodes, built level by level
        std::vector<CMat> prev_nodes(p);  // level i - 1 at nodes
        std::vector<CMat> Jend(levels + 1);
        for (int i = 0; i <= levels; ++i) {
          std::vector<CMat> cur_nodes(p);
          std::vector<CMat> F;
          if (i > 0) {
            // batch the source over all nodes
            CMat all(n, S * p);
            for (int r = 0; r < p; ++r) all.middleCols(r * S, S) = prev_nodes[r];
            const CMat src = source(all);
            for (int r = 0; r < p; ++r) F.push_back(src.middleCols(r * S, S));
          }
          for (int r = 0; r <= p; ++r) {
            CMat v = pw.decay[r].asDiagonal() * J[i];
            if (i > 0)
              for (int qn = 0; qn < p; ++qn) v += pw.c[r].col(qn).asDiagonal() * F[qn];
            if (r < p) cur_nodes[r] = v;
            else Jend[i] = v;
          }
          prev_nodes.swap(cur_nodes);
        }
        J.swap(Jend);
      }
      tcur = times[t];
    }
    record(t);
  }
  return run;
}

}  // namespace

KineticWaveSet kinetic_waves(const LinearModel& model, int k_max, const std::vector<double>& times,
                             const SpaceGrid& grid, const std::vector<Seed>& seeds, std::vector<int> modes,
                             const WaveQuadrature& q, const std::vector<int>& check_modes) {
  if (k_max < 2) throw ValidationError("kinetic_waves: k_max must be >= 2");
  if (seeds.empty()) throw ValidationError("kinetic_waves: no seeds");
  for (double t : times)
    if (t < 0.0) throw ValidationError("kinetic_waves: negative time");
  if (modes.empty()) {
    modes.resize(grid.modes());
    std::iota(modes.begin(), modes.end(), 0);
  }
  const int levels = 3 * k_max;
  const int nt = static_cast<int>(times.size()), ns = static_cast<int>(seeds.size());
  const int nm = static_cast<int>(modes.size());
  KineticWaveSet w;
  w.k_max = k_max;
  w.times = times;
  w.modes = modes;
  w.seeds = seeds;
  for (int k : modes) w.etas.push_back(grid.eta(k));
  w.W_hat.assign(nt, std::vector<CMat>(ns));
  w.J_last_hat.assign(nt, std::vector<CMat>(ns));
  for (int t = 0; t < nt; ++t)
    for (int s = 0; s < ns; ++s) {
      const int n = model.sector(seeds[s].g.sector).basis.n();
      w.W_hat[t][s] = CMat::Zero(n, nm);
      w.J_last_hat[t][s] = CMat::Zero(n, nm);
    }
  w.level_norms.assign(levels + 1, std::vector<Mat>(nt, Mat::Zero(nm, ns)));
  w.theta.assign(levels + 1, std::vector<CVec>(nt, CVec::Zero(nm)));
  std::vector<double> j0err(nm, 0.0);

  parallel_for(0, nm, [&](int c) {
    const double eta = grid.eta(modes[c]);
    for (int m = 0; m < 2; ++m) {
      std::vector<int> idx;
      for (int s = 0; s < ns; ++s)
        if (seeds[s].g.sector == m) idx.push_back(s);
      if (idx.empty()) continue;
      CMat X0(model.sector(m).basis.n(), idx.size());
      for (size_t a = 0; a < idx.size(); ++a) X0.col(a) = seeds[idx[a]].g.values;
      const WaveRun run = run_waves(model, m, eta, X0, levels, times, q, 1);
      j0err[c] = std::max(j0err[c], run.j0_error);
      for (int t = 0; t < nt; ++t)
        for (size_t a = 0; a < idx.size(); ++a) {
          w.W_hat[t][idx[a]].col(c) = run.W[t].col(a);
          w.J_last_hat[t][idx[a]].col(c) = run.Jlast[t].col(a);
          for (int i = 0; i <= levels; ++i) w.level_norms[i][t](c, idx[a]) = run.level_norms[i][t](a);
        }
      if (idx.front() == 0)
        for (int i = 0; i <= levels; ++i)
          for (int t = 0; t < nt; ++t) w.theta[i][t](c) = run.theta[i][t];
    }
  });
  for (double e : j0err) w.j0_error = std::max(w.j0_error, e);

  for (int k : check_modes) {
    const auto it = std::find(modes.begin(), modes.end(), k);
    if (it == modes.end()) continue;
    const int c = static_cast<int>(it - modes.begin());
    const double eta = grid.eta(k);
    for (int m = 0; m < 2; ++m) {
      std::vector<int> idx;
      for (int s = 0; s < ns; ++s)
        if (seeds[s].g.sector == m) idx.push_back(s);
      if (idx.empty()) continue;
      CMat X0(model.sector(m).basis.n(), idx.size());
      for (size_t a = 0; a < idx.size(); ++a) X0.col(a) = seeds[idx[a]].g.values;
      const WaveRun fine = run_waves(model, m, eta, X0, levels, times, q, 2);
      for (int t = 0; t < nt; ++t)
        for (size_t a = 0; a < idx.size(); ++a) {
          const CVec& coarse = w.W_hat[t][idx[a]].col(c);
          const double den = std::max(coarse.norm(), 1e-300);
          w.refinement_change = std::max(w.refinement_change, (fine.W[t].col(a) - coarse).norm() / den);
        }
    }
  }
  if (w.refinement_change > 1e-6)
    w.warnings.push_back("QuadratureWarning: doubling time nodes changes W by " +
                         std::to_string(w.refinement_change));
  return w;
}

Vec wave_decay_constants(const KineticWaveSet& w, double nu0) {
  const int levels = 3 * w.k_max;
  const int nm = static_cast<int>(w.modes.size());
  Vec C = Vec::Zero(nm);
  for (size_t t = 0; t < w.times.size(); ++t)
    for (int c = 0; c < nm; ++c) {
      const double v = w.level_norms[levels][t].row(c).maxCoeff() * std::exp(0.5 * nu0 * w.times[t]) *
                       std::pow(1.0 + w.etas[c], w.k_max);
      C(c) = std::max(C(c), v);
    }
  return C;
}

// ---------------------------------------------------------------- remainder

RemainderField remainder(const LinearModel& model, const SpaceGrid& grid, const GreenField& green,
                         const KineticWaveSet& waves) {
  if (green.times != waves.times) throw ValidationError("remainder: time grids differ");
  if (static_cast<int>(waves.modes.size()) != grid.modes()) throw ValidationError("remainder: waves must cover all modes");
  if (green.seeds.size() != waves.seeds.size()) throw ValidationError("remainder: seed lists differ");
  RemainderField r;
  r.times = green.times;
  const int nt = static_cast<int>(r.times.size());
  r.norms.assign(nt, {});
  r.phi.assign(nt, Vec());
  r.sup_inside.assign(nt, 0.0);
  r.sup_outside.assign(nt, 0.0);
  const VelocityBasis& b0 = model.op0.basis;
  const Vec wc0 = b0.weights.cwiseProduct(b0.chi()[0]);
  for (int t = 0; t < nt; ++t) {
    init_norms(r.norms[t], grid.nx);
    for (size_t s = 0; s < green.seeds.size(); ++s) {
      const CMat R = green.hat[t][s] - waves.W_hat[t][s];
      const Mat phys = grid.to_physical(R);
      accumulate_seed_norms(model.sector(green.seeds[s].g.sector).basis, green.seeds[s], phys, r.norms[t]);
      if (s == 0 && green.seeds[s].g.sector == 0) {
        CVec ph(grid.modes());
        for (int k = 0; k < grid.modes(); ++k) {
          const double eta = grid.eta(k);
          const cplx T = -cplx(green.hat[t][s].col(k).transpose() * wc0.cast<cplx>()) / (1.0 + eta * eta);
          cplx th = 0.0;
          for (const auto& level : waves.theta) th += level[t](k);
          ph(k) = T - th;
        }
        r.phi[t] = grid.to_physical(ph);
      }
    }
    for (int j = 0; j < grid.nx; ++j) {
      const double v = r.norms[t].total(j);
      if (std::abs(grid.x(j)) <= 6.0 * r.times[t]) r.sup_inside[t] = std::max(r.sup_inside[t], v);
      else r.sup_outside[t] = std::max(r.sup_outside[t], v);
    }
    if (r.times[t] == 0.0) r.r0_sup.push_back(r.norms[t].total.maxCoeff());
  }
  return r;
}

// ---------------------------------------------------------------- fits

ProfileFit profile_fit(const std::vector<double>& t, const std::vector<double>& peak, double r2_min) {
  if (t.size() != peak.size()) throw ValidationError("profile_fit: size mismatch");
  if (t.size() < 8) throw ValidationError("profile_fit: need at least 8 samples");
  std::vector<double> x, y;
  for (size_t i = 0; i < t.size(); ++i) {
    if (!(peak[i] > 0.0)) throw ValidationError("profile_fit: peaks must be positive");
    x.push_back(std::log1p(t[i]));
    y.push_back(std::log(peak[i]));
  }
  const LineFit f = fit_line(x, y);
  ProfileFit p{f.slope, f.intercept, f.r2};
  if (f.r2 < r2_min) throw PoorFit("profile_fit: R^2 = " + std::to_string(f.r2));
  return p;
}

WidthFit width_fit(const std::vector<double>& t, const std::vector<double>& w2) {
  if (t.size() != w2.size() || t.size() < 2) throw ValidationError("width_fit: need matching samples");
  double num = 0.0, den = 0.0, mean = 0.0;
  for (size_t i = 0; i < t.size(); ++i) {
    num += w2[i] * (1.0 + t[i]);
    den += (1.0 + t[i]) * (1.0 + t[i]);
    mean += w2[i];
  }
  mean /= t.size();
  WidthFit f;
  const double slope = num / den;
  f.D = 2.0 * slope;
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < t.size(); ++i) {
    ss_res += std::pow(w2[i] - slope * (1.0 + t[i]), 2);
    ss_tot += std::pow(w2[i] - mean, 2);
  }
  f.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

double profile_variance(const Vec& x, const Vec& p, double lo, double hi) {
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    if (x(j) < lo || x(j) > hi) continue;
    const double a = std::abs(p(j));
    m0 += a;
    m1 += a * x(j);
    m2 += a * x(j) * x(j);
  }
  if (m0 == 0.0) return 0.0;
  const double c = m1 / m0;
  return m2 / m0 - c * c;
}

std::vector<double> hump_centers(const Vec& x, const Vec& p, double frac) {
  std::vector<double> c;
  const double top = p.maxCoeff();
  for (int j = 1; j + 1 < p.size(); ++j) {
    if (!(p(j) > p(j - 1) && p(j) >= p(j + 1)) || p(j) < frac * top) continue;
    const double a = p(j - 1), m = p(j), b = p(j + 1);
    const double den = a - 2.0 * m + b;
    const double off = den != 0.0 ? 0.5 * (a - b) / den : 0.0;
    c.push_back(x(j) + off * (x(j + 1) - x(j)));
  }
  return c;
}

}  // namespace mvpb
