#include "mvpb/nonlinear.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvpb/parallel.hpp"

namespace mvpb {

namespace {

// ---------------------------------------------------------------- quadrature

struct Frame {
  double u[3], e1[3], e2[3];
};

Frame frame_of(const double* d) {
  Frame f{};
  const double r = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  for (int a = 0; a < 3; ++a) f.u[a] = d[a] / r;
  // any vector not parallel to u
  double t[3] = {0.0, 0.0, 0.0};
  t[std::abs(f.u[0]) < 0.6 ? 0 : (std::abs(f.u[1]) < 0.6 ? 1 : 2)] = 1.0;
  const double tu = t[0] * f.u[0] + t[1] * f.u[1] + t[2] * f.u[2];
  double n1 = 0.0;
  for (int a = 0; a < 3; ++a) {
    f.e1[a] = t[a] - tu * f.u[a];
    n1 += f.e1[a] * f.e1[a];
  }
  n1 = std::sqrt(n1);
  for (int a = 0; a < 3; ++a) f.e1[a] /= n1;
  f.e2[0] = f.u[1] * f.e1[2] - f.u[2] * f.e1[1];
  f.e2[1] = f.u[2] * f.e1[0] - f.u[0] * f.e1[2];
  f.e2[2] = f.u[0] * f.e1[1] - f.u[1] * f.e1[0];
  return f;
}

// One collision configuration: weight and the post-collision velocities.
struct Collision {
  double w;
  double vp[3], vps[3];
  int star;  // node of v*
};

// Visits every (v*, omega) quadrature point for the target node i. The weight
// carries 1/2 |(v - v*) . omega| sqrt(M(v*)) and all measures.
template <class F>
void for_each_collision(const VelocityBasis& b, int i, const GammaQuadrature& q, const Rule& cpol, F&& visit) {
  const double v[3] = {b.v1(i), b.vr(i), 0.0};
  const int n = b.n();
  const double dphi = kPi / q.star_azimuth, dbeta = 2.0 * kPi / q.azimuth;
  for (int js = 0; js < n; ++js)
    for (int p = 0; p < q.star_azimuth; ++p) {
      const double phi = (p + 0.5) * dphi;
      const double vs[3] = {b.v1(js), b.vr(js) * std::cos(phi), b.vr(js) * std::sin(phi)};
      const double d[3] = {v[0] - vs[0], v[1] - vs[1], v[2] - vs[2]};
      const double r = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      if (r < 1e-14) continue;
      const Frame fr = frame_of(d);
      // weights: v* azimuth (2 pi total, mirrored), hemisphere doubling
      const double ws = 0.5 * b.weights(js) / q.star_azimuth * b.sqrt_m(js) * 2.0 * dbeta;
      for (size_t a = 0; a < cpol.x.size(); ++a) {
        const double c = cpol.x[a], sn = std::sqrt(std::max(0.0, 1.0 - c * c));
        const double wa = ws * cpol.w[a] * r * c;
        for (int bb = 0; bb < q.azimuth; ++bb) {
          const double beta = (bb + 0.5) * dbeta;
          const double cb = std::cos(beta), sb = std::sin(beta);
          Collision col;
          col.w = wa;
          col.star = js;
          const double len = r * c;
          for (int k = 0; k < 3; ++k) {
            const double om = c * fr.u[k] + sn * (cb * fr.e1[k] + sb * fr.e2[k]);
            col.vp[k] = v[k] - len * om;
            col.vps[k] = vs[k] + len * om;
          }
          visit(col);
        }
      }
    }
}

// e_j(v) for all j: sqrt(M(v)) / sqrt(M_j) times the tensor Lagrange basis.
// Returns false (and leaves out untouched) when |v| > vmax.
bool basis_values(const VelocityBasis& b, const double* v, const Vec& sq_nodes_s, double* ls, double* la,
                  double* out) {
  const double s2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
  const double s = std::sqrt(s2);
  if (s > b.vmax) return false;
  const double th = std::atan2(std::sqrt(v[1] * v[1] + v[2] * v[2]), v[0]);
  b.lag_s.eval(s, ls);
  b.lag_a.eval(th, la);
  for (int js = 0; js < b.ns; ++js) {
    const double g = std::exp(-0.25 * (s2 - sq_nodes_s(js))) * ls[js];
    double* o = out + js * b.na;
    for (int ja = 0; ja < b.na; ++ja) o[ja] = g * la[ja];
  }
  return true;
}

constexpr char kGammaMagic[8] = {'M', 'V', 'P', 'B', 'G', 'A', 'M', '2'};

std::string gamma_cache_path(const std::string& dir, const VelocityBasis& b, const GammaQuadrature& q) {
  std::ostringstream os;
  os << dir << "/gamma_" << b.ns << "x" << b.na << "_v" << b.vmax << "_p" << q.polar << "_a" << q.azimuth << "_s"
     << q.star_azimuth << ".bin";
  return os.str();
}

bool read_gamma(const std::string& path, int n, GammaTensor& g) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  char magic[8];
  std::int64_t nn = 0;
  is.read(magic, 8);
  is.read(reinterpret_cast<char*>(&nn), sizeof(nn));
  if (!is || std::memcmp(magic, kGammaMagic, 8) != 0 || nn != n) return false;
  g.T.assign(n, Mat(n, n));
  for (auto& m : g.T) is.read(reinterpret_cast<char*>(m.data()), sizeof(double) * m.size());
  return static_cast<bool>(is);
}

void write_gamma(const std::string& path, const GammaTensor& g) {
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) return;
    const std::int64_t nn = g.n();
    os.write(kGammaMagic, 8);
    os.write(reinterpret_cast<const char*>(&nn), sizeof(nn));
    for (const auto& m : g.T) os.write(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
  }
  std::filesystem::rename(tmp, path);
}

Vec spectral_dx(const SpaceGrid& grid, const Vec& f) {
  CVec h = grid.to_spectral(f);
  for (int k = 0; k < grid.modes(); ++k) h(k) *= (k == grid.nx / 2) ? cplx(0.0) : kI * grid.eta(k);
  return grid.to_physical(h);
}

Vec helmholtz(const SpaceGrid& grid, const Vec& f) {
  CVec h = grid.to_spectral(f);
  for (int k = 0; k < grid.modes(); ++k) h(k) *= 1.0 + grid.eta(k) * grid.eta(k);
  return grid.to_physical(h);
}

}  // namespace

// ---------------------------------------------------------------- Gamma

Vec GammaTensor::apply(const Vec& f, const Vec& g, bool raw) const {
  Vec out(n());
  for (int i = 0; i < n(); ++i) out(i) = f.dot(T[i] * g);
  if (!raw)
    for (size_t l = 0; l < P.size(); ++l) out -= f.dot(P[l] * g) * chi[l];
  return out;
}

Mat GammaTensor::apply(const Mat& F, const Mat& G, bool raw) const {
  Mat out(n(), F.cols());
  parallel_for(0, n(), [&](int i) { out.row(i) = (F.array() * (T[i] * G).array()).colwise().sum(); });
  if (!raw)
    for (size_t l = 0; l < P.size(); ++l) {
      const Eigen::RowVectorXd c = (F.array() * (P[l] * G).array()).colwise().sum();
      out -= chi[l] * c;
    }
  return out;
}

namespace {

void assemble_gamma(const VelocityBasis& b, const GammaQuadrature& q, GammaTensor& g) {
  const int n = b.n();
  const Rule cpol = gauss_legendre(q.polar, 0.0, 1.0);
  Vec sq(b.ns);
  for (int js = 0; js < b.ns; ++js) sq(js) = b.rule_s.x[js] * b.rule_s.x[js];
  g.T.assign(n, Mat::Zero(n, n));
  constexpr int kChunk = 2048;
  parallel_for(0, n, [&](int i) {
    Mat A(n, kChunk), B(n, kChunk);
    Mat M = Mat::Zero(n, n);
    Vec loss = Vec::Zero(n);
    std::vector<double> ls(b.ns), la(b.na);
    int fill = 0;
    auto flush = [&] {
      if (fill == 0) return;
      M.noalias() += A.leftCols(fill) * B.leftCols(fill).transpose();
      fill = 0;
    };
    for_each_collision(b, i, q, cpol, [&](const Collision& c) {
      loss(c.star) += c.w;
      if (!basis_values(b, c.vp, sq, ls.data(), la.data(), A.col(fill).data())) return;
      if (!basis_values(b, c.vps, sq, ls.data(), la.data(), B.col(fill).data())) return;
      A.col(fill) *= c.w;
      if (++fill == kChunk) flush();
    });
    flush();
    Mat& T = g.T[i];
    T = M + M.transpose();
    T.col(i) -= loss;
    T.row(i) -= loss.transpose();
  });
}

// Invariant forms and the worst-case raw leak in the W norm.
void invariant_forms(const VelocityBasis& b, GammaTensor& g) {
  const int n = b.n();
  g.chi = b.chi();
  g.P.assign(g.chi.size(), Mat::Zero(n, n));
  for (size_t l = 0; l < g.chi.size(); ++l)
    for (int i = 0; i < n; ++i) g.P[l] += (b.weights(i) * g.chi[l](i)) * g.T[i];
  const Vec isw = b.weights.cwiseSqrt().cwiseInverse();
  g.raw_leak = 0.0;
  for (size_t l = 0; l < g.chi.size(); ++l) {
    const Mat S = isw.asDiagonal() * g.P[l] * isw.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    g.raw_leak = std::max(g.raw_leak, es.eigenvalues().cwiseAbs().maxCoeff());
  }
}

}  // namespace

GammaTensor build_gamma(const VelocityBasis& b, const GammaQuadrature& q, const std::string& cache_dir,
                        double max_bytes) {
  if (b.sector != 0) throw ValidationError("build_gamma: sector 0 only");
  const int n = b.n();
  if (n > 512) throw ValidationError("build_gamma: basis dimension above 512");
  if (q.polar < 12 || q.azimuth < 24 || q.star_azimuth < 1)
    throw ValidationError("build_gamma: angular quadrature below 12 x 24");
  const double bytes = 8.0 * n * double(n) * n;
  if (bytes > max_bytes)
    throw MemoryBudget("build_gamma: tensor needs " + std::to_string(bytes / 1048576.0) + " MiB");

  GammaTensor g;
  {
    std::ostringstream tag;
    tag << b.ns << "x" << b.na << "/v" << b.vmax << "/" << q.polar << "x" << q.azimuth << "x" << q.star_azimuth;
    g.tag = tag.str();
  }
  const std::string path = cache_dir.empty() ? std::string() : gamma_cache_path(cache_dir, b, q);
  if (path.empty() || !read_gamma(path, n, g)) {
    assemble_gamma(b, q, g);
    if (!path.empty()) write_gamma(path, g);
  }
  invariant_forms(b, g);
  return g;
}

Vec gamma_direct(const VelocityBasis& b, const Vec& f, const Vec& g, const std::vector<int>& targets,
                 const GammaQuadrature& q) {
  const Rule cpol = gauss_legendre(q.polar, 0.0, 1.0);
  const Vec hf = f.cwiseQuotient(b.sqrt_m), hg = g.cwiseQuotient(b.sqrt_m);
  std::vector<double> ls(b.ns), la(b.na);
  // Angle-first interpolation of h, then the exact sqrt(M).
  auto value = [&](const Vec& h, const double* v, bool& inside) {
    const double s = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    inside = s <= b.vmax;
    if (!inside) return 0.0;
    b.lag_s.eval(s, ls.data());
    b.lag_a.eval(std::atan2(std::hypot(v[1], v[2]), v[0]), la.data());
    double acc = 0.0;
    for (int js = 0; js < b.ns; ++js) {
      double row = 0.0;
      for (int ja = 0; ja < b.na; ++ja) row += la[ja] * h(b.index(js, ja));
      acc += ls[js] * row;
    }
    return acc * std::pow(2.0 * kPi, -0.75) * std::exp(-0.25 * s * s);
  };
  Vec out(targets.size());
  parallel_for(0, static_cast<int>(targets.size()), [&](int t) {
    const int i = targets[t];
    double acc = 0.0;
    for_each_collision(b, i, q, cpol, [&](const Collision& c) {
      bool in1 = false, in2 = false;
      const double fp = value(hf, c.vp, in1), fps = value(hf, c.vps, in2);
      if (in1 && in2) {
        bool d1, d2;
        const double gp = value(hg, c.vp, d1), gps = value(hg, c.vps, d2);
        acc += c.w * (fps * gp + fp * gps);
      }
      acc -= c.w * (f(c.star) * g(i) + f(i) * g(c.star));
    });
    out(t) = acc;
  });
  return out;
}

// ---------------------------------------------------------------- Poisson

double poisson_residual(const SpaceGrid& grid, const Vec& n, const Vec& phi) {
  const Vec r = helmholtz(grid, phi) - ((-phi.array()).exp() + phi.array() - 1.0).matrix() + n;
  return r.cwiseAbs().maxCoeff();
}

PoissonResult poisson_newton(const SpaceGrid& grid, const Vec& n, double tol, int max_iter) {
  if (n.size() != grid.nx) throw ValidationError("poisson_newton: density size mismatch");
  if (!(n.cwiseAbs().maxCoeff() <= 0.5)) throw ValidationError("poisson_newton: |n|_inf must be <= 0.5");
  PoissonResult res;
  res.phi = -poisson_inverse(grid, n);
  for (int it = 0; it <= max_iter; ++it) {
    const Vec r = helmholtz(grid, res.phi) - ((-res.phi.array()).exp() + res.phi.array() - 1.0).matrix() + n;
    res.residual = r.cwiseAbs().maxCoeff();
    res.iterations = it;
    if (res.residual <= tol) return res;
    if (it == max_iter) break;
    // J d = -r with J = (I - d_xx) - (1 - exp(-Phi)), by fixed point on (I - d_xx)^{-1}
    const Vec c = 1.0 - (-res.phi.array()).exp();
    Vec d = -poisson_inverse(grid, r);
    for (int k = 0; k < 200; ++k) {
      const Vec dn = poisson_inverse(grid, Vec(-r + c.cwiseProduct(d)));
      const double ch = (dn - d).cwiseAbs().maxCoeff();
      d = dn;
      if (ch <= 1e-17 + 1e-15 * d.cwiseAbs().maxCoeff()) break;
    }
    res.phi += d;
    if (!res.phi.allFinite()) break;
  }
  throw NoConvergence("poisson_newton: residual " + std::to_string(res.residual) + " after " +
                      std::to_string(max_iter) + " iterations");
}

// ---------------------------------------------------------------- stepper

Stepper::Stepper(const LinearModel& model, const SpaceGrid& grid, double dt, const StepperOptions& opt,
                 const GammaTensor* gamma)
    : model_(&model), grid_(&grid), gamma_(gamma), dt_(dt), opt_(opt) {
  if (!(dt > 0.0)) throw ValidationError("Stepper: dt must be positive");
  const VelocityBasis& b = model.op0.basis;
  if (opt.gamma && (gamma == nullptr || gamma->n() != b.n()))
    throw ValidationError("Stepper: Gamma enabled without a matching tensor");
  half_.resize(grid.modes());
  parallel_for(0, grid.modes(), [&](int k) {
    half_[k] = expm(CMat((0.5 * dt) * assemble_mode(model, grid.eta(k), 0).mat));
  });
  D_ = dv1_matrix(b);
  d_norm_ = D_.cwiseAbs().rowwise().sum().maxCoeff();
}

Vec Stepper::density(const Mat& F) const {
  const VelocityBasis& b = model_->op0.basis;
  return F.transpose() * b.weights.cwiseProduct(b.chi()[0]);
}

Vec Stepper::momentum(const Mat& F) const {
  const VelocityBasis& b = model_->op0.basis;
  return F.transpose() * b.weights.cwiseProduct(b.chi()[0]).cwiseProduct(b.v1);
}

KineticState Stepper::initial(const Mat& f_phys) const {
  KineticState s;
  s.f_hat = grid_->to_spectral(f_phys);
  const Vec n = density(f_phys);
  s.phi = opt_.poisson_nonlinear ? poisson_newton(*grid_, n).phi : Vec(-poisson_inverse(*grid_, n));
  ref_norm_ = s.f_hat.norm();
  return s;
}

Vec Stepper::phi_t(const Mat& F, const Vec& phi) const {
  const Vec nt = -spectral_dx(*grid_, momentum(F));
  Vec pt = -poisson_inverse(*grid_, nt);
  if (!opt_.poisson_nonlinear) return pt;
  const Vec c = 1.0 - (-phi.array()).exp();
  for (int k = 0; k < 200; ++k) {
    const Vec pn = poisson_inverse(*grid_, Vec(-nt + c.cwiseProduct(pt)));
    const double ch = (pn - pt).cwiseAbs().maxCoeff();
    pt = pn;
    if (ch <= 1e-16 * (1.0 + pt.cwiseAbs().maxCoeff())) break;
  }
  return pt;
}

Mat Stepper::nonlinear(const Mat& F) const {
  const VelocityBasis& b = model_->op0.basis;
  const Vec n = density(F);
  const Vec phi_lin = -poisson_inverse(*grid_, n);
  const Vec phi = opt_.poisson_nonlinear ? poisson_newton(*grid_, n).phi : phi_lin;
  const Vec phix = spectral_dx(*grid_, phi);
  Mat N = Mat::Zero(F.rows(), F.cols());
  if (opt_.field) {
    const double cfl = dt_ * phix.cwiseAbs().maxCoeff() * d_norm_;
    if (cfl > opt_.cfl) throw CFLViolation("field term: dt |d_x Phi| |D_v1| = " + std::to_string(cfl));
    N = (0.5 * b.v1).asDiagonal() * F - D_ * F;
    N = N * phix.asDiagonal();
    const Vec& c0 = b.chi()[0];
    const Eigen::RowVectorXd mass = c0.cwiseProduct(b.weights).transpose() * N;
    N -= c0 * mass;
  }
  if (opt_.poisson_nonlinear) {
    const Vec src = spectral_dx(*grid_, Vec(phi - phi_lin));
    N += b.v1.cwiseProduct(b.chi()[0]) * src.transpose();
  }
  if (opt_.gamma) N += gamma_->apply(F, F);
  return N;
}

void Stepper::half_linear(CMat& f_hat) const {
  parallel_for(0, grid_->modes(), [&](int k) { f_hat.col(k) = half_[k] * f_hat.col(k); });
}

void Stepper::step(KineticState& s) const {
  half_linear(s.f_hat);
  if (opt_.gamma || opt_.field || opt_.poisson_nonlinear) {
    const Mat F = grid_->to_physical(s.f_hat);
    const Mat k1 = nonlinear(F);
    const Mat k2 = nonlinear(F + (0.5 * dt_) * k1);
    s.f_hat += dt_ * grid_->to_spectral(k2);
  }
  half_linear(s.f_hat);
  s.t += dt_;
  const double nrm = s.f_hat.norm();
  if (!std::isfinite(nrm) || nrm > opt_.blowup * std::max(ref_norm_, 1e-300))
    throw Instability("kinetic state norm grew to " + std::to_string(nrm) + " at t = " + std::to_string(s.t));
  const Vec n = grid_->to_physical(CVec(s.f_hat.transpose() * model_->op0.basis.weights.cwiseProduct(
                                                                   model_->op0.basis.chi()[0]).cast<cplx>()));
  s.phi = opt_.poisson_nonlinear ? poisson_newton(*grid_, n).phi : Vec(-poisson_inverse(*grid_, n));
}

// ---------------------------------------------------------------- decay study

double diffusive_profile(double t, double x, double k) { return std::pow(1.0 + x * x / (1.0 + t), -k); }

Vec weighted_sup(const VelocityBasis& b, const Mat& f, double beta) {
  const Vec w = (1.0 + b.v1.array().square() + b.vr.array().square()).pow(0.5 * beta);
  return (w.asDiagonal() * f).cwiseAbs().colwise().maxCoeff().transpose();
}

BootstrapReport decay_study(const LinearModel& model, const GammaTensor& gamma, const DecayOptions& opt) {
  if (!(opt.gamma0 > 0.5)) throw ValidationError("decay_study: gamma0 must exceed 1/2");
  if (!(opt.delta0 > 0.0) || !(opt.t_end > opt.fit_from)) throw ValidationError("decay_study: bad time window");
  const auto start = std::chrono::steady_clock::now();
  const VelocityBasis& b = model.op0.basis;
  const SpaceGrid grid(opt.L_dom, opt.nx);
  const Stepper st(model, grid, opt.dt, opt.stepper, &gamma);

  const Vec prof = (b.chi()[0] + b.chi()[1] + b.chi()[2]) / std::sqrt(3.0);
  Mat f0(b.n(), grid.nx);
  for (int j = 0; j < grid.nx; ++j)
    f0.col(j) = opt.delta0 * std::pow(1.0 + grid.x(j) * grid.x(j), -opt.gamma0) * prof;
  KineticState s = st.initial(f0);

  const double beta = model.tc.beta[2];
  const int nsteps = static_cast<int>(std::lround(opt.t_end / opt.dt));
  const int every = std::max(1, static_cast<int>(std::lround(opt.sample_every / opt.dt)));
  BootstrapReport rep;
  double q = 0.0, m0 = 0.0;
  for (int it = 0; it <= nsteps; ++it) {
    if (it > 0) st.step(s);
    if (it % every != 0 && it != nsteps) continue;
    const double t = s.t;
    const Mat F = st.physical(s);
    const Vec fs = weighted_sup(b, F, 3.0);
    const Vec ds = weighted_sup(b, Mat(st.dv1() * F), 2.0);
    const Vec px = spectral_dx(grid, s.phi);
    const Vec pt = st.phi_t(F, s.phi);
    double rf = 0, rd = 0, rp = 0, rx = 0, rt = 0;
    for (int j = 0; j < grid.nx; ++j) {
      const double x = grid.x(j);
      const double B = diffusive_profile(t, x + beta * t, 0.5) + diffusive_profile(t, x, 0.5) +
                       diffusive_profile(t, x - beta * t, 0.5);
      const double p12 = std::pow(1.0 + t, -0.5) * B, p1 = std::pow(1.0 + t, -1.0) * B;
      rf = std::max(rf, fs(j) / p12);
      rd = std::max(rd, ds(j) / p12);
      rp = std::max(rp, std::abs(s.phi(j)) / p12);
      rx = std::max(rx, std::abs(px(j)) / p1);
      rt = std::max(rt, std::abs(pt(j)) / p1);
    }
    const double mass = st.density(F).sum() * grid.dx;
    if (rep.times.empty()) m0 = mass;
    rep.max_mass_drift = std::max(rep.max_mass_drift, std::abs(mass - m0));
    q = std::max({q, rf, rd, rp, rx, rt});
    rep.times.push_back(t);
    rep.f_sup.push_back(fs.maxCoeff());
    rep.dvf_sup.push_back(ds.maxCoeff());
    rep.phi_sup.push_back(s.phi.cwiseAbs().maxCoeff());
    rep.phix_sup.push_back(px.cwiseAbs().maxCoeff());
    rep.phit_sup.push_back(pt.cwiseAbs().maxCoeff());
    rep.field_sup.push_back((px.cwiseAbs() + pt.cwiseAbs()).maxCoeff());
    rep.f_ratio.push_back(rf);
    rep.dvf_ratio.push_back(rd);
    rep.phi_ratio.push_back(rp);
    rep.phix_ratio.push_back(rx);
    rep.phit_ratio.push_back(rt);
    rep.q.push_back(q);
    rep.mass.push_back(mass);
  }
  rep.steps = nsteps;

  std::vector<double> tw, fw, dw, xw, lq, lt;
  for (size_t i = 0; i < rep.times.size(); ++i) {
    if (rep.times[i] < opt.fit_from - 1e-9) continue;
    tw.push_back(rep.times[i]);
    fw.push_back(rep.f_sup[i]);
    dw.push_back(rep.dvf_sup[i]);
    xw.push_back(rep.field_sup[i]);
    lt.push_back(std::log1p(rep.times[i]));
    lq.push_back(std::log(rep.q[i]));
  }
  rep.f_fit = profile_fit(tw, fw, 0.0);
  rep.dvf_fit = profile_fit(tw, dw, 0.0);
  rep.field_fit = profile_fit(tw, xw, 0.0);
  rep.q_trend = line_fit(lt, lq);
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace mvpb
