#pragma once

#include "propagator.hpp"

#include <array>

namespace psprop {

// Real polynomial sum c_k x^k with exact derivatives.
struct Polynomial {
  std::vector<double> c;

  Polynomial() = default;
  Polynomial(std::initializer_list<double> coeffs) : c(coeffs) {}
  explicit Polynomial(std::vector<double> coeffs) : c(std::move(coeffs)) {}

  int degree() const { return c.empty() ? 0 : static_cast<int>(c.size()) - 1; }

  double deriv(double x, int k) const {
    double s = 0;
    for (int n = static_cast<int>(c.size()) - 1; n >= k; --n) {
      double f = 1;
      for (int m = 0; m < k; ++m) f *= n - m;
      s = s * x + c[n] * f;
    }
    return s;
  }
  double operator()(double x) const { return deriv(x, 0); }
};

// P(x) exp(G(x)) with G quadratic, G'' < 0.
struct GaussPolyAmplitude {
  Polynomial P{1.0};
  Polynomial G{0.0, 0.0, -0.5};

  double deriv(double x, int k) const {
    // Derivatives of E = exp(G) by the recursion E^(n) = sum C(n-1,j) G^(j+1) E^(n-1-j).
    std::vector<double> E(k + 1);
    E[0] = std::exp(G(x));
    for (int n = 1; n <= k; ++n) {
      double s = 0, binom = 1;
      for (int j = 0; j <= n - 1; ++j) {
        s += binom * G.deriv(x, j + 1) * E[n - 1 - j];
        binom = binom * (n - 1 - j) / (j + 1);
      }
      E[n] = s;
    }
    double s = 0, binom = 1;
    for (int j = 0; j <= k; ++j) {
      s += binom * P.deriv(x, j) * E[k - j];
      binom = binom * (k - j) / (j + 1);
    }
    return s;
  }
  double operator()(double x) const { return deriv(x, 0); }
};

// psi0(x) = R0(x) exp(i S0(x) / hbar), d = 1.
struct WKBData {
  Polynomial S0;
  GaussPolyAmplitude R0;
  int r = 2;

  double S0d(double x, int k) const { return S0.deriv(x, k); }
  double R0d(double x, int k) const { return R0.deriv(x, k); }

  void validate() const {
    if (r < 2 || r > 4) throw ConfigError("extension order r must be in [2, 4]");
    if (S0.degree() > 4) throw ConfigError("S0 degree must be <= 4");
    if (R0.G.degree() != 2 || !(R0.G.c[2] < 0)) throw ConfigError("R0 exponent must be a concave quadratic");
    // Norm by trapezoid on a window where exp(G) is below 1e-30 at the ends.
    const double g2 = -R0.G.c[2];
    const double x0 = R0.G.c[1] / (2 * g2);
    const double L = std::sqrt(80 / g2) + 2;
    const int n = 8001;
    const Axis ax(x0 - L, x0 + L, n);
    double s = 0;
    for (int i = 0; i < n; ++i) {
      const double v = R0(ax.at(i));
      s += ax.weight(i) * v * v;
    }
    if (std::abs(s - 1) > 1e-8) throw ConfigError("R0 must be L2-normalized (got " + std::to_string(s) + ")");
  }

  ComplexField sample(const Axis& x, double hbar) const {
    ComplexField f = ComplexField::position({x}, hbar);
    for (int i = 0; i < x.n; ++i) {
      const double xi = x.at(i);
      f[i] = R0(xi) * std::exp(I1 * S0(xi) / hbar);
    }
    return f;
  }
};

// S0 = x^2/2 + eps x^4, R0 = pi^{-1/4} exp(-x^2/2).
inline WKBData standard_wkb_data(double quartic = 0.0, int r = 2) {
  WKBData d;
  d.S0 = Polynomial{0.0, 0.0, 0.5, 0.0, quartic};
  d.R0.P = Polynomial{std::pow(pi, -0.25)};
  d.R0.G = Polynomial{0.0, 0.0, -0.5};
  d.r = r;
  return d;
}

// sum_{m=0}^{r} (i y)^m / m! f^{(m)}(x) at z = x + iy; `shift` starts the stack at f^{(shift)}.
template <class F>
cplx r_analytic_extension(const F& deriv, int r, cplx z, int shift = 0) {
  const double x = z.real(), y = z.imag();
  cplx s = 0, term = 1;
  for (int m = 0; m <= r; ++m) {
    if (m > 0) term *= I1 * y / static_cast<double>(m);
    s += term * deriv(x, m + shift);
  }
  return s;
}

inline cplx r_analytic_extension(const Polynomial& f, int r, cplx z, int shift = 0) {
  return r_analytic_extension([&](double x, int k) { return f.deriv(x, k); }, r, z, shift);
}

// z(q,p) = q + i (1 - i S0''(q))^{-1} (S0'(q) - p).
inline cplx stationary_point_z(const WKBData& data, const PhasePoint& X) {
  if (X.dim() != 1) throw DomainError("WKB data is one-dimensional");
  const double q = X.q(0), p = X.p(0);
  return q + I1 * (data.S0d(q, 1) - p) / (1.0 - I1 * data.S0d(q, 2));
}

struct LiftOptions {
  int threads = 1;
  double branch_floor = 1e-8;  // branch continuity checked where |Psi| exceeds this fraction of max
};

inline cplx lift_value(const WKBData& data, double q, double p, double hbar, cplx* sqrt_factor = nullptr) {
  const cplx z = q + I1 * (data.S0d(q, 1) - p) / (1.0 - I1 * data.S0d(q, 2));
  const int r = data.r;
  auto Sd = [&](double x, int k) { return data.S0d(x, k); };
  auto Rd = [&](double x, int k) { return data.R0d(x, k); };
  const cplx S = r_analytic_extension(Sd, r, z);
  const cplx R = r_analytic_extension(Rd, r, z);
  const cplx S2 = r_analytic_extension(Sd, r, z, 2);
  const cplx sq = std::sqrt(1.0 - I1 * S2);
  if (sqrt_factor) *sqrt_factor = sq;
  const cplx dz = z - q;
  const cplx ph = S - p * dz + 0.5 * I1 * dz * dz - 0.5 * p * q;
  return std::pow(pi * hbar, -0.25) * R / sq * std::exp(I1 * ph / hbar);
}

inline ComplexField lift_wkb(const WKBData& data, const std::vector<Axis>& phase_axes, double hbar,
                             const LiftOptions& opt = {}) {
  if (data.r < 2) throw ConfigError("extension order r must be >= 2");
  if (phase_axes.size() != 2) throw DomainError("lift_wkb: d = 1 phase grid expected");
  ComplexField out = ComplexField::phase(phase_axes, hbar);
  std::vector<cplx> sq(out.size());
  parallel_for(out.size(), opt.threads, [&](std::size_t i) {
    const Vec X = out.point(i);
    out[i] = lift_value(data, X(0), X(1), hbar, &sq[i]);
  });
  // Principal root of 1 - i rS0''(z) must not jump between neighbours where Psi matters.
  const double floor = opt.branch_floor * out.max_abs();
  const int nq = phase_axes[0].n, np = phase_axes[1].n;
  auto check = [&](std::size_t a, std::size_t b) {
    if (std::abs(out[a]) < floor || std::abs(out[b]) < floor) return;
    if (std::abs(std::arg(sq[a] / sq[b])) > pi / 2) {
      const Vec X = out.point(a);
      throw BranchError("lift_wkb: square-root branch jump near (q,p)=(" + std::to_string(X(0)) + "," +
                        std::to_string(X(1)) + "); refine the grid");
    }
  };
  for (int i = 0; i < nq; ++i)
    for (int j = 0; j < np; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * np + j;
      if (i + 1 < nq) check(k, k + np);
      if (j + 1 < np) check(k, k + 1);
    }
  return out;
}

struct LagrangianManifold {
  double t = 0;
  std::vector<double> alpha;
  std::vector<double> q, p;
  std::vector<double> S;          // transported phase S(q(alpha), t)
  std::vector<double> dq_dalpha;  // projection Jacobian
};

inline Vec manifold_point0(const WKBData& data, double a) {
  Vec Y(2);
  Y << a, data.S0d(a, 1);
  return Y;
}

// Lambda_t = g^t Lambda_0 on the alpha grid; S(q_t, t) = S0(alpha) + A(X0(alpha), t).
inline LagrangianManifold transport_manifold(const WKBData& data, const HamiltonianModel& model, double t,
                                             const Axis& alpha_axis, const FlowOptions& fo = {},
                                             bool check_caustic = true) {
  if (model.dim() != 1) throw DomainError("transport_manifold: d = 1");
  LagrangianManifold L;
  L.t = t;
  const ModelPtr alias(std::shared_ptr<const HamiltonianModel>{}, &model);
  double t_star = std::numeric_limits<double>::infinity(), a_star = std::nan("");
  for (int k = 0; k < alpha_axis.n; ++k) {
    const double a = alpha_axis.at(k);
    const Vec Y = manifold_point0(data, a);
    const double s2 = data.S0d(a, 2);
    FrameState end;
    if (check_caustic && t > 0) {
      const TrajectoryBundle b = integrate_characteristics(alias, PhasePoint::from_stacked(Y), t, fo);
      auto jac = [&](const FrameState& s) { return s.frame.A(0, 0).real() + s.frame.A(0, 0).imag() * s2; };
      double t_prev = 0;
      for (const auto& s : b.samples()) {
        if (jac(s) <= 0) {
          // Bisect inside the bracketing step.
          double lo = t_prev, hi = s.t;
          while (hi - lo > 1e-12 * std::max(1.0, hi)) {
            const double mid = 0.5 * (lo + hi);
            (jac(b.at(mid)) > 0 ? lo : hi) = mid;
          }
          if (hi < t_star) {
            t_star = hi;
            a_star = a;
          }
          break;
        }
        t_prev = s.t;
      }
      end = b.samples().back();
    } else {
      end = propagate_to(model, Y, t, fo);
    }
    L.alpha.push_back(a);
    L.q.push_back(end.X(0));
    L.p.push_back(end.X(1));
    L.S.push_back(data.S0d(a, 0) + end.action);
    L.dq_dalpha.push_back(end.frame.A(0, 0).real() + end.frame.A(0, 0).imag() * s2);
  }
  if (check_caustic && std::isfinite(t_star))
    throw CausticError("transport_manifold: caustic (dq_t/dalpha <= 0) at alpha* = " + std::to_string(a_star) +
                           ", t* = " + std::to_string(t_star),
                       t_star, a_star);
  return L;
}

struct LineFit {
  double slope = 0, offset = 0, max_residual = 0;
};

// Least-squares line p = slope q + offset through the manifold samples.
inline LineFit fit_line(const LagrangianManifold& L) {
  const std::size_t n = L.q.size();
  if (n < 2) throw DomainError("fit_line needs two samples");
  Mat A(n, 2);
  Vec b(n);
  for (std::size_t i = 0; i < n; ++i) {
    A(i, 0) = L.q[i];
    A(i, 1) = 1;
    b(i) = L.p[i];
  }
  const Vec x = A.colPivHouseholderQr().solve(b);
  LineFit f{x(0), x(1), (A * x - b).cwiseAbs().maxCoeff()};
  return f;
}

// Earliest t in (0, t_max] where dq_t/dalpha vanishes at alpha (vertical tangent), by bisection.
inline double vertical_tangent_time(const WKBData& data, const HamiltonianModel& model, double alpha, double t_max,
                                    const FlowOptions& fo = {}, double tol = 1e-12) {
  const Vec Y = manifold_point0(data, alpha);
  const double s2 = data.S0d(alpha, 2);
  auto J = [&](double t) {
    const FrameState s = propagate_to(model, Y, t, fo);
    return s.frame.A(0, 0).real() + s.frame.A(0, 0).imag() * s2;
  };
  const int n = 2000;
  double ta = 0, ja = 1;
  for (int k = 1; k <= n; ++k) {
    const double tb = t_max * k / n, jb = J(tb);
    if (jb <= 0 && ja > 0) {
      double lo = ta, hi = tb;
      while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (J(mid) > 0 ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
    ta = tb;
    ja = jb;
  }
  throw RangeError("no vertical tangent before t_max");
}

struct FscResult {
  cplx F;
  double alpha;
  bool ambiguous = false;
};

// F_sc(X, Y, t) for Y on Lambda_0 with the nearest-point coordinate alpha(X, t). d = 1.
class FscEvaluator {
 public:
  FscEvaluator(WKBData data, ModelPtr model, double t, const Axis& alpha_axis, FlowOptions fo = {})
      : data_(std::move(data)), model_(std::move(model)), t_(t), fo_(fo) {
    if (model_->dim() != 1) throw DomainError("F_sc is implemented for d = 1");
    for (int k = 0; k < alpha_axis.n; ++k) {
      const double a = alpha_axis.at(k);
      alpha_.push_back(a);
      Xt_.push_back(propagate_to(*model_, manifold_point0(data_, a), t_, fo_).X);
    }
  }

  double t() const { return t_; }

  // Position on Lambda_t and its alpha-derivative.
  void curve(double a, Vec& Xt, Vec& dXt, FrameState* st = nullptr) const {
    const FrameState s = propagate_to(*model_, manifold_point0(data_, a), t_, fo_);
    const Mat M = flow_jacobian(s);
    Vec tan0(2);
    tan0 << 1, data_.S0d(a, 2);
    Xt = s.X;
    dXt = M * tan0;
    if (st) *st = s;
  }

  double solve_alpha(const Vec& X, bool& ambiguous) const {
    // Seed: nearest grid sample; flag a second local minimum of equal distance.
    std::vector<double> dist(alpha_.size());
    for (std::size_t k = 0; k < alpha_.size(); ++k) dist[k] = (X - Xt_[k]).norm();
    const std::size_t k0 = std::min_element(dist.begin(), dist.end()) - dist.begin();
    ambiguous = false;
    for (std::size_t k = 1; k + 1 < dist.size(); ++k)
      if (k != k0 && dist[k] <= dist[k - 1] && dist[k] <= dist[k + 1] &&
          std::abs(dist[k] - dist[k0]) <= 1e-9 * (1 + dist[k0]))
        ambiguous = true;
    double a = alpha_[k0];
    const double h = 1e-5;
    for (int it = 0; it < 100; ++it) {
      Vec Xt, D, Xp, Dp, Xm, Dm;
      curve(a, Xt, D);
      const double g = (X - Xt).dot(D);
      curve(a + h, Xp, Dp);
      curve(a - h, Xm, Dm);
      const double gp = (X - Xp).dot(Dp), gm = (X - Xm).dot(Dm);
      const double dg = (gp - gm) / (2 * h);
      if (std::abs(g) < 1e-14 * (1 + X.norm()) * (1 + D.norm())) return a;
      if (dg >= 0 || !std::isfinite(dg)) throw ProjectionError("F_sc: nearest-point Newton lost monotonicity");
      double step = -g / dg, lam = 1;
      for (int k = 0; k < 30; ++k) {
        Vec Xn, Dn;
        curve(a + lam * step, Xn, Dn);
        if (std::abs((X - Xn).dot(Dn)) < std::abs(g)) break;
        lam *= 0.5;
      }
      a += lam * step;
      if (std::abs(lam * step) < 1e-15 * (1 + std::abs(a))) return a;
    }
    throw ProjectionError("F_sc: nearest-point Newton did not converge");
  }

  FscResult operator()(const Vec& X, const Vec& Y) const {
    FscResult r;
    r.alpha = solve_alpha(X, r.ambiguous);
    FrameState s;
    Vec Xt, D;
    curve(r.alpha, Xt, D, &s);
    const Vec X0 = manifold_point0(data_, r.alpha);
    const CMat Q = double_anisotropy_Q(anisotropy_Z(s.frame));
    const double eta = Y(0), xi = Y(1);
    const CVec v = (X - Xt).cast<cplx>();
    const cplx quad = (v.transpose() * Q * v)(0, 0);
    r.F = data_.S0d(eta, 0) - 0.5 * xi * eta + 0.5 * symplectic_pair(X0, Y) + 0.5 * symplectic_pair(X, Xt) +
          s.action - 0.5 * (Xt(1) * Xt(0) - X0(1) * X0(0)) + 0.25 * I1 * (X0 - Y).squaredNorm() + 0.5 * quad;
    return r;
  }

 private:
  WKBData data_;
  ModelPtr model_;
  double t_;
  FlowOptions fo_;
  std::vector<double> alpha_;
  std::vector<Vec> Xt_;
};

inline FscResult asymptotic_phase_Fsc(const Vec& X, const Vec& Y, double t, const WKBData& data,
                                      const ModelPtr& model, const Axis& alpha_axis, const FlowOptions& fo = {},
                                      std::optional<double> hbar = std::nullopt) {
  FscEvaluator ev(data, model, t, alpha_axis, fo);
  if (hbar) {
    double dmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < alpha_axis.n; ++k) {
      Vec Xt, D;
      ev.curve(alpha_axis.at(k), Xt, D);
      dmin = std::min(dmin, (X - Xt).norm());
    }
    if (dmin > 6 * std::sqrt(*hbar) + alpha_axis.step())
      throw DomainError("F_sc: X farther than 6 sqrt(hbar) from Lambda_t");
  }
  return ev(X, Y);
}

// Full phase of K_sc(X, Y', t) Psi0(Y') in Y' (Psi0 the lifted WKB data), times -i hbar log.
inline cplx integrand_phase(const WKBData& data, const HamiltonianModel& model, const Vec& X, const Vec& Y,
                            double t, const FlowOptions& fo) {
  const double eta = Y(0), xi = Y(1);
  const cplx z = eta + I1 * (data.S0d(eta, 1) - xi) / (1.0 - I1 * data.S0d(eta, 2));
  auto Sd = [&](double x, int k) { return data.S0d(x, k); };
  const cplx dz = z - eta;
  const cplx lift = r_analytic_extension(Sd, data.r, z) - xi * dz + 0.5 * I1 * dz * dz - 0.5 * xi * eta;
  const FrameState s = propagate_to(model, Y, t, fo);
  const CMat Q = double_anisotropy_Q(anisotropy_Z(s.frame));
  const CVec v = (X - s.X).cast<cplx>();
  const cplx ker = s.action + 0.5 * (xi * eta - s.X(1) * s.X(0)) + 0.5 * symplectic_pair(X, s.X) +
                   0.5 * (v.transpose() * Q * v)(0, 0);
  return lift + ker;
}

struct OnManifoldOptions {
  FlowOptions flow;
  double fd_step = 1e-3;
  double manifold_tol = 1e-8;
};

// Leading-order value of the propagated WKB state at X on Lambda_t. The
// stationary-phase determinant is det(-i F''), the Hessian taken in Y.
inline cplx solution_on_manifold(const Vec& X, double t, const WKBData& data, const ModelPtr& model, double hbar,
                                 const OnManifoldOptions& opt = {}) {
  if (!(hbar > 0)) throw DomainError("hbar must be positive");
  if (model->dim() != 1 || X.size() != 2) throw DomainError("solution_on_manifold: d = 1");
  const ModelPtr back = reversed(model);
  const Vec Y = propagate_to(*back, X, t, opt.flow).X;
  const double eta = Y(0), xi = Y(1);
  if (std::abs(xi - data.S0d(eta, 1)) > opt.manifold_tol * (1 + std::abs(xi)))
    throw DomainError("solution_on_manifold: X is not on Lambda_t");
  const FrameState s = propagate_to(*model, Y, t, opt.flow);
  const CMat Z = anisotropy_Z(s.frame);
  const cplx jac = std::sqrt(2.0) * std::exp(-0.5 * s.logdetA) / sqrt_det_I_minus_iZ(Z);

  const double h = opt.fd_step;
  auto F = [&](double de, double dx) {
    Vec Yp = Y;
    Yp(0) += de;
    Yp(1) += dx;
    return integrand_phase(data, *model, X, Yp, t, opt.flow);
  };
  const cplx f0 = F(0, 0);
  // Central second differences, Richardson-combined over steps h and h/2.
  auto hess = [&](double k) {
    std::array<cplx, 3> H;
    H[0] = (F(k, 0) - 2.0 * f0 + F(-k, 0)) / (k * k);
    H[1] = (F(0, k) - 2.0 * f0 + F(0, -k)) / (k * k);
    H[2] = (F(k, k) - F(k, -k) - F(-k, k) + F(-k, -k)) / (4 * k * k);
    return H;
  };
  const auto Hh = hess(h), Hh2 = hess(0.5 * h);
  std::array<cplx, 3> Hr;
  for (int i = 0; i < 3; ++i) Hr[i] = (4.0 * Hh2[i] - Hh[i]) / 3.0;
  const cplx fee = Hr[0], fxx = Hr[1], fex = Hr[2];
  const cplx detF = fee * fxx - fex * fex;
  const cplx det_minus_i = -detF;  // det(-i F'') for a 2x2 Hessian

  const double q = X(0), p = X(1);
  const cplx phase = -0.5 * p * q + data.S0d(eta, 0) + s.action;
  return std::pow(pi * hbar, -0.25) * jac * data.R0d(eta, 0) /
         std::sqrt((1.0 - I1 * data.S0d(eta, 2)) * det_minus_i) * std::exp(I1 * phase / hbar);
}

// (det M)^{-1/2} exp(-v.M^{-1}v / 2 hbar); the root is continued from Re M along M(s) = Re M + i s Im M.
inline cplx gaussian_integral(const CMat& M, const CVec& v, double hbar) {
  if (!(hbar > 0)) throw DomainError("hbar must be positive");
  const Eigen::Index m = M.rows();
  if (M.cols() != m || v.size() != m) throw DomainError("gaussian_integral: shape mismatch");
  const Mat R = 0.5 * (M.real() + M.real().transpose());
  if (Eigen::SelfAdjointEigenSolver<Mat>(R).eigenvalues().minCoeff() <= 0)
    throw DomainError("gaussian_integral: Re M is not positive definite");
  cplx logdet = std::log(R.determinant());
  cplx prev = R.determinant();
  const int n = 64;
  for (int k = 1; k <= n; ++k) {
    const CMat Ms = M.real().cast<cplx>() + I1 * (static_cast<double>(k) / n) * M.imag().cast<cplx>();
    const cplx dk = Ms.determinant();
    logdet += std::log(dk / prev);
    prev = dk;
  }
  const Eigen::PartialPivLU<CMat> lu(M);
  const cplx quad = (v.transpose() * lu.solve(v))(0, 0);
  return std::exp(-0.5 * logdet - quad / (2 * hbar));
}

}  // namespace psprop
