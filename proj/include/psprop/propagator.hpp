#pragma once

#include "flow.hpp"
#include "transform.hpp"

#include <Eigen/Eigenvalues>

namespace psprop {

struct PropagatedPacket {
  TrajectoryBundle bundle;
  double hbar;
  PhasePoint base;
};

inline PropagatedPacket make_packet(const ModelPtr& model, const PhasePoint& base, double T, double hbar,
                                    const FlowOptions& opts = {}) {
  if (!(hbar > 0)) throw DomainError("hbar must be positive");
  return {integrate_characteristics(model, base, T, opts), hbar, base};
}

// Anisotropic packet at x from a frame state of the characteristic through `base`.
inline cplx packet_value(const FrameState& s, const PhasePoint& base, double hbar, const Vec& x) {
  const int d = base.dim();
  const CMat Z = anisotropy_Z(s.frame);
  const Vec qt = s.X.head(d), pt = s.X.tail(d);
  const CVec dx = (x - qt).cast<cplx>();
  const cplx quad = 0.5 * (dx.transpose() * Z * dx)(0, 0);
  const cplx ph = 0.5 * base.p.dot(base.q) + s.action + pt.dot(x - qt) + quad;
  return std::pow(pi * hbar, -0.25 * d) * amplitude_a(s) * std::exp(I1 * ph / hbar);
}

inline cplx eval_packet(const PropagatedPacket& pkt, double t, const Vec& x) {
  return packet_value(pkt.bundle.at(t), pkt.base, pkt.hbar, x);
}

inline cplx eval_packet(const PropagatedPacket& pkt, double t, double x) {
  return eval_packet(pkt, t, Vec::Constant(1, x));
}

inline bool is_siegel(const CMat& M, double sym_tol = 1e-10) {
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > sym_tol * std::max(1.0, M.cwiseAbs().maxCoeff()))
    return false;
  const Mat im = 0.5 * (M.imag() + M.imag().transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(im);
  return es.eigenvalues().minCoeff() > 0;
}

// Q = [[iI - iW, I/2 - W], [I/2 - W, iW]] with W = (I - iZ)^{-1}.
inline CMat double_anisotropy_Q(const CMat& Z) {
  const Eigen::Index d = Z.rows();
  const CMat Id = CMat::Identity(d, d);
  Eigen::PartialPivLU<CMat> lu(Id - I1 * Z);
  if (std::abs(lu.determinant()) == 0) throw InternalError("I - iZ singular");
  const CMat W = lu.inverse();
  CMat Q(2 * d, 2 * d);
  Q.topLeftCorner(d, d) = I1 * Id - I1 * W;
  Q.topRightCorner(d, d) = 0.5 * Id - W;
  Q.bottomLeftCorner(d, d) = 0.5 * Id - W;
  Q.bottomRightCorner(d, d) = I1 * W;
  return Q;
}

// Product of principal square roots of the eigenvalues of I - iZ. All of them
// have positive real part when Im Z > 0, so the result has no branch ambiguity.
inline cplx sqrt_det_I_minus_iZ(const CMat& Z) {
  const Eigen::Index d = Z.rows();
  if (d == 1) return std::sqrt(cplx(1) - I1 * Z(0, 0));
  Eigen::ComplexEigenSolver<CMat> es(CMat::Identity(d, d) - I1 * Z);
  cplx r = 1;
  for (Eigen::Index k = 0; k < d; ++k) r *= std::sqrt(es.eigenvalues()(k));
  return r;
}

// Everything the kernel needs from one base point Y at time t.
struct KernelNode {
  int d = 1;
  Vec Y, Yt;
  CMat Q;
  cplx pref;          // (2 pi hbar)^{-d} 2^{d/2} / sqrt(det(A - iB))
  double phase0 = 0;  // A + (xi.eta - xi_t.eta_t)/2
  double decay = 0;   // smallest eigenvalue of Im Q
  Mat M;              // flow Jacobian at t
};

inline KernelNode make_kernel_node(const FrameState& s, const Vec& Y, double hbar) {
  KernelNode n;
  n.d = static_cast<int>(Y.size() / 2);
  const int d = n.d;
  n.Y = Y;
  n.Yt = s.X;
  const CMat Z = anisotropy_Z(s.frame);
  n.Q = double_anisotropy_Q(Z);
  n.pref = std::pow(2 * pi * hbar, -d) * std::pow(2.0, 0.5 * d) * std::exp(-0.5 * s.logdetA) /
           sqrt_det_I_minus_iZ(Z);
  n.phase0 = s.action + 0.5 * (Y.tail(d).dot(Y.head(d)) - s.X.tail(d).dot(s.X.head(d)));
  const Mat imQ = 0.5 * (n.Q.imag() + n.Q.imag().transpose());
  n.decay = Eigen::SelfAdjointEigenSolver<Mat>(imQ).eigenvalues().minCoeff();
  n.M = flow_jacobian(s);
  return n;
}

// Exponent (i/hbar)(phase0 + X.J Y_t / 2 + v.Q v / 2), v = X - Y_t.
inline cplx kernel_exponent(const KernelNode& n, const double* X, double hbar) {
  const int m = 2 * n.d;
  double v[16];
  double* vp = m <= 16 ? v : new double[m];
  for (int k = 0; k < m; ++k) vp[k] = X[k] - n.Yt(k);
  cplx quad = 0;
  for (int a = 0; a < m; ++a) {
    cplx row = 0;
    for (int b = 0; b < m; ++b) row += n.Q(a, b) * vp[b];
    quad += row * vp[a];
  }
  double sym = 0;
  for (int k = 0; k < n.d; ++k) sym += X[k] * n.Yt(n.d + k) - X[n.d + k] * n.Yt(k);
  if (vp != v) delete[] vp;
  return I1 * (n.phase0 + 0.5 * sym + 0.5 * quad) / hbar;
}

inline cplx kernel_value(const KernelNode& n, const Vec& X, double hbar) {
  return n.pref * std::exp(kernel_exponent(n, X.data(), hbar));
}

inline cplx kernel_Ksc(const PhasePoint& X, const PhasePoint& Y, double t, const HamiltonianModel& model,
                       double hbar, const FlowOptions& opts = {}) {
  if (!(hbar > 0)) throw DomainError("hbar must be positive");
  if (X.dim() != model.dim() || Y.dim() != model.dim()) throw DomainError("kernel: dimension mismatch");
  const Vec y = Y.stacked();
  const FrameState s = propagate_to(model, y, t, opts);
  return kernel_value(make_kernel_node(s, y, hbar), X.stacked(), hbar);
}

struct PropagatorOptions {
  FlowOptions flow;
  int threads = 1;
  std::optional<std::vector<Axis>> output_axes;
  double boundary_tol = 1e-8;
  double node_cut = 1e-16;  // base nodes with |Psi0| below this fraction of max are skipped
};

// Bounding box of the flow image of the grid corners and center.
inline std::vector<Axis> flowed_axes(const std::vector<Axis>& axes, double t, const HamiltonianModel& model,
                                     const FlowOptions& fo) {
  const int m = static_cast<int>(axes.size());
  std::vector<Vec> pts;
  for (int mask = 0; mask < (1 << m); ++mask) {
    Vec X(m);
    for (int k = 0; k < m; ++k) X(k) = (mask >> k) & 1 ? axes[k].max : axes[k].min;
    pts.push_back(X);
  }
  Vec c(m);
  for (int k = 0; k < m; ++k) c(k) = 0.5 * (axes[k].min + axes[k].max);
  pts.push_back(c);
  Vec lo = Vec::Constant(m, std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& X : pts) {
    const Vec Xt = propagate_to(model, X, t, fo).X;
    lo = lo.cwiseMin(Xt);
    hi = hi.cwiseMax(Xt);
  }
  std::vector<Axis> out;
  for (int k = 0; k < m; ++k) out.emplace_back(lo(k), hi(k), axes[k].n);
  return out;
}

namespace detail {

inline std::vector<KernelNode> build_nodes(const ComplexField& Psi0, double t, const HamiltonianModel& model,
                                           const PropagatorOptions& opt, std::vector<std::size_t>& used,
                                           Diagnostics* diag) {
  const double m = Psi0.max_abs();
  used.clear();
  for (std::size_t k = 0; k < Psi0.size(); ++k)
    if (std::abs(Psi0[k]) > opt.node_cut * m) used.push_back(k);
  std::vector<KernelNode> nodes(used.size());
  std::vector<char> ehrenfest(used.size(), 0);
  const double hbar = Psi0.hbar();
  const double limit = 1 / std::sqrt(hbar);
  parallel_for(used.size(), opt.threads, [&](std::size_t i) {
    const Vec Y = Psi0.point(used[i]);
    nodes[i] = make_kernel_node(propagate_to(model, Y, t, opt.flow), Y, hbar);
    if (Eigen::JacobiSVD<Mat>(nodes[i].M).singularValues()(0) > limit) ehrenfest[i] = 1;
  });
  const auto nE = std::count(ehrenfest.begin(), ehrenfest.end(), 1);
  if (nE > 0)
    warn(diag, "Ehrenfest guard: " + std::to_string(nE) + " of " + std::to_string(used.size()) +
                   " base trajectories exceed hbar^{-1/2} at t=" + std::to_string(t));
  return nodes;
}

}  // namespace detail

// Psi(X, t) = int K_sc(X, Y, t) Psi0(Y) dY, trapezoid over the grid of Psi0.
inline ComplexField apply_propagator(const ComplexField& Psi0, double t, const HamiltonianModel& model,
                                     const PropagatorOptions& opt = {}, Diagnostics* diag = nullptr) {
  if (Psi0.kind() != FieldKind::phase) throw DomainError("apply_propagator expects a phase field");
  if (Psi0.dim() != model.dim()) throw DomainError("field and model dimensions differ");
  if (!(t >= 0)) throw RangeError("propagation time must be >= 0");
  const double hbar = Psi0.hbar();
  const int d = Psi0.dim();
  detail::check_boundary(Psi0, opt.boundary_tol, "apply_propagator");
  for (const auto& a : Psi0.axes())
    if (a.step() > std::sqrt(hbar) / 4) {
      warn(diag, "base grid spacing " + std::to_string(a.step()) + " exceeds sqrt(hbar)/4 = " +
                     std::to_string(std::sqrt(hbar) / 4));
      break;
    }

  const std::vector<Axis> oax = opt.output_axes ? *opt.output_axes : flowed_axes(Psi0.axes(), t, model, opt.flow);
  ComplexField out = ComplexField::phase(oax, hbar);
  if (static_cast<int>(oax.size()) != 2 * d) throw DomainError("output grid must have 2d axes");

  std::vector<std::size_t> used;
  const auto nodes = detail::build_nodes(Psi0, t, model, opt, used, diag);
  std::vector<cplx> wpsi(used.size());
  for (std::size_t i = 0; i < used.size(); ++i) wpsi[i] = Psi0.weight(used[i]) * Psi0[used[i]];

  const double cut = 2 * detail::gauss_cut * hbar;
  parallel_for(out.size(), opt.threads, [&](std::size_t j) {
    const Vec X = out.point(j);
    cplx s = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const KernelNode& n = nodes[i];
      if (n.decay * (X - n.Yt).squaredNorm() > cut) continue;
      s += n.pref * std::exp(kernel_exponent(n, X.data(), hbar)) * wpsi[i];
    }
    out[j] = s;
  });
  return out;
}

struct PositionSolveOptions {
  PropagatorOptions prop;
  std::vector<Axis> base_axes;      // phase grid of base points
  std::vector<Axis> output_axes;    // position grid; empty means the psi0 grid
  TransformOptions transform;
};

// psi(x, t) = (2 pi hbar)^{-d/2} int G^Z_{(q,p)}(x, t) Psi0(q, p) dq dp.
inline ComplexField position_space_solution(const ComplexField& psi0, double t, const HamiltonianModel& model,
                                            const PositionSolveOptions& opt, Diagnostics* diag = nullptr) {
  if (psi0.kind() != FieldKind::position) throw DomainError("position_space_solution expects a position field");
  const int d = psi0.dim();
  if (d != model.dim()) throw DomainError("field and model dimensions differ");
  if (static_cast<int>(opt.base_axes.size()) != 2 * d) throw DomainError("base grid must have 2d axes");
  const double hbar = psi0.hbar();
  TransformOptions to = opt.transform;
  to.threads = opt.prop.threads;
  const ComplexField Psi0 = wave_packet_transform(psi0, opt.base_axes, to, nullptr);
  detail::check_boundary(Psi0, opt.prop.boundary_tol, "position_space_solution");

  const double m = Psi0.max_abs();
  std::vector<std::size_t> used;
  for (std::size_t k = 0; k < Psi0.size(); ++k)
    if (std::abs(Psi0[k]) > opt.prop.node_cut * m) used.push_back(k);
  struct Node {
    Vec qt, pt;
    CMat Z;
    cplx amp;
    double phase0;
    double decay;
  };
  std::vector<Node> nodes(used.size());
  std::vector<char> ehrenfest(used.size(), 0);
  parallel_for(used.size(), opt.prop.threads, [&](std::size_t i) {
    const Vec Y = Psi0.point(used[i]);
    const FrameState s = propagate_to(model, Y, t, opt.prop.flow);
    Node& n = nodes[i];
    n.qt = s.X.head(d);
    n.pt = s.X.tail(d);
    n.Z = anisotropy_Z(s.frame);
    n.amp = std::pow(2 * pi * hbar, -0.5 * d) * std::pow(pi * hbar, -0.25 * d) * amplitude_a(s) *
            Psi0.weight(used[i]) * Psi0[used[i]];
    n.phase0 = 0.5 * Y.tail(d).dot(Y.head(d)) + s.action;
    const Mat imZ = 0.5 * (n.Z.imag() + n.Z.imag().transpose());
    n.decay = Eigen::SelfAdjointEigenSolver<Mat>(imZ).eigenvalues().minCoeff();
    if (Eigen::JacobiSVD<Mat>(flow_jacobian(s)).singularValues()(0) > 1 / std::sqrt(hbar)) ehrenfest[i] = 1;
  });
  if (std::count(ehrenfest.begin(), ehrenfest.end(), 1) > 0)
    warn(diag, "Ehrenfest guard fired for some base trajectories at t=" + std::to_string(t));

  ComplexField out = ComplexField::position(opt.output_axes.empty() ? psi0.axes() : opt.output_axes, hbar);
  const double cut = 2 * detail::gauss_cut * hbar;
  parallel_for(out.size(), opt.prop.threads, [&](std::size_t j) {
    const Vec x = out.point(j);
    cplx s = 0;
    for (const auto& n : nodes) {
      const Vec dx = x - n.qt;
      if (n.decay * dx.squaredNorm() > cut) continue;
      cplx quad = 0;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) quad += n.Z(a, b) * dx(a) * dx(b);
      s += n.amp * std::exp(I1 * (n.phase0 + n.pt.dot(dx) + 0.5 * quad) / hbar);
    }
    out[j] = s;
  });
  return out;
}

struct VanVleckOptions {
  FlowOptions flow;
  double p_window = 20;     // scan p in [-p_window, p_window] for further roots
  int scan_points = 400;
  bool allow_caustics = false;
  double newton_tol = 1e-13;
};

struct VanVleckBranch {
  double p;       // initial momentum of the classical path y -> x
  double action;
  double dqdp;    // dq_t/dp at the endpoint
  int nu;         // number of focal points passed
};

namespace detail {

inline double q_at(const HamiltonianModel& m, double y, double p, double t, const FlowOptions& fo,
                   double* dqdp = nullptr) {
  Vec Y(2);
  Y << y, p;
  const FrameState s = propagate_to(m, Y, t, fo);
  if (dqdp) *dqdp = s.frame.A(0, 0).imag();
  return s.X(0);
}

inline bool newton_root(const HamiltonianModel& m, double x, double y, double t, const FlowOptions& fo,
                        double p, double tol, double& root) {
  for (int it = 0; it < 60; ++it) {
    double g;
    const double f = q_at(m, y, p, t, fo, &g) - x;
    if (std::abs(f) < tol * (1 + std::abs(x))) {
      root = p;
      return true;
    }
    if (g == 0 || !std::isfinite(g)) return false;
    double step = f / g, lam = 1;
    // Damping: halve until the residual decreases.
    for (int k = 0; k < 30; ++k) {
      const double fn = q_at(m, y, p - lam * step, t, fo) - x;
      if (std::abs(fn) < std::abs(f)) break;
      lam *= 0.5;
    }
    p -= lam * step;
  }
  return false;
}

}  // namespace detail

inline std::vector<VanVleckBranch> van_vleck_branches(double x, double y, double t, const HamiltonianModel& model,
                                                      const VanVleckOptions& opt = {}) {
  if (model.dim() != 1) throw DomainError("van Vleck kernel is implemented for d = 1");
  if (!(t > 0)) throw RangeError("van Vleck kernel needs t > 0");
  std::vector<double> roots;
  auto add_root = [&](double r) {
    for (double o : roots)
      if (std::abs(o - r) < 1e-8 * (1 + std::abs(r))) return;
    roots.push_back(r);
  };
  double r;
  if (detail::newton_root(model, x, y, t, opt.flow, (x - y) / (2 * t), opt.newton_tol, r)) add_root(r);
  const double h = 2 * opt.p_window / opt.scan_points;
  double pa = -opt.p_window, fa = detail::q_at(model, y, pa, t, opt.flow) - x;
  for (int k = 1; k <= opt.scan_points; ++k) {
    const double pb = -opt.p_window + k * h;
    const double fb = detail::q_at(model, y, pb, t, opt.flow) - x;
    if (fa == 0) add_root(pa);
    if (fa * fb < 0) {
      double lo = pa, hi = pb, flo = fa;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * (1 + std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = detail::q_at(model, y, mid, t, opt.flow) - x;
        if ((fm < 0) == (flo < 0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      double pr = 0.5 * (lo + hi);
      detail::newton_root(model, x, y, t, opt.flow, pr, opt.newton_tol, pr);
      add_root(pr);
    }
    pa = pb;
    fa = fb;
  }
  if (roots.empty()) throw ProjectionError("van Vleck: no classical path found in the p-window");
  std::sort(roots.begin(), roots.end());

  std::vector<VanVleckBranch> out;
  for (double p : roots) {
    PhasePoint Y(y, p);
    FlowOptions fo = opt.flow;
    // Sampled track of dq_t/dp for focal-point detection.
    fo.step = std::min(fo.step, t / 200);
    const ModelPtr alias(std::shared_ptr<const HamiltonianModel>{}, &model);
    const TrajectoryBundle b = integrate_characteristics(alias, Y, t, fo);
    int nu = 0;
    double prev = 0;
    double t_star = std::nan("");
    for (std::size_t k = 1; k < b.size(); ++k) {
      const double g = b.samples()[k].frame.A(0, 0).imag();
      if (k > 1 && ((g <= 0) != (prev <= 0) || g == 0)) {
        ++nu;
        if (std::isnan(t_star)) t_star = b.samples()[k].t;
      }
      prev = g;
    }
    const FrameState& end = b.samples().back();
    const double g = end.frame.A(0, 0).imag();
    if (g == 0 || std::abs(g) < 1e-12) t_star = std::isnan(t_star) ? t : t_star;
    if (!std::isnan(t_star) && !opt.allow_caustics)
      throw CausticError("van Vleck: focal point (dq_t/dp = 0) at t* = " + std::to_string(t_star), t_star);
    out.push_back({p, end.action, g, nu});
  }
  return out;
}

// Sum over classical paths of (2 pi i hbar)^{-1/2} |dp/dq_t|^{1/2} e^{(i/hbar) A - i pi nu / 2}.
inline cplx van_vleck_kernel(double x, double y, double t, const HamiltonianModel& model, double hbar,
                             const VanVleckOptions& opt = {}) {
  if (!(hbar > 0)) throw DomainError("hbar must be positive");
  cplx s = 0;
  for (const auto& br : van_vleck_branches(x, y, t, model, opt)) {
    const cplx pre = 1.0 / std::sqrt(2 * pi * I1 * hbar) / std::sqrt(std::abs(br.dqdp));
    s += pre * std::exp(I1 * (br.action / hbar - pi * br.nu / 2));
  }
  return s;
}

}  // namespace psprop
