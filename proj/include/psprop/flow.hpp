#pragma once

#include "models.hpp"

#include <boost/numeric/odeint.hpp>

#include <optional>
#include <sstream>

namespace psprop {

enum class FlowMethod { rk4, adaptive, exact };

inline FlowMethod parse_flow_method(const std::string& s) {
  if (s == "rk4") return FlowMethod::rk4;
  if (s == "adaptive") return FlowMethod::adaptive;
  if (s == "exact") return FlowMethod::exact;
  throw ConfigError("flow.method must be rk4, adaptive or exact (got '" + s + "')");
}

struct FlowOptions {
  // nullopt: exact when the model has a closed-form flow, rk4 otherwise.
  std::optional<FlowMethod> method;
  double step = 1e-3;
  double rtol = 1e-10;
  double atol = 1e-12;
  // Sample spacing used to track the branch of log det A on the exact path.
  double exact_track_step = 0.05;
  std::optional<double> hbar;  // enables the Ehrenfest guard

  FlowMethod resolved(const HamiltonianModel& m) const {
    if (method) {
      if (*method == FlowMethod::exact && !m.has_exact_flow())
        throw ConfigError("flow.method=exact requested but model '" + m.name() +
                          "' has no closed-form flow");
      return *method;
    }
    return m.has_exact_flow() ? FlowMethod::exact : FlowMethod::rk4;
  }
};

struct VariationalFrame {
  CMat A, B;
};

// Snapshot of the characteristic system at one time.
struct FrameState {
  double t = 0;
  Vec X;
  VariationalFrame frame;
  double action = 0;
  cplx logdetA = 0;
};

namespace detail {

using State = std::vector<double>;

inline std::size_t state_size(int d) { return 2 * d + 4 * d * d + 1; }

inline void pack(const Vec& X, const CMat& A, const CMat& B, double action, State& s) {
  const int d = static_cast<int>(A.rows());
  s.resize(state_size(d));
  std::size_t k = 0;
  for (int i = 0; i < 2 * d; ++i) s[k++] = X(i);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) {
      s[k++] = A(i, j).real();
      s[k++] = A(i, j).imag();
      s[k++] = B(i, j).real();
      s[k++] = B(i, j).imag();
    }
  s[k] = action;
}

inline void unpack(const State& s, int d, Vec& X, CMat& A, CMat& B, double& action) {
  X.resize(2 * d);
  A.resize(d, d);
  B.resize(d, d);
  std::size_t k = 0;
  for (int i = 0; i < 2 * d; ++i) X(i) = s[k++];
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) {
      A(i, j) = cplx(s[k], s[k + 1]);
      B(i, j) = cplx(s[k + 2], s[k + 3]);
      k += 4;
    }
  action = s[k];
}

struct CharacteristicRhs {
  const HamiltonianModel& model;
  double H0;

  void operator()(const State& s, State& ds, double) const {
    const int d = model.dim();
    Vec X;
    CMat A, B;
    double act;
    unpack(s, d, X, A, B, act);
    const Vec g = model.gradient(X);
    const Mat h = model.hessian(X);
    if (!g.allFinite() || !h.allFinite())
      throw ModelError(model.name() + ": non-finite derivative along trajectory");
    const Mat Hqq = h.topLeftCorner(d, d), Hqp = h.topRightCorner(d, d);
    const Mat Hpq = h.bottomLeftCorner(d, d), Hpp = h.bottomRightCorner(d, d);
    Vec dX(2 * d);
    dX.head(d) = g.tail(d);
    dX.tail(d) = -g.head(d);
    const CMat dA = Hpq.cast<cplx>() * A + Hpp.cast<cplx>() * B;
    const CMat dB = -Hqq.cast<cplx>() * A - Hqp.cast<cplx>() * B;
    const double dact = X.tail(d).dot(g.tail(d)) - H0;
    pack(dX, dA, dB, dact, ds);
  }
};

inline cplx det_increment(const CMat& Anew, cplx det_old, cplx& det_new) {
  det_new = Anew.determinant();
  if (det_new == cplx(0)) throw IntegrationError("det A vanished along trajectory");
  return std::log(det_new / det_old);
}

inline VariationalFrame frame_from_jacobian(const Mat& M, int d) {
  VariationalFrame f;
  f.A = M.topLeftCorner(d, d).cast<cplx>() + I1 * M.topRightCorner(d, d).cast<cplx>();
  f.B = M.bottomLeftCorner(d, d).cast<cplx>() + I1 * M.bottomRightCorner(d, d).cast<cplx>();
  return f;
}

// Threshold on |Im| of one log-det increment; larger jumps mean the sample
// spacing cannot resolve the phase of det A.
inline constexpr double max_branch_jump = pi / 2;

inline void check_jump(cplx inc, double t) {
  if (std::abs(inc.imag()) >= max_branch_jump) {
    std::ostringstream os;
    os << "log det A increment " << inc.imag() << " at t=" << t
       << " too large to track the branch; reduce the step";
    throw BranchError(os.str());
  }
}

}  // namespace detail

inline FrameState initial_state(const Vec& X0, int d) {
  FrameState s;
  s.t = 0;
  s.X = X0;
  s.frame.A = CMat::Identity(d, d);
  s.frame.B = I1 * CMat::Identity(d, d);
  s.action = 0;
  s.logdetA = 0;
  return s;
}

// Closed-form state at time t; the log det branch is continued from `prev`.
inline FrameState exact_state(const HamiltonianModel& m, const Vec& X0, double t,
                              const FrameState& prev) {
  const int d = m.dim();
  FrameState s;
  s.t = t;
  s.X = m.exact_flow(X0, t);
  s.frame = detail::frame_from_jacobian(m.exact_jacobian(X0, t), d);
  s.action = m.exact_action(X0, t);
  cplx det_new;
  const cplx inc = detail::det_increment(s.frame.A, prev.frame.A.determinant(), det_new);
  detail::check_jump(inc, t);
  s.logdetA = prev.logdetA + inc;
  return s;
}

// One fixed RK4 step of length h from `s`.
inline FrameState rk4_step(const HamiltonianModel& m, const FrameState& s, double h, double H0) {
  namespace ode = boost::numeric::odeint;
  const int d = m.dim();
  detail::State x;
  detail::pack(s.X, s.frame.A, s.frame.B, s.action, x);
  ode::runge_kutta4<detail::State> stepper;
  detail::CharacteristicRhs rhs{m, H0};
  stepper.do_step(rhs, x, s.t, h);
  FrameState n;
  n.t = s.t + h;
  detail::unpack(x, d, n.X, n.frame.A, n.frame.B, n.action);
  if (!n.X.allFinite()) throw IntegrationError("non-finite state at t=" + std::to_string(n.t));
  cplx det_new;
  const cplx inc = detail::det_increment(n.frame.A, s.frame.A.determinant(), det_new);
  detail::check_jump(inc, n.t);
  n.logdetA = s.logdetA + inc;
  return n;
}

// Time-sampled record of one characteristic. Immutable after construction.
class TrajectoryBundle {
 public:
  TrajectoryBundle() = default;
  TrajectoryBundle(ModelPtr model, FlowOptions opts, FlowMethod method)
      : model_(std::move(model)), opts_(opts), method_(method) {}

  const std::vector<FrameState>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  double final_time() const { return samples_.empty() ? 0.0 : samples_.back().t; }
  const HamiltonianModel& model() const { return *model_; }
  const FlowOptions& options() const { return opts_; }
  FlowMethod method() const { return method_; }
  const Vec& X0() const { return samples_.front().X; }

  std::vector<double> times() const {
    std::vector<double> r;
    for (const auto& s : samples_) r.push_back(s.t);
    return r;
  }

  // State at any t in [0, T]; off-sample times use a partial step from the
  // previous sample.
  FrameState at(double t) const {
    if (samples_.empty()) throw RangeError("empty trajectory bundle");
    const double T = final_time();
    if (t < 0 || t > T * (1 + 1e-14) + 1e-14) {
      std::ostringstream os;
      os << "t=" << t << " outside trajectory range [0, " << T << "]";
      throw RangeError(os.str());
    }
    t = std::min(t, T);
    auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                               [](double v, const FrameState& s) { return v < s.t; });
    const FrameState& base = *(it - 1);
    if (t == base.t) return base;
    if (method_ == FlowMethod::exact) return exact_state(*model_, X0(), t, base);
    const double H0 = model_->value(X0());
    FrameState s = base;
    const double hmax = std::max(opts_.step, 1e-12);
    while (s.t < t) {
      const double h = std::min(hmax, t - s.t);
      s = rk4_step(*model_, s, h, H0);
    }
    s.t = t;
    return s;
  }

  void push(FrameState s) { samples_.push_back(std::move(s)); }

 private:
  ModelPtr model_;
  FlowOptions opts_;
  FlowMethod method_ = FlowMethod::rk4;
  std::vector<FrameState> samples_;
};

inline TrajectoryBundle integrate_characteristics(const ModelPtr& model, const PhasePoint& X0p,
                                                  double T, const FlowOptions& opts = {}) {
  if (!model) throw ConfigError("null model");
  if (!(T >= 0) || !std::isfinite(T)) throw RangeError("integration time must be finite and >= 0");
  if (X0p.dim() != model->dim()) throw DomainError("initial point dimension differs from model");
  const FlowMethod method = opts.resolved(*model);
  const int d = model->dim();
  const Vec X0 = X0p.stacked();
  TrajectoryBundle b(model, opts, method);
  FrameState s = initial_state(X0, d);
  b.push(s);
  if (T == 0) return b;

  if (method == FlowMethod::exact || method == FlowMethod::rk4) {
    if (!(opts.step > 0)) throw ConfigError("flow.step must be positive");
    const long n = static_cast<long>(std::ceil(T / opts.step - 1e-12));
    const double h = T / static_cast<double>(n);
    const double H0 = model->value(X0);
    for (long k = 1; k <= n; ++k) {
      const double tk = (k == n) ? T : k * h;
      if (method == FlowMethod::exact) {
        s = exact_state(*model, X0, tk, s);
      } else {
        s = rk4_step(*model, s, tk - s.t, H0);
        s.t = tk;
      }
      b.push(s);
    }
    return b;
  }

  // Adaptive embedded pair (Dormand-Prince 5(4)), every accepted step recorded.
  namespace ode = boost::numeric::odeint;
  const double H0 = model->value(X0);
  detail::State x;
  detail::pack(s.X, s.frame.A, s.frame.B, s.action, x);
  detail::CharacteristicRhs rhs{*model, H0};
  auto stepper = ode::make_controlled<ode::runge_kutta_dopri5<detail::State>>(opts.atol, opts.rtol);
  FrameState last = s;
  auto observer = [&](const detail::State& xs, double t) {
    if (t == 0) return;
    FrameState n;
    n.t = t;
    detail::unpack(xs, d, n.X, n.frame.A, n.frame.B, n.action);
    if (!n.X.allFinite()) throw IntegrationError("non-finite state at t=" + std::to_string(t));
    cplx det_new;
    const cplx inc = detail::det_increment(n.frame.A, last.frame.A.determinant(), det_new);
    detail::check_jump(inc, t);
    n.logdetA = last.logdetA + inc;
    last = n;
    b.push(n);
  };
  try {
    ode::integrate_adaptive(stepper, rhs, x, 0.0, T, std::min(T, 1e-3), observer);
  } catch (const ode::step_adjustment_error& e) {
    std::ostringstream os;
    os << "adaptive step underflow; last valid time " << last.t << " (" << e.what() << ")";
    throw IntegrationError(os.str());
  }
  if (b.final_time() < T * (1 - 1e-12))
    throw IntegrationError("adaptive integration stopped early at t=" + std::to_string(b.final_time()));
  return b;
}

// State at time T without storing intermediate samples.
inline FrameState propagate_to(const HamiltonianModel& model, const Vec& X0, double T,
                               const FlowOptions& opts = {}) {
  if (!(T >= 0)) throw RangeError("integration time must be >= 0");
  const FlowMethod method = opts.resolved(model);
  const int d = model.dim();
  FrameState s = initial_state(X0, d);
  if (T == 0) return s;
  if (method == FlowMethod::exact) {
    const long n = std::max(1L, static_cast<long>(std::ceil(T / opts.exact_track_step - 1e-12)));
    for (long k = 1; k <= n; ++k) s = exact_state(model, X0, k == n ? T : T * k / n, s);
    return s;
  }
  if (method == FlowMethod::rk4) {
    const long n = static_cast<long>(std::ceil(T / opts.step - 1e-12));
    const double h = T / static_cast<double>(n);
    const double H0 = model.value(X0);
    for (long k = 1; k <= n; ++k) {
      const double tk = (k == n) ? T : k * h;
      s = rk4_step(model, s, tk - s.t, H0);
      s.t = tk;
    }
    return s;
  }
  // Non-owning alias; the bundle does not outlive this call.
  ModelPtr alias(std::shared_ptr<const HamiltonianModel>{}, &model);
  return integrate_characteristics(alias, PhasePoint::from_stacked(X0), T, opts).samples().back();
}

inline CMat anisotropy_Z(const VariationalFrame& f) {
  Eigen::PartialPivLU<CMat> lu(f.A);
  const double scale = f.A.cwiseAbs().maxCoeff();
  if (!(std::abs(lu.determinant()) > 1e-14 * std::pow(std::max(scale, 1.0), f.A.rows())))
    throw CausticError("variational form A is singular (integrator drift)", std::nan(""));
  // Z = B A^{-1}  <=>  A^T Z^T = B^T
  const CMat At = f.A.transpose();
  const CMat Zt = Eigen::PartialPivLU<CMat>(At).solve(CMat(f.B.transpose()));
  return Zt.transpose();
}

inline Mat flow_jacobian(const FrameState& s) {
  const int d = static_cast<int>(s.frame.A.rows());
  Mat M(2 * d, 2 * d);
  M.topLeftCorner(d, d) = s.frame.A.real();
  M.topRightCorner(d, d) = s.frame.A.imag();
  M.bottomLeftCorner(d, d) = s.frame.B.real();
  M.bottomRightCorner(d, d) = s.frame.B.imag();
  return M;
}

inline Mat flow_jacobian(const TrajectoryBundle& b, double t) { return flow_jacobian(b.at(t)); }

inline cplx amplitude_a(const FrameState& s) { return std::exp(-0.5 * s.logdetA); }
inline cplx amplitude_a(const TrajectoryBundle& b, double t) { return amplitude_a(b.at(t)); }

struct EhrenfestWarning {
  double t;
  double norm;
  std::string message;
};

// One warning per upward crossing of ||M||_2 > hbar^{-1/2}.
inline std::vector<EhrenfestWarning> ehrenfest_guard(const TrajectoryBundle& b) {
  std::vector<EhrenfestWarning> out;
  if (!b.options().hbar) return out;
  const double hbar = *b.options().hbar;
  if (!(hbar > 0)) throw ConfigError("hbar must be positive");
  const double limit = 1.0 / std::sqrt(hbar);
  bool above = false;
  for (const auto& s : b.samples()) {
    const double n = Eigen::JacobiSVD<Mat>(flow_jacobian(s)).singularValues()(0);
    if (n > limit && !above) {
      std::ostringstream os;
      os << "Ehrenfest guard: ||dg^t|| = " << n << " exceeds hbar^{-1/2} = " << limit
         << " at t = " << s.t;
      out.push_back({s.t, n, os.str()});
    }
    above = n > limit;
  }
  return out;
}

}  // namespace psprop
