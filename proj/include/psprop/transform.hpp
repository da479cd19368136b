#pragma once

#include "core.hpp"

#include <numeric>
#include <sstream>

namespace psprop {

struct Axis {
  double min = 0, max = 1;
  int n = 2;

  Axis() = default;
  Axis(double lo, double hi, int count) : min(lo), max(hi), n(count) { validate(); }

  double step() const { return (max - min) / (n - 1); }
  double at(int i) const { return i == n - 1 ? max : min + i * step(); }
  double weight(int i) const { return (i == 0 || i == n - 1) ? 0.5 * step() : step(); }

  void validate() const {
    if (n < 2) throw DomainError("axis needs n >= 2");
    if (!(max > min) || !std::isfinite(min) || !std::isfinite(max))
      throw DomainError("axis bounds must be finite and increasing");
  }
};

enum class FieldKind { position, phase };

// Samples on a rectangular grid, row-major with the last axis fastest.
// Phase fields order their axes q_1..q_d, p_1..p_d.
class ComplexField {
 public:
  ComplexField() = default;
  ComplexField(FieldKind kind, std::vector<Axis> axes, double hbar)
      : kind_(kind), axes_(std::move(axes)), hbar_(hbar) {
    if (!(hbar > 0)) throw DomainError("hbar must be positive");
    if (axes_.empty()) throw DomainError("field needs at least one axis");
    if (kind_ == FieldKind::phase && axes_.size() % 2 != 0)
      throw DomainError("phase field needs an even number of axes");
    std::size_t n = 1;
    for (const auto& a : axes_) {
      a.validate();
      n *= static_cast<std::size_t>(a.n);
    }
    values_.assign(n, cplx(0));
  }

  static ComplexField position(std::vector<Axis> axes, double hbar) {
    return ComplexField(FieldKind::position, std::move(axes), hbar);
  }
  static ComplexField phase(std::vector<Axis> axes, double hbar) {
    return ComplexField(FieldKind::phase, std::move(axes), hbar);
  }

  FieldKind kind() const { return kind_; }
  const std::vector<Axis>& axes() const { return axes_; }
  double hbar() const { return hbar_; }
  int ndim() const { return static_cast<int>(axes_.size()); }
  // Configuration-space dimension d.
  int dim() const { return kind_ == FieldKind::phase ? ndim() / 2 : ndim(); }
  std::size_t size() const { return values_.size(); }

  std::vector<cplx>& values() { return values_; }
  const std::vector<cplx>& values() const { return values_; }
  cplx& operator[](std::size_t i) { return values_[i]; }
  const cplx& operator[](std::size_t i) const { return values_[i]; }

  std::vector<int> multi_index(std::size_t flat) const {
    std::vector<int> idx(axes_.size());
    for (int k = ndim() - 1; k >= 0; --k) {
      idx[k] = static_cast<int>(flat % axes_[k].n);
      flat /= axes_[k].n;
    }
    return idx;
  }

  std::size_t flat_index(const std::vector<int>& idx) const {
    std::size_t f = 0;
    for (int k = 0; k < ndim(); ++k) f = f * axes_[k].n + idx[k];
    return f;
  }

  Vec point(std::size_t flat) const {
    const auto idx = multi_index(flat);
    Vec x(ndim());
    for (int k = 0; k < ndim(); ++k) x(k) = axes_[k].at(idx[k]);
    return x;
  }

  double weight(std::size_t flat) const {
    const auto idx = multi_index(flat);
    double w = 1;
    for (int k = 0; k < ndim(); ++k) w *= axes_[k].weight(idx[k]);
    return w;
  }

  bool on_boundary(std::size_t flat) const {
    const auto idx = multi_index(flat);
    for (int k = 0; k < ndim(); ++k)
      if (idx[k] == 0 || idx[k] == axes_[k].n - 1) return true;
    return false;
  }

  double max_abs() const {
    double m = 0;
    for (const auto& v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  double boundary_max_abs() const {
    double m = 0;
    for (std::size_t i = 0; i < size(); ++i)
      if (on_boundary(i)) m = std::max(m, std::abs(values_[i]));
    return m;
  }

  // Trapezoid L2 norm.
  double norm() const {
    double s = 0;
    for (std::size_t i = 0; i < size(); ++i) s += weight(i) * std::norm(values_[i]);
    return std::sqrt(s);
  }

  // Trapezoid <this, other>.
  cplx inner(const ComplexField& o) const {
    if (o.size() != size()) throw DomainError("inner product of fields on different grids");
    cplx s = 0;
    for (std::size_t i = 0; i < size(); ++i) s += weight(i) * std::conj(values_[i]) * o.values_[i];
    return s;
  }

  double min_step() const {
    double h = std::numeric_limits<double>::infinity();
    for (const auto& a : axes_) h = std::min(h, a.step());
    return h;
  }

  template <class F>
  void fill(F&& f) {
    for (std::size_t i = 0; i < size(); ++i) values_[i] = f(point(i));
  }

 private:
  FieldKind kind_ = FieldKind::position;
  std::vector<Axis> axes_;
  double hbar_ = 1;
  std::vector<cplx> values_;
};

struct RealField {
  std::vector<Axis> axes;
  std::vector<double> values;
};

struct TransformOptions {
  double boundary_tol = 1e-12;  // relative |psi| allowed on the boundary
  int threads = 1;
};

// G_{(q,p)}(x) = (pi hbar)^{-d/4} exp{(i/hbar)(p.q/2 + p.(x-q) + (i/2)|x-q|^2)}.
inline cplx gaussian_packet(const PhasePoint& c, double hbar, const Vec& x) {
  if (!(hbar > 0)) throw DomainError("hbar must be positive");
  const int d = c.dim();
  if (x.size() != d) throw DomainError("packet position has wrong dimension");
  const Vec dx = x - c.q;
  const double re = -0.5 * dx.squaredNorm() / hbar;
  const double im = (0.5 * c.p.dot(c.q) + c.p.dot(dx)) / hbar;
  return std::pow(pi * hbar, -0.25 * d) * std::exp(cplx(re, im));
}

inline cplx gaussian_packet(const PhasePoint& c, double hbar, double x) {
  return gaussian_packet(c, hbar, Vec::Constant(1, x));
}

// exp{(i/hbar)(X.JY/2 + (i/4)|X-Y|^2)}
inline cplx overlap(const PhasePoint& X, const PhasePoint& Y, double hbar) {
  if (!(hbar > 0)) throw DomainError("hbar must be positive");
  const Vec x = X.stacked(), y = Y.stacked();
  return std::exp(cplx(-0.25 * (x - y).squaredNorm(), 0.5 * symplectic_pair(x, y)) / hbar);
}

inline cplx bergmann_kernel(const PhasePoint& X, const PhasePoint& Y, double hbar) {
  return std::pow(2 * pi * hbar, -X.dim()) * overlap(X, Y, hbar);
}

namespace detail {

inline void check_boundary(const ComplexField& f, double tol, const char* what) {
  const double m = f.max_abs();
  if (m == 0) return;
  const double b = f.boundary_max_abs();
  if (b > tol * m) {
    double mass = 0, total = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double w = f.weight(i) * std::norm(f[i]);
      total += w;
      if (f.on_boundary(i)) mass += w;
    }
    std::ostringstream os;
    os << what << ": boundary |value| " << b / m << " of max exceeds " << tol
       << "; boundary mass fraction " << (total > 0 ? mass / total : 0.0);
    throw TruncationError(os.str());
  }
}

// Exponent below which Gaussian factors are dropped from quadrature sums.
inline constexpr double gauss_cut = 40.0;

}  // namespace detail

inline ComplexField make_phase_field(const std::vector<Axis>& q_axes, const std::vector<Axis>& p_axes,
                                     double hbar) {
  std::vector<Axis> ax = q_axes;
  ax.insert(ax.end(), p_axes.begin(), p_axes.end());
  return ComplexField::phase(ax, hbar);
}

// Psi(q,p) = (2 pi hbar)^{-d/2} int conj(G_{(q,p)}(x)) psi(x) dx, trapezoid in x.
inline ComplexField wave_packet_transform(const ComplexField& psi, const std::vector<Axis>& phase_axes,
                                          const TransformOptions& opt = {}, Diagnostics* diag = nullptr) {
  if (psi.kind() != FieldKind::position) throw DomainError("wave_packet_transform expects a position field");
  const int d = psi.dim();
  if (static_cast<int>(phase_axes.size()) != 2 * d)
    throw DomainError("phase grid must have 2d axes");
  const double hbar = psi.hbar();
  detail::check_boundary(psi, opt.boundary_tol, "wave_packet_transform");
  ComplexField out = ComplexField::phase(phase_axes, hbar);
  for (const auto& a : phase_axes)
    if (a.step() > std::sqrt(hbar) / 4)
      warn(diag, "phase grid spacing exceeds sqrt(hbar)/4; Heisenberg-scale oscillation under-resolved");

  const double pref = std::pow(2 * pi * hbar, -0.5 * d) * std::pow(pi * hbar, -0.25 * d);
  std::vector<Vec> xs(psi.size());
  std::vector<double> ws(psi.size());
  for (std::size_t k = 0; k < psi.size(); ++k) {
    xs[k] = psi.point(k);
    ws[k] = psi.weight(k);
  }
  const double cut = detail::gauss_cut * hbar;
  parallel_for(out.size(), opt.threads, [&](std::size_t i) {
    const Vec X = out.point(i);
    const Vec q = X.head(d), p = X.tail(d);
    const double pq = 0.5 * p.dot(q);
    cplx s = 0;
    for (std::size_t k = 0; k < psi.size(); ++k) {
      const double r2 = (xs[k] - q).squaredNorm();
      if (0.5 * r2 > cut || psi[k] == cplx(0)) continue;
      const double ph = -(pq + p.dot(xs[k] - q)) / hbar;
      s += ws[k] * std::exp(cplx(-0.5 * r2 / hbar, ph)) * psi[k];
    }
    out[i] = pref * s;
  });
  return out;
}

// psi(x) = (2 pi hbar)^{-d/2} int Psi(q,p) G_{(q,p)}(x) dq dp.
inline ComplexField inverse_transform(const ComplexField& Psi, const std::vector<Axis>& position_axes,
                                      const TransformOptions& opt = {}, double boundary_tol = 1e-10) {
  if (Psi.kind() != FieldKind::phase) throw DomainError("inverse_transform expects a phase field");
  const int d = Psi.dim();
  if (static_cast<int>(position_axes.size()) != d) throw DomainError("position grid must have d axes");
  const double hbar = Psi.hbar();
  detail::check_boundary(Psi, boundary_tol, "inverse_transform");
  ComplexField out = ComplexField::position(position_axes, hbar);
  const double pref = std::pow(2 * pi * hbar, -0.5 * d) * std::pow(pi * hbar, -0.25 * d);
  std::vector<Vec> Xs(Psi.size());
  std::vector<double> ws(Psi.size());
  for (std::size_t k = 0; k < Psi.size(); ++k) {
    Xs[k] = Psi.point(k);
    ws[k] = Psi.weight(k);
  }
  const double cut = detail::gauss_cut * hbar;
  parallel_for(out.size(), opt.threads, [&](std::size_t i) {
    const Vec x = out.point(i);
    cplx s = 0;
    for (std::size_t k = 0; k < Psi.size(); ++k) {
      if (Psi[k] == cplx(0)) continue;
      const Vec q = Xs[k].head(d), p = Xs[k].tail(d);
      const double r2 = (x - q).squaredNorm();
      if (0.5 * r2 > cut) continue;
      const double ph = (0.5 * p.dot(q) + p.dot(x - q)) / hbar;
      s += ws[k] * std::exp(cplx(-0.5 * r2 / hbar, ph)) * Psi[k];
    }
    out[i] = pref * s;
  });
  return out;
}

// max over interior of |((q/2 - i hbar d_p) - i(p/2 + i hbar d_q)) Psi| / max|Psi|,
// maximised over coordinate pairs j.
inline double fock_bargmann_residual(const ComplexField& Psi) {
  if (Psi.kind() != FieldKind::phase) throw DomainError("Fock-Bargmann residual needs a phase field");
  const int d = Psi.dim();
  const double hbar = Psi.hbar();
  const double m = Psi.max_abs();
  if (m == 0) return 0;
  double r = 0;
  for (std::size_t i = 0; i < Psi.size(); ++i) {
    if (Psi.on_boundary(i)) continue;
    const auto idx = Psi.multi_index(i);
    const Vec X = Psi.point(i);
    for (int j = 0; j < d; ++j) {
      auto nb = [&](int axis, int off) {
        auto k = idx;
        k[axis] += off;
        return Psi[Psi.flat_index(k)];
      };
      const double hq = Psi.axes()[j].step(), hp = Psi.axes()[d + j].step();
      const cplx dq = (nb(j, 1) - nb(j, -1)) / (2 * hq);
      const cplx dp = (nb(d + j, 1) - nb(d + j, -1)) / (2 * hp);
      const cplx v = (0.5 * X(j) * Psi[i] - I1 * hbar * dp) - I1 * (0.5 * X(d + j) * Psi[i] + I1 * hbar * dq);
      r = std::max(r, std::abs(v));
    }
  }
  return r / m;
}

struct HusimiResult {
  RealField husimi;           // |W psi|^2 on the phase grid
  RealField convolved_wigner; // g * W on the same grid
  double max_diff = 0;        // absolute
  double max_rel_diff = 0;    // relative to peak husimi
};

// Wigner function W(q,p) = (2 pi hbar)^{-1} int e^{ipx/hbar} psi(q - x/2) conj(psi(q + x/2)) dx
// on nodes q of the psi grid, and its convolution with
// g = (pi hbar)^{-1} exp(-(q^2 + p^2)/hbar). d = 1 only.
inline HusimiResult husimi_check(const ComplexField& psi, const std::vector<Axis>& phase_axes,
                                 const TransformOptions& opt = {}) {
  if (psi.kind() != FieldKind::position || psi.dim() != 1)
    throw DomainError("husimi_check is implemented for d = 1 position fields");
  if (phase_axes.size() != 2) throw DomainError("husimi_check needs (q, p) axes");
  const double hbar = psi.hbar();
  const Axis& xa = psi.axes()[0];
  const Axis& qa = phase_axes[0];
  const Axis& pa = phase_axes[1];
  const double pad = 8 * std::sqrt(hbar);
  if (xa.min > qa.min - pad || xa.max < qa.max + pad)
    throw TruncationError("husimi_check: position grid must cover the phase q-range padded by 8 sqrt(hbar)");

  const ComplexField Psi = wave_packet_transform(psi, phase_axes, opt);

  const double dx = xa.step();
  std::vector<int> qnodes;
  for (int i = 0; i < xa.n; ++i) {
    const double x = xa.at(i);
    if (x >= qa.min - pad && x <= qa.max + pad) qnodes.push_back(i);
  }
  const double dpw = std::min(pa.step(), std::sqrt(hbar) / 6);
  const double plo = pa.min - pad, phi = pa.max + pad;
  const int np = static_cast<int>(std::ceil((phi - plo) / dpw)) + 1;
  const Axis pw(plo, phi, np);

  const double psimax = psi.max_abs();
  std::vector<double> W(qnodes.size() * np, 0.0);
  parallel_for(qnodes.size(), opt.threads, [&](std::size_t a) {
    const int i = qnodes[a];
    const int kmax = std::min(i, xa.n - 1 - i);
    std::vector<cplx> f;
    std::vector<double> s;
    for (int k = 0; k <= kmax; ++k) {
      const cplx v = psi[i - k] * std::conj(psi[i + k]);
      if (std::abs(v) < 1e-20 * psimax * psimax) continue;
      f.push_back(k == 0 ? v : 2.0 * v);
      s.push_back(k * dx);
    }
    for (int j = 0; j < np; ++j) {
      const double p = pw.at(j);
      double acc = 0;
      for (std::size_t m = 0; m < f.size(); ++m)
        acc += (std::exp(cplx(0, 2 * p * s[m] / hbar)) * f[m]).real();
      W[a * np + j] = acc * dx / (pi * hbar);
    }
  });

  // Separable Gaussian convolution: first along p, then along q.
  std::vector<double> T(qnodes.size() * pa.n, 0.0);
  for (std::size_t a = 0; a < qnodes.size(); ++a)
    for (int j = 0; j < pa.n; ++j) {
      const double p = pa.at(j);
      double acc = 0;
      for (int m = 0; m < np; ++m) {
        const double dp = p - pw.at(m);
        acc += pw.weight(m) * std::exp(-dp * dp / hbar) * W[a * np + m];
      }
      T[a * pa.n + j] = acc;
    }

  HusimiResult r;
  r.husimi.axes = phase_axes;
  r.convolved_wigner.axes = phase_axes;
  r.husimi.values.resize(Psi.size());
  r.convolved_wigner.values.resize(Psi.size());
  double peak = 0;
  for (int iq = 0; iq < qa.n; ++iq) {
    const double q = qa.at(iq);
    for (int j = 0; j < pa.n; ++j) {
      double acc = 0;
      for (std::size_t a = 0; a < qnodes.size(); ++a) {
        const double dq = q - xa.at(qnodes[a]);
        // Trapezoid weight of the interior psi grid; the q'-range is truncated
        // where the Gaussian is already below 1e-27.
        acc += dx * std::exp(-dq * dq / hbar) * T[a * pa.n + j];
      }
      const std::size_t flat = static_cast<std::size_t>(iq) * pa.n + j;
      r.convolved_wigner.values[flat] = acc / (pi * hbar);
      r.husimi.values[flat] = std::norm(Psi[flat]);
      peak = std::max(peak, r.husimi.values[flat]);
    }
  }
  for (std::size_t k = 0; k < r.husimi.values.size(); ++k)
    r.max_diff = std::max(r.max_diff, std::abs(r.husimi.values[k] - r.convolved_wigner.values[k]));
  r.max_rel_diff = peak > 0 ? r.max_diff / peak : 0;
  return r;
}

}  // namespace psprop
