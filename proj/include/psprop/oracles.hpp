#pragma once

#include "models.hpp"

#include <array>

namespace psprop::oracles {

// Which form of a closed-form display to evaluate. `verbatim` is the literal
// transcription; `adopted` applies a token-level typo correction where one is
// registered in deviations() and equals `verbatim` otherwise.
enum class Reading { verbatim, adopted };

inline constexpr double a0_real = 1.0;  // initial data exponent is (1 + i hbar) x^2 / 2 hbar

// ---------------------------------------------------------------------------
// Closed-form displays for the three quadratic examples, d = 1.

// Initial phase-space state, common to all models.
inline cplx initial_phase_state(double q, double p, double hbar, Reading reading = Reading::adopted) {
  const cplx den = cplx(1, -1) + hbar;
  const double pq = reading == Reading::verbatim ? p * q : -p * q;
  return std::pow(hbar, -0.25) * std::sqrt(1.0 / (pi * den)) * std::exp(-cplx(q * q, pq) / (2 * hbar)) *
         std::exp((cplx(q, -p) * cplx(q, -p)) / (2 * hbar * den));
}

inline cplx initial_position_state(double x, double hbar) {
  return std::pow(pi, -0.25) * std::exp(-0.5 * x * x) * std::exp(I1 * x * x / (2 * hbar));
}

// Exact phase-space solution. `continued` is set when the cot form is
// singular and the algebraically simplified form was used.
inline cplx exact_phase_solution(BuiltinKind kind, double q, double p, double t, double hbar,
                                 Reading reading = Reading::adopted, bool* continued = nullptr) {
  if (!(hbar > 0)) throw DomainError("hbar must be positive");
  if (continued) *continued = false;
  const cplx i = I1;
  const double h = hbar;
  const cplx w = cplx(q, -p);  // q - i p
  switch (kind) {
    case BuiltinKind::free: {
      const cplx pre_den = reading == Reading::verbatim ? cplx(1, -1) + h * (1.0 + 2.0 * i * t)
                                                        : cplx(1, -1) + 2 * t + h * (1.0 + 2.0 * i * t);
      const cplx num = w * ((i - h) * q - i * (1.0 + 2.0 * (1.0 + i * h) * t) * p);
      const cplx den = 1.0 + i + 2.0 * i * t + h * (i - 2 * t);
      return std::pow(h, -0.25) * std::sqrt(1.0 / (pi * pre_den)) * std::exp(i / (2 * h) * num / den);
    }
    case BuiltinKind::linear: {
      const cplx D = cplx(1, -1) + 2 * t + (1.0 + 2.0 * i * t) * h;
      const cplx poly = 3.0 * (i * p * p - (1.0 + i) * p * q + h * p * q + q * q + i * h * q * q) -
                        6.0 * (-i * p - i * p * p + h * p * p + q + p * q + i * h * p * q) * t +
                        3.0 * (i + 2.0 * i * p - 2 * h * p - 2 * q - 2.0 * i * h * q) * t * t +
                        2.0 * (-1.0 + i - h) * t * t * t - (1.0 + i * h) * t * t * t * t;
      return std::pow(h, -0.25) * std::sqrt(1.0 / (pi * D)) * std::exp(i / (6 * h * D) * poly);
    }
    case BuiltinKind::harmonic: {
      const cplx lead = std::exp(-i * t) / (std::sqrt(pi) * std::pow(h, 0.25) * std::sqrt(cplx(1, -1) + h));
      const double hq = reading == Reading::verbatim ? p : q;  // the i hbar (.) slot of the cot coefficient
      const cplx c0 = -(1.0 + i * h) * p - q;
      const cplx c1 = -p + q + i * h * hq;
      const double s2 = std::sin(2 * t), cs2 = std::cos(2 * t);
      cplx ratio;
      if (std::abs(s2) < 1e-12) {
        // cot 2t singular: multiply numerator and denominator by sin 2t.
        if (continued) *continued = true;
        ratio = w * (c0 * s2 + c1 * cs2) / ((cplx(1, -1) + h) * (i * s2 + cs2));
      } else {
        const double cot = cs2 / s2;
        ratio = w * (c0 + c1 * cot) / ((cplx(1, -1) + h) * (i + cot));
      }
      return lead * std::exp(i / (2 * h) * ratio);
    }
  }
  throw InternalError("unreachable");
}

// log D with arg D taken on the branch nearest to `guide`. For D = cos 2t + (1 + i hbar) sin 2t
// the argument winds by 2 pi per period pi and stays within 3 pi / 4 of 2t, so this is the
// branch continuous in t from t = 0.
inline cplx log_continued(cplx D, double guide) {
  const double ap = std::arg(D);
  return {std::log(std::abs(D)), ap + 2 * pi * std::round((guide - ap) / (2 * pi))};
}

// Exact position-space solution displays; square roots continued in t from t = 0.
inline cplx exact_position_solution(BuiltinKind kind, double x, double t, double hbar) {
  const cplx i = I1;
  const cplx a0 = 1.0 + i * hbar;
  switch (kind) {
    case BuiltinKind::free: {
      const cplx D = 1.0 + 2.0 * a0 * t;
      return std::pow(pi, -0.25) * std::sqrt(1.0 / D) * std::exp(i / (2 * hbar) * (a0 / D * x * x));
    }
    case BuiltinKind::linear: {
      const cplx D = 1.0 + 2.0 * a0 * t;
      const double u = t * t + x;
      return std::pow(pi, -0.25) * std::sqrt(1.0 / D) *
             std::exp(i / hbar * (0.5 * u * u / D - t * t * t / 3 - t * x)) * std::exp(-0.5 * u * u / D);
    }
    case BuiltinKind::harmonic: {
      const double c = std::cos(2 * t), s = std::sin(2 * t);
      // Where cot 2t is infinite the exponent is taken in its sin-multiplied form.
      const cplx a = std::abs(s) < 1e-12 ? (a0 * c - s) / (a0 * s + c) : (-1.0 + a0 * (c / s)) / (a0 + c / s);
      const cplx D = c + a0 * s;
      return std::pow(pi, -0.25) * std::exp(-0.5 * log_continued(D, 2 * t)) * std::exp(i / (2 * hbar) * (a * x * x));
    }
  }
  throw InternalError("unreachable");
}

// Phase-space kernel displays.
inline cplx exact_kernel(BuiltinKind kind, double q, double p, double eta, double xi, double t, double hbar,
                         Reading reading = Reading::adopted) {
  const cplx i = I1;
  const double h = hbar;
  auto qform = [&](double v1, double v2) {
    return i / (4.0 * (1.0 + i * t)) * (v1 * v1 - 2 * t * v1 * v2 + (1.0 + 2.0 * i * t) * v2 * v2);
  };
  const cplx pre = 1.0 / (2 * pi * h);
  switch (kind) {
    case BuiltinKind::free: {
      const double lin = reading == Reading::verbatim ? 0.5 * (q * eta - p * xi) - t * q * xi
                                                      : 0.5 * (q * xi - p * eta) - t * p * xi;
      return pre * std::sqrt(1.0 / (1.0 + i * t)) * std::exp(i / h * (lin + qform(q - eta - 2 * t * xi, p - xi)));
    }
    case BuiltinKind::linear: {
      const double lin = 2.0 / 3.0 * t * t * t - 2 * t * t * xi + t * (xi * xi - eta);
      return pre * std::sqrt(1.0 / (1.0 + i * t)) *
             std::exp(i / h * (lin + qform(q - eta - 2 * t * xi + t * t, p - xi + t)));
    }
    case BuiltinKind::harmonic: {
      const double c = std::cos(2 * t), s = std::sin(2 * t);
      const double lin = 0.25 * (xi * xi - eta * eta) * std::sin(4 * t) + 0.5 * xi * eta * (std::cos(4 * t) - 1) +
                         0.5 * xi * eta * (c * c - s * s) + 0.5 * (xi * xi - eta * eta) * c * s +
                         0.5 * q * (xi * c - eta * s) - 0.5 * p * (eta * c + xi * s);
      return pre * std::exp(-i * t) *
             std::exp(i / h * (lin + qform(q - eta * c - xi * s, p - xi * c + eta * s)));
    }
  }
  throw InternalError("unreachable");
}

struct ManifoldLine {
  double slope, offset;
};

inline ManifoldLine exact_manifold(BuiltinKind kind, double t) {
  switch (kind) {
    case BuiltinKind::free: return {1 / (1 + 2 * t), 0.0};
    case BuiltinKind::linear: return {1 / (1 + 2 * t), -t * (t + 1) / (1 + 2 * t)};
    case BuiltinKind::harmonic: {
      const double den = std::cos(2 * t) + std::sin(2 * t);
      return {std::cos(4 * t) / (den * den), 0.0};
    }
  }
  throw InternalError("unreachable");
}

// Denominator of the harmonic slope; zero where the manifold is vertical.
inline double harmonic_slope_denominator(double t) {
  const double den = std::cos(2 * t) + std::sin(2 * t);
  return den * den;
}

// Vertical-tangent times as stated alongside the harmonic manifold display.
inline double stated_vertical_time(int n) { return pi / 2 * (n - 1.0 / 8.0); }

inline double exact_transported_phase(BuiltinKind kind, double x, double t) {
  switch (kind) {
    case BuiltinKind::free: return 0.5 * x * x / (1 + 2 * t);
    case BuiltinKind::linear:
      return (x * x - 2 * t * (1 + t) * x - (2 + t) * t * t * t / 3) / (2 * (1 + 2 * t));
    case BuiltinKind::harmonic: {
      const double den = std::cos(2 * t) + std::sin(2 * t);
      return 0.5 * std::cos(4 * t) / (den * den) * x * x;
    }
  }
  throw InternalError("unreachable");
}

// Anisotropy forms stated as common to all sub-quadratic examples.
inline cplx stated_Z(double t) { return I1 / (1.0 + 2.0 * I1 * t); }

inline CMat stated_Q(double t) {
  const cplx f = I1 / (2.0 * (1.0 + I1 * t));
  CMat Q(2, 2);
  Q << f, -f * t, -f * t, f * (1.0 + 2.0 * I1 * t);
  return Q;
}

// Free propagator and oscillator propagator (position space).
inline cplx free_propagator(double x, double y, double t, double hbar) {
  return 1.0 / std::sqrt(4.0 * pi * I1 * hbar * t) * std::exp(I1 * (x - y) * (x - y) / (4 * hbar * t));
}

inline cplx oscillator_propagator(double x, double y, double t, double hbar) {
  const double s = std::sin(2 * t), c = std::cos(2 * t);
  return std::sqrt(1.0 / (2.0 * pi * I1 * hbar * s)) *
         std::exp(I1 / (2 * hbar) * (((x * x + y * y) * c - 2 * x * y) / s));
}

// ---------------------------------------------------------------------------
// Independent reference: the Gaussian psi(x,t) = exp(L + (i/hbar)(a x^2/2 + b x))
// solving i hbar psi_t = -hbar^2 psi_xx + V psi in closed form.

struct GaussianState {
  cplx a, b, L;
};

inline GaussianState reference_state(BuiltinKind kind, double t, double hbar) {
  const cplx i = I1;
  const cplx a0 = 1.0 + i * hbar;
  const double lpi = -0.25 * std::log(pi);
  switch (kind) {
    case BuiltinKind::free: {
      const cplx u = 1.0 + 2.0 * a0 * t;
      return {a0 / u, 0.0, lpi - 0.5 * std::log(u)};
    }
    case BuiltinKind::linear: {
      const cplx u = 1.0 + 2.0 * a0 * t;
      return {a0 / u, -t * (1.0 + a0 * t) / u,
              lpi - 0.5 * std::log(u) - i * (a0 * t * t * t * t + 2 * t * t * t) / (6.0 * u * hbar)};
    }
    case BuiltinKind::harmonic: {
      const cplx D = std::cos(2 * t) + a0 * std::sin(2 * t);
      return {(a0 * std::cos(2 * t) - std::sin(2 * t)) / D, 0.0, lpi - 0.5 * log_continued(D, 2 * t)};
    }
  }
  throw InternalError("unreachable");
}

inline cplx reference_position(BuiltinKind kind, double x, double t, double hbar) {
  const GaussianState g = reference_state(kind, t, hbar);
  return std::exp(g.L + I1 / hbar * (0.5 * g.a * x * x + g.b * x));
}

// Wave packet transform of the reference Gaussian by the closed-form integral.
inline cplx reference_phase(BuiltinKind kind, double q, double p, double t, double hbar) {
  const GaussianState g = reference_state(kind, t, hbar);
  const cplx A = (1.0 - I1 * g.a) / hbar;
  const cplx Bv = (q - I1 * p + I1 * g.b) / hbar;
  return std::pow(2 * pi * hbar, -0.5) * std::pow(pi * hbar, -0.25) * std::sqrt(2 * pi / A) *
         std::exp(Bv * Bv / (2.0 * A) + cplx(-0.5 * q * q, 0.5 * p * q) / hbar + g.L);
}

// ---------------------------------------------------------------------------
// Registry of display discrepancies found by numerical cross-validation.

struct Deviation {
  std::string id;
  std::string display;
  std::string model;
  std::string issue;
  std::string adopted_reading;  // empty when no token-level reading exists
  std::string status;           // "adopted-reading" or "unresolved"
};

inline std::vector<Deviation> deviations() {
  return {
      {"initial-phase-state-pq-sign", "initial phase-space state", "any",
       "factor e^{-(q^2+ipq)/2hbar} has the wrong sign on ipq for the transform convention in use; disagrees with "
       "the t=0 restriction of every exact phase-space solution whenever pq != 0",
       "e^{-(q^2-ipq)/2hbar}", "adopted-reading"},
      {"free-phase-solution-prefactor", "exact phase-space solution", "free",
       "prefactor denominator 1-i+hbar(1+2it) lacks the 2t term; does not equal the transform of the exact psi(x,t)",
       "1-i+2t+hbar(1+2it)", "adopted-reading"},
      {"harmonic-phase-solution-cot-coefficient", "exact phase-space solution", "harmonic",
       "cot coefficient (-p+q+i hbar p) does not reproduce the transform of the exact psi(x,t)",
       "(-p+q+i hbar q)", "adopted-reading"},
      {"free-kernel-linear-phase", "semiclassical kernel", "free",
       "linear phase (q eta - p xi)/2 - t q xi has eta/xi and q/p swapped relative to the kernel definition",
       "(q xi - p eta)/2 - t p xi", "adopted-reading"},
      {"linear-kernel-boundary-terms", "semiclassical kernel", "linear",
       "omits (xi eta - xi_t eta_t)/2 + (q xi_t - p eta_t)/2; the display is not the kernel of the stated flow",
       "", "unresolved"},
      {"harmonic-kernel-form", "semiclassical kernel", "harmonic",
       "uses the free-motion quadratic form i/(4(1+it))[[1,-t],[-t,1+2it]] although Z(t)=i and Q=(i/2)I for this "
       "flow; linear part differs in sign and terms. The e^{-it} prefactor is correct",
       "", "unresolved"},
      {"riccati-uniform-Z", "anisotropy form Z(t)=i/(1+2it)", "harmonic",
       "holds only when H_qq=0; for H=p^2+q^2 the variational system gives A=e^{2it}, B=i e^{2it}, Z=i", "",
       "unresolved"},
      {"harmonic-vertical-time", "vertical tangent of Lambda_t", "harmonic",
       "slope cos4t/(cos2t+sin2t)^2 has its pole at t=(pi/2)(n-1/4), not (pi/2)(n-1/8)", "", "unresolved"},
      {"on-manifold-hessian-determinant", "asymptotic solution on Lambda_t", "any",
       "complex stationary phase over the 2d base variables yields det(-i F''), i.e. (-1)^d det F''; the literal "
       "det F'' is off by a factor i^d and breaks agreement with the lifted data at t=0",
       "det(-i F'')", "adopted-reading"},
  };
}

}  // namespace psprop::oracles
