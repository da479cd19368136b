#pragma once

#include "core.hpp"

#include <array>
#include <memory>
#include <string>

namespace psprop {

// H(X) with X = (q, p) stacked, length 2d. Convention H = |p|^2 + V(q).
class HamiltonianModel {
 public:
  explicit HamiltonianModel(int d) : d_(d) {
    if (d < 1) throw ConfigError("model dimension must be >= 1");
  }
  virtual ~HamiltonianModel() = default;

  int dim() const { return d_; }
  virtual std::string name() const = 0;

  virtual double value(const Vec& X) const = 0;
  virtual Vec gradient(const Vec& X) const = 0;  // (dH/dq, dH/dp)
  virtual Mat hessian(const Vec& X) const = 0;   // [[Hqq, Hqp], [Hpq, Hpp]]

  virtual bool has_exact_flow() const { return false; }
  virtual Vec exact_flow(const Vec&, double) const { throw ModelError(name() + ": no exact flow"); }
  virtual Mat exact_jacobian(const Vec&, double) const {
    throw ModelError(name() + ": no exact flow");
  }
  virtual double exact_action(const Vec&, double) const {
    throw ModelError(name() + ": no exact flow");
  }

  // True when the Hessian does not depend on X.
  virtual bool is_quadratic() const { return false; }

 protected:
  void check_size(const Vec& X) const {
    if (X.size() != 2 * d_) throw DomainError(name() + ": phase point has wrong dimension");
  }

 private:
  int d_;
};

using ModelPtr = std::shared_ptr<const HamiltonianModel>;

enum class BuiltinKind { free, linear, harmonic };

inline BuiltinKind parse_builtin_kind(const std::string& s) {
  if (s == "free") return BuiltinKind::free;
  if (s == "linear") return BuiltinKind::linear;
  if (s == "harmonic") return BuiltinKind::harmonic;
  throw ConfigError("unknown model kind '" + s + "' (expected free, linear, harmonic)");
}

inline std::string to_string(BuiltinKind k) {
  switch (k) {
    case BuiltinKind::free: return "free";
    case BuiltinKind::linear: return "linear";
    case BuiltinKind::harmonic: return "harmonic";
  }
  return "?";
}

// Coordinate-wise sum: H = sum_j p_j^2 + V(q_j) with V = 0, q, q^2.
class BuiltinModel final : public HamiltonianModel {
 public:
  BuiltinModel(BuiltinKind kind, int d) : HamiltonianModel(d), kind_(kind) {}

  BuiltinKind kind() const { return kind_; }
  std::string name() const override { return to_string(kind_); }
  bool has_exact_flow() const override { return true; }
  bool is_quadratic() const override { return true; }

  double value(const Vec& X) const override {
    check_size(X);
    const int d = dim();
    double h = 0;
    for (int j = 0; j < d; ++j) h += X(d + j) * X(d + j) + V(X(j));
    return h;
  }

  Vec gradient(const Vec& X) const override {
    check_size(X);
    const int d = dim();
    Vec g(2 * d);
    for (int j = 0; j < d; ++j) {
      g(j) = dV(X(j));
      g(d + j) = 2 * X(d + j);
    }
    return g;
  }

  Mat hessian(const Vec& X) const override {
    check_size(X);
    const int d = dim();
    Mat h = Mat::Zero(2 * d, 2 * d);
    for (int j = 0; j < d; ++j) {
      h(j, j) = kind_ == BuiltinKind::harmonic ? 2.0 : 0.0;
      h(d + j, d + j) = 2.0;
    }
    return h;
  }

  Vec exact_flow(const Vec& X, double t) const override {
    check_size(X);
    const int d = dim();
    Vec Y(2 * d);
    for (int j = 0; j < d; ++j) {
      const double q = X(j), p = X(d + j);
      switch (kind_) {
        case BuiltinKind::free:
          Y(j) = q + 2 * t * p;
          Y(d + j) = p;
          break;
        case BuiltinKind::linear:
          Y(j) = q + 2 * t * p - t * t;
          Y(d + j) = p - t;
          break;
        case BuiltinKind::harmonic: {
          const double c = std::cos(2 * t), s = std::sin(2 * t);
          Y(j) = c * q + s * p;
          Y(d + j) = -s * q + c * p;
          break;
        }
      }
    }
    return Y;
  }

  Mat exact_jacobian(const Vec& X, double t) const override {
    check_size(X);
    const int d = dim();
    Mat M = Mat::Zero(2 * d, 2 * d);
    double a = 1, b = 2 * t, c = 0, e = 1;
    if (kind_ == BuiltinKind::harmonic) {
      a = std::cos(2 * t);
      b = std::sin(2 * t);
      c = -b;
      e = a;
    }
    for (int j = 0; j < d; ++j) {
      M(j, j) = a;
      M(j, d + j) = b;
      M(d + j, j) = c;
      M(d + j, d + j) = e;
    }
    return M;
  }

  double exact_action(const Vec& X, double t) const override {
    check_size(X);
    const int d = dim();
    double a = 0;
    for (int j = 0; j < d; ++j) {
      const double q = X(j), p = X(d + j);
      switch (kind_) {
        case BuiltinKind::free: a += p * p * t; break;
        case BuiltinKind::linear:
          a += (p * p - q) * t - 2 * p * t * t + 2.0 / 3.0 * t * t * t;
          break;
        case BuiltinKind::harmonic:
          a += 0.25 * (p * p - q * q) * std::sin(4 * t) + 0.5 * p * q * (std::cos(4 * t) - 1);
          break;
      }
    }
    return a;
  }

 private:
  double V(double q) const {
    switch (kind_) {
      case BuiltinKind::free: return 0;
      case BuiltinKind::linear: return q;
      case BuiltinKind::harmonic: return q * q;
    }
    return 0;
  }
  double dV(double q) const {
    switch (kind_) {
      case BuiltinKind::free: return 0;
      case BuiltinKind::linear: return 1;
      case BuiltinKind::harmonic: return 2 * q;
    }
    return 0;
  }

  BuiltinKind kind_;
};

inline ModelPtr builtin_model(BuiltinKind kind, int d = 1) {
  return std::make_shared<BuiltinModel>(kind, d);
}

inline ModelPtr builtin_model(const std::string& kind, int d = 1) {
  return builtin_model(parse_builtin_kind(kind), d);
}

// One term c * q^i * p^j.
struct Monomial {
  int i = 0, j = 0;
  double c = 0;
};

// H(q, p) = sum c_ij q^i p^j with i + j <= 4, d = 1.
class PolynomialModel final : public HamiltonianModel {
 public:
  static constexpr int max_degree = 4;

  explicit PolynomialModel(const std::vector<Monomial>& terms) : HamiltonianModel(1) {
    for (auto& row : c_) row.fill(0.0);
    for (const auto& m : terms) {
      if (m.i < 0 || m.j < 0) throw ConfigError("polynomial model: negative exponent");
      if (m.i + m.j > max_degree)
        throw ConfigError("polynomial model: total degree " + std::to_string(m.i + m.j) +
                          " exceeds 4");
      if (!std::isfinite(m.c)) throw ConfigError("polynomial model: non-finite coefficient");
      c_[m.i][m.j] += m.c;
    }
    quadratic_ = true;
    for (int i = 0; i <= max_degree; ++i)
      for (int j = 0; i + j <= max_degree; ++j)
        if (i + j > 2 && c_[i][j] != 0) quadratic_ = false;
  }

  std::string name() const override { return "polynomial"; }
  bool is_quadratic() const override { return quadratic_; }

  double coeff(int i, int j) const { return c_[i][j]; }

  double value(const Vec& X) const override {
    check_size(X);
    return eval(X(0), X(1), 0, 0);
  }

  Vec gradient(const Vec& X) const override {
    check_size(X);
    Vec g(2);
    g << eval(X(0), X(1), 1, 0), eval(X(0), X(1), 0, 1);
    return g;
  }

  Mat hessian(const Vec& X) const override {
    check_size(X);
    const double q = X(0), p = X(1);
    Mat h(2, 2);
    h(0, 0) = eval(q, p, 2, 0);
    h(0, 1) = h(1, 0) = eval(q, p, 1, 1);
    h(1, 1) = eval(q, p, 0, 2);
    return h;
  }

 private:
  // d^a/dq^a d^b/dp^b of the polynomial.
  double eval(double q, double p, int a, int b) const {
    double s = 0;
    for (int i = a; i <= max_degree; ++i)
      for (int j = b; i + j <= max_degree; ++j) {
        if (c_[i][j] == 0) continue;
        s += c_[i][j] * falling(i, a) * falling(j, b) * ipow(q, i - a) * ipow(p, j - b);
      }
    return s;
  }
  static double falling(int n, int k) {
    double r = 1;
    for (int m = 0; m < k; ++m) r *= n - m;
    return r;
  }
  static double ipow(double x, int n) {
    double r = 1;
    for (int m = 0; m < n; ++m) r *= x;
    return r;
  }

  std::array<std::array<double, max_degree + 1>, max_degree + 1> c_{};
  bool quadratic_ = false;
};

inline ModelPtr polynomial_model(const std::vector<Monomial>& terms) {
  return std::make_shared<PolynomialModel>(terms);
}

// Flow of -H: running it forward for time t runs the original flow backward.
class ReversedModel final : public HamiltonianModel {
 public:
  explicit ReversedModel(ModelPtr base) : HamiltonianModel(base->dim()), base_(std::move(base)) {}

  std::string name() const override { return "reversed " + base_->name(); }
  bool has_exact_flow() const override { return base_->has_exact_flow(); }
  bool is_quadratic() const override { return base_->is_quadratic(); }

  double value(const Vec& X) const override { return -base_->value(X); }
  Vec gradient(const Vec& X) const override { return -base_->gradient(X); }
  Mat hessian(const Vec& X) const override { return -base_->hessian(X); }
  Vec exact_flow(const Vec& X, double t) const override { return base_->exact_flow(X, -t); }
  Mat exact_jacobian(const Vec& X, double t) const override { return base_->exact_jacobian(X, -t); }
  double exact_action(const Vec& X, double t) const override {
    // Action of -H along the backward orbit: int p dq - (-H) t with q moving backward.
    return -base_->exact_action(base_->exact_flow(X, -t), t);
  }

 private:
  ModelPtr base_;
};

inline ModelPtr reversed(ModelPtr m) { return std::make_shared<ReversedModel>(std::move(m)); }

}  // namespace psprop
