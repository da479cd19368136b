#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace psprop {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cplx I1{0.0, 1.0};

// Error hierarchy. Every module error derives from Error so callers can
// catch broadly and report by kind().
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

#define PSPROP_ERROR(Name, tag)                                   \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& w) : Error(w) {}             \
    const char* kind() const noexcept override { return tag; }    \
  };

PSPROP_ERROR(ConfigError, "config")
PSPROP_ERROR(RangeError, "range")
PSPROP_ERROR(ModelError, "model")
PSPROP_ERROR(IntegrationError, "integration")
PSPROP_ERROR(TruncationError, "truncation")
PSPROP_ERROR(BranchError, "branch")
PSPROP_ERROR(DomainError, "domain")
PSPROP_ERROR(ProjectionError, "projection")
PSPROP_ERROR(InternalError, "internal")

#undef PSPROP_ERROR

class CausticError : public Error {
 public:
  CausticError(const std::string& w, double t_star, double alpha_star = std::nan(""))
      : Error(w), t_star(t_star), alpha_star(alpha_star) {}
  const char* kind() const noexcept override { return "caustic"; }
  double t_star;
  double alpha_star;
};

// Soft warnings collected during a computation (Ehrenfest guard, grid
// advisories). Thread safe so parallel loops may report.
class Diagnostics {
 public:
  void warn(std::string w) {
    std::lock_guard<std::mutex> lk(mu_);
    warnings_.push_back(std::move(w));
  }
  std::vector<std::string> warnings() const {
    std::lock_guard<std::mutex> lk(mu_);
    return warnings_;
  }
  bool empty() const {
    std::lock_guard<std::mutex> lk(mu_);
    return warnings_.empty();
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::string> warnings_;
};

inline void warn(Diagnostics* d, std::string w) {
  if (d) d->warn(std::move(w));
}

struct PhasePoint {
  Vec q, p;

  PhasePoint() = default;
  PhasePoint(Vec q_, Vec p_) : q(std::move(q_)), p(std::move(p_)) { validate(); }
  PhasePoint(double q_, double p_) : q(Vec::Constant(1, q_)), p(Vec::Constant(1, p_)) {
    validate();
  }

  static PhasePoint from_stacked(const Vec& X) {
    if (X.size() % 2 != 0 || X.size() == 0)
      throw DomainError("stacked phase point must have even positive length");
    const Eigen::Index d = X.size() / 2;
    return PhasePoint(X.head(d), X.tail(d));
  }

  int dim() const { return static_cast<int>(q.size()); }

  Vec stacked() const {
    Vec X(2 * q.size());
    X << q, p;
    return X;
  }

  void validate() const {
    if (q.size() != p.size() || q.size() < 1)
      throw DomainError("phase point: q and p must have equal length d >= 1");
    if (!q.allFinite() || !p.allFinite()) throw DomainError("phase point: non-finite entry");
  }
};

// Symplectic form J = [[0, I], [-I, 0]], so X.JY = q.xi - p.eta.
inline Mat symplectic_J(int d) {
  Mat J = Mat::Zero(2 * d, 2 * d);
  J.topRightCorner(d, d) = Mat::Identity(d, d);
  J.bottomLeftCorner(d, d) = -Mat::Identity(d, d);
  return J;
}

inline double symplectic_pair(const Vec& X, const Vec& Y) {
  const Eigen::Index d = X.size() / 2;
  return X.head(d).dot(Y.tail(d)) - X.tail(d).dot(Y.head(d));
}

// Principal log of det(M) increment relative to a previous determinant;
// used for continuous branch tracking.
inline cplx log_ratio(cplx num, cplx den) { return std::log(num / den); }

inline int hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// Static block partition over [0, n). Output is written by index, so the
// result does not depend on the thread count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(nt);
  const std::size_t chunk = (n + nt - 1) / nt;
  for (std::size_t k = 0; k < nt; ++k) {
    pool.emplace_back([&, k] {
      try {
        const std::size_t lo = k * chunk, hi = std::min(n, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        errs[k] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace psprop
