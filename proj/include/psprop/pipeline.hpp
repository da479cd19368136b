#pragma once

#include "config.hpp"
#include "io.hpp"
#include "oracles.hpp"
#include "wkb.hpp"

#include <filesystem>
#include <random>

namespace psprop::pipeline {

using io::json;
namespace fs = std::filesystem;

struct Context {
  fs::path out_dir = ".";
  int threads = 1;
  std::uint64_t seed = 1;
};

// Exit status of a verb. Hard errors map to 2 (configuration) and 3 (module).
enum Status : int { ok = 0, config_error = 2, module_error = 3, tolerance_miss = 4 };

struct ErrorNorms {
  double max_rel = 0;  // on the region |ref| > region * max |ref|
  double l2_rel = 0;   // over the whole grid
  std::size_t points = 0;
};

template <class Ref>
ErrorNorms compare_field(const ComplexField& got, Ref&& ref, double region) {
  std::vector<cplx> r(got.size());
  double mx = 0;
  for (std::size_t k = 0; k < got.size(); ++k) {
    r[k] = ref(got.point(k));
    mx = std::max(mx, std::abs(r[k]));
  }
  ErrorNorms e;
  double num = 0, den = 0;
  for (std::size_t k = 0; k < got.size(); ++k) {
    const double w = got.weight(k);
    num += w * std::norm(got[k] - r[k]);
    den += w * std::norm(r[k]);
    if (std::abs(r[k]) > region * mx) {
      e.max_rel = std::max(e.max_rel, std::abs(got[k] - r[k]) / std::abs(r[k]));
      ++e.points;
    }
  }
  e.l2_rel = den > 0 ? std::sqrt(num / den) : 0;
  return e;
}

inline json to_json(const ErrorNorms& e) {
  return {{"max_rel_error", e.max_rel}, {"l2_rel_error", e.l2_rel}, {"region_points", e.points}};
}

struct LogLogFit {
  double slope = 0, intercept = 0;
};

inline LogLogFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 3 || x.size() != y.size()) throw ConfigError("convergence study needs >= 3 parameter values");
  const std::size_t n = x.size();
  Mat A(n, 2);
  Vec b(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw DomainError("log-log fit needs positive data");
    A(i, 0) = std::log(x[i]);
    A(i, 1) = 1;
    b(i) = std::log(y[i]);
  }
  const Vec c = A.colPivHouseholderQr().solve(b);
  return {c(0), c(1)};
}

inline std::vector<Axis> phase_axes(const RunConfig& c) { return {c.grid_q, c.grid_p}; }

inline WKBData wkb_data(const RunConfig& c) {
  WKBData d = standard_wkb_data(c.quartic, c.r);
  d.validate();
  return d;
}

// True when a closed-form reference exists for the configured initial data.
inline bool has_reference(const RunConfig& c) {
  return c.builtin() && c.quartic == 0 && c.initial != InitialKind::packet;
}

inline cplx reference_phase_value(const RunConfig& c, const Vec& X, double t) {
  return oracles::exact_phase_solution(parse_builtin_kind(c.model_kind), X(0), X(1), t, c.hbar);
}

inline ComplexField initial_phase_field(const RunConfig& c, int threads) {
  ComplexField f = ComplexField::phase(phase_axes(c), c.hbar);
  switch (c.initial) {
    case InitialKind::exact:
      f.fill([&](const Vec& X) { return oracles::initial_phase_state(X(0), X(1), c.hbar); });
      return f;
    case InitialKind::wkb: {
      LiftOptions lo;
      lo.threads = threads;
      return lift_wkb(wkb_data(c), phase_axes(c), c.hbar, lo);
    }
    case InitialKind::packet: {
      // Transform of G_Y is (2 pi hbar)^{-1/2} <G_X, G_Y>.
      const double pref = std::pow(2 * pi * c.hbar, -0.5);
      f.fill([&](const Vec& X) { return pref * overlap(PhasePoint::from_stacked(X), c.center, c.hbar); });
      return f;
    }
  }
  throw InternalError("unreachable");
}

inline std::string time_tag(std::size_t k) { return "t" + std::to_string(k); }

inline json config_record(const RunConfig& c, const std::string& verb) {
  json j = {{"event", "config"},
            {"verb", verb},
            {"model", c.model_kind},
            {"hbar", c.hbar},
            {"times", c.times},
            {"grid_q", {c.grid_q.min, c.grid_q.max, c.grid_q.n}},
            {"grid_p", {c.grid_p.min, c.grid_p.max, c.grid_p.n}}};
  return j;
}

inline void emit_warnings(io::JsonLines& rep, const Diagnostics& dg, const std::string& stage) {
  for (const auto& w : dg.warnings()) rep.emit({{"event", "warning"}, {"stage", stage}, {"message", w}});
}

// t = 0 check: the initial phase field against the transform of the sampled position state.
inline int projection_check(const RunConfig& c, const Context& ctx, const ComplexField& Psi0, io::JsonLines& rep) {
  json j = {{"event", "projection"}, {"t", 0.0}, {"fock_bargmann_residual", fock_bargmann_residual(Psi0)}};
  if (c.initial != InitialKind::packet) {
    const ComplexField psi0 = wkb_data(c).sample(c.grid_x, c.hbar);
    TransformOptions to;
    to.threads = ctx.threads;
    const ComplexField T = wave_packet_transform(psi0, phase_axes(c), to);
    std::size_t k = 0;
    const ErrorNorms e = compare_field(Psi0, [&](const Vec&) { return T[k++]; }, c.region);
    j["transform_of_sample"] = to_json(e);
  }
  rep.emit(j);
  return Status::ok;
}

// Propagate the initial phase field to every configured time and compare with the oracle.
inline int propagate_phase(const RunConfig& c, const Context& ctx, const ComplexField& Psi0, io::JsonLines& rep) {
  const ModelPtr model = c.model();
  int status = Status::ok;
  const double n0 = Psi0.norm();
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    const double t = c.times[k];
    PropagatorOptions po;
    po.flow = c.flow;
    po.threads = ctx.threads;
    Diagnostics dg;
    const ComplexField out = apply_propagator(Psi0, t, *model, po, &dg);
    emit_warnings(rep, dg, "propagate t=" + std::to_string(t));
    json j = {{"event", "propagate"}, {"t", t}, {"norm_ratio", out.norm() / n0},
              {"fock_bargmann_residual", fock_bargmann_residual(out)}};
    if (has_reference(c) && c.initial == InitialKind::exact) {
      const ErrorNorms e = compare_field(out, [&](const Vec& X) { return reference_phase_value(c, X, t); }, c.region);
      j.update(to_json(e));
      j["tolerance"] = c.rel_tol;
      j["pass"] = e.max_rel <= c.rel_tol;
      if (e.max_rel > c.rel_tol) status = Status::tolerance_miss;
    }
    rep.emit(j);
    if (c.write_fields) io::write_csv(out, ctx.out_dir / ("phase_" + time_tag(k) + ".csv"));
  }
  return status;
}

inline int run(const RunConfig& c, const Context& ctx, io::JsonLines& rep) {
  rep.emit(config_record(c, "run"));
  const ComplexField Psi0 = initial_phase_field(c, ctx.threads);
  if (c.write_fields) io::write_csv(Psi0, ctx.out_dir / "phase_initial.csv");
  int st = projection_check(c, ctx, Psi0, rep);
  st = std::max(st, propagate_phase(c, ctx, Psi0, rep));
  rep.emit({{"event", "summary"}, {"status", st}});
  return st;
}

inline int propagate_phase_verb(const RunConfig& c, const Context& ctx, io::JsonLines& rep) {
  rep.emit(config_record(c, "propagate-phase"));
  const int st = propagate_phase(c, ctx, initial_phase_field(c, ctx.threads), rep);
  rep.emit({{"event", "summary"}, {"status", st}});
  return st;
}

inline int propagate_position(const RunConfig& c, const Context& ctx, io::JsonLines& rep) {
  rep.emit(config_record(c, "propagate-position"));
  if (c.initial == InitialKind::packet) throw ConfigError("field 'initial.kind': propagate-position needs exact or wkb");
  const ModelPtr model = c.model();
  const ComplexField psi0 = wkb_data(c).sample(c.grid_x, c.hbar);
  int status = Status::ok;
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    const double t = c.times[k];
    PositionSolveOptions po;
    po.prop.flow = c.flow;
    po.prop.threads = ctx.threads;
    po.base_axes = phase_axes(c);
    Diagnostics dg;
    const ComplexField out = position_space_solution(psi0, t, *model, po, &dg);
    emit_warnings(rep, dg, "propagate-position t=" + std::to_string(t));
    json j = {{"event", "propagate-position"}, {"t", t}, {"norm", out.norm()}};
    if (has_reference(c)) {
      const auto kind = parse_builtin_kind(c.model_kind);
      const ErrorNorms e = compare_field(
          out, [&](const Vec& x) { return oracles::reference_position(kind, x(0), t, c.hbar); }, c.region);
      j.update(to_json(e));
      j["tolerance"] = c.rel_tol;
      j["pass"] = e.max_rel <= c.rel_tol;
      if (e.max_rel > c.rel_tol) status = Status::tolerance_miss;
    }
    rep.emit(j);
    if (c.write_fields) io::write_csv(out, ctx.out_dir / ("position_" + time_tag(k) + ".csv"));
  }
  rep.emit({{"event", "summary"}, {"status", status}});
  return status;
}

inline int lift(const RunConfig& c, const Context& ctx, io::JsonLines& rep) {
  rep.emit(config_record(c, "lift-wkb"));
  LiftOptions lo;
  lo.threads = ctx.threads;
  const ComplexField L = lift_wkb(wkb_data(c), phase_axes(c), c.hbar, lo);
  if (c.write_fields) io::write_csv(L, ctx.out_dir / "lift.csv");
  RunConfig cw = c;
  cw.initial = InitialKind::wkb;
  projection_check(cw, ctx, L, rep);
  rep.emit({{"event", "summary"}, {"status", 0}});
  return Status::ok;
}

inline int manifold(const RunConfig& c, const Context& ctx, io::JsonLines& rep) {
  rep.emit(config_record(c, "manifold"));
  const ModelPtr model = c.model();
  const WKBData data = wkb_data(c);
  int status = Status::ok;
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    const double t = c.times[k];
    LagrangianManifold L;
    try {
      L = transport_manifold(data, *model, t, c.grid_alpha, c.flow);
    } catch (const CausticError& e) {
      rep.emit({{"event", "caustic"}, {"t", t}, {"t_star", e.t_star}, {"alpha_star", e.alpha_star},
                {"message", e.what()}});
      status = Status::module_error;
      continue;
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < L.q.size(); ++i) rows.push_back({L.alpha[i], L.q[i], L.p[i], L.S[i], L.dq_dalpha[i]});
    if (c.write_fields)
      io::write_table(ctx.out_dir / ("manifold_" + time_tag(k) + ".csv"), {"alpha", "q", "p", "S", "dq_dalpha"}, rows);
    const LineFit fit = fit_line(L);
    json j = {{"event", "manifold"}, {"t", t}, {"slope", fit.slope}, {"offset", fit.offset},
              {"line_residual", fit.max_residual}};
    if (has_reference(c)) {
      const auto kind = parse_builtin_kind(c.model_kind);
      const auto ex = oracles::exact_manifold(kind, t);
      j["slope_error"] = std::abs(fit.slope - ex.slope);
      j["offset_error"] = std::abs(fit.offset - ex.offset);
      double serr = 0;
      for (std::size_t i = 0; i < L.q.size(); ++i)
        serr = std::max(serr, std::abs(L.S[i] - oracles::exact_transported_phase(kind, L.q[i], t)));
      j["phase_error"] = serr;
    }
    rep.emit(j);
  }
  rep.emit({{"event", "summary"}, {"status", status}});
  return status;
}

inline int on_manifold(const RunConfig& c, const Context& ctx, io::JsonLines& rep) {
  rep.emit(config_record(c, "solution-on-manifold"));
  const ModelPtr model = c.model();
  const WKBData data = wkb_data(c);
  OnManifoldOptions om;
  om.flow = c.flow;
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    const double t = c.times[k];
    std::vector<std::vector<double>> rows;
    double err = 0;
    for (int i = 0; i < c.grid_alpha.n; ++i) {
      const double a = c.grid_alpha.at(i);
      const Vec X = propagate_to(*model, manifold_point0(data, a), t, c.flow).X;
      const cplx v = solution_on_manifold(X, t, data, model, c.hbar, om);
      rows.push_back({a, X(0), X(1), v.real(), v.imag()});
      if (has_reference(c)) {
        const cplx r = reference_phase_value(c, X, t);
        err = std::max(err, std::abs(v - r) / std::abs(r));
      }
    }
    if (c.write_fields)
      io::write_table(ctx.out_dir / ("on_manifold_" + time_tag(k) + ".csv"), {"alpha", "q", "p", "re", "im"}, rows);
    json j = {{"event", "solution-on-manifold"}, {"t", t}, {"points", rows.size()}};
    if (has_reference(c)) j["max_rel_error"] = err;
    rep.emit(j);
  }
  rep.emit({{"event", "summary"}, {"status", 0}});
  return Status::ok;
}

// K_sc(X, center, t) on the phase grid; with `random > 0` also compares against
// the kernel display at random tuples.
inline int kernel_dump(const RunConfig& c, const Context& ctx, io::JsonLines& rep, int random,
                       oracles::Reading reading) {
  rep.emit(config_record(c, "kernel-dump"));
  const ModelPtr model = c.model();
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    const double t = c.times[k];
    const FrameState s = propagate_to(*model, c.center.stacked(), t, c.flow);
    const KernelNode node = make_kernel_node(s, c.center.stacked(), c.hbar);
    ComplexField K = ComplexField::phase(phase_axes(c), c.hbar);
    K.fill([&](const Vec& X) { return kernel_value(node, X, c.hbar); });
    if (c.write_fields) io::write_csv(K, ctx.out_dir / ("kernel_" + time_tag(k) + ".csv"));
    rep.emit({{"event", "kernel"}, {"t", t}, {"max_abs", K.max_abs()}});
  }
  if (random > 0) {
    if (!c.builtin()) throw ConfigError("field 'model.kind': random kernel comparison needs a built-in model");
    const auto kind = parse_builtin_kind(c.model_kind);
    std::mt19937_64 rng(ctx.seed);
    std::uniform_real_distribution<double> u(-2, 2), ut(0, 1);
    std::vector<std::vector<double>> rows;
    double worst = 0;
    for (int i = 0; i < random; ++i) {
      const double q = u(rng), p = u(rng), eta = u(rng), xi = u(rng);
      double t = ut(rng);
      if (t == 0) t = 1;
      const cplx a = kernel_Ksc(PhasePoint(q, p), PhasePoint(eta, xi), t, *model, c.hbar, c.flow);
      const cplx b = oracles::exact_kernel(kind, q, p, eta, xi, t, c.hbar, reading);
      const double e = std::abs(a - b) / std::abs(b);
      worst = std::max(worst, e);
      rows.push_back({q, p, eta, xi, t, a.real(), a.imag(), b.real(), b.imag(), e});
    }
    io::write_table(ctx.out_dir / "kernel_random.csv",
                    {"q", "p", "eta", "xi", "t", "re", "im", "oracle_re", "oracle_im", "rel_error"}, rows);
    rep.emit({{"event", "kernel-random"}, {"count", random}, {"max_rel_error", worst}, {"seed", ctx.seed}});
  }
  rep.emit({{"event", "summary"}, {"status", 0}});
  return Status::ok;
}

inline json deviations_json() {
  json arr = json::array();
  for (const auto& d : oracles::deviations())
    arr.push_back({{"id", d.id},
                   {"display", d.display},
                   {"model", d.model},
                   {"issue", d.issue},
                   {"adopted_reading", d.adopted_reading},
                   {"status", d.status}});
  return {{"schema_version", 1}, {"deviations", arr}};
}

inline int oracle_dump(const RunConfig& c, const Context& ctx, io::JsonLines& rep, const std::string& display,
                       oracles::Reading reading) {
  rep.emit(config_record(c, "oracle-dump"));
  if (display == "deviations") {
    std::ofstream out(ctx.out_dir / "oracle_deviations.json");
    out << deviations_json().dump(2) << '\n';
    rep.emit({{"event", "oracle-dump"}, {"display", display}, {"count", oracles::deviations().size()}});
    return Status::ok;
  }
  if (!c.builtin()) throw ConfigError("field 'model.kind': oracles exist only for free, linear, harmonic");
  const auto kind = parse_builtin_kind(c.model_kind);
  for (std::size_t k = 0; k < c.times.size(); ++k) {
    const double t = c.times[k];
    const fs::path file = ctx.out_dir / ("oracle_" + display + "_" + time_tag(k) + ".csv");
    if (display == "phase") {
      ComplexField f = ComplexField::phase(phase_axes(c), c.hbar);
      f.fill([&](const Vec& X) { return oracles::exact_phase_solution(kind, X(0), X(1), t, c.hbar, reading); });
      io::write_csv(f, file);
    } else if (display == "position") {
      ComplexField f = ComplexField::position({c.grid_x}, c.hbar);
      f.fill([&](const Vec& x) { return oracles::exact_position_solution(kind, x(0), t, c.hbar); });
      io::write_csv(f, file);
    } else if (display == "kernel") {
      ComplexField f = ComplexField::phase(phase_axes(c), c.hbar);
      f.fill([&](const Vec& X) {
        return oracles::exact_kernel(kind, X(0), X(1), c.center.q(0), c.center.p(0), t, c.hbar, reading);
      });
      io::write_csv(f, file);
    } else if (display == "manifold") {
      const auto m = oracles::exact_manifold(kind, t);
      std::vector<std::vector<double>> rows;
      for (int i = 0; i < c.grid_x.n; ++i) {
        const double x = c.grid_x.at(i);
        rows.push_back({x, m.slope * x + m.offset, oracles::exact_transported_phase(kind, x, t)});
      }
      io::write_table(file, {"q", "p", "S"}, rows);
    } else {
      throw ConfigError("unknown display '" + display + "' (expected phase, position, kernel, manifold, deviations)");
    }
    rep.emit({{"event", "oracle-dump"}, {"display", display}, {"t", t}, {"file", file.filename().string()}});
  }
  return Status::ok;
}

struct ConvergenceRow {
  double parameter, error;
};

struct ConvergenceTable {
  std::string parameter;
  std::vector<ConvergenceRow> rows;
  LogLogFit fit;
  bool monotone = false;
};

// Error versus one parameter; see the README for what each study measures.
inline ConvergenceTable convergence(const RunConfig& c, const Context& ctx) {
  if (c.conv_values.size() < 3) throw ConfigError("field 'convergence.values': needs at least 3 values");
  ConvergenceTable tab;
  tab.parameter = c.conv_parameter;
  for (const double v : c.conv_values) {
    double err = 0;
    if (c.conv_parameter == "hbar") {
      // Lift of the WKB data against the transform of the sampled state.
      RunConfig ch = c;
      ch.hbar = v;
      LiftOptions lo;
      lo.threads = ctx.threads;
      const ComplexField L = lift_wkb(wkb_data(ch), phase_axes(ch), v, lo);
      TransformOptions to;
      to.threads = ctx.threads;
      const ComplexField T = wave_packet_transform(wkb_data(ch).sample(ch.grid_x, v), phase_axes(ch), to);
      const double m = T.max_abs();
      for (std::size_t k = 0; k < T.size(); ++k)
        if (std::abs(T[k]) >= ch.region * m) err = std::max(err, std::abs(L[k] - T[k]) / m);
    } else if (c.conv_parameter == "grid") {
      // Propagator quadrature with v base points per axis, exact initial data.
      if (!has_reference(c) || c.initial != InitialKind::exact)
        throw ConfigError("field 'convergence.parameter': grid study needs exact initial data on a built-in model");
      if (v != std::floor(v) || v < 3) throw ConfigError("field 'convergence.values': grid counts must be integers");
      RunConfig cg = c;
      cg.grid_q = Axis(c.grid_q.min, c.grid_q.max, static_cast<int>(v));
      cg.grid_p = Axis(c.grid_p.min, c.grid_p.max, static_cast<int>(v));
      const double t = c.times.empty() ? 0.5 : c.times.back();
      const ComplexField Psi0 = initial_phase_field(cg, ctx.threads);
      PropagatorOptions po;
      po.flow = c.flow;
      po.threads = ctx.threads;
      po.output_axes = flowed_axes({Axis(-3, 3, 31), Axis(-3, 3, 31)}, t, *c.model(), c.flow);
      const ComplexField out = apply_propagator(Psi0, t, *c.model(), po);
      err = compare_field(out, [&](const Vec& X) { return reference_phase_value(c, X, t); }, c.region).max_rel;
    } else {
      // RK4 characteristic and Jacobian error at T against the closed-form flow (or a fine adaptive run).
      const ModelPtr model = c.model();
      const double T = c.times.empty() ? 1.0 : c.times.back();
      FlowOptions fo = c.flow;
      fo.method = FlowMethod::rk4;
      fo.step = v;
      const Vec X0 = c.center.stacked();
      const FrameState s = propagate_to(*model, X0, T, fo);
      Vec Xr;
      Mat Mr;
      if (model->has_exact_flow()) {
        Xr = model->exact_flow(X0, T);
        Mr = model->exact_jacobian(X0, T);
      } else {
        FlowOptions fr;
        fr.method = FlowMethod::adaptive;
        fr.rtol = 1e-13;
        fr.atol = 1e-14;
        const FrameState r = propagate_to(*model, X0, T, fr);
        Xr = r.X;
        Mr = flow_jacobian(r);
      }
      err = std::max((s.X - Xr).cwiseAbs().maxCoeff(), (flow_jacobian(s) - Mr).cwiseAbs().maxCoeff());
    }
    tab.rows.push_back({v, err});
  }
  std::vector<double> xs, ys;
  for (const auto& r : tab.rows) {
    xs.push_back(c.conv_parameter == "grid" ? 1.0 / r.parameter : r.parameter);
    ys.push_back(r.error);
  }
  tab.fit = fit_loglog(xs, ys);
  tab.monotone = true;
  for (std::size_t k = 1; k < tab.rows.size(); ++k) {
    // Refinement direction: smaller hbar or step, larger grid count.
    const bool refine = c.conv_parameter == "grid" ? tab.rows[k].parameter > tab.rows[k - 1].parameter
                                                   : tab.rows[k].parameter < tab.rows[k - 1].parameter;
    if (refine && !(tab.rows[k].error < tab.rows[k - 1].error)) tab.monotone = false;
  }
  return tab;
}

inline int convergence_verb(const RunConfig& c, const Context& ctx, io::JsonLines& rep) {
  rep.emit(config_record(c, "convergence"));
  const ConvergenceTable tab = convergence(c, ctx);
  std::vector<std::vector<double>> rows;
  for (const auto& r : tab.rows) {
    rows.push_back({r.parameter, r.error});
    rep.emit({{"event", "convergence-row"}, {"parameter", tab.parameter}, {"value", r.parameter}, {"error", r.error}});
  }
  io::write_table(ctx.out_dir / ("convergence_" + tab.parameter + ".csv"), {tab.parameter, "error"}, rows);
  rep.emit({{"event", "convergence"}, {"parameter", tab.parameter}, {"slope", tab.fit.slope},
            {"monotone", tab.monotone}});
  return Status::ok;
}

}  // namespace psprop::pipeline
