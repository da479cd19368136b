// Command-line runner: every verb reads a key-value config, writes CSV fields
// and a JSON-lines report into --out-dir, and prints a short summary.

#include "psprop/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace pl = psprop::pipeline;

namespace {

psprop::oracles::Reading parse_reading(const std::string& s) {
  if (s == "verbatim") return psprop::oracles::Reading::verbatim;
  if (s == "adopted") return psprop::oracles::Reading::adopted;
  throw psprop::ConfigError("--reading must be verbatim or adopted");
}

void print_summary(const psprop::io::JsonLines& rep) {
  for (const auto& r : rep.records()) {
    const std::string ev = r.value("event", "");
    if (ev == "config" || ev == "convergence-row") continue;
    std::cout << r.dump() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-space semiclassical propagation toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  int threads = 1;
  std::uint64_t seed = 1;
  app.add_option("--config", config_path, "Run description (key = value file)")->required();
  app.add_option("--out-dir", out_dir, "Directory for CSV fields and report.jsonl");
  app.add_option("--threads", threads, "Worker threads (0 = hardware)")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", seed, "Seed for random test points");

  std::vector<CLI::App*> verbs;
  for (const char* v : {"run", "convergence", "propagate-phase", "propagate-position", "lift-wkb", "manifold",
                        "solution-on-manifold"})
    verbs.push_back(app.add_subcommand(v));

  auto* kd = app.add_subcommand("kernel-dump", "K_sc(X, initial.center, t) on the phase grid");
  int random_tuples = 0;
  std::string kd_reading = "adopted";
  kd->add_option("--random", random_tuples, "Also compare against the kernel display at N random tuples");
  kd->add_option("--reading", kd_reading, "Display reading for the comparison: verbatim | adopted");

  auto* od = app.add_subcommand("oracle-dump", "Evaluate a closed-form display on the configured grid");
  std::string display = "phase", od_reading = "adopted";
  od->add_option("--display", display, "phase | position | kernel | manifold | deviations");
  od->add_option("--reading", od_reading, "verbatim | adopted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pl::Status::config_error;
  }

  try {
    const psprop::RunConfig cfg = psprop::load_run_config(config_path);
    pl::Context ctx;
    ctx.out_dir = out_dir;
    ctx.threads = threads == 0 ? psprop::hardware_threads() : threads;
    ctx.seed = seed;
    std::filesystem::create_directories(ctx.out_dir);
    psprop::io::JsonLines rep(ctx.out_dir / "report.jsonl");

    int status = 0;
    const std::string verb = app.get_subcommands().front()->get_name();
    if (verb == "run") status = pl::run(cfg, ctx, rep);
    else if (verb == "convergence") status = pl::convergence_verb(cfg, ctx, rep);
    else if (verb == "propagate-phase") status = pl::propagate_phase_verb(cfg, ctx, rep);
    else if (verb == "propagate-position") status = pl::propagate_position(cfg, ctx, rep);
    else if (verb == "lift-wkb") status = pl::lift(cfg, ctx, rep);
    else if (verb == "manifold") status = pl::manifold(cfg, ctx, rep);
    else if (verb == "solution-on-manifold") status = pl::on_manifold(cfg, ctx, rep);
    else if (verb == "kernel-dump") status = pl::kernel_dump(cfg, ctx, rep, random_tuples, parse_reading(kd_reading));
    else if (verb == "oracle-dump") status = pl::oracle_dump(cfg, ctx, rep, display, parse_reading(od_reading));
    print_summary(rep);
    return status;
  } catch (const psprop::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return pl::Status::config_error;
  } catch (const psprop::Error& e) {
    std::cerr << e.kind() << " error: " << e.what() << '\n';
    return pl::Status::module_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pl::Status::module_error;
  }
}
