#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "hkprop/errors.hpp"
#include "hkprop/harness.hpp"

namespace {

using namespace hkprop;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  int threads = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

ExperimentConfig load(const CommonArgs& args) {
  KeyValueConfig kv = args.config_path.empty()
                          ? KeyValueConfig{}
                          : KeyValueConfig::parse_file(args.config_path);
  ExperimentConfig cfg = resolve_config(kv);
  if (args.threads > 0) {
    cfg.threads = args.threads;
    cfg.resolved["run.threads"] = std::to_string(args.threads);
  }
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.resolved["run.seed"] = std::to_string(args.seed);
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--threads", args.threads, "worker threads");
  cmd->add_option("--seed", args.seed, "RNG seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

int report_exit(const ValidateReport& rep) {
  for (const auto& c : rep.checks)
    std::printf("%-28s measured=%-12.4g tol=%-10.3g %s\n", c.name.c_str(),
                c.measured, c.tolerance, c.pass ? "pass" : "FAIL");
  if (!rep.all_pass)
    std::printf("FAILED: %s\n", rep.first_failure.c_str());
  return rep.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hkprop: semiclassical wavepacket propagation toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* propagate = app.add_subcommand("propagate", "single-eps FIO vs reference run");
  auto* converge = app.add_subcommand("converge", "eps sweep with log-log slope fit");
  auto* ehrenfest = app.add_subcommand("ehrenfest", "errors at T(eps) = C_T ln(1/eps)");
  auto* validate = app.add_subcommand("validate", "structural property suite");
  auto* stftcheck = app.add_subcommand("stft-check", "short-time Fourier transform checks");
  for (auto* cmd : {propagate, converge, ehrenfest, validate, stftcheck})
    add_common(cmd, args);

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = load(args);
    if (propagate->parsed()) {
      const double eps = cfg.eps_list.front();
      const PropagateResult r = run_propagate(cfg, eps, args.out_dir);
      std::printf("eps=%g T=%g l2_error=%.6g (n_x=%lld lattice=%lldx%lld)\n",
                  r.eps, r.t_final, r.l2_error,
                  static_cast<long long>(r.n_x), static_cast<long long>(r.n_y),
                  static_cast<long long>(r.n_eta));
      for (const auto& w : r.warnings) std::printf("warning: %s\n", w.c_str());
      return 0;
    }
    if (converge->parsed()) {
      const ConvergenceReport rep = run_converge(cfg, args.out_dir);
      for (const auto& r : rep.rows)
        std::printf("eps=%-8g l2_error=%.6g\n", r.eps, r.l2_error);
      std::printf("slope=%.4f intercept=%.4f residual=%.3g%s\n", rep.fit.slope,
                  rep.fit.intercept, rep.fit.residual,
                  rep.quadrature_floor_flag ? " [quadrature floor suspected]" : "");
      return 0;
    }
    if (ehrenfest->parsed()) {
      const EhrenfestReport rep = run_ehrenfest(cfg, args.out_dir);
      for (const auto& r : rep.rows)
        std::printf("eps=%-8g T=%.4f l2_error=%.6g maxF=%.3g\n", r.eps,
                    r.horizon, r.l2_error, r.max_monodromy);
      std::printf("exponent=%.4f soft_%s (threshold %.2f)\n", rep.exponent,
                  rep.soft_pass ? "pass" : "fail", 1.0 - cfg.rho_report);
      return 0;
    }
    if (validate->parsed()) return report_exit(run_validate(cfg, args.out_dir));
    if (stftcheck->parsed()) return report_exit(run_stft_check(cfg, args.out_dir));
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
