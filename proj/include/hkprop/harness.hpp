#ifndef HKPROP_HARNESS_HPP
#define HKPROP_HARNESS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hkprop/fio.hpp"
#include "hkprop/potential.hpp"
#include "hkprop/splitstep.hpp"
#include "hkprop/stft.hpp"
#include "hkprop/trajectory.hpp"

namespace hkprop {

/// Flat key-value config with dotted sections ("potential.name = cosine",
/// '#' comments). Unknown keys are rejected at resolve time.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key, double dflt) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& dflt) const;
  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& raw() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

/// Resolved experiment description (d = 1 for the CLI driver).
struct ExperimentConfig {
  Potential potential;
  RVec q0, p0;
  std::vector<double> eps_list;  ///< strictly decreasing for sweeps
  double T = 1.0;
  double ehrenfest_C_T = 0.25;
  double rho_report = 0.3;

  SpreadingMatrix theta = SpreadingMatrix::identity(1);

  bool grid_auto = true;
  GridAxis grid;  ///< manual spatial grid (d = 1)
  bool quad_auto = true;
  double quad_pad = 5.0;     ///< box padding, in units of sqrt(eps)
  double quad_safety = 2.5;  ///< spacing oversampling over Nyquist
  double quad_y_min = 0, quad_y_max = 0, quad_eta_min = 0, quad_eta_max = 0;
  double quad_dy = 0, quad_deta = 0;
  Mollifier mollifier;

  StepControl step;
  double solver_dt_over_eps = 0.02;  ///< reference solver dt = ratio * eps

  std::uint64_t seed = 12345;
  int threads = 1;
  int trials = 10;

  /// The resolved settings echoed into every report.
  std::map<std::string, std::string> resolved;
};

/// Validates and resolves a raw config (throws ConfigError, including
/// "admissible spreading violated" for a bad Theta).
ExperimentConfig resolve_config(const KeyValueConfig& kv);

/// Named thawed spreading fields available to configs and tests.
SpreadingMatrix make_theta_field(const std::string& name, double floor_scale);

/// Auto-selected grids for one (config, eps) experiment.
struct AutoSetup {
  std::vector<GridAxis> axes;    ///< spatial grid
  RVec y_min, y_max, eta_min, eta_max;
  RVec dy, deta;
  double solver_dt = 0.0;
};

/// Heuristics: phase-space box from the coherent state's position and
/// momentum content padded by quad_pad * sqrt(eps); lattice spacings from
/// a probe-trajectory bound on the integrand's local frequencies; spatial
/// grid sized to hold the transported packet and resolve its oscillation.
AutoSetup auto_setup(const ExperimentConfig& cfg, double eps, double t_final);

/// Per-trajectory structural diagnostics accumulated over a bundle.
struct BundleDiagnostics {
  double max_defect = 0.0;
  double max_prefactor_gap = 0.0;  ///< |u0_branch - u0_ode|
  double min_abs_det_y = 1e300;
  double max_gram_residual = 0.0;
  double max_monodromy = 0.0;  ///< max |F| entry
};

BundleDiagnostics scan_bundle(const TrajectoryGridBundle& bundle);

struct PropagateResult {
  double eps = 0.0;
  double t_final = 0.0;
  double l2_error = 0.0;
  Index n_x = 0, n_y = 0, n_eta = 0;
  int solver_steps = 0;
  BundleDiagnostics diag;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
};

/// FIO-propagates and reference-propagates one coherent state, writing
/// WFGRID01 wavefunctions, a trajectory dump and a JSON summary when
/// out_dir is nonempty.
PropagateResult run_propagate(const ExperimentConfig& cfg, double eps,
                              const std::string& out_dir);

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  ///< rms residual of the log-log fit
};

/// Least squares on (ln eps, ln error); needs >= 2 positive pairs.
FitResult fit_loglog(const std::vector<std::pair<double, double>>& pairs);

struct ConvergenceReport {
  std::vector<PropagateResult> rows;  ///< eps descending
  FitResult fit;
  bool monotone = true;
  bool quadrature_floor_flag = false;
};

/// eps-sweep of run_propagate + slope fit. Writes converge.csv (fully
/// deterministic for a fixed config and seed) and report.json.
ConvergenceReport run_converge(const ExperimentConfig& cfg,
                               const std::string& out_dir);

struct EhrenfestRow {
  double eps = 0.0;
  double horizon = 0.0;  ///< T(eps) = C_T ln(1/eps)
  double l2_error = 0.0;
  double max_monodromy = 0.0;
};

struct EhrenfestReport {
  std::vector<EhrenfestRow> rows;
  double exponent = 0.0;  ///< fitted error exponent in eps
  bool soft_pass = true;  ///< exponent >= 1 - rho_report
};

EhrenfestReport run_ehrenfest(const ExperimentConfig& cfg,
                              const std::string& out_dir);

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct ValidateReport {
  std::vector<CheckResult> checks;
  bool all_pass = true;
  std::string first_failure;
};

/// Full structural property suite (identity reconstruction, rescaling,
/// IPP residuals, mollifier independence, symplectic defect, prefactor
/// cross-check, Gram identity, STFT Parseval). Writes validate.json.
ValidateReport run_validate(const ExperimentConfig& cfg,
                            const std::string& out_dir);

/// Standalone STFT verifications (closed-form Gaussian, Parseval,
/// covariance, p_delta norm). Writes stft_check.json.
ValidateReport run_stft_check(const ExperimentConfig& cfg,
                              const std::string& out_dir);

}  // namespace hkprop

#endif
