#include "hkprop/harness.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "hkprop/errors.hpp"
#include "hkprop/parallel.hpp"

#include "json.hpp"

namespace hkprop {

namespace {

constexpr double kPi = 3.14159265358979323846;
/// Mass radius of a coherent state at the 1e-8 tail threshold, in units
/// of sqrt(eps).
constexpr double kStateRadius = 4.3;
/// Reach of |x - X| against the phase-space Gaussian, in sqrt(eps) units.
constexpr double kGaussReach = 6.0;

using nlohmann::json;

double wall_now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Index next_pow2(double x) {
  Index n = 256;
  while (n < x && n < 4096) n *= 2;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    const std::string t = strip(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = strip(t.substr(0, eq));
    const std::string val = strip(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    cfg.kv_[key] = val;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_string(ss.str());
}

bool KeyValueConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not a number: " + it->second);
  }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not an integer: " + it->second);
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key " + key + ": expected true/false");
}

std::vector<double> KeyValueConfig::get_list(
    const std::string& key, const std::vector<double>& dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": bad list entry: " + tok);
    }
  }
  if (out.empty()) throw ConfigError("config key " + key + ": empty list");
  return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

SpreadingMatrix make_theta_field(const std::string& name, double floor_scale) {
  const RMat floor = floor_scale * RMat::Identity(1, 1);
  if (name == "ycos") {
    // Re in [0.55, 0.95] >= 0.5 for the default floor; y-dependence only,
    // so the t = 0 normalization stays exact.
    return SpreadingMatrix::field(
        1,
        [](const RVec& y, const RVec&) {
          CMat th(1, 1);
          th(0, 0) = Complex{0.75 + 0.2 * std::cos(y[0]), 0.1 * std::sin(y[0])};
          return th;
        },
        floor);
  }
  if (name == "phasewave") {
    // Gentle (y, eta) dependence for thawed-path tests.
    return SpreadingMatrix::field(
        1,
        [](const RVec& y, const RVec& eta) {
          CMat th(1, 1);
          th(0, 0) = Complex{
              0.9 + 0.08 * std::sin(0.5 * y[0]) * std::sin(0.5 * eta[0]),
              0.05 * std::cos(0.5 * y[0])};
          return th;
        },
        floor);
  }
  throw ConfigError("unknown theta field: " + name);
}

ExperimentConfig resolve_config(const KeyValueConfig& kv) {
  static const std::vector<std::string> known = {
      "potential.name", "potential.amplitude", "potential.wavenumber",
      "potential.omega", "potential.height", "potential.width",
      "state.q0", "state.p0",
      "eps.list",
      "time.T", "time.C_T", "time.rho_report",
      "theta.kind", "theta.scale", "theta.im_scale", "theta.field", "theta.floor",
      "grid.auto", "grid.x_min", "grid.x_max", "grid.n",
      "quad.auto", "quad.pad", "quad.safety",
      "quad.y_min", "quad.y_max", "quad.eta_min", "quad.eta_max",
      "quad.dy", "quad.deta", "quad.mollifier", "quad.lambda",
      "integrator.dt", "solver.dt_over_eps",
      "run.seed", "run.threads", "run.trials"};
  for (const auto& [key, value] : kv.raw())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key: " + key);

  ExperimentConfig cfg;
  const std::string pname = kv.get_string("potential.name", "cosine");
  std::map<std::string, double> params;
  params["amplitude"] = kv.get_double("potential.amplitude", 1.0);
  params["wavenumber"] = kv.get_double("potential.wavenumber", 1.0);
  params["omega"] = kv.get_double("potential.omega", 1.0);
  params["height"] = kv.get_double("potential.height", 1.0);
  params["width"] = kv.get_double("potential.width", 1.0);
  cfg.potential = make_potential(pname, params, 1);

  cfg.q0 = RVec::Constant(1, kv.get_double("state.q0", 1.0));
  cfg.p0 = RVec::Constant(1, kv.get_double("state.p0", 0.5));

  cfg.eps_list = kv.get_list("eps.list", {0.1});
  for (const double e : cfg.eps_list)
    if (!(e > 0.0) || e > 1.0)
      throw ConfigError("eps values must lie in (0, 1]");
  for (std::size_t i = 1; i < cfg.eps_list.size(); ++i)
    if (cfg.eps_list[i] >= cfg.eps_list[i - 1])
      throw ConfigError("eps list must be strictly decreasing");

  cfg.T = kv.get_double("time.T", 1.0);
  if (cfg.T < 0.0) throw ConfigError("time.T must be nonnegative");
  cfg.ehrenfest_C_T = kv.get_double("time.C_T", 0.25);
  cfg.rho_report = kv.get_double("time.rho_report", 0.3);

  const std::string tkind = kv.get_string("theta.kind", "identity");
  if (tkind == "identity") {
    cfg.theta = SpreadingMatrix::identity(1);
  } else if (tkind == "scaled" || tkind == "complex") {
    const double s = kv.get_double("theta.scale", 1.0);
    const double im = tkind == "complex" ? kv.get_double("theta.im_scale", 0.0) : 0.0;
    if (!(s > 0.0)) throw ConfigError("admissible spreading violated: theta.scale must be positive");
    CMat th(1, 1);
    th(0, 0) = Complex{s, im};
    try {
      cfg.theta = SpreadingMatrix::constant(th);
    } catch (const InvalidSpreadingError& e) {
      throw ConfigError(std::string("admissible spreading violated: ") + e.what());
    }
  } else if (tkind == "field") {
    cfg.theta = make_theta_field(kv.get_string("theta.field", "ycos"),
                                 kv.get_double("theta.floor", 0.5));
  } else {
    throw ConfigError("theta.kind must be identity|scaled|complex|field");
  }

  cfg.grid_auto = kv.get_bool("grid.auto", true);
  cfg.grid.min = kv.get_double("grid.x_min", -8.0);
  cfg.grid.max = kv.get_double("grid.x_max", 8.0);
  cfg.grid.n = static_cast<Index>(kv.get_double("grid.n", 1024));

  cfg.quad_auto = kv.get_bool("quad.auto", true);
  cfg.quad_pad = kv.get_double("quad.pad", 5.0);
  cfg.quad_safety = kv.get_double("quad.safety", 2.5);
  cfg.quad_y_min = kv.get_double("quad.y_min", -4.0);
  cfg.quad_y_max = kv.get_double("quad.y_max", 4.0);
  cfg.quad_eta_min = kv.get_double("quad.eta_min", -4.0);
  cfg.quad_eta_max = kv.get_double("quad.eta_max", 4.0);
  cfg.quad_dy = kv.get_double("quad.dy", 0.05);
  cfg.quad_deta = kv.get_double("quad.deta", 0.05);

  const std::string moll = kv.get_string("quad.mollifier", "none");
  const double lam = kv.get_double("quad.lambda", 8.0);
  if (moll == "none")
    cfg.mollifier = Mollifier::none();
  else if (moll == "gaussian")
    cfg.mollifier = Mollifier::gaussian(lam);
  else if (moll == "bump")
    cfg.mollifier = Mollifier::bump(lam);
  else
    throw ConfigError("quad.mollifier must be none|gaussian|bump");
  if (moll != "none" && !(lam > 0.0)) throw ConfigError("quad.lambda must be positive");

  cfg.step.dt = kv.get_double("integrator.dt", 1e-3);
  if (!(cfg.step.dt > 0.0)) throw ConfigError("integrator.dt must be positive");
  cfg.solver_dt_over_eps = kv.get_double("solver.dt_over_eps", 0.02);

  cfg.seed = kv.get_u64("run.seed", 12345);
  cfg.threads = static_cast<int>(kv.get_u64("run.threads", 1));
  cfg.trials = static_cast<int>(kv.get_u64("run.trials", 10));

  cfg.resolved = kv.raw();
  cfg.resolved["potential.name"] = pname;
  cfg.resolved["theta.kind"] = tkind;
  return cfg;
}

// ---------------------------------------------------------------------------
// auto heuristics
// ---------------------------------------------------------------------------

namespace {

struct ProbeScan {
  double xi_max = 0.0;    ///< max |Xi| along probes
  double x_lo = 0.0, x_hi = 0.0;
  double g_y = 1.0;   ///< bound on |C| + |A||Theta|
  double g_eta = 1.0; ///< bound on |D| + |B||Theta|
};

ProbeScan probe_flow(const Potential& V, const SpreadingMatrix& theta,
                     double y_lo, double y_hi, double e_lo, double e_hi,
                     double t_final, const StepControl& step) {
  ProbeScan scan;
  scan.x_lo = y_lo;
  scan.x_hi = y_hi;
  const std::vector<double> times =
      t_final > 0.0 ? std::vector<double>{0.0, 0.5 * t_final, t_final}
                    : std::vector<double>{0.0};
  for (int iy = 0; iy < 3; ++iy)
    for (int ie = 0; ie < 3; ++ie) {
      const double y = y_lo + 0.5 * iy * (y_hi - y_lo);
      const double e = e_lo + 0.5 * ie * (e_hi - e_lo);
      const PhasePoint z0{RVec::Constant(1, y), RVec::Constant(1, e)};
      const auto traj = integrate_trajectory(V, z0, theta, times, step);
      for (const auto& st : traj) {
        scan.xi_max = std::max(scan.xi_max, st.Xi.cwiseAbs().maxCoeff());
        scan.x_lo = std::min(scan.x_lo, st.X.minCoeff());
        scan.x_hi = std::max(scan.x_hi, st.X.maxCoeff());
        const double thn = st.theta.norm();
        scan.g_y = std::max(scan.g_y, st.F.C.norm() + st.F.A.norm() * thn);
        scan.g_eta = std::max(scan.g_eta, st.F.D.norm() + st.F.B.norm() * thn);
      }
    }
  return scan;
}

}  // namespace

AutoSetup auto_setup(const ExperimentConfig& cfg, double eps, double t_final) {
  AutoSetup s;
  const double sq = std::sqrt(eps);
  const RVec probe_y = cfg.q0, probe_p = cfg.p0;

  // Spreading scales from the floor (constant matrices carry their own
  // real part as floor).
  Eigen::SelfAdjointEigenSolver<RMat> es(cfg.theta.floor());
  const double lam_min = es.eigenvalues().minCoeff();
  const CMat th0 = cfg.theta.eval(cfg.q0, cfg.p0);
  Eigen::SelfAdjointEigenSolver<RMat> es2(th0.real());
  const double lam_max = es2.eigenvalues().maxCoeff();
  const double wsig = 1.0 / std::sqrt(lam_min);

  const double half_y = (kStateRadius + cfg.quad_pad) * sq * std::max(1.0, wsig);
  const double half_e = (kStateRadius + cfg.quad_pad) * sq;
  double y_lo = cfg.q0[0] - half_y, y_hi = cfg.q0[0] + half_y;
  double e_lo = cfg.p0[0] - half_e, e_hi = cfg.p0[0] + half_e;

  const ProbeScan scan = probe_flow(cfg.potential, cfg.theta, y_lo, y_hi, e_lo,
                                    e_hi, t_final, cfg.step);

  const double reach = kGaussReach * sq / std::sqrt(lam_min);
  const double freq_y = (half_e + scan.g_y * reach) / eps;
  const double freq_e = std::max(1.0, scan.g_eta * reach) / eps;
  double dy = kPi / (freq_y * cfg.quad_safety);
  double de = kPi / (freq_e * cfg.quad_safety);
  // Keep the lattice within desk scale and never coarser than 9 points.
  dy = std::min(dy, (y_hi - y_lo) / 8.0);
  de = std::min(de, (e_hi - e_lo) / 8.0);
  dy = std::max(dy, (y_hi - y_lo) / 400.0);
  de = std::max(de, (e_hi - e_lo) / 400.0);

  s.y_min = RVec::Constant(1, y_lo);
  s.y_max = RVec::Constant(1, y_hi);
  s.eta_min = RVec::Constant(1, e_lo);
  s.eta_max = RVec::Constant(1, e_hi);
  s.dy = RVec::Constant(1, dy);
  s.deta = RVec::Constant(1, de);

  // Spatial grid: hold the transported packet with boundary margin, and
  // resolve the fastest local oscillation p_max/eps.
  const double pad_x = std::max(2.0, 10.0 * sq * std::max(1.0, wsig));
  const double x_lo = std::min(scan.x_lo, cfg.q0[0] - kStateRadius * sq) - pad_x;
  const double x_hi = std::max(scan.x_hi, cfg.q0[0] + kStateRadius * sq) + pad_x;
  const double p_max = scan.xi_max + half_e * std::max(1.0, std::sqrt(lam_max));
  const double dx_target = kPi * eps / (2.5 * p_max);
  const Index n = next_pow2((x_hi - x_lo) / dx_target);
  s.axes = {GridAxis{x_lo, x_hi, n}};
  s.solver_dt = std::max(1e-6, cfg.solver_dt_over_eps * eps);
  return s;
}

BundleDiagnostics scan_bundle(const TrajectoryGridBundle& bundle) {
  BundleDiagnostics d;
  for (const auto& snap : bundle.states)
    for (const auto& st : snap) {
      d.max_defect = std::max(d.max_defect, st.defect());
      d.max_prefactor_gap =
          std::max(d.max_prefactor_gap, std::abs(st.u0 - st.u0_ode));
      const CMat y = st.prefactor();
      d.min_abs_det_y = std::min(d.min_abs_det_y, std::abs(y.determinant()));
      d.max_gram_residual =
          std::max(d.max_gram_residual, gram_identity_residual(st.F, st.theta));
      d.max_monodromy = std::max(
          {d.max_monodromy, st.F.A.cwiseAbs().maxCoeff(),
           st.F.B.cwiseAbs().maxCoeff(), st.F.C.cwiseAbs().maxCoeff(),
           st.F.D.cwiseAbs().maxCoeff()});
    }
  return d;
}

// ---------------------------------------------------------------------------
// propagate / converge / ehrenfest
// ---------------------------------------------------------------------------

PropagateResult run_propagate(const ExperimentConfig& cfg, double eps,
                              const std::string& out_dir) {
  const double t0 = wall_now();
  PropagateResult res;
  res.eps = eps;
  res.t_final = cfg.T;

  AutoSetup setup;
  if (cfg.grid_auto || cfg.quad_auto) setup = auto_setup(cfg, eps, cfg.T);
  if (!cfg.grid_auto) setup.axes = {cfg.grid};
  if (!cfg.quad_auto) {
    setup.y_min = RVec::Constant(1, cfg.quad_y_min);
    setup.y_max = RVec::Constant(1, cfg.quad_y_max);
    setup.eta_min = RVec::Constant(1, cfg.quad_eta_min);
    setup.eta_max = RVec::Constant(1, cfg.quad_eta_max);
    setup.dy = RVec::Constant(1, cfg.quad_dy);
    setup.deta = RVec::Constant(1, cfg.quad_deta);
  }
  if (setup.solver_dt <= 0.0) setup.solver_dt = cfg.solver_dt_over_eps * eps;

  const WavefunctionGrid phi0 = coherent_state(setup.axes, eps, cfg.q0, cfg.p0);

  std::vector<double> times{0.0};
  if (cfg.T > 0.0) times.push_back(cfg.T);
  const TrajectoryGridBundle bundle = integrate_bundle(
      cfg.potential, setup.y_min, setup.y_max, setup.eta_min, setup.eta_max,
      setup.dy, setup.deta, cfg.theta, times, cfg.step, cfg.threads);
  const QuadratureSpec quad = QuadratureSpec::match(bundle, cfg.mollifier);

  const WavefunctionGrid ref =
      split_step_propagate(cfg.potential, phi0, cfg.T, setup.solver_dt);

  FioOptions opt;
  opt.threads = cfg.threads;
  opt.warnings = &res.warnings;
  const std::size_t ti = times.size() - 1;
  const WavefunctionGrid out =
      apply_fio(bundle, ti, FIOSymbol::hk(), phi0, setup.axes, quad, opt);

  res.l2_error = l2_distance(out, ref);
  res.n_x = setup.axes[0].n;
  res.n_y = bundle.y_count();
  res.n_eta = bundle.eta_count();
  res.solver_steps = cfg.T > 0.0
                         ? std::max(1, static_cast<int>(std::ceil(cfg.T / setup.solver_dt - 1e-12)))
                         : 0;
  res.diag = scan_bundle(bundle);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    save_wfgrid(out, out_dir + "/fio.wfgrid");
    save_wfgrid(ref, out_dir + "/reference.wfgrid");
    // Center trajectory dump over a uniform time ladder.
    std::vector<double> ts;
    const int steps = 100;
    for (int i = 0; i <= steps; ++i) ts.push_back(cfg.T * i / steps);
    if (cfg.T == 0.0) ts = {0.0};
    const auto traj =
        integrate_trajectory(cfg.potential, {cfg.q0, cfg.p0}, cfg.theta, ts, cfg.step);
    std::ofstream tcsv(out_dir + "/trajectory.csv");
    dump_trajectory_csv(traj, tcsv);

    json j;
    j["eps"] = eps;
    j["T"] = cfg.T;
    j["l2_error"] = res.l2_error;
    j["n_x"] = res.n_x;
    j["n_quad_y"] = res.n_y;
    j["n_quad_eta"] = res.n_eta;
    j["solver_steps"] = res.solver_steps;
    j["max_defect"] = res.diag.max_defect;
    j["max_prefactor_gap"] = res.diag.max_prefactor_gap;
    j["min_abs_det_y"] = res.diag.min_abs_det_y;
    j["max_gram_residual"] = res.diag.max_gram_residual;
    j["warnings"] = res.warnings;
    j["config"] = cfg.resolved;
    std::ofstream js(out_dir + "/summary.json");
    js << j.dump(2) << "\n";
  }
  res.wall_seconds = wall_now() - t0;
  return res;
}

FitResult fit_loglog(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 2)
    throw InvalidInputError("fit_loglog needs at least two pairs");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(pairs.size());
  for (const auto& [x, y] : pairs) {
    if (!(x > 0.0) || !(y > 0.0))
      throw InvalidInputError("fit_loglog needs positive values");
    const double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  FitResult f;
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw InvalidInputError("fit_loglog: degenerate abscissae");
  f.slope = (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  double ss = 0;
  for (const auto& [x, y] : pairs) {
    const double r = std::log(y) - (f.intercept + f.slope * std::log(x));
    ss += r * r;
  }
  f.residual = std::sqrt(ss / n);
  return f;
}

namespace {

void write_converge_csv(const ConvergenceReport& rep, const std::string& path) {
  std::ofstream os(path);
  os << "# hkprop-converge-v1\n";
  os << "eps,l2_error,n_x,n_quad_y,n_quad_eta,solver_steps\n";
  for (const auto& r : rep.rows) {
    os << fmt_g(r.eps) << ',' << fmt_g(r.l2_error) << ',' << r.n_x << ','
       << r.n_y << ',' << r.n_eta << ',' << r.solver_steps << '\n';
  }
  os << "# fit slope=" << fmt_g(rep.fit.slope)
     << " intercept=" << fmt_g(rep.fit.intercept)
     << " residual=" << fmt_g(rep.fit.residual)
     << " monotone=" << (rep.monotone ? 1 : 0)
     << " quadrature_floor=" << (rep.quadrature_floor_flag ? 1 : 0) << "\n";
}

json report_rows(const ConvergenceReport& rep, const ExperimentConfig& cfg) {
  json j;
  j["config"] = cfg.resolved;
  j["fit"] = {{"slope", rep.fit.slope},
              {"intercept", rep.fit.intercept},
              {"residual", rep.fit.residual}};
  j["monotone"] = rep.monotone;
  j["quadrature_floor_flag"] = rep.quadrature_floor_flag;
  for (const auto& r : rep.rows) {
    j["rows"].push_back({{"eps", r.eps},
                         {"l2_error", r.l2_error},
                         {"n_x", r.n_x},
                         {"n_quad_y", r.n_y},
                         {"n_quad_eta", r.n_eta},
                         {"solver_steps", r.solver_steps},
                         {"wall_seconds", r.wall_seconds},
                         {"max_defect", r.diag.max_defect},
                         {"max_prefactor_gap", r.diag.max_prefactor_gap}});
  }
  return j;
}

}  // namespace

ConvergenceReport run_converge(const ExperimentConfig& cfg,
                               const std::string& out_dir) {
  if (cfg.eps_list.size() < 4)
    throw ConfigError("converge needs at least four eps values");
  ConvergenceReport rep;
  for (const double eps : cfg.eps_list) {
    const std::string sub =
        out_dir.empty() ? std::string{}
                        : out_dir + "/eps_" + [&] {
                            char b[32];
                            std::snprintf(b, sizeof(b), "%g", eps);
                            return std::string(b);
                          }();
    rep.rows.push_back(run_propagate(cfg, eps, sub));
  }
  std::vector<std::pair<double, double>> pairs;
  for (const auto& r : rep.rows) pairs.emplace_back(r.eps, r.l2_error);
  rep.fit = fit_loglog(pairs);
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    if (rep.rows[i].l2_error >= rep.rows[i - 1].l2_error) rep.monotone = false;
  rep.quadrature_floor_flag = !rep.monotone;

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_converge_csv(rep, out_dir + "/converge.csv");
    std::ofstream js(out_dir + "/report.json");
    js << report_rows(rep, cfg).dump(2) << "\n";
  }
  return rep;
}

EhrenfestReport run_ehrenfest(const ExperimentConfig& cfg,
                              const std::string& out_dir) {
  EhrenfestReport rep;
  std::vector<std::pair<double, double>> pairs;
  for (const double eps : cfg.eps_list) {
    ExperimentConfig c = cfg;
    c.T = cfg.ehrenfest_C_T * std::log(1.0 / eps);
    const PropagateResult r = run_propagate(c, eps, "");
    if (r.diag.max_monodromy > 1e12)
      throw IntegrationAccuracyError(
          "monodromy overflow at eps=" + fmt_g(eps) +
          ": |F| reached " + fmt_g(r.diag.max_monodromy));
    rep.rows.push_back({eps, c.T, r.l2_error, r.diag.max_monodromy});
    pairs.emplace_back(eps, r.l2_error);
  }
  rep.exponent = fit_loglog(pairs).slope;
  rep.soft_pass = rep.exponent >= 1.0 - cfg.rho_report;

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(out_dir + "/ehrenfest.csv");
    os << "# hkprop-ehrenfest-v1\neps,horizon,l2_error,max_monodromy\n";
    for (const auto& r : rep.rows)
      os << fmt_g(r.eps) << ',' << fmt_g(r.horizon) << ',' << fmt_g(r.l2_error)
         << ',' << fmt_g(r.max_monodromy) << '\n';
    json j;
    j["config"] = cfg.resolved;
    j["exponent"] = rep.exponent;
    j["rho_report"] = cfg.rho_report;
    j["soft_pass"] = rep.soft_pass;
    for (const auto& r : rep.rows)
      j["rows"].push_back({{"eps", r.eps},
                           {"horizon", r.horizon},
                           {"l2_error", r.l2_error},
                           {"max_monodromy", r.max_monodromy}});
    std::ofstream js(out_dir + "/report.json");
    js << j.dump(2) << "\n";
  }
  return rep;
}

// ---------------------------------------------------------------------------
// validate / stft-check
// ---------------------------------------------------------------------------

namespace {

struct Fixture {
  TrajectoryGridBundle bundle;
  QuadratureSpec quad;
  WavefunctionGrid phi;
};

/// Bundle + coherent state for a named flow on a centred box.
Fixture make_fixture(const std::string& potential_name, double t, double eps,
                     double q0, double p0, const SpreadingMatrix& theta,
                     double half_y, double half_e, double spacing,
                     const std::vector<GridAxis>& axes, int threads) {
  const Potential V = make_potential(potential_name, {}, 1);
  Fixture f;
  const std::vector<double> times = t > 0.0 ? std::vector<double>{0.0, t}
                                            : std::vector<double>{0.0};
  f.bundle = integrate_bundle(
      V, RVec::Constant(1, q0 - half_y), RVec::Constant(1, q0 + half_y),
      RVec::Constant(1, p0 - half_e), RVec::Constant(1, p0 + half_e),
      RVec::Constant(1, spacing), RVec::Constant(1, spacing), theta, times, {},
      threads);
  f.quad = QuadratureSpec::match(f.bundle);
  f.phi = coherent_state(axes, eps, RVec::Constant(1, q0), RVec::Constant(1, p0));
  return f;
}

/// Gaussian bump in (y, eta) centred at (yc, ec) with width sigma, plus
/// its closed-form partial derivatives.
struct BumpW {
  double yc, ec, sigma;
  Complex operator()(const RVec& y, const RVec& e) const {
    const double a = (y[0] - yc) / sigma, b = (e[0] - ec) / sigma;
    return Complex{std::exp(-0.5 * (a * a + b * b)), 0.0};
  }
  double dy(const RVec& y, const RVec& e) const {
    return -((y[0] - yc) / (sigma * sigma)) * (*this)(y, e).real();
  }
  double deta(const RVec& y, const RVec& e) const {
    return -((e[0] - ec) / (sigma * sigma)) * (*this)(y, e).real();
  }
};

double identity_reconstruction_error(const SpreadingMatrix& theta, double eps,
                                     double box, double spacing,
                                     const std::vector<GridAxis>& axes,
                                     int threads) {
  Fixture f = make_fixture("free", 0.0, eps, 0.0, 0.0, theta, box, box,
                           spacing, axes, threads);
  FioOptions opt;
  opt.threads = threads;
  const WavefunctionGrid out =
      apply_fio(f.bundle, 0, FIOSymbol::one(), f.phi, axes, f.quad, opt);
  return l2_distance(out, f.phi);
}

}  // namespace

ValidateReport run_validate(const ExperimentConfig& cfg,
                            const std::string& out_dir) {
  ValidateReport rep;
  const int threads = cfg.threads;
  FioOptions opt;
  opt.threads = threads;
  const auto add = [&](const std::string& name, double measured, double tol) {
    const bool pass = measured <= tol;
    rep.checks.push_back({name, measured, tol, pass});
    if (!pass && rep.all_pass) {
      rep.all_pass = false;
      rep.first_failure = name;
    }
  };

  // Identity reconstruction for frozen and thawed spreading. Manual quad
  // settings (quad.auto = false) override the lattice, which is how a
  // deliberately coarse config forces this check to fail.
  {
    const double eps = 0.05;
    const std::vector<GridAxis> axes{GridAxis{-8.0, 8.0, 1024}};
    const double box = cfg.quad_auto ? 4.0 : std::abs(cfg.quad_y_max);
    const double sp = cfg.quad_auto ? 0.05 : cfg.quad_dy;
    double worst = 0.0;
    worst = std::max(worst, identity_reconstruction_error(
                                SpreadingMatrix::identity(1), eps, box, sp,
                                axes, threads));
    worst = std::max(worst, identity_reconstruction_error(
                                SpreadingMatrix::constant(2.0 * CMat::Identity(1, 1)),
                                eps, box, sp, axes, threads));
    worst = std::max(worst, identity_reconstruction_error(
                                make_theta_field("ycos", 0.5), eps, box, sp,
                                axes, threads));
    add("identity_reconstruction", worst, 1e-3);
  }

  // Unitary rescaling identity on free and harmonic flows.
  {
    const std::vector<GridAxis> axes{GridAxis{-8.0, 8.0, 1024}};
    const SpreadingMatrix id = SpreadingMatrix::identity(1);
    Fixture f1 = make_fixture("free", 0.5, 0.1, 0.3, 0.5, id, 2.5, 2.5, 0.04,
                              axes, threads);
    Fixture f2 = make_fixture("harmonic", 1.0, 0.2, 0.3, 0.5, id, 3.0, 3.0,
                              0.05, axes, threads);
    const double r1 =
        rescaling_check(f1.bundle, 1, FIOSymbol::hk(), f1.phi, f1.quad, opt);
    const double r2 =
        rescaling_check(f2.bundle, 1, FIOSymbol::hk(), f2.phi, f2.quad, opt);
    add("rescaling_identity", std::max(r1, r2), 1e-3);
  }

  // Integration-by-parts identities with closed-form divergences.
  {
    const std::vector<GridAxis> axes{GridAxis{-8.0, 8.0, 1024}};
    const SpreadingMatrix id = SpreadingMatrix::identity(1);
    const BumpW w{0.6, 0.4, 0.5};
    IppForms forms;
    forms.V = [](const RVec&, const RVec&) {
      return CVec::Ones(1).eval();
    };
    forms.w = [w](const RVec& y, const RVec& e) { return w(y, e); };
    forms.closed_rhs = [w](const TrajectoryState& st, const RVec& y,
                           const RVec& e) {
      const Complex yinv = 1.0 / st.prefactor()(0, 0);
      return w.deta(y, e) * yinv;
    };
    forms.closed_rhs2 = [w](const TrajectoryState& st, const RVec& y,
                            const RVec& e) {
      const Complex a = eta_elimination_matrix(st.F, st.theta)(0, 0);
      return Complex{w.dy(y, e), 0.0} - w.deta(y, e) * a;
    };
    double worst = 0.0, worst2 = 0.0;
    for (const char* flow : {"harmonic", "free"}) {
      const double t = flow[0] == 'h' ? 0.8 : 0.5;
      Fixture f = make_fixture(flow, t, 0.1, 0.6, 0.4, id, 2.6, 2.6, 0.045,
                               axes, threads);
      worst = std::max(worst, ipp_residual(f.bundle, 1, forms, f.phi, f.quad, opt));
      worst2 = std::max(worst2, ipp2_residual(f.bundle, 1, forms, f.phi, f.quad, opt));
    }
    add("ipp_residual", worst, 1e-3);
    add("ipp2_residual", worst2, 1e-3);
  }

  // Mollifier independence ladder.
  {
    const std::vector<GridAxis> axes{GridAxis{-8.0, 8.0, 1024}};
    Fixture f = make_fixture("free", 0.5, 0.1, 0.0, 1.2,
                             SpreadingMatrix::identity(1), 2.2, 3.2, 0.04,
                             axes, threads);
    const auto diffs =
        mollifier_independence(f.bundle, 1, FIOSymbol::hk(), f.phi, f.quad,
                               {2.0, 4.0, 8.0, 16.0}, opt);
    double final_diff = diffs.back();
    bool monotone = true;
    for (std::size_t i = 1; i < diffs.size(); ++i)
      if (diffs[i] > diffs[i - 1] + 1e-15) monotone = false;
    add("mollifier_independence", final_diff, 1e-6);
    add("mollifier_monotone", monotone ? 0.0 : 1.0, 0.5);
  }

  // Structural diagnostics along a cosine-potential bundle.
  {
    const Potential V = make_potential("cosine", {}, 1);
    const TrajectoryGridBundle b = integrate_bundle(
        V, RVec::Constant(1, -1.0), RVec::Constant(1, 1.0),
        RVec::Constant(1, 0.2), RVec::Constant(1, 1.0),
        RVec::Constant(1, 0.1), RVec::Constant(1, 0.08),
        SpreadingMatrix::identity(1), {0.0, 0.5, 1.0}, cfg.step, threads);
    const BundleDiagnostics d = scan_bundle(b);
    add("symplectic_defect", d.max_defect, 1e-6);
    add("prefactor_crosscheck", d.max_prefactor_gap, 1e-6);
    add("gram_identity", d.max_gram_residual, 1e-12);
    add("det_prefactor_floor", d.min_abs_det_y > 1e-10 ? 0.0 : 1.0, 0.5);
  }

  // STFT Parseval on random band-limited signals.
  {
    const std::vector<GridAxis> axes{GridAxis{-8.0, 8.0, 512}};
    WavefunctionGrid gwin(axes, 1.0);
    for (Index i = 0; i < gwin.size(); ++i) {
      const double x = gwin.point(i)[0];
      gwin.data[i] = std::exp(-0.5 * x * x);
    }
    const Window win = Window::plain_samples(gwin.data);
    std::mt19937_64 rng(cfg.seed);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      WavefunctionGrid f(axes, 1.0);
      CVec spec = CVec::Zero(f.size());
      for (Index k = 0; k < 40; ++k) {
        const double re = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
        const double im = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
        spec[k] = Complex{re, im};
        spec[(f.size() - 1 - k) % f.size()] = Complex{im, re};
      }
      f.data = spec;
      fft_all(f.data, f.axes, false);
      const double fn = f.l2_norm();
      const double gn = gwin.l2_norm();
      const StftResult v = stft(f, win, threads);
      worst = std::max(worst, std::abs(v.l2_norm() - fn * gn) / (fn * gn));
    }
    add("stft_parseval", worst, 1e-8);
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    json j;
    j["config"] = cfg.resolved;
    j["all_pass"] = rep.all_pass;
    if (!rep.all_pass) j["first_failure"] = rep.first_failure;
    for (const auto& c : rep.checks)
      j["checks"].push_back({{"name", c.name},
                             {"measured", c.measured},
                             {"tolerance", c.tolerance},
                             {"pass", c.pass}});
    std::ofstream js(out_dir + "/validate.json");
    js << j.dump(2) << "\n";
  }
  return rep;
}

ValidateReport run_stft_check(const ExperimentConfig& cfg,
                              const std::string& out_dir) {
  ValidateReport rep;
  const auto add = [&](const std::string& name, double measured, double tol) {
    const bool pass = measured <= tol;
    rep.checks.push_back({name, measured, tol, pass});
    if (!pass && rep.all_pass) {
      rep.all_pass = false;
      rep.first_failure = name;
    }
  };

  const std::vector<GridAxis> axes{GridAxis{-8.0, 8.0, 512}};
  WavefunctionGrid gauss(axes, 1.0);
  for (Index i = 0; i < gauss.size(); ++i) {
    const double x = gauss.point(i)[0];
    gauss.data[i] = std::exp(-0.5 * x * x);
  }
  const Window win = Window::plain_samples(gauss.data);

  // Closed form: V_g[f](y, eta) = 2^{-1/2} e^{-y^2/4 - eta^2/4} e^{-i eta y / 2}
  // for f = g = exp(-x^2/2).
  {
    const StftResult v = stft(gauss, win, cfg.threads);
    double worst = 0.0;
    const Index n_eta = v.eta_count();
    for (Index m = 0; m < v.y_count(); ++m) {
      const double y = v.y_at(m)[0];
      for (Index k = 0; k < n_eta; ++k) {
        const double eta = v.eta_at(k)[0];
        const Complex exact = std::pow(2.0, -0.5) *
                              std::exp(-0.25 * (y * y + eta * eta)) *
                              std::exp(Complex{0.0, -0.5 * eta * y});
        worst = std::max(worst, std::abs(v.data[m * n_eta + k] - exact));
      }
    }
    add("stft_gaussian_closed_form", worst, 1e-8);
  }

  // Parseval on random band-limited signals.
  {
    std::mt19937_64 rng(cfg.seed);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      WavefunctionGrid f(axes, 1.0);
      CVec spec = CVec::Zero(f.size());
      for (Index k = 0; k < 40; ++k) {
        const double re = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
        const double im = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
        spec[k] = Complex{re, im};
      }
      f.data = spec;
      fft_all(f.data, f.axes, false);
      const double fn = f.l2_norm(), gn = gauss.l2_norm();
      const StftResult v = stft(f, win, cfg.threads);
      worst = std::max(worst, std::abs(v.l2_norm() - fn * gn) / (fn * gn));
    }
    add("stft_parseval", worst, 1e-8);
  }

  // Covariance under grid translations.
  {
    WavefunctionGrid f(axes, 1.0);
    for (Index i = 0; i < f.size(); ++i) {
      const double x = f.point(i)[0];
      f.data[i] = std::exp(-0.5 * (x - 0.7) * (x - 0.7)) *
                  Complex{std::cos(2.0 * x), std::sin(2.0 * x)};
    }
    const Index shift = 16;
    const double a = shift * axes[0].delta();
    WavefunctionGrid fs(axes, 1.0);
    for (Index i = 0; i < f.size(); ++i)
      fs.data[i] = f.data[(i - shift + f.size()) % f.size()];
    const StftResult v = stft(f, win, cfg.threads);
    const StftResult vs = stft(fs, win, cfg.threads);
    double worst = 0.0;
    const Index n_eta = v.eta_count();
    for (Index m = 0; m < v.y_count(); ++m) {
      const Index ms = (m - shift + v.y_count()) % v.y_count();
      for (Index k = 0; k < n_eta; ++k) {
        const double eta = v.eta_at(k)[0];
        const Complex expect =
            std::exp(Complex{0.0, -eta * a}) * v.data[ms * n_eta + k];
        worst = std::max(worst, std::abs(vs.data[m * n_eta + k] - expect));
      }
    }
    add("stft_covariance", worst, 1e-10);
  }

  // |p_0|_{L2}^2 = pi by Simpson quadrature with analytic tail correction.
  {
    const double xmax = 1e4;
    const Index n = 2'000'000;  // even
    const double h = 2.0 * xmax / n;
    double sum = 0.0;
    for (Index i = 0; i <= n; ++i) {
      const double xi = -xmax + i * h;
      const double f = 1.0 / (1.0 + xi * xi);
      sum += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    const double integral = sum * h / 3.0 + 2.0 / xmax;
    add("p0_l2_norm", std::abs(integral - kPi) / kPi, 1e-6);
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    json j;
    j["all_pass"] = rep.all_pass;
    if (!rep.all_pass) j["first_failure"] = rep.first_failure;
    for (const auto& c : rep.checks)
      j["checks"].push_back({{"name", c.name},
                             {"measured", c.measured},
                             {"tolerance", c.tolerance},
                             {"pass", c.pass}});
    std::ofstream js(out_dir + "/stft_check.json");
    js << j.dump(2) << "\n";
  }
  return rep;
}

}  // namespace hkprop
