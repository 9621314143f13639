#include "hkprop/trajectory.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "hkprop/errors.hpp"
#include "hkprop/parallel.hpp"

namespace hkprop {

namespace {

/// Raw ODE state advanced by RK4: flow, blocks, action, prefactor ODE.
struct Core {
  RVec X, Xi;
  double S;
  RMat A, B, C, D;
  Complex u0_ode;
};

struct CoreDeriv {
  RVec dX, dXi;
  double dS;
  RMat dA, dB, dC, dD;
  Complex du0;
};

CoreDeriv rhs(const Potential& V, const CMat& theta, const Core& s) {
  CoreDeriv d;
  const RVec grad = V.gradient(s.X);
  const RMat hess = V.hessian(s.X);
  d.dX = s.Xi;
  d.dXi = -grad;
  d.dS = 0.5 * s.Xi.squaredNorm() - V.value(s.X);
  d.dA = s.C;
  d.dB = s.D;
  d.dC = -hess * s.A;
  d.dD = -hess * s.B;
  // dY/dt = (dD/dt)^T - i (dB/dt)^T Theta with dD/dt = -Hess B, dB/dt = D,
  // assembled analytically to avoid order reduction in the prefactor ODE.
  const CMat y = s.D.transpose().cast<Complex>() -
                 kImag * (s.B.transpose().cast<Complex>() * theta);
  const CMat ydot = (-(s.B.transpose() * hess)).cast<Complex>() -
                    kImag * (s.D.transpose().cast<Complex>() * theta);
  d.du0 = 0.5 * y.partialPivLu().solve(ydot).trace() * s.u0_ode;
  return d;
}

Core axpy(const Core& s, double h, const CoreDeriv& d) {
  Core r;
  r.X = s.X + h * d.dX;
  r.Xi = s.Xi + h * d.dXi;
  r.S = s.S + h * d.dS;
  r.A = s.A + h * d.dA;
  r.B = s.B + h * d.dB;
  r.C = s.C + h * d.dC;
  r.D = s.D + h * d.dD;
  r.u0_ode = s.u0_ode + h * d.du0;
  return r;
}

Core rk4_step(const Potential& V, const CMat& theta, const Core& s, double h) {
  const CoreDeriv k1 = rhs(V, theta, s);
  const CoreDeriv k2 = rhs(V, theta, axpy(s, 0.5 * h, k1));
  const CoreDeriv k3 = rhs(V, theta, axpy(s, 0.5 * h, k2));
  const CoreDeriv k4 = rhs(V, theta, axpy(s, h, k3));
  Core r;
  const double w = h / 6.0;
  r.X = s.X + w * (k1.dX + 2.0 * k2.dX + 2.0 * k3.dX + k4.dX);
  r.Xi = s.Xi + w * (k1.dXi + 2.0 * k2.dXi + 2.0 * k3.dXi + k4.dXi);
  r.S = s.S + w * (k1.dS + 2.0 * k2.dS + 2.0 * k3.dS + k4.dS);
  r.A = s.A + w * (k1.dA + 2.0 * k2.dA + 2.0 * k3.dA + k4.dA);
  r.B = s.B + w * (k1.dB + 2.0 * k2.dB + 2.0 * k3.dB + k4.dB);
  r.C = s.C + w * (k1.dC + 2.0 * k2.dC + 2.0 * k3.dC + k4.dC);
  r.D = s.D + w * (k1.dD + 2.0 * k2.dD + 2.0 * k3.dD + k4.dD);
  r.u0_ode = s.u0_ode + w * (k1.du0 + 2.0 * k2.du0 + 2.0 * k3.du0 + k4.du0);
  return r;
}

CMat prefactor_of(const Core& s, const CMat& theta) {
  return s.D.transpose().cast<Complex>() -
         kImag * (s.B.transpose().cast<Complex>() * theta);
}

/// Advances by h; on a branch-guard trip retries with two half steps,
/// recursing down to the halving budget.
void advance(const Potential& V, const CMat& theta, Core& s,
             BranchTracker& tracker, Complex& u0_branch, double h, int budget) {
  const Core trial = rk4_step(V, theta, s, h);
  BranchTracker tr = tracker;
  try {
    u0_branch = branch_sqrt_det(tr, prefactor_of(trial, theta));
  } catch (const StepTooLargeError&) {
    if (budget <= 0)
      throw IntegrationAccuracyError(
          "branch guard still violated after exhausting step halvings");
    advance(V, theta, s, tracker, u0_branch, 0.5 * h, budget - 1);
    advance(V, theta, s, tracker, u0_branch, 0.5 * h, budget - 1);
    return;
  }
  s = trial;
  tracker = tr;
}

}  // namespace

TrajectoryState initial_state(const PhasePoint& z0, const CMat& theta_val) {
  if (!z0.q.allFinite() || !z0.p.allFinite())
    throw InvalidInputError("phase point has non-finite entries");
  TrajectoryState st;
  st.t = 0.0;
  st.X = z0.q;
  st.Xi = z0.p;
  st.S = 0.0;
  st.F = SymplecticBlocks(z0.q.size());
  st.theta = theta_val;
  // Y(I; Theta) = I for any Theta, so both prefactor routes start at 1.
  st.u0 = Complex{1.0, 0.0};
  st.u0_ode = Complex{1.0, 0.0};
  st.tracker = BranchTracker::seed(CMat::Identity(z0.q.size(), z0.q.size()));
  return st;
}

std::vector<TrajectoryState> integrate_trajectory(
    const Potential& V, const PhasePoint& z0, const SpreadingMatrix& theta,
    const std::vector<double>& times, const StepControl& step) {
  if (times.empty() || times.front() != 0.0)
    throw InvalidInputError("times must start at 0");
  if (step.dt <= 0.0) throw InvalidInputError("step.dt must be positive");

  const CMat theta_val = theta.eval(z0.q, z0.p);
  check_admissible(theta_val);

  TrajectoryState st = initial_state(z0, theta_val);
  const double e0 = st.energy(V);

  Core core{st.X, st.Xi, st.S, st.F.A, st.F.B, st.F.C, st.F.D, st.u0_ode};
  BranchTracker tracker = st.tracker;
  Complex u0_branch{1.0, 0.0};

  std::vector<TrajectoryState> out;
  out.reserve(times.size());
  out.push_back(st);

  double t = 0.0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double target = times[k];
    if (target < t) throw InvalidInputError("times must be sorted");
    const double span = target - t;
    const int nsteps = std::max(1, static_cast<int>(std::ceil(span / step.dt - 1e-12)));
    const double h = span / nsteps;
    for (int i = 0; i < nsteps; ++i)
      advance(V, theta_val, core, tracker, u0_branch, h, step.max_halvings);
    t = target;

    TrajectoryState snap;
    snap.t = t;
    snap.X = core.X;
    snap.Xi = core.Xi;
    snap.S = core.S;
    snap.F.A = core.A;
    snap.F.B = core.B;
    snap.F.C = core.C;
    snap.F.D = core.D;
    snap.theta = theta_val;
    snap.u0 = u0_branch;
    snap.u0_ode = core.u0_ode;
    snap.tracker = tracker;

    const double e = snap.energy(V);
    if (std::abs(e - e0) > step.energy_tol * (1.0 + std::abs(e0)))
      throw IntegrationAccuracyError("energy drift beyond tolerance");
    out.push_back(std::move(snap));
  }
  return out;
}

Index TrajectoryGridBundle::y_count() const {
  Index n = 1;
  for (Index v : ny) n *= v;
  return n;
}

Index TrajectoryGridBundle::eta_count() const {
  Index n = 1;
  for (Index v : neta) n *= v;
  return n;
}

RVec TrajectoryGridBundle::y_at(Index y_flat) const {
  RVec y(d);
  for (Index ax = d - 1; ax >= 0; --ax) {
    const Index i = y_flat % ny[ax];
    y_flat /= ny[ax];
    y[ax] = y_min[ax] + i * dy[ax];
  }
  return y;
}

RVec TrajectoryGridBundle::eta_at(Index eta_flat) const {
  RVec e(d);
  for (Index ax = d - 1; ax >= 0; --ax) {
    const Index i = eta_flat % neta[ax];
    eta_flat /= neta[ax];
    e[ax] = eta_min[ax] + i * deta[ax];
  }
  return e;
}

double TrajectoryGridBundle::cell_volume() const {
  double v = 1.0;
  for (Index ax = 0; ax < d; ++ax) v *= dy[ax] * deta[ax];
  return v;
}

TrajectoryGridBundle integrate_bundle(const Potential& V, const RVec& y_min,
                                      const RVec& y_max, const RVec& eta_min,
                                      const RVec& eta_max, const RVec& dy,
                                      const RVec& deta,
                                      const SpreadingMatrix& theta,
                                      const std::vector<double>& times,
                                      const StepControl& step, int threads) {
  const Index d = y_min.size();
  if ((dy.array() <= 0.0).any() || (deta.array() <= 0.0).any())
    throw InvalidInputError("lattice spacings must be positive");
  if (((y_max - y_min).array() < 0.0).any() ||
      ((eta_max - eta_min).array() < 0.0).any())
    throw InvalidInputError("lattice box is empty");

  TrajectoryGridBundle b;
  b.d = d;
  b.y_min = y_min;
  b.y_max = y_max;
  b.eta_min = eta_min;
  b.eta_max = eta_max;
  b.dy = RVec(d);
  b.deta = RVec(d);
  b.ny.resize(d);
  b.neta.resize(d);
  // Snap each spacing down so the lattice endpoints land on the box edges.
  for (Index ax = 0; ax < d; ++ax) {
    const auto fit = [](double lo, double hi, double h, double& h_out) {
      const double span = hi - lo;
      if (span == 0.0) {
        h_out = h;
        return Index{1};
      }
      const Index cells = std::max<Index>(1, static_cast<Index>(std::ceil(span / h - 1e-9)));
      h_out = span / cells;
      return cells + 1;
    };
    b.ny[ax] = fit(y_min[ax], y_max[ax], dy[ax], b.dy[ax]);
    b.neta[ax] = fit(eta_min[ax], eta_max[ax], deta[ax], b.deta[ax]);
  }
  b.times = times;

  const Index n_nodes = b.node_count();
  const Index n_eta = b.eta_count();
  b.states.assign(times.size(), std::vector<TrajectoryState>(n_nodes));

  std::vector<std::string> failures(n_nodes);
  parallel_for(n_nodes, threads, [&](std::size_t node) {
    const Index y_flat = static_cast<Index>(node) / n_eta;
    const Index e_flat = static_cast<Index>(node) % n_eta;
    const PhasePoint z0{b.y_at(y_flat), b.eta_at(e_flat)};
    try {
      auto traj = integrate_trajectory(V, z0, theta, times, step);
      for (std::size_t k = 0; k < times.size(); ++k)
        b.states[k][node] = std::move(traj[k]);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "node (y=" << z0.q.transpose() << ", eta=" << z0.p.transpose()
         << "): " << e.what();
      failures[node] = os.str();
    }
  });
  for (const auto& f : failures)
    if (!f.empty()) throw IntegrationAccuracyError(f);
  return b;
}

double action_gradient_check(const Potential& V, const PhasePoint& z0,
                             double t, const StepControl& step, double delta) {
  const Index d = z0.q.size();
  const SpreadingMatrix theta = SpreadingMatrix::identity(d);
  const std::vector<double> times{0.0, t};
  const auto center = integrate_trajectory(V, z0, theta, times, step).back();

  const auto action_at = [&](const RVec& q, const RVec& p) {
    return integrate_trajectory(V, {q, p}, theta, times, step).back().S;
  };

  // Closed forms under the transposed-Jacobian convention:
  //   dS/dq_j = -p_j + sum_k (dX_k/dq_j) Xi_k = (-p + A^T Xi)_j
  //   dS/dp_j = (B^T Xi)_j
  const RVec sq = -z0.p + center.F.A.transpose() * center.Xi;
  const RVec sp = center.F.B.transpose() * center.Xi;

  double worst = 0.0;
  for (Index j = 0; j < d; ++j) {
    RVec qp = z0.q, qm = z0.q;
    qp[j] += delta;
    qm[j] -= delta;
    const double fdq = (action_at(qp, z0.p) - action_at(qm, z0.p)) / (2.0 * delta);
    worst = std::max(worst, std::abs(fdq - sq[j]));

    RVec pp = z0.p, pm = z0.p;
    pp[j] += delta;
    pm[j] -= delta;
    const double fdp = (action_at(z0.q, pp) - action_at(z0.q, pm)) / (2.0 * delta);
    worst = std::max(worst, std::abs(fdp - sp[j]));
  }
  return worst;
}

void dump_trajectory_csv(const std::vector<TrajectoryState>& states,
                         std::ostream& os) {
  if (states.empty()) return;
  const Index d = states.front().X.size();
  os << "# hkprop-trajectory-v1\nt";
  for (Index j = 0; j < d; ++j) os << ",X" << j;
  for (Index j = 0; j < d; ++j) os << ",Xi" << j;
  os << ",S,re_u0,im_u0,defect\n";
  char buf[64];
  const auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof(buf), "%.17g%c", v, sep);
    os << buf;
  };
  for (const auto& s : states) {
    put(s.t, ',');
    for (Index j = 0; j < d; ++j) put(s.X[j], ',');
    for (Index j = 0; j < d; ++j) put(s.Xi[j], ',');
    put(s.S, ',');
    put(s.u0.real(), ',');
    put(s.u0.imag(), ',');
    put(s.defect(), '\n');
  }
}

}  // namespace hkprop
