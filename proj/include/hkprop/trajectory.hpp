#ifndef HKPROP_TRAJECTORY_HPP
#define HKPROP_TRAJECTORY_HPP

#include <iosfwd>
#include <vector>

#include "hkprop/potential.hpp"
#include "hkprop/symplectic.hpp"
#include "hkprop/types.hpp"

namespace hkprop {

struct PhasePoint {
  RVec q;
  RVec p;
};

struct StepControl {
  double dt = 1e-3;        ///< nominal RK4 step
  int max_halvings = 20;   ///< refinement budget when the branch guard trips
  double energy_tol = 1e-8;
};

/// One trajectory of the classical flow together with its variational
/// (monodromy) data, action, and leading-order prefactor.
struct TrajectoryState {
  double t = 0.0;
  RVec X;              ///< flowed position
  RVec Xi;             ///< flowed momentum
  double S = 0.0;      ///< classical action integral
  SymplecticBlocks F;  ///< transposed-Jacobian blocks of the flow
  CMat theta;          ///< spreading matrix frozen at the initial point
  Complex u0{1.0, 0.0};      ///< branch-continuous sqrt(det Y); drives the engine
  Complex u0_ode{1.0, 0.0};  ///< same prefactor from its transport ODE (cross-check)
  BranchTracker tracker;

  CMat prefactor() const { return prefactor_matrix(F, theta); }
  double defect() const { return symplectic_defect(F); }
  double energy(const Potential& V) const {
    return 0.5 * Xi.squaredNorm() + V.value(X);
  }
};

/// Initial state at (q, p) with the given spreading value.
TrajectoryState initial_state(const PhasePoint& z0, const CMat& theta_val);

/// Integrates flow + variational equations + action + prefactor with
/// classic fixed-step RK4, returning one state per requested time.
/// `times` must start at 0 and be sorted. The branch-continuity guard
/// triggers automatic step halving, up to step.max_halvings levels.
std::vector<TrajectoryState> integrate_trajectory(
    const Potential& V, const PhasePoint& z0, const SpreadingMatrix& theta,
    const std::vector<double>& times, const StepControl& step = {});

/// Rectangular phase-space lattice of trajectories. Node (iy, ieta) starts
/// at (y_min + iy .* dy, eta_min + ieta .* deta); axis indices are
/// row-major, y-block major over the eta block.
struct TrajectoryGridBundle {
  Index d = 1;
  RVec y_min, y_max, eta_min, eta_max;
  RVec dy, deta;
  std::vector<Index> ny, neta;  ///< points per axis
  std::vector<double> times;
  /// states[time_index][node_index]
  std::vector<std::vector<TrajectoryState>> states;

  Index y_count() const;
  Index eta_count() const;
  Index node_count() const { return y_count() * eta_count(); }

  RVec y_at(Index y_flat) const;
  RVec eta_at(Index eta_flat) const;
  Index node_index(Index y_flat, Index eta_flat) const {
    return y_flat * eta_count() + eta_flat;
  }

  double cell_volume() const;  ///< dy^d * deta^d
};

/// Per-node integrate_trajectory over the lattice; nodes are independent
/// and may run in parallel. Spacings are adjusted (down) so the lattice
/// covers the box exactly; failures carry the node coordinates.
TrajectoryGridBundle integrate_bundle(const Potential& V, const RVec& y_min,
                                      const RVec& y_max, const RVec& eta_min,
                                      const RVec& eta_max, const RVec& dy,
                                      const RVec& deta,
                                      const SpreadingMatrix& theta,
                                      const std::vector<double>& times,
                                      const StepControl& step = {},
                                      int threads = 1);

/// Max discrepancy between finite-difference gradients of the action and
/// the closed forms S_q = -p + A^T Xi, S_p = B^T Xi.
double action_gradient_check(const Potential& V, const PhasePoint& z0,
                             double t, const StepControl& step = {},
                             double delta = 1e-4);

/// CSV dump: t, X..., Xi..., S, Re u0, Im u0, defect.
void dump_trajectory_csv(const std::vector<TrajectoryState>& states,
                         std::ostream& os);

}  // namespace hkprop

#endif
