#ifndef HKPROP_SPLITSTEP_HPP
#define HKPROP_SPLITSTEP_HPP

#include "hkprop/potential.hpp"
#include "hkprop/wavegrid.hpp"

namespace hkprop {

/// Strang-splitting spectral propagator for
///   i eps d/dt psi = -(eps^2/2) Lap psi + V psi
/// on the periodic grid of psi0. Exactly unitary per step; global error
/// O(dt^2). Negative t_final propagates backwards. t_final = 0 returns
/// psi0 unchanged. Throws BoxTooSmallError once boundary mass exceeds
/// 1e-8 (the run monitors |psi| on the outermost cells, which should stay
/// below 1e-10 for a well-sized box).
WavefunctionGrid split_step_propagate(const Potential& V,
                                      const WavefunctionGrid& psi0,
                                      double t_final, double dt);

}  // namespace hkprop

#endif
