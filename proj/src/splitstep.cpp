#include "hkprop/splitstep.hpp"

#include <cmath>
#include <vector>

#include "hkprop/errors.hpp"

namespace hkprop {

WavefunctionGrid split_step_propagate(const Potential& V,
                                      const WavefunctionGrid& psi0,
                                      double t_final, double dt) {
  if (t_final == 0.0) return psi0;
  if (!(dt > 0.0)) throw InvalidInputError("dt must be positive");

  const Index total = psi0.size();
  const int nsteps =
      std::max(1, static_cast<int>(std::ceil(std::abs(t_final) / dt - 1e-12)));
  const double h = t_final / nsteps;
  const double eps = psi0.eps;

  // Half-step potential phase and full-step kinetic phase, precomputed.
  CVec vphase(total);
  for (Index i = 0; i < total; ++i) {
    const double ph = -0.5 * h * V.value(psi0.point(i)) / eps;
    vphase[i] = Complex{std::cos(ph), std::sin(ph)};
  }
  RVec k2 = RVec::Zero(total);
  {
    Index inner = 1;
    for (Index ax = psi0.d - 1; ax >= 0; --ax) {
      const RVec k = fft_wavenumbers(psi0.axes[ax]);
      for (Index i = 0; i < total; ++i) {
        const Index m = (i / inner) % psi0.axes[ax].n;
        k2[i] += k[m] * k[m];
      }
      inner *= psi0.axes[ax].n;
    }
  }
  CVec kphase(total);
  for (Index i = 0; i < total; ++i) {
    const double ph = -0.5 * h * eps * k2[i];
    kphase[i] = Complex{std::cos(ph), std::sin(ph)};
  }

  // Flat indices of the outermost cell layer, for the boundary monitor.
  std::vector<Index> boundary;
  for (Index i = 0; i < total; ++i) {
    Index rem = i;
    for (Index ax = psi0.d - 1; ax >= 0; --ax) {
      const Index m = rem % psi0.axes[ax].n;
      rem /= psi0.axes[ax].n;
      if (m == 0 || m == psi0.axes[ax].n - 1) {
        boundary.push_back(i);
        break;
      }
    }
  }

  WavefunctionGrid psi = psi0;
  for (int s = 0; s < nsteps; ++s) {
    psi.data.array() *= vphase.array();
    fft_all(psi.data, psi.axes, true);
    psi.data.array() *= kphase.array();
    fft_all(psi.data, psi.axes, false);
    psi.data.array() *= vphase.array();

    double edge = 0.0;
    for (const Index i : boundary) edge = std::max(edge, std::abs(psi.data[i]));
    if (edge > 1e-8)
      throw BoxTooSmallError("wavepacket reached the periodic box boundary");
  }
  return psi;
}

}  // namespace hkprop
