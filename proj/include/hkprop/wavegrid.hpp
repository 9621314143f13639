#ifndef HKPROP_WAVEGRID_HPP
#define HKPROP_WAVEGRID_HPP

#include <string>
#include <utility>
#include <vector>

#include "hkprop/types.hpp"

namespace hkprop {

/// Uniform periodic axis: samples at min + j*delta, j = 0..n-1, with
/// delta = (max - min)/n. n must be a power of two.
struct GridAxis {
  double min = 0.0;
  double max = 1.0;
  Index n = 0;
  double delta() const { return (max - min) / static_cast<double>(n); }
  bool operator==(const GridAxis& o) const {
    return min == o.min && max == o.max && n == o.n;
  }
};

/// Complex samples of a wavefunction on a uniform grid, together with the
/// semiclassical parameter eps.
struct WavefunctionGrid {
  Index d = 1;
  std::vector<GridAxis> axes;
  double eps = 1.0;
  CVec data;

  WavefunctionGrid() = default;
  WavefunctionGrid(std::vector<GridAxis> ax, double eps_);

  Index size() const { return data.size(); }
  RVec point(Index flat) const;
  double cell_volume() const;

  double l2_norm() const;
  void normalize();

  /// Tensor-product cubic (4-point Lagrange) interpolation; zero outside
  /// the sampled box.
  Complex interpolate(const RVec& x) const;

  /// True when x lies on a grid node (within tol*delta per axis); fills
  /// the flat index.
  bool on_node(const RVec& x, Index& flat, double tol = 1e-9) const;
};

/// Coherent state (pi eps)^{-d/4} exp(-|x-q0|^2/(2 eps)) exp(i p0.(x-q0)/eps).
WavefunctionGrid coherent_state(std::vector<GridAxis> axes, double eps,
                                const RVec& q0, const RVec& p0);

/// Discrete L2 distance; the grids (and eps) must match.
double l2_distance(const WavefunctionGrid& a, const WavefunctionGrid& b);

/// FFT wavenumbers for one axis in transform index order.
RVec fft_wavenumbers(const GridAxis& ax);

/// In-place forward/inverse DFT along one axis (inverse carries 1/n).
void fft_axis(CVec& data, const std::vector<GridAxis>& axes, Index axis,
              bool forward);
void fft_all(CVec& data, const std::vector<GridAxis>& axes, bool forward);

/// Spectral partial derivatives d/dx_j of the grid data.
std::vector<WavefunctionGrid> spectral_gradient(const WavefunctionGrid& g);

/// Smallest per-axis interval holding all but `rel_tail` of the |psi|^2
/// mass, in position / momentum (p = eps * k) space.
std::vector<std::pair<double, double>> position_extent(
    const WavefunctionGrid& g, double rel_tail = 1e-8);
std::vector<std::pair<double, double>> momentum_extent(
    const WavefunctionGrid& g, double rel_tail = 1e-8);

/// WFGRID01 container: magic, little-endian tag, d, per-axis (min, max, n),
/// eps, then interleaved (re, im) doubles in row-major order. A JSON
/// sidecar with the same metadata is written next to the binary.
void save_wfgrid(const WavefunctionGrid& g, const std::string& path);
WavefunctionGrid load_wfgrid(const std::string& path);

}  // namespace hkprop

#endif
