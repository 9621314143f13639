#ifndef HKPROP_STFT_HPP
#define HKPROP_STFT_HPP

#include <functional>
#include <iosfwd>
#include <vector>

#include "hkprop/types.hpp"
#include "hkprop/wavegrid.hpp"

namespace hkprop {

/// Window for the short-time Fourier transform: either a plain grid
/// function, or a Gaussian exp(-x.Theta x/2) modulated by a bounded factor
/// gtilde(x, y, eta).
struct Window {
  enum class Kind { Plain, Generalized };
  Kind kind = Kind::Plain;
  CVec plain;  ///< samples on the signal's grid
  CMat theta;
  std::function<Complex(const RVec& x, const RVec& y, const RVec& eta)> gtilde;

  static Window plain_samples(CVec g) {
    Window w;
    w.kind = Kind::Plain;
    w.plain = std::move(g);
    return w;
  }
  static Window generalized(
      CMat theta,
      std::function<Complex(const RVec&, const RVec&, const RVec&)> gtilde);
};

/// Transform values on the (y, eta) lattice: y on the signal grid, eta on
/// the discrete Fourier wavenumber lattice (transform index order).
struct StftResult {
  Index d = 1;
  std::vector<GridAxis> y_axes;
  std::vector<RVec> eta_values;  ///< per axis, FFT index order
  CVec data;                     ///< index = y_flat * eta_count + eta_flat

  Index y_count() const;
  Index eta_count() const;
  RVec y_at(Index y_flat) const;
  RVec eta_at(Index eta_flat) const;
  double cell_volume() const;  ///< dy^d * deta^d
  double l2_norm() const;
};

/// Discrete short-time Fourier transform with a plain window,
///   V[f](y, eta) = (2 pi)^{-d/2} sum_x e^{-i eta.x} f(x) conj(g(x - y)) dx^d,
/// with periodic wrap of the window; this makes the Parseval identity
/// |V| = |f| |g| exact on the grid.
StftResult stft(const WavefunctionGrid& f, const Window& g, int threads = 1);

/// Generalized transform with an (y, eta)-dependent Gaussian window,
/// evaluated directly (no wrap; the Gaussian tail must fit the box).
StftResult stft_generalized(const WavefunctionGrid& f, const Window& g,
                            int threads = 1);

/// p_delta(xi) = prod_j (1 - i xi_j)^{-(1 + delta_j)}, delta_j in {0, 1}.
Complex p_delta(const RVec& xi, const std::vector<int>& delta);

/// CSV dump: y..., eta..., re, im.
void write_stft_csv(const StftResult& r, std::ostream& os);

}  // namespace hkprop

#endif
