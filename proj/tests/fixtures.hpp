#ifndef HKPROP_TESTS_FIXTURES_HPP
#define HKPROP_TESTS_FIXTURES_HPP

#include <cmath>
#include <random>

#include "hkprop/symplectic.hpp"
#include "hkprop/trajectory.hpp"

namespace hkprop::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

/// Exactly symplectic random matrix: product of symplectic shears
/// [[I, S], [0, I]], [[I, 0], [S, I]] (S symmetric) and harmonic rotations.
inline SymplecticBlocks random_symplectic(Index d, std::mt19937_64& rng,
                                          int factors = 5) {
  RMat full = RMat::Identity(2 * d, 2 * d);
  for (int f = 0; f < factors; ++f) {
    RMat s = RMat::Zero(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j <= i; ++j) s(i, j) = s(j, i) = uniform(rng, -1.0, 1.0);
    RMat g = RMat::Identity(2 * d, 2 * d);
    switch (rng() % 3) {
      case 0:
        g.topRightCorner(d, d) = s;
        break;
      case 1:
        g.bottomLeftCorner(d, d) = s;
        break;
      default: {
        const double t = uniform(rng, -3.0, 3.0);
        g.topLeftCorner(d, d) = std::cos(t) * RMat::Identity(d, d);
        g.topRightCorner(d, d) = std::sin(t) * RMat::Identity(d, d);
        g.bottomLeftCorner(d, d) = -std::sin(t) * RMat::Identity(d, d);
        g.bottomRightCorner(d, d) = std::cos(t) * RMat::Identity(d, d);
      }
    }
    full = full * g;
  }
  return SymplecticBlocks::from_full(full);
}

/// Random complex symmetric Theta with positive definite real part.
inline CMat random_spreading(Index d, std::mt19937_64& rng) {
  RMat re = RMat::Zero(d, d), im = RMat::Zero(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j <= i; ++j) {
      re(i, j) = re(j, i) = uniform(rng, -0.4, 0.4);
      im(i, j) = im(j, i) = uniform(rng, -0.7, 0.7);
    }
  re += (0.8 + static_cast<double>(d)) * RMat::Identity(d, d);
  return re.cast<Complex>() + kImag * im.cast<Complex>();
}

/// Closed-form d = 1 flow data for the free particle and the unit
/// harmonic oscillator with Theta = 1.
struct ClosedFormFlow {
  bool harmonic = false;
  double t = 0.0;

  double X(double y, double e) const {
    return harmonic ? y * std::cos(t) + e * std::sin(t) : y + e * t;
  }
  double Xi(double y, double e) const {
    return harmonic ? -y * std::sin(t) + e * std::cos(t) : e;
  }
  double S(double y, double e) const {
    if (!harmonic) return 0.5 * e * e * t;
    return 0.25 * (e * e - y * y) * std::sin(2.0 * t) -
           0.5 * y * e * (1.0 - std::cos(2.0 * t));
  }
  SymplecticBlocks blocks() const {
    SymplecticBlocks f(1);
    if (harmonic) {
      f.A(0, 0) = std::cos(t);
      f.B(0, 0) = std::sin(t);
      f.C(0, 0) = -std::sin(t);
      f.D(0, 0) = std::cos(t);
    } else {
      f.B(0, 0) = t;
    }
    return f;
  }
  Complex u0() const {
    if (harmonic) return std::exp(Complex{0.0, -0.5 * t});
    // (1 - i t)^{1/2}, principal branch valid for all t >= 0.
    return std::sqrt(Complex{1.0, -t});
  }
};

/// Bundle filled from the closed forms (no integration), Theta = 1.
inline TrajectoryGridBundle closed_form_bundle(bool harmonic, double t,
                                               double y_lo, double y_hi,
                                               double e_lo, double e_hi,
                                               double spacing) {
  TrajectoryGridBundle b;
  b.d = 1;
  b.y_min = RVec::Constant(1, y_lo);
  b.y_max = RVec::Constant(1, y_hi);
  b.eta_min = RVec::Constant(1, e_lo);
  b.eta_max = RVec::Constant(1, e_hi);
  const auto fit = [&](double lo, double hi) {
    const Index cells = std::max<Index>(1, static_cast<Index>(std::ceil((hi - lo) / spacing - 1e-9)));
    return cells;
  };
  const Index cy = fit(y_lo, y_hi), ce = fit(e_lo, e_hi);
  b.dy = RVec::Constant(1, (y_hi - y_lo) / cy);
  b.deta = RVec::Constant(1, (e_hi - e_lo) / ce);
  b.ny = {cy + 1};
  b.neta = {ce + 1};
  b.times = {t};

  ClosedFormFlow flow{harmonic, t};
  std::vector<TrajectoryState> snap(b.node_count());
  for (Index m = 0; m < b.y_count(); ++m)
    for (Index k = 0; k < b.eta_count(); ++k) {
      const double y = b.y_at(m)[0], e = b.eta_at(k)[0];
      TrajectoryState st;
      st.t = t;
      st.X = RVec::Constant(1, flow.X(y, e));
      st.Xi = RVec::Constant(1, flow.Xi(y, e));
      st.S = flow.S(y, e);
      st.F = flow.blocks();
      st.theta = CMat::Identity(1, 1);
      st.u0 = flow.u0();
      st.u0_ode = st.u0;
      snap[b.node_index(m, k)] = std::move(st);
    }
  b.states = {std::move(snap)};
  return b;
}

}  // namespace hkprop::testing

#endif
