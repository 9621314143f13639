#ifndef HKPROP_FIO_HPP
#define HKPROP_FIO_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hkprop/trajectory.hpp"
#include "hkprop/types.hpp"
#include "hkprop/wavegrid.hpp"

namespace hkprop {

/// Schwartz cutoff sigma(eta/lambda) regularizing the oscillatory
/// integral. Both families are exactly 1 on |eta| <= lambda/2 and roll
/// off beyond: "gaussian" with a Gaussian-profile tail, "bump" with
/// compact support in |eta| <= lambda. sigma(0) = 1 for both.
struct Mollifier {
  enum class Kind { None, Gaussian, Bump };
  Kind kind = Kind::None;
  double lambda = 1.0;

  static Mollifier none() { return {}; }
  static Mollifier gaussian(double lambda) { return {Kind::Gaussian, lambda}; }
  static Mollifier bump(double lambda) { return {Kind::Bump, lambda}; }

  double eval(const RVec& eta) const;
};

/// Phase-space quadrature lattice: box, spacings, mollifier.
struct QuadratureSpec {
  RVec y_min, y_max, eta_min, eta_max;
  RVec dy, deta;
  Mollifier mollifier;

  /// Spec matching an integrated bundle's lattice exactly.
  static QuadratureSpec match(const TrajectoryGridBundle& b,
                              Mollifier m = Mollifier::none());

  /// Throws GridMismatchError unless the bundle lattice realizes this box
  /// and spacing (tolerance 1e-9).
  void require_matches(const TrajectoryGridBundle& b) const;
};

/// Symbol of the oscillatory integral.
struct FIOSymbol {
  enum class Kind {
    One,            ///< u == 1 (identity normalization)
    HK,             ///< u = branch-continuous sqrt(det Y) from the trajectory
    PerNode,        ///< arbitrary x-independent values, one per lattice node
    PolynomialTest  ///< u = [V(x,y,eta) . (x - X)] * w(y,eta)
  };
  Kind kind = Kind::One;
  CVec node_values;
  std::function<CVec(const RVec& x, const RVec& y, const RVec& eta)> poly_V;
  std::function<Complex(const RVec& y, const RVec& eta)> poly_w;

  static FIOSymbol one() { return {}; }
  static FIOSymbol hk() { return {Kind::HK, {}, nullptr, nullptr}; }
  static FIOSymbol per_node(CVec values) {
    return {Kind::PerNode, std::move(values), nullptr, nullptr};
  }
  static FIOSymbol polynomial_test(
      std::function<CVec(const RVec&, const RVec&, const RVec&)> V,
      std::function<Complex(const RVec&, const RVec&)> w) {
    return {Kind::PolynomialTest, {}, std::move(V), std::move(w)};
  }
};

struct FioOptions {
  int threads = 1;
  std::vector<std::string>* warnings = nullptr;  ///< coverage diagnostics sink
};

/// Complex phase S + Xi.(x - X) + (i/2)(x - X).Theta(x - X) at one node.
/// Its imaginary part is nonnegative since Re Theta > 0.
Complex fio_phase(const RVec& x, const TrajectoryState& node);

/// Evaluates the oscillatory sum
///   out(x) = (2 pi eps)^{-d} sum_nodes e^{i Phi/eps} u phi~(y) sigma(eta/lambda) dy^d deta^d
/// on the requested output axes. phi~ is a cubic interpolant of phi at the
/// lattice nodes. Deterministic: output points run in parallel, the
/// per-point node sum uses a fixed-order pairwise reduction.
WavefunctionGrid apply_fio(const TrajectoryGridBundle& bundle,
                           std::size_t time_index, const FIOSymbol& symbol,
                           const WavefunctionGrid& phi,
                           const std::vector<GridAxis>& out_axes,
                           const QuadratureSpec& quad,
                           const FioOptions& opt = {});

/// L2 discrepancy between the direct eps-evaluation and the unitarily
/// rescaled eps = 1 evaluation of the same operator.
double rescaling_check(const TrajectoryGridBundle& bundle,
                       std::size_t time_index, const FIOSymbol& symbol,
                       const WavefunctionGrid& phi, const QuadratureSpec& quad,
                       const FioOptions& opt = {});

/// Test data for the integration-by-parts identities. V and w are smooth
/// closed forms (x-independent); optional closed-form divergences bypass
/// the lattice finite-difference stencils.
struct IppForms {
  std::function<CVec(const RVec& y, const RVec& eta)> V;
  std::function<Complex(const RVec& y, const RVec& eta)> w;
  /// div_eta[w Y^{-T} V] for ipp_residual, evaluated at a node.
  std::function<Complex(const TrajectoryState&, const RVec& y, const RVec& eta)>
      closed_rhs;
  /// div_y[w V] - div_eta[w A^T V] for ipp2_residual (A the eta-elimination
  /// matrix), evaluated at a node.
  std::function<Complex(const TrajectoryState&, const RVec& y, const RVec& eta)>
      closed_rhs2;
};

/// Residual of I(kappa; V.(x - X) w) = i eps I(kappa; div_eta[w Y^{-T} V]),
/// relative to max(|LHS|, |RHS|, eps |phi|). Without closed forms the
/// divergence uses 4th-order central differences across lattice neighbours
/// (ShrinkDomainError when the stencil would leave the lattice through
/// non-negligible field values).
double ipp_residual(const TrajectoryGridBundle& bundle, std::size_t time_index,
                    const IppForms& forms, const WavefunctionGrid& phi,
                    const QuadratureSpec& quad, const FioOptions& opt = {});

/// Residual of the eta-weight identity
///   I(kappa; V.eta w) phi = -i eps [ I(kappa; div_y[w V] - div_eta[w A^T V]) phi
///                                   + sum_j I(kappa; w V_j) d_j phi ].
/// The gradient term appears because the y-divergence acts on the full
/// amplitude including the wavefunction factor.
double ipp2_residual(const TrajectoryGridBundle& bundle, std::size_t time_index,
                     const IppForms& forms, const WavefunctionGrid& phi,
                     const QuadratureSpec& quad, const FioOptions& opt = {});

/// L2 differences between the gaussian- and bump-mollified evaluations,
/// one entry per lambda (increasing lambda expected to drive them to 0).
std::vector<double> mollifier_independence(const TrajectoryGridBundle& bundle,
                                           std::size_t time_index,
                                           const FIOSymbol& symbol,
                                           const WavefunctionGrid& phi,
                                           const QuadratureSpec& quad,
                                           const std::vector<double>& lambdas,
                                           const FioOptions& opt = {});

struct OperatorNormScan {
  double min_ratio = 0.0;
  double max_ratio = 0.0;
};

/// Empirical lower bound on the L2 operator norm: max over random
/// normalized coherent states (centers inside the quadrature box shrunk by
/// 5 sqrt(eps)) of |I phi| / |phi|.
OperatorNormScan empirical_operator_norm(const TrajectoryGridBundle& bundle,
                                         std::size_t time_index,
                                         const FIOSymbol& symbol,
                                         const std::vector<GridAxis>& phi_axes,
                                         double eps, int trials,
                                         std::uint64_t seed,
                                         const QuadratureSpec& quad,
                                         const FioOptions& opt = {});

}  // namespace hkprop

#endif
