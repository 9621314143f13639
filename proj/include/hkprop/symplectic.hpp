#ifndef HKPROP_SYMPLECTIC_HPP
#define HKPROP_SYMPLECTIC_HPP

#include <functional>
#include <utility>
#include <vector>

#include "hkprop/errors.hpp"
#include "hkprop/types.hpp"

namespace hkprop {

/// Block form of the transposed-Jacobian of a canonical transformation
/// (X, Xi) of phase space,
///
///   F = [ A  B ]      A = dX/dq,   B = dX/dp,
///       [ C  D ]      C = dXi/dq,  D = dXi/dp,
///
/// stored so that F is symplectic (F^T J F = J) whenever the map is
/// canonical. At t = 0 of a flow, F is the identity.
struct SymplecticBlocks {
  RMat A, B, C, D;

  SymplecticBlocks() = default;
  explicit SymplecticBlocks(Index d)
      : A(RMat::Identity(d, d)),
        B(RMat::Zero(d, d)),
        C(RMat::Zero(d, d)),
        D(RMat::Identity(d, d)) {}

  Index dim() const { return A.rows(); }

  RMat to_full() const;
  static SymplecticBlocks from_full(const RMat& F);
};

/// Complex symmetric spreading matrix with positive definite real part.
/// Either constant or a (y, eta)-field with a uniform positive floor.
class SpreadingMatrix {
 public:
  using FieldFn = std::function<CMat(const RVec& y, const RVec& eta)>;

  static SpreadingMatrix constant(const CMat& theta);
  static SpreadingMatrix field(Index d, FieldFn fn, const RMat& floor);
  static SpreadingMatrix identity(Index d) {
    return constant(CMat::Identity(d, d));
  }

  Index dim() const { return dim_; }
  bool is_constant() const { return !field_fn_; }

  /// Value at a phase-space point (a constant matrix ignores the point).
  CMat eval(const RVec& y, const RVec& eta) const;

  /// Constant value; throws if this is a genuine field.
  const CMat& constant_value() const;

  /// Uniform floor Theta0 for the real part (identity-scaled default for
  /// constant matrices is the matrix's own real part).
  const RMat& floor() const { return floor_; }

  /// Checks symmetry and Re >= floor at the given sample points.
  void validate_samples(const std::vector<std::pair<RVec, RVec>>& pts) const;

 private:
  SpreadingMatrix() = default;
  Index dim_ = 0;
  CMat constant_;
  FieldFn field_fn_;
  RMat floor_;
};

/// Throws InvalidSpreadingError unless theta is complex symmetric with
/// positive definite real part (smallest eigenvalue > tol).
void check_admissible(const CMat& theta, double tol = 1e-12);

/// Continuous-argument state for the square root of det Y along one
/// trajectory. Owned by a single integration strand.
struct BranchTracker {
  double unwrapped_arg = 0.0;
  Complex last_det{1.0, 0.0};

  /// Seeds from the initial matrix with the principal branch.
  static BranchTracker seed(const CMat& y0);
};

/// Max-norm of F^T J F - J; zero (up to rounding) iff F is symplectic.
double symplectic_defect(const SymplecticBlocks& F);

/// Y(F; Theta) = D^T - i B^T Theta. Invertible for symplectic F whenever
/// Re Theta is positive definite.
CMat prefactor_matrix(const SymplecticBlocks& F, const CMat& theta);

/// [C^T - i A^T Theta] Y(F; Theta)^{-1}; throws NumericalDegeneracyError
/// when the prefactor matrix's condition number exceeds 1e12 (a symptom of
/// symplecticity loss upstream).
CMat eta_elimination_matrix(const SymplecticBlocks& F, const CMat& theta);

/// 2d x d factor V with Y (Re Theta)^{-1} Y^* = V^* V, certifying the
/// invertibility of the prefactor matrix:
///
///   V = [ (Re Theta)^{-1/2} Im Theta   (Re Theta)^{-1/2} ] [ B ]
///       [ (Re Theta)^{1/2}             0                 ] [ D ]
CMat gram_factor_matrix(const SymplecticBlocks& F, const CMat& theta);

/// Square root of a real symmetric positive definite matrix via
/// eigendecomposition; eigenvalues below 1e-12 are rejected.
RMat real_sqrt_pd(const RMat& m);

/// Max-norm residual of Y (Re Theta)^{-1} Y^* - V^* V, the identity that
/// certifies invertibility of the prefactor matrix.
double gram_identity_residual(const SymplecticBlocks& F, const CMat& theta);

/// Time-continuous square root of det Y. Updates the tracker and returns
/// |det Y|^{1/2} exp(i * unwrapped/2). The per-step argument change must
/// stay below pi/2, otherwise StepTooLargeError asks the caller to refine.
Complex branch_sqrt_det(BranchTracker& tracker, const CMat& y);

}  // namespace hkprop

#endif
