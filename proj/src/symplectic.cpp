#include "hkprop/symplectic.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>

namespace hkprop {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_to_pi(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a > kPi) a -= 2.0 * kPi;
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

void require_finite(const RMat& m, const char* what) {
  if (!m.allFinite()) throw InvalidInputError(std::string(what) + ": non-finite entries");
}

}  // namespace

RMat SymplecticBlocks::to_full() const {
  const Index d = dim();
  RMat F(2 * d, 2 * d);
  F.topLeftCorner(d, d) = A;
  F.topRightCorner(d, d) = B;
  F.bottomLeftCorner(d, d) = C;
  F.bottomRightCorner(d, d) = D;
  return F;
}

SymplecticBlocks SymplecticBlocks::from_full(const RMat& F) {
  const Index d = F.rows() / 2;
  SymplecticBlocks b(d);
  b.A = F.topLeftCorner(d, d);
  b.B = F.topRightCorner(d, d);
  b.C = F.bottomLeftCorner(d, d);
  b.D = F.bottomRightCorner(d, d);
  return b;
}

void check_admissible(const CMat& theta, double tol) {
  if (theta.rows() != theta.cols())
    throw InvalidSpreadingError("spreading matrix must be square");
  if (!theta.allFinite())
    throw InvalidSpreadingError("spreading matrix has non-finite entries");
  // Complex symmetric (not Hermitian): Theta == Theta^T entrywise.
  const double asym = (theta - theta.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * (1.0 + theta.cwiseAbs().maxCoeff()))
    throw InvalidSpreadingError("spreading matrix is not complex symmetric");
  const RMat re = theta.real();
  Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (re + re.transpose()));
  if (es.eigenvalues().minCoeff() <= tol)
    throw InvalidSpreadingError("admissible spreading violated: Re Theta is not positive definite");
}

SpreadingMatrix SpreadingMatrix::constant(const CMat& theta) {
  check_admissible(theta);
  SpreadingMatrix s;
  s.dim_ = theta.rows();
  s.constant_ = theta;
  s.floor_ = theta.real();
  return s;
}

SpreadingMatrix SpreadingMatrix::field(Index d, FieldFn fn, const RMat& floor) {
  Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (floor + floor.transpose()));
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw InvalidSpreadingError("spreading floor must be positive definite");
  SpreadingMatrix s;
  s.dim_ = d;
  s.field_fn_ = std::move(fn);
  s.floor_ = floor;
  return s;
}

CMat SpreadingMatrix::eval(const RVec& y, const RVec& eta) const {
  if (is_constant()) return constant_;
  return field_fn_(y, eta);
}

const CMat& SpreadingMatrix::constant_value() const {
  if (!is_constant()) throw InvalidInputError("spreading matrix is a field, not constant");
  return constant_;
}

void SpreadingMatrix::validate_samples(
    const std::vector<std::pair<RVec, RVec>>& pts) const {
  for (const auto& [y, eta] : pts) {
    const CMat th = eval(y, eta);
    check_admissible(th);
    Eigen::SelfAdjointEigenSolver<RMat> es(th.real() - floor_);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw InvalidSpreadingError("spreading field dips below its declared floor");
  }
}

double symplectic_defect(const SymplecticBlocks& F) {
  require_finite(F.A, "A");
  require_finite(F.B, "B");
  require_finite(F.C, "C");
  require_finite(F.D, "D");
  // F^T J F - J in blocks:
  //   [ A^T C - C^T A        A^T D - C^T B - I ]
  //   [ B^T C - D^T A + I    B^T D - D^T B     ]
  const Index d = F.dim();
  const RMat m11 = F.A.transpose() * F.C - F.C.transpose() * F.A;
  const RMat m12 = F.A.transpose() * F.D - F.C.transpose() * F.B - RMat::Identity(d, d);
  const RMat m21 = F.B.transpose() * F.C - F.D.transpose() * F.A + RMat::Identity(d, d);
  const RMat m22 = F.B.transpose() * F.D - F.D.transpose() * F.B;
  double defect = m11.cwiseAbs().maxCoeff();
  defect = std::max(defect, m12.cwiseAbs().maxCoeff());
  defect = std::max(defect, m21.cwiseAbs().maxCoeff());
  defect = std::max(defect, m22.cwiseAbs().maxCoeff());
  return defect;
}

CMat prefactor_matrix(const SymplecticBlocks& F, const CMat& theta) {
  return F.D.transpose().cast<Complex>() -
         kImag * (F.B.transpose().cast<Complex>() * theta);
}

CMat eta_elimination_matrix(const SymplecticBlocks& F, const CMat& theta) {
  const CMat y = prefactor_matrix(F, theta);
  Eigen::JacobiSVD<CMat> svd(y);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= 0.0 || smax / smin > 1e12)
    throw NumericalDegeneracyError("prefactor matrix is numerically singular");
  const CMat num = F.C.transpose().cast<Complex>() -
                   kImag * (F.A.transpose().cast<Complex>() * theta);
  return num * y.inverse();
}

RMat real_sqrt_pd(const RMat& m) {
  Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (m + m.transpose()));
  if (es.eigenvalues().minCoeff() < 1e-12)
    throw InvalidSpreadingError("matrix square root needs eigenvalues >= 1e-12");
  return es.operatorSqrt();
}

CMat gram_factor_matrix(const SymplecticBlocks& F, const CMat& theta) {
  const Index d = F.dim();
  const RMat re = theta.real();
  const RMat im = theta.imag();
  const RMat sq = real_sqrt_pd(re);
  const RMat sqinv = sq.inverse();
  CMat v(2 * d, d);
  v.topRows(d) = (sqinv * (im * F.B + F.D)).cast<Complex>();
  v.bottomRows(d) = (sq * F.B).cast<Complex>();
  return v;
}

double gram_identity_residual(const SymplecticBlocks& F, const CMat& theta) {
  const CMat y = prefactor_matrix(F, theta);
  const CMat v = gram_factor_matrix(F, theta);
  const RMat re_inv = theta.real().inverse();
  const CMat lhs = y * re_inv.cast<Complex>() * y.adjoint();
  const CMat rhs = v.adjoint() * v;
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

BranchTracker BranchTracker::seed(const CMat& y0) {
  BranchTracker t;
  t.last_det = y0.determinant();
  t.unwrapped_arg = std::arg(t.last_det);
  return t;
}

Complex branch_sqrt_det(BranchTracker& tracker, const CMat& y) {
  const Complex det = y.determinant();
  if (!std::isfinite(det.real()) || !std::isfinite(det.imag()) || det == Complex{0.0, 0.0})
    throw InvalidInputError("branch_sqrt_det: determinant is zero or non-finite");
  const double delta = wrap_to_pi(std::arg(det) - wrap_to_pi(tracker.unwrapped_arg));
  if (std::abs(delta) >= 0.5 * kPi)
    throw StepTooLargeError("branch continuity guard: argument jump >= pi/2");
  tracker.unwrapped_arg += delta;
  tracker.last_det = det;
  return std::sqrt(std::abs(det)) *
         std::exp(Complex{0.0, 0.5 * tracker.unwrapped_arg});
}

}  // namespace hkprop
