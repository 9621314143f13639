#ifndef HKPROP_POTENTIAL_HPP
#define HKPROP_POTENTIAL_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hkprop/types.hpp"

namespace hkprop {

/// Smooth potential with globally bounded derivatives of order >= 2.
/// The subquadratic certificate is declarative: the caller supplies the
/// bounds, the library only spot-checks them.
struct Potential {
  std::string name;
  Index d = 1;
  std::function<double(const RVec&)> value;
  std::function<RVec(const RVec&)> gradient;
  std::function<RMat(const RVec&)> hessian;
  /// certificate[k] bounds sup |d^alpha V| for |alpha| = k + 2.
  std::vector<double> certificate;

  /// Compares the gradient against central differences of the value at
  /// `samples` random points in [-range, range]^d. Returns the max
  /// relative discrepancy.
  double gradient_self_test(int samples = 100, double range = 2.0,
                            std::uint64_t seed = 12345) const;

  /// Samples |Hess V| against certificate[0]. Returns true when every
  /// sample respects the declared bound (with 5% slack); never a proof.
  bool spot_check_certificate(int samples = 100, double range = 8.0,
                              std::uint64_t seed = 54321) const;
};

/// Builds a named potential: "free", "harmonic" (omega),
/// "cosine" (amplitude, wavenumber), "gaussian-barrier" (height, width).
Potential make_potential(const std::string& name,
                         const std::map<std::string, double>& params,
                         Index d = 1);

}  // namespace hkprop

#endif
