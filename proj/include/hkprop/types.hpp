#ifndef HKPROP_TYPES_HPP
#define HKPROP_TYPES_HPP

#include <complex>
#include <Eigen/Dense>

namespace hkprop {

using Complex = std::complex<double>;

using RMat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;

using Index = Eigen::Index;

inline constexpr Complex kImag{0.0, 1.0};

}  // namespace hkprop

#endif
