#pragma once

#include <Eigen/Dense>

namespace fosm {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

constexpr const char* kToolVersion = "fosm 0.1.0";

} // namespace fosm
