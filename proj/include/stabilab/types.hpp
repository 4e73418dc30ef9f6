#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>

namespace stabilab {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vec = Vector<double>;
using Mat = Matrix<double>;

// Iteration horizon; `infinite` selects the k -> inf limit of a bound.
struct Horizon {
  std::uint64_t k = 0;
  bool infinite = false;

  static Horizon steps(std::uint64_t k) { return {k, false}; }
  static Horizon unbounded() { return {0, true}; }

  bool operator==(const Horizon&) const = default;
};

inline double kInf() { return std::numeric_limits<double>::infinity(); }

}  // namespace stabilab
