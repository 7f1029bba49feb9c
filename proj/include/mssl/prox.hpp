#pragma once

#include "mssl/common.hpp"

namespace mssl {

/// Proximal operator of t|.|: sign(x) max(|x| - t, 0).
inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

template <class Derived>
Matrix soft_threshold(const Eigen::MatrixBase<Derived>& x, double t) {
  return x.unaryExpr([t](double v) { return soft_threshold(v, t); });
}

}  // namespace mssl
