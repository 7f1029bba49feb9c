#pragma once

#include "mssl/common.hpp"
#include "mssl/data.hpp"

namespace mssl {

struct LossEval {
  double value = 0.0;
  Vector grad;
};

/// log(1 + exp(z)) without overflow.
inline double log1pexp(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {
inline void check_shapes(const Matrix& X, const Vector& y, const Vector& w) {
  if (X.rows() != y.size() || X.cols() != w.size())
    throw InvalidArgument("loss: shape mismatch (X is " + std::to_string(X.rows()) + "x" +
                          std::to_string(X.cols()) + ", y has " + std::to_string(y.size()) +
                          ", w has " + std::to_string(w.size()) + ")");
}
}  // namespace detail

/// value = 1/2 ||Xw - y||^2, grad = X^T (Xw - y).
inline LossEval squared_value_grad(const Matrix& X, const Vector& y, const Vector& w) {
  detail::check_shapes(X, y, w);
  const Vector r = X * w - y;
  return {0.5 * r.squaredNorm(), X.transpose() * r};
}

/// Negative Bernoulli log-likelihood with sigmoid link:
/// value = sum_i log(1 + exp(x_i^T w)) - y_i x_i^T w, grad = X^T (sigma(Xw) - y).
inline LossEval logistic_value_grad(const Matrix& X, const Vector& y, const Vector& w) {
  detail::check_shapes(X, y, w);
  const Vector z = X * w;
  Vector r(z.size());
  double value = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw InvalidArgument("logistic loss: label must be 0 or 1");
    // log(1 + e^z) - z = log(1 + e^-z), and sigma(z) - 1 = -sigma(-z), without cancellation
    const bool pos = y[i] == 1.0;
    value += log1pexp(pos ? -z[i] : z[i]);
    r[i] = pos ? -sigmoid(-z[i]) : sigmoid(z[i]);
  }
  return {value, X.transpose() * r};
}

inline LossEval loss_value_grad(LossKind kind, const Matrix& X, const Vector& y, const Vector& w) {
  return kind == LossKind::squared ? squared_value_grad(X, y, w) : logistic_value_grad(X, y, w);
}

}  // namespace mssl
