#pragma once

#include <cmath>

#include "absrl/errors.hpp"
#include "absrl/nn/mlp.hpp"

namespace absrl::nn {

template <typename Scalar>
Vector<Scalar> log_softmax(const Vector<Scalar>& logits) {
  if (logits.size() == 0) throw ShapeMismatch("log_softmax: empty logits");
  if (!logits.allFinite()) throw NonFiniteInput("log_softmax: non-finite logits");
  const Scalar max = logits.maxCoeff();
  const Vector<Scalar> shifted = logits.array() - max;
  const Scalar log_norm = std::log(shifted.array().exp().sum());
  return shifted.array() - log_norm;
}

template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& logits) {
  if (logits.size() == 0) throw ShapeMismatch("softmax: empty logits");
  if (!logits.allFinite()) throw NonFiniteInput("softmax: non-finite logits");
  Vector<Scalar> p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

/// Column-wise softmax of an actions x batch logit matrix.
template <typename Scalar>
Matrix<Scalar> softmax_columns(const Matrix<Scalar>& logits) {
  if (!logits.allFinite()) throw NonFiniteInput("softmax_columns: non-finite logits");
  Matrix<Scalar> p = logits;
  for (Eigen::Index b = 0; b < p.cols(); ++b) {
    auto col = p.col(b);
    col = (col.array() - col.maxCoeff()).exp();
    col /= col.sum();
  }
  return p;
}

template <typename Scalar>
Matrix<Scalar> log_softmax_columns(const Matrix<Scalar>& logits) {
  if (!logits.allFinite()) throw NonFiniteInput("log_softmax_columns: non-finite logits");
  Matrix<Scalar> out = logits;
  for (Eigen::Index b = 0; b < out.cols(); ++b) {
    auto col = out.col(b);
    const Scalar max = col.maxCoeff();
    col.array() -= max;
    col.array() -= std::log(col.array().exp().sum());
  }
  return out;
}

/// Shannon entropy of a probability vector (0 log 0 = 0).
template <typename Scalar>
Scalar entropy(const Vector<Scalar>& p) {
  Scalar h = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > Scalar(0)) h -= p[i] * std::log(p[i]);
  }
  return h;
}

}  // namespace absrl::nn
