#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "absrl/errors.hpp"

namespace absrl::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out
};

/// Parameters of a fully connected network. Every layer but the last is
/// followed by a ReLU; the last layer (the head) is linear. The same type
/// holds gradients and optimizer moments.
template <typename Scalar>
struct MlpParams {
  std::vector<DenseLayer<Scalar>> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  MlpParams zeros_like() const {
    MlpParams out;
    out.layers.reserve(layers.size());
    for (const auto& l : layers) {
      out.layers.push_back({Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                            Vector<Scalar>::Zero(l.bias.size())});
    }
    return out;
  }

  bool same_shape(const MlpParams& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].weight.rows() != other.layers[i].weight.rows() ||
          layers[i].weight.cols() != other.layers[i].weight.cols() ||
          layers[i].bias.size() != other.layers[i].bias.size()) {
        return false;
      }
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  // this += scale * other
  void add_scaled(const MlpParams& other, Scalar scale) {
    if (!same_shape(other)) throw ShapeMismatch("MlpParams::add_scaled: shape mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += scale * other.layers[i].weight;
      layers[i].bias += scale * other.layers[i].bias;
    }
  }

  // Visits every scalar parameter in a fixed order (layer, weight col-major, bias).
  template <typename F>
  void for_each_scalar(F&& f) {
    for (auto& l : layers) {
      for (Eigen::Index k = 0; k < l.weight.size(); ++k) f(l.weight.data()[k]);
      for (Eigen::Index k = 0; k < l.bias.size(); ++k) f(l.bias.data()[k]);
    }
  }

  template <typename Other>
  MlpParams<Other> cast() const {
    MlpParams<Other> out;
    for (const auto& l : layers) {
      out.layers.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>()});
    }
    return out;
  }
};

struct MlpShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
};

/// He-uniform weights (limit sqrt(6 / fan_in)) and zero biases. With
/// `zero_head` the linear head starts at exactly zero.
template <typename Scalar, typename Rng>
MlpParams<Scalar> make_mlp(const MlpShape& shape, Rng& rng, bool zero_head = false) {
  if (shape.input_dim == 0 || shape.output_dim == 0) {
    throw ShapeMismatch("make_mlp: input and output dims must be positive");
  }
  MlpParams<Scalar> params;
  std::size_t fan_in = shape.input_dim;
  std::vector<std::size_t> outs = shape.hidden;
  outs.push_back(shape.output_dim);
  for (std::size_t li = 0; li < outs.size(); ++li) {
    const std::size_t fan_out = outs[li];
    if (fan_out == 0) throw ShapeMismatch("make_mlp: hidden sizes must be positive");
    DenseLayer<Scalar> layer{Matrix<Scalar>::Zero(fan_out, fan_in), Vector<Scalar>::Zero(fan_out)};
    const bool is_head = li + 1 == outs.size();
    if (!(is_head && zero_head)) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index k = 0; k < layer.weight.size(); ++k) {
        layer.weight.data()[k] = static_cast<Scalar>(dist(rng));
      }
    }
    params.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return params;
}

/// Activations kept by forward() for backward(). `inputs[l]` is the input
/// matrix of layer l (columns are batch entries).
template <typename Scalar>
struct MlpCache {
  std::vector<Matrix<Scalar>> inputs;
};

template <typename Scalar>
struct ForwardResult {
  Matrix<Scalar> output;  // output_dim x batch
  MlpCache<Scalar> cache;
};

template <typename Scalar>
struct BackwardResult {
  MlpParams<Scalar> grads;
  Matrix<Scalar> input_grad;  // input_dim x batch
};

/// Batched forward pass. `x` is input_dim x batch.
template <typename Scalar>
ForwardResult<Scalar> forward(const MlpParams<Scalar>& params, const Matrix<Scalar>& x) {
  if (params.layers.empty()) throw ShapeMismatch("forward: empty network");
  if (static_cast<std::size_t>(x.rows()) != params.input_dim()) {
    throw ShapeMismatch("forward: expected input dim " + std::to_string(params.input_dim()) +
                        ", got " + std::to_string(x.rows()));
  }
  ForwardResult<Scalar> result;
  result.cache.inputs.reserve(params.layers.size());
  Matrix<Scalar> h = x;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& layer = params.layers[li];
    Matrix<Scalar> z = layer.weight * h;
    z.colwise() += layer.bias;
    if (li + 1 < params.layers.size()) z = z.cwiseMax(Scalar(0));
    result.cache.inputs.push_back(std::move(h));
    h = std::move(z);
  }
  result.output = std::move(h);
  return result;
}

/// Single-sample convenience wrapper.
template <typename Scalar>
Vector<Scalar> forward_one(const MlpParams<Scalar>& params, const Vector<Scalar>& x) {
  Matrix<Scalar> xm = x;
  return forward(params, xm).output.col(0);
}

/// Reverse-mode gradients of sum_b <upstream(:,b), output(:,b)>. ReLU uses
/// the subgradient 0 at exactly 0.
template <typename Scalar>
BackwardResult<Scalar> backward(const MlpParams<Scalar>& params, const MlpCache<Scalar>& cache,
                                const Matrix<Scalar>& upstream) {
  const std::size_t depth = params.layers.size();
  if (cache.inputs.size() != depth) throw ShapeMismatch("backward: cache does not match network");
  const Eigen::Index batch = cache.inputs.front().cols();
  if (static_cast<std::size_t>(upstream.rows()) != params.output_dim() || upstream.cols() != batch) {
    throw ShapeMismatch("backward: upstream gradient has wrong shape");
  }
  BackwardResult<Scalar> result;
  result.grads.layers.resize(depth);
  Matrix<Scalar> delta = upstream;
  for (std::size_t k = depth; k-- > 0;) {
    const auto& layer = params.layers[k];
    const Matrix<Scalar>& in = cache.inputs[k];
    result.grads.layers[k].weight.noalias() = delta * in.transpose();
    result.grads.layers[k].bias = delta.rowwise().sum();
    Matrix<Scalar> down = layer.weight.transpose() * delta;
    if (k > 0) {
      // `in` is the ReLU output of layer k-1; positive entries mark the active units.
      down = (in.array() > Scalar(0)).select(down, Scalar(0));
    }
    delta = std::move(down);
  }
  result.input_grad = std::move(delta);
  return result;
}

}  // namespace absrl::nn
