#pragma once

#include <cmath>
#include <cstdint>

#include "absrl/nn/mlp.hpp"

namespace absrl::nn {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam(const MlpParams<Scalar>& like, AdamOptions options)
      : options_(options), first_(like.zeros_like()), second_(like.zeros_like()) {}

  /// Descends along `grads` (gradients of a loss to be minimized).
  void step(MlpParams<Scalar>& params, const MlpParams<Scalar>& grads) {
    if (!params.same_shape(first_) || !grads.same_shape(first_)) {
      throw ShapeMismatch("Adam::step: parameter/gradient shapes do not match optimizer state");
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const Scalar b1 = static_cast<Scalar>(options_.beta1);
    const Scalar b2 = static_cast<Scalar>(options_.beta2);
    const Scalar step_size = static_cast<Scalar>(options_.learning_rate /
                                                 (1.0 - std::pow(options_.beta1, t)));
    const Scalar bias2 = static_cast<Scalar>(1.0 - std::pow(options_.beta2, t));
    const Scalar eps = static_cast<Scalar>(options_.epsilon);

    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
      p.array() -= step_size * m.array() / ((v.array() / bias2).sqrt() + eps);
    };
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
      update(params.layers[i].weight, grads.layers[i].weight, first_.layers[i].weight,
             second_.layers[i].weight);
      update(params.layers[i].bias, grads.layers[i].bias, first_.layers[i].bias,
             second_.layers[i].bias);
    }
  }

  std::uint64_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  MlpParams<Scalar> first_;
  MlpParams<Scalar> second_;
  std::uint64_t steps_ = 0;
};

}  // namespace absrl::nn
