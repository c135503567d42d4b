#pragma once

#include "lczlab/ops.hpp"
#include "lczlab/tensor.hpp"

namespace lcz {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update of every parameter in `params`, then zeroes
/// the gradients. Throws StateError if a parameter has no gradient buffer.
void adam_step(ParameterSet& params, const AdamConfig& config);

/// Kaiming-uniform weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace lcz
