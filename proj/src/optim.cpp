#include "lczlab/optim.hpp"

#include <cmath>

#include "lczlab/error.hpp"

namespace lcz {

void adam_step(ParameterSet& params, const AdamConfig& config) {
    for (std::size_t i = 0; i < params.parameter_count(); ++i) {
        if (!params.parameter(i).tensor.has_grad()) {
            throw StateError("adam_step: parameter '" + params.parameter(i).name + "' has no gradient");
        }
    }
    for (std::size_t i = 0; i < params.parameter_count(); ++i) {
        Parameter& p = params.parameter(i);
        p.step_count += 1;
        const double t = static_cast<double>(p.step_count);
        const double c1 = 1.0 - std::pow(config.beta1, t);
        const double c2 = 1.0 - std::pow(config.beta2, t);
        auto w = p.tensor.data();
        auto g = p.tensor.grad();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g[j];
            const double m = config.beta1 * p.adam_m[j] + (1.0 - config.beta1) * gj;
            const double v = config.beta2 * p.adam_v[j] + (1.0 - config.beta2) * gj * gj;
            p.adam_m[j] = static_cast<Real>(m);
            p.adam_v[j] = static_cast<Real>(v);
            const double m_hat = m / c1;
            const double v_hat = v / c2;
            w[j] = static_cast<Real>(w[j] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps));
        }
        p.tensor.zero_grad();
    }
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    if (fan_in == 0) throw ParameterError("kaiming_uniform: fan_in must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (Real& v : t.data()) v = static_cast<Real>(dist(rng));
    return t;
}

}  // namespace lcz
