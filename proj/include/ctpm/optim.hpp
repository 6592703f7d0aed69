#pragma once

#include <string>
#include <vector>

#include "ctpm/common.hpp"

namespace ctpm::diffcore {

struct AdamState {
    std::size_t step_count = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    explicit AdamState(std::size_t n, double lr = 0.01)
        : first_moment(n, 0.0), second_moment(n, 0.0), learning_rate(lr) {
        require(lr > 0.0, "Adam learning rate must be positive");
    }
};

// Standard Adam update with bias correction; mutates params and state.
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size()) {
        throw ShapeError("adam_step: parameter/gradient/state length mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
        }
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
        v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

}  // namespace ctpm::diffcore
