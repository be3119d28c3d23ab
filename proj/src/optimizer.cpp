#include "ksae/optimizer.hpp"

#include <cmath>
#include <string>

#include "ksae/kernels.hpp"

namespace ksae {

double LinearSchedule::at(std::size_t epoch) const noexcept {
    if (!final_value || span_epochs == 0 || epoch >= span_epochs) return final_value.value_or(initial);
    const double t = static_cast<double>(epoch) / static_cast<double>(span_epochs);
    return initial + (*final_value - initial) * t;
}

OptimizerState::OptimizerState(std::span<const std::size_t> sizes) {
    velocity.reserve(sizes.size());
    for (std::size_t n : sizes) velocity.emplace_back(n, 0.0);
}

void sgd_momentum_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                       OptimizerState& state, double momentum, double eta, MomentumRule rule) {
    if (params.size() != grads.size() || params.size() != state.velocity.size())
        throw std::invalid_argument("sgd_momentum_step: parameter, gradient and velocity counts differ");
    if (!(eta > 0.0)) throw std::invalid_argument("sgd_momentum_step: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd_momentum_step: momentum outside [0, 1)");
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != grads[t].size() || params[t].size() != state.velocity[t].size())
            throw std::invalid_argument("sgd_momentum_step: shape mismatch in tensor " + std::to_string(t));
        for (std::size_t i = 0; i < grads[t].size(); ++i)
            if (!std::isfinite(grads[t][i]))
                throw NonFiniteError("non-finite gradient in tensor " + std::to_string(t) + " at entry " +
                                     std::to_string(i));
    }
    for (std::size_t t = 0; t < params.size(); ++t)
        kernels::parallel::momentum_update(params[t], state.velocity[t], grads[t], momentum, eta,
                                           rule == MomentumRule::kOldVelocity);
    ++state.step;
}

}  // namespace ksae
