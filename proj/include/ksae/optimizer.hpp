#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ksae/dense_matrix.hpp"

namespace ksae {

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// How the parameter moves after the velocity update
//   v <- m v - eta grad
// kNewVelocity: p <- p + v_new (heavy ball). kOldVelocity: p <- p + v_old,
// the update as literally typeset in the original write-up.
enum class MomentumRule { kNewVelocity, kOldVelocity };

// Value that moves linearly from `initial` to `final_value` over the first
// `span_epochs` epochs and stays at `final_value` afterwards. Without a final
// value it is constant.
struct LinearSchedule {
    double initial = 0.0;
    std::optional<double> final_value;
    std::size_t span_epochs = 0;

    double at(std::size_t epoch) const noexcept;
};

struct OptimizerState {
    std::vector<Vector> velocity;
    std::size_t epoch = 0;
    std::size_t step = 0;

    OptimizerState() = default;
    // One zero-initialized velocity buffer per parameter tensor.
    explicit OptimizerState(std::span<const std::size_t> sizes);
};

// One momentum SGD step over matched parameter/gradient lists. Throws
// NonFiniteError before touching anything if a gradient entry is NaN/Inf.
void sgd_momentum_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                       OptimizerState& state, double momentum, double eta,
                       MomentumRule rule = MomentumRule::kNewVelocity);

}  // namespace ksae
