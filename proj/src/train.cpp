#include "ksae/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace ksae {

std::size_t TrainConfig::resolved_k_initial() const {
    if (k_initial != 0) return k_initial;
    const auto tenth = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(hidden_dim)));
    return std::min(std::max(k, tenth), hidden_dim);
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("TrainConfig: " + what); };
    if (hidden_dim == 0) fail("hidden_dim must be positive");
    if (k < 1 || k > hidden_dim) fail("k must lie in [1, hidden_dim]");
    if (!(alpha >= 1.0)) fail("alpha must be >= 1");
    if (batch_size == 0) fail("batch_size must be positive");
    if (!(init_sigma > 0.0)) fail("init_sigma must be positive");
    const std::size_t k0 = resolved_k_initial();
    if (k0 < k || k0 > hidden_dim) fail("k_initial must lie in [k, hidden_dim]");
    if (!(learning_rate.initial > 0.0) || (learning_rate.final_value && !(*learning_rate.final_value > 0.0)))
        fail("learning rates must be positive");
    auto momentum_ok = [](double m) { return m >= 0.0 && m < 1.0; };
    if (!momentum_ok(momentum.initial) || (momentum.final_value && !momentum_ok(*momentum.final_value)))
        fail("momentum must lie in [0, 1)");
}

std::size_t scheduled_k(const TrainConfig& config, std::size_t epoch) {
    if (!config.k_schedule_enabled) return config.k;
    const std::size_t half = config.epochs / 2;
    if (epoch >= half) return config.k;
    const double k0 = static_cast<double>(config.resolved_k_initial());
    const double k1 = static_cast<double>(config.k);
    const double t = static_cast<double>(epoch) / static_cast<double>(half);
    return static_cast<std::size_t>(std::llround(k0 + (k1 - k0) * t));
}

std::size_t EpochStats::dead_units() const noexcept {
    return static_cast<std::size_t>(std::count(unit_usage.begin(), unit_usage.end(), std::uint64_t{0}));
}

std::vector<double> TrainResult::loss_history() const {
    std::vector<double> out;
    out.reserve(epochs.size());
    for (const auto& e : epochs) out.push_back(e.mean_loss);
    return out;
}

Rng init_rng(const TrainConfig& config) { return Rng(Rng::derive_seed(config.seed, 0)); }

TrainResult train(KsaeModel model, const DenseMatrix& data, const TrainConfig& config, const BatchObserver& observer) {
    config.validate();
    if (model.hidden_dim() != config.hidden_dim)
        throw std::invalid_argument("train: model hidden_dim " + std::to_string(model.hidden_dim()) +
                                    " != config hidden_dim " + std::to_string(config.hidden_dim));
    if (data.cols() != model.input_dim())
        throw std::invalid_argument("train: data is " + shape_string(data) + " but input_dim is " +
                                    std::to_string(model.input_dim()));
    if (config.epochs > 0 && data.rows() == 0) throw std::invalid_argument("train: no samples");

    TrainResult result;
    const std::array<std::size_t, 3> sizes{model.weights.size(), model.hidden_bias.size(), model.output_bias.size()};
    OptimizerState state(sizes);
    Rng order_rng(Rng::derive_seed(config.seed, 1));
    std::vector<std::size_t> order(data.rows());

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        state.epoch = epoch;
        const std::size_t k = scheduled_k(config, epoch);
        const double m = config.momentum.at(epoch);
        const double eta = config.learning_rate.at(epoch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        order_rng.shuffle(order);

        EpochStats stats;
        stats.epoch = epoch;
        stats.k = k;
        stats.unit_usage.assign(model.hidden_dim(), 0);
        double loss_sum = 0.0;

        for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - first);
            const DenseMatrix batch = data.gather_rows(std::span<const std::size_t>(order).subspan(first, count));
            Gradients g = backward(model, batch, k);
            for (const auto& code : g.codes) {
                if (code.nnz() > k)
                    throw std::logic_error("train: code with " + std::to_string(code.nnz()) +
                                           " nonzeros exceeds k=" + std::to_string(k));
                stats.max_code_nnz = std::max(stats.max_code_nnz, code.nnz());
                for (std::size_t j : code.indices()) ++stats.unit_usage[j];
            }
            loss_sum += g.loss * static_cast<double>(count);

            const auto params = model.parameters();
            const std::array<std::span<const double>, 3> grads{g.weights.values(), g.hidden_bias, g.output_bias};
            try {
                sgd_momentum_step(params, grads, state, m, eta, config.momentum_rule);
            } catch (const NonFiniteError& e) {
                throw NonFiniteError("train: epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(state.step) + ": " + e.what());
            }
            if (!model.all_finite())
                throw NonFiniteError("train: epoch " + std::to_string(epoch) + ", step " + std::to_string(state.step) +
                                     ": parameters overflowed");
            if (observer) observer(epoch, state.step, k, g.codes);
        }
        stats.mean_loss = loss_sum / static_cast<double>(data.rows());
        if (!std::isfinite(stats.mean_loss))
            throw NonFiniteError("train: epoch " + std::to_string(epoch) + ": non-finite loss");
        result.epochs.push_back(std::move(stats));
    }
    result.model = std::move(model);
    return result;
}

TrainResult train_from_scratch(const DenseMatrix& data, const TrainConfig& config, const BatchObserver& observer) {
    config.validate();
    Rng rng = init_rng(config);
    return train(KsaeModel::random(data.cols(), config.hidden_dim, config.init_sigma, rng), data, config, observer);
}

}  // namespace ksae
