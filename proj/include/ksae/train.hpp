#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "ksae/model.hpp"
#include "ksae/optimizer.hpp"

namespace ksae {

struct TrainConfig {
    std::size_t k = 0;
    double alpha = 1.0;
    std::size_t hidden_dim = 0;
    std::size_t epochs = 0;
    std::size_t batch_size = 100;
    double init_sigma = 0.01;
    LinearSchedule momentum{0.9, std::nullopt, 0};
    LinearSchedule learning_rate{0.01, std::nullopt, 0};
    MomentumRule momentum_rule = MomentumRule::kNewVelocity;
    // Anneal k from k_initial down to k over the first half of the epochs.
    bool k_schedule_enabled = true;
    // 0 selects max(k, round(0.1 * hidden_dim)).
    std::size_t k_initial = 0;
    std::uint64_t seed = 0;

    std::size_t resolved_k_initial() const;
    // Throws std::invalid_argument naming the offending field.
    void validate() const;
};

// Sparsity level used during `epoch`. With H = floor(epochs / 2):
// round(k_initial + (k - k_initial) * epoch / H) for epoch < H, k afterwards.
std::size_t scheduled_k(const TrainConfig& config, std::size_t epoch);

struct EpochStats {
    std::size_t epoch = 0;
    std::size_t k = 0;
    double mean_loss = 0.0;
    std::size_t max_code_nnz = 0;
    // How many times each hidden unit appeared in a support this epoch.
    std::vector<std::uint64_t> unit_usage;

    std::size_t dead_units() const noexcept;
};

struct TrainResult {
    KsaeModel model;
    std::vector<EpochStats> epochs;

    std::vector<double> loss_history() const;
};

// Called after every optimizer step with the batch's codes.
using BatchObserver = std::function<void(std::size_t epoch, std::size_t step, std::size_t k,
                                         std::span<const SparseCode> codes)>;

// Momentum SGD on the k-sparse reconstruction objective. Each epoch visits the
// samples (rows of `data`) in an order drawn from a generator seeded by
// config.seed; the final batch of an epoch may be short.
TrainResult train(KsaeModel model, const DenseMatrix& data, const TrainConfig& config,
                  const BatchObserver& observer = {});

// Draws the initial model from config.seed, then trains.
TrainResult train_from_scratch(const DenseMatrix& data, const TrainConfig& config,
                               const BatchObserver& observer = {});

// Generator used for the initial weights of train_from_scratch.
Rng init_rng(const TrainConfig& config);

}  // namespace ksae
