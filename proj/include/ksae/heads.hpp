#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ksae/datasets.hpp"
#include "ksae/io.hpp"
#include "ksae/model.hpp"
#include "ksae/optimizer.hpp"
#include "ksae/train.hpp"

namespace ksae {

// Multinomial logistic regression on dense features.
struct SoftmaxHead {
    DenseMatrix weights;  // feature_dim x class_count
    Vector bias;          // class_count

    static SoftmaxHead zeros(std::size_t feature_dim, std::size_t class_count);
    std::size_t feature_dim() const noexcept { return weights.rows(); }
    std::size_t class_count() const noexcept { return weights.cols(); }

    friend bool operator==(const SoftmaxHead&, const SoftmaxHead&) = default;
};

// "KHED" container, little-endian: version u32 (= 1), feature_dim u64,
// class_count u64, weights row-major f64, bias f64, crc32 u32.
Bytes serialize_head(const SoftmaxHead& head);
SoftmaxHead parse_head(std::span<const std::uint8_t> bytes);
void save_head(const SoftmaxHead& head, const std::filesystem::path& path);
SoftmaxHead load_head(const std::filesystem::path& path);

// Row-wise softmax(features * W + b) with max subtraction.
DenseMatrix softmax_forward(const SoftmaxHead& head, const DenseMatrix& features);
// Mean -log p(label).
double cross_entropy(const DenseMatrix& probabilities, std::span<const std::uint32_t> labels);
// Argmax per row, ties to the lowest class index.
std::vector<std::uint32_t> predict(const DenseMatrix& probabilities);
double error_rate(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels);

struct LayerSparsity {
    std::size_t k = 1;
    double alpha = 1.0;
};

// Encoder layers (each keeps its alpha*k largest units) topped by a softmax
// head. With no layers the head reads the input directly. The decoder side of
// each autoencoder (b_out) is carried along but never used or updated.
struct DeepStack {
    std::vector<KsaeModel> layers;
    std::vector<LayerSparsity> sparsity;
    SoftmaxHead head;

    // Throws unless layer dims chain and the head matches the last width.
    void validate() const;
    std::size_t input_dim() const;
    std::size_t feature_dim() const;
};

// Supports chosen during a forward pass, one vector per layer, one set per sample.
using StackSupports = std::vector<std::vector<SupportSet>>;

struct StackForward {
    std::vector<DenseMatrix> activations;          // [0] = input, [l+1] = sparse output of layer l
    std::vector<std::vector<SparseCode>> codes;    // per layer, per sample
    DenseMatrix probabilities;
};

// Each layer's supports are recomputed from the current parameters unless
// `frozen` is given.
StackForward stack_forward(const DeepStack& stack, const DenseMatrix& x, const StackSupports* frozen = nullptr);

struct StackGradients {
    std::vector<DenseMatrix> layer_weights;
    std::vector<Vector> layer_biases;
    SoftmaxHead head;
    double loss = 0.0;  // mean cross-entropy
    StackSupports supports;
};

// Gradient of the mean cross-entropy; flows only through each sample's
// selected units.
StackGradients stack_gradients(const DeepStack& stack, const DenseMatrix& x, std::span<const std::uint32_t> labels,
                               const StackSupports* frozen = nullptr);

struct SupervisedSchedule {
    std::size_t epochs = 0;
    std::size_t batch_size = 100;
    LinearSchedule learning_rate{1.0, std::nullopt, 0};
    LinearSchedule momentum{0.25, std::nullopt, 0};
    MomentumRule momentum_rule = MomentumRule::kNewVelocity;
    std::uint64_t seed = 0;

    // m = 0.25, eta decayed linearly from 1 at the first epoch to 0.001 at the last.
    static SupervisedSchedule digits_defaults(std::size_t epochs, std::uint64_t seed = 0);
};

// Which tensors a run may change; frozen ones keep their exact bytes.
struct Trainable {
    std::vector<bool> layers;
    bool head = true;

    static Trainable all(std::size_t layer_count) { return {std::vector<bool>(layer_count, true), true}; }
};

struct StackTrainResult {
    DeepStack stack;
    std::vector<double> loss_history;  // mean training cross-entropy per epoch
};

StackTrainResult train_stack(DeepStack stack, const DenseMatrix& x, std::span<const std::uint32_t> labels,
                             const SupervisedSchedule& schedule, const Trainable& trainable);

struct HeadTrainResult {
    SoftmaxHead head;
    std::vector<double> loss_history;
};

// Softmax regression on fixed features.
HeadTrainResult train_head(SoftmaxHead head, const DenseMatrix& features, std::span<const std::uint32_t> labels,
                           const SupervisedSchedule& schedule);

double evaluate(const SoftmaxHead& head, const DenseMatrix& features, std::span<const std::uint32_t> labels);
double evaluate(const DeepStack& stack, const LabeledDataset& data);

struct ShallowFinetuneResult {
    KsaeModel model;
    SoftmaxHead head;
    std::vector<double> loss_history;
};

// Joint training of the encoder (W, b) and the head through the alpha*k sparse layer.
ShallowFinetuneResult finetune_shallow(const KsaeModel& model, const SoftmaxHead& head, const LabeledDataset& data,
                                       std::size_t k, double alpha, const SupervisedSchedule& schedule);

struct PretrainResult {
    DeepStack stack;                      // head left empty
    std::vector<TrainResult> layer_runs;  // unsupervised history per layer
};

// Greedy layer-wise pre-training: layer l trains on the densified alpha*k codes of layer l-1.
PretrainResult pretrain_stack(const DenseMatrix& x, std::span<const TrainConfig> layer_configs);

struct DeepFinetuneSchedule {
    SupervisedSchedule base;
    // Epochs per stage; unset stages get a third of base.epochs.
    std::array<std::optional<std::size_t>, 3> stage_epochs{};

    std::size_t epochs_for(std::size_t stage) const;
};

struct DeepStageRecord {
    std::string name;
    std::vector<double> loss_history;
};

struct DeepFinetuneResult {
    DeepStack stack;
    std::vector<DeepStageRecord> stages;  // in execution order
};

// Stage "head": layers frozen, fresh softmax trained on top.
// Stage "upper": first layer frozen, the rest and the head trained jointly.
// Stage "all": everything trained jointly.
// The optional callback sees the stack after each stage.
DeepFinetuneResult finetune_deep(DeepStack stack, const LabeledDataset& data, const DeepFinetuneSchedule& schedule,
                                 const std::function<void(const std::string&, const DeepStack&)>& after_stage = {});

}  // namespace ksae
