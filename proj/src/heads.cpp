#include "ksae/heads.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ksae/kernels.hpp"
#include "ksae/linalg.hpp"

namespace ksae {

SoftmaxHead SoftmaxHead::zeros(std::size_t feature_dim, std::size_t class_count) {
    return {DenseMatrix(feature_dim, class_count), Vector(class_count, 0.0)};
}

Bytes serialize_head(const SoftmaxHead& head) {
    BinaryWriter w("KHED");
    w.u32(1);
    w.u64(head.feature_dim());
    w.u64(head.class_count());
    w.f64s(head.weights.values());
    w.f64s(head.bias);
    return std::move(w).finish();
}

SoftmaxHead parse_head(std::span<const std::uint8_t> bytes) {
    BinaryReader r(bytes, "KHED");
    if (const std::uint32_t version = r.u32(); version != 1)
        throw FormatError("unsupported head version " + std::to_string(version));
    const std::uint64_t feat = r.u64();
    const std::uint64_t classes = r.u64();
    if (feat == 0 || classes == 0 || feat > (1ull << 32) || classes > (1ull << 32))
        throw FormatError("implausible head dimensions");
    SoftmaxHead head{DenseMatrix(feat, classes, r.f64s(feat * classes)), r.f64s(classes)};
    r.expect_end();
    return head;
}

void save_head(const SoftmaxHead& head, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_head(head));
}

SoftmaxHead load_head(const std::filesystem::path& path) {
    try {
        return parse_head(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

DenseMatrix softmax_forward(const SoftmaxHead& head, const DenseMatrix& features) {
    if (features.cols() != head.feature_dim())
        throw std::invalid_argument("softmax_forward: features are " + shape_string(features) + " but head expects " +
                                    std::to_string(head.feature_dim()));
    DenseMatrix p = kernels::parallel::gemm(features, head.weights);
    for (std::size_t s = 0; s < p.rows(); ++s) {
        auto row = p.row(s);
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] += head.bias[c];
            top = std::max(top, row[c]);
        }
        double total = 0.0;
        for (double& v : row) {
            v = std::exp(v - top);
            total += v;
        }
        for (double& v : row) v /= total;
    }
    return p;
}

double cross_entropy(const DenseMatrix& probabilities, std::span<const std::uint32_t> labels) {
    if (labels.size() != probabilities.rows()) throw std::invalid_argument("cross_entropy: label count mismatch");
    if (labels.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const double p = probabilities(s, labels[s]);
        total -= std::log(std::max(p, std::numeric_limits<double>::min()));
    }
    return total / static_cast<double>(labels.size());
}

std::vector<std::uint32_t> predict(const DenseMatrix& probabilities) {
    std::vector<std::uint32_t> out(probabilities.rows());
    for (std::size_t s = 0; s < probabilities.rows(); ++s) {
        const auto row = probabilities.row(s);
        out[s] = static_cast<std::uint32_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double error_rate(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("error_rate: length mismatch");
    if (labels.empty()) return 0.0;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) wrong += predictions[i] != labels[i] ? 1 : 0;
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

void DeepStack::validate() const {
    if (sparsity.size() != layers.size()) throw std::invalid_argument("DeepStack: one sparsity setting per layer");
    for (std::size_t l = 1; l < layers.size(); ++l)
        if (layers[l].input_dim() != layers[l - 1].hidden_dim())
            throw std::invalid_argument("DeepStack: layer " + std::to_string(l) + " input_dim " +
                                        std::to_string(layers[l].input_dim()) + " != layer " + std::to_string(l - 1) +
                                        " hidden_dim " + std::to_string(layers[l - 1].hidden_dim()));
    for (std::size_t l = 0; l < layers.size(); ++l)
        (void)encoding_width(sparsity[l].k, sparsity[l].alpha, layers[l].hidden_dim());
    if (head.class_count() > 0 && head.feature_dim() != feature_dim())
        throw std::invalid_argument("DeepStack: head feature_dim " + std::to_string(head.feature_dim()) +
                                    " != stack output width " + std::to_string(feature_dim()));
}

std::size_t DeepStack::input_dim() const { return layers.empty() ? head.feature_dim() : layers.front().input_dim(); }

std::size_t DeepStack::feature_dim() const { return layers.empty() ? head.feature_dim() : layers.back().hidden_dim(); }

StackForward stack_forward(const DeepStack& stack, const DenseMatrix& x, const StackSupports* frozen) {
    stack.validate();
    if (x.cols() != stack.input_dim())
        throw std::invalid_argument("stack_forward: input is " + shape_string(x) + " but the stack expects " +
                                    std::to_string(stack.input_dim()));
    if (frozen && frozen->size() != stack.layers.size())
        throw std::invalid_argument("stack_forward: frozen supports must cover every layer");
    StackForward f;
    f.activations.push_back(x);
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        const KsaeModel& layer = stack.layers[l];
        const std::size_t width = encoding_width(stack.sparsity[l].k, stack.sparsity[l].alpha, layer.hidden_dim());
        const DenseMatrix pre = forward_batch(layer, f.activations.back());
        std::vector<SparseCode> codes(pre.rows());
        const auto n = static_cast<std::ptrdiff_t>(pre.rows());
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t ss = 0; ss < n; ++ss) {
            const auto s = static_cast<std::size_t>(ss);
            codes[s] = frozen ? SparseCode::gather(pre.row(s), (*frozen)[l].at(s)) : sparsify(pre.row(s), width);
        }
        f.activations.push_back(densify_rows(codes));
        f.codes.push_back(std::move(codes));
    }
    f.probabilities = softmax_forward(stack.head, f.activations.back());
    return f;
}

StackGradients stack_gradients(const DeepStack& stack, const DenseMatrix& x, std::span<const std::uint32_t> labels,
                               const StackSupports* frozen) {
    if (labels.size() != x.rows()) throw std::invalid_argument("stack_gradients: label count mismatch");
    if (x.rows() == 0) throw std::invalid_argument("stack_gradients: empty batch");
    const StackForward f = stack_forward(stack, x, frozen);
    const std::size_t batch = x.rows();
    const std::size_t classes = stack.head.class_count();
    const double inv_b = 1.0 / static_cast<double>(batch);

    StackGradients g;
    g.loss = cross_entropy(f.probabilities, labels);

    // dL/dlogits = (p - onehot) / B
    DenseMatrix dlogits = f.probabilities;
    for (std::size_t s = 0; s < batch; ++s) {
        if (labels[s] >= classes) throw std::invalid_argument("stack_gradients: label out of range");
        dlogits(s, labels[s]) -= 1.0;
    }
    for (double& v : dlogits.values()) v *= inv_b;

    g.head.weights = kernels::parallel::gemm_tn(f.activations.back(), dlogits);
    g.head.bias.assign(classes, 0.0);
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t c = 0; c < classes; ++c) g.head.bias[c] += dlogits(s, c);

    const std::size_t layers = stack.layers.size();
    g.layer_weights.resize(layers);
    g.layer_biases.resize(layers);
    g.supports.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        g.supports[l].reserve(batch);
        for (const auto& code : f.codes[l]) g.supports[l].push_back(code.support());
    }
    if (layers == 0) return g;

    // Gradient w.r.t. the top layer's selected pre-activations.
    std::vector<SparseCode> upstream(batch);
    {
        const auto& codes = f.codes[layers - 1];
        const auto n = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t ss = 0; ss < n; ++ss) {
            const auto s = static_cast<std::size_t>(ss);
            const auto idx = codes[s].indices();
            std::vector<double> val(idx.size(), 0.0);
            for (std::size_t e = 0; e < idx.size(); ++e)
                for (std::size_t c = 0; c < classes; ++c) val[e] += stack.head.weights(idx[e], c) * dlogits(s, c);
            upstream[s] = SparseCode(codes[s].dim(), std::vector<std::size_t>(idx.begin(), idx.end()), std::move(val));
        }
    }

    for (std::size_t l = layers; l-- > 0;) {
        const KsaeModel& layer = stack.layers[l];
        g.layer_weights[l] = DenseMatrix(layer.input_dim(), layer.hidden_dim());
        kernels::parallel::add_sparse_outer(g.layer_weights[l], f.activations[l], upstream, 1.0);
        g.layer_biases[l].assign(layer.hidden_dim(), 0.0);
        for (const auto& code : upstream)
            for (std::size_t e = 0; e < code.nnz(); ++e) g.layer_biases[l][code.indices()[e]] += code.values()[e];
        if (l == 0) break;

        // Pull back to the previous layer's selected units: dh_i = sum_j W(i, j) d_j.
        const auto& below = f.codes[l - 1];
        std::vector<SparseCode> next(batch);
        const auto n = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t ss = 0; ss < n; ++ss) {
            const auto s = static_cast<std::size_t>(ss);
            const auto idx = below[s].indices();
            std::vector<double> val(idx.size(), 0.0);
            const auto up_idx = upstream[s].indices();
            const auto up_val = upstream[s].values();
            for (std::size_t e = 0; e < idx.size(); ++e)
                for (std::size_t u = 0; u < up_idx.size(); ++u) val[e] += layer.weights(idx[e], up_idx[u]) * up_val[u];
            next[s] = SparseCode(below[s].dim(), std::vector<std::size_t>(idx.begin(), idx.end()), std::move(val));
        }
        upstream = std::move(next);
    }
    return g;
}

SupervisedSchedule SupervisedSchedule::digits_defaults(std::size_t epochs, std::uint64_t seed) {
    SupervisedSchedule s;
    s.epochs = epochs;
    s.learning_rate = {1.0, 0.001, epochs > 1 ? epochs - 1 : 1};
    s.momentum = {0.25, std::nullopt, 0};
    s.seed = seed;
    return s;
}

StackTrainResult train_stack(DeepStack stack, const DenseMatrix& x, std::span<const std::uint32_t> labels,
                             const SupervisedSchedule& schedule, const Trainable& trainable) {
    stack.validate();
    if (trainable.layers.size() != stack.layers.size())
        throw std::invalid_argument("train_stack: trainable flags must cover every layer");
    if (labels.size() != x.rows()) throw std::invalid_argument("train_stack: label count mismatch");
    if (schedule.batch_size == 0) throw std::invalid_argument("train_stack: batch_size must be positive");
    if (schedule.epochs > 0 && x.rows() == 0) throw std::invalid_argument("train_stack: no samples");

    // Parameter order: for each trainable layer (W, b), then the head (W, b).
    auto collect_params = [&](DeepStack& s) {
        std::vector<std::span<double>> p;
        for (std::size_t l = 0; l < s.layers.size(); ++l)
            if (trainable.layers[l]) {
                p.push_back(s.layers[l].weights.values());
                p.push_back(s.layers[l].hidden_bias);
            }
        if (trainable.head) {
            p.push_back(s.head.weights.values());
            p.push_back(s.head.bias);
        }
        return p;
    };
    std::vector<std::size_t> sizes;
    for (const auto& span : collect_params(stack)) sizes.push_back(span.size());
    OptimizerState state(sizes);

    StackTrainResult result;
    Rng order_rng(Rng::derive_seed(schedule.seed, 2));
    std::vector<std::size_t> order(x.rows());
    std::vector<std::uint32_t> batch_labels;
    for (std::size_t epoch = 0; epoch < schedule.epochs; ++epoch) {
        state.epoch = epoch;
        const double m = schedule.momentum.at(epoch);
        const double eta = schedule.learning_rate.at(epoch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t first = 0; first < order.size(); first += schedule.batch_size) {
            const std::size_t count = std::min(schedule.batch_size, order.size() - first);
            const auto idx = std::span<const std::size_t>(order).subspan(first, count);
            const DenseMatrix batch = x.gather_rows(idx);
            batch_labels.clear();
            for (std::size_t i : idx) batch_labels.push_back(labels[i]);

            const StackGradients g = stack_gradients(stack, batch, batch_labels);
            if (!std::isfinite(g.loss))
                throw NonFiniteError("train_stack: epoch " + std::to_string(epoch) + ": non-finite loss");
            loss_sum += g.loss * static_cast<double>(count);

            std::vector<std::span<const double>> grads;
            for (std::size_t l = 0; l < stack.layers.size(); ++l)
                if (trainable.layers[l]) {
                    grads.emplace_back(g.layer_weights[l].values());
                    grads.emplace_back(g.layer_biases[l]);
                }
            if (trainable.head) {
                grads.emplace_back(g.head.weights.values());
                grads.emplace_back(g.head.bias);
            }
            const auto params = collect_params(stack);
            try {
                sgd_momentum_step(params, grads, state, m, eta, schedule.momentum_rule);
            } catch (const NonFiniteError& e) {
                throw NonFiniteError("train_stack: epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(state.step) + ": " + e.what());
            }
        }
        result.loss_history.push_back(loss_sum / static_cast<double>(x.rows()));
    }
    result.stack = std::move(stack);
    return result;
}

HeadTrainResult train_head(SoftmaxHead head, const DenseMatrix& features, std::span<const std::uint32_t> labels,
                           const SupervisedSchedule& schedule) {
    DeepStack stack;
    stack.head = std::move(head);
    StackTrainResult r = train_stack(std::move(stack), features, labels, schedule, Trainable::all(0));
    return {std::move(r.stack.head), std::move(r.loss_history)};
}

double evaluate(const SoftmaxHead& head, const DenseMatrix& features, std::span<const std::uint32_t> labels) {
    return error_rate(predict(softmax_forward(head, features)), labels);
}

double evaluate(const DeepStack& stack, const LabeledDataset& data) {
    return error_rate(predict(stack_forward(stack, data.x).probabilities), data.y);
}

ShallowFinetuneResult finetune_shallow(const KsaeModel& model, const SoftmaxHead& head, const LabeledDataset& data,
                                       std::size_t k, double alpha, const SupervisedSchedule& schedule) {
    DeepStack stack{{model}, {LayerSparsity{k, alpha}}, head};
    StackTrainResult r = train_stack(std::move(stack), data.x, data.y, schedule, Trainable::all(1));
    return {std::move(r.stack.layers.front()), std::move(r.stack.head), std::move(r.loss_history)};
}

PretrainResult pretrain_stack(const DenseMatrix& x, std::span<const TrainConfig> layer_configs) {
    if (layer_configs.empty()) throw std::invalid_argument("pretrain_stack: at least one layer required");
    PretrainResult out;
    DenseMatrix input = x;
    for (std::size_t l = 0; l < layer_configs.size(); ++l) {
        const TrainConfig& cfg = layer_configs[l];
        if (l > 0 && input.cols() != out.stack.layers.back().hidden_dim())
            throw std::logic_error("pretrain_stack: layer input width does not match the layer below");
        try {
            out.layer_runs.push_back(train_from_scratch(input, cfg));
        } catch (const std::exception& e) {
            throw std::runtime_error("pretrain_stack: layer " + std::to_string(l) + ": " + e.what());
        }
        out.stack.layers.push_back(out.layer_runs.back().model);
        out.stack.sparsity.push_back({cfg.k, cfg.alpha});
        if (l + 1 < layer_configs.size()) input = encode_dense(out.stack.layers.back(), input, cfg.k, cfg.alpha);
    }
    out.stack.head = SoftmaxHead::zeros(out.stack.layers.back().hidden_dim(), 0);
    return out;
}

std::size_t DeepFinetuneSchedule::epochs_for(std::size_t stage) const {
    return stage_epochs.at(stage).value_or(base.epochs / 3);
}

DeepFinetuneResult finetune_deep(DeepStack stack, const LabeledDataset& data, const DeepFinetuneSchedule& schedule,
                                 const std::function<void(const std::string&, const DeepStack&)>& after_stage) {
    if (stack.layers.empty()) throw std::invalid_argument("finetune_deep: stack has no layers");
    if (stack.head.class_count() == 0) stack.head = SoftmaxHead::zeros(stack.feature_dim(), data.class_count);
    stack.validate();

    const std::size_t n = stack.layers.size();
    Trainable head_only{std::vector<bool>(n, false), true};
    Trainable upper{std::vector<bool>(n, true), true};
    upper.layers[0] = false;
    const std::array<std::pair<const char*, Trainable>, 3> stages{
        std::pair{"head", head_only}, std::pair{"upper", upper}, std::pair{"all", Trainable::all(n)}};

    DeepFinetuneResult out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        SupervisedSchedule s = schedule.base;
        s.epochs = schedule.epochs_for(i);
        if (s.learning_rate.final_value) s.learning_rate.span_epochs = s.epochs > 1 ? s.epochs - 1 : 1;
        s.seed = Rng::derive_seed(schedule.base.seed, 100 + i);
        StackTrainResult r = train_stack(std::move(stack), data.x, data.y, s, stages[i].second);
        stack = std::move(r.stack);
        out.stages.push_back({stages[i].first, std::move(r.loss_history)});
        if (after_stage) after_stage(stages[i].first, stack);
    }
    out.stack = std::move(stack);
    return out;
}

}  // namespace ksae
