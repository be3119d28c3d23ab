#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include "cli_internal.hpp"
#include "ksae/checkpoint.hpp"
#include "ksae/heads.hpp"
#include "ksae/pgm.hpp"
#include "ksae/train.hpp"

namespace ksae::cli {

namespace {

const char* const kLossHeader = "epoch,mean_loss,dead_units\n";
const char* const kCodesHeader = "sample,index,value\n";
const char* const kRecoveryHeader = "trial,seed,k,mu,condition_holds,support_recovered,iterations,residual\n";
const char* const kHistHeader = "bin_low,bin_high,count\n";
const char* const kEvalHeader = "run_id,dataset,n_train,hidden,k,alpha,stage,error_rate\n";

MomentumRule parse_rule(const std::string& s) { return s == "old" ? MomentumRule::kOldVelocity : MomentumRule::kNewVelocity; }

KsaeModel load_model(const std::string& path, Context& ctx) {
    ctx.note_input("checkpoint", path);
    return load_checkpoint(path);
}

void require_input_dim(const KsaeModel& model, const DenseMatrix& x) {
    if (model.input_dim() != x.cols())
        throw std::runtime_error("checkpoint expects input_dim " + std::to_string(model.input_dim()) +
                                 " but the data has " + std::to_string(x.cols()) + " columns");
}

void require_k(std::size_t k, std::size_t hidden) {
    if (k > hidden)
        throw UsageError("--k " + std::to_string(k) + " exceeds the " + std::to_string(hidden) + " hidden units");
}

// ---------------------------------------------------------------- train

struct TrainOptions {
    DataOptions data;
    std::size_t hidden = 0;
    std::size_t k = 0;
    double alpha = 1.0;
    std::size_t epochs = 10;
    std::size_t batch = 100;
    double lr = 0.01;
    double momentum = 0.9;
    std::string momentum_rule = "new";
    double sigma = 0.01;
    std::uint64_t seed = 0;
    bool schedule_k = true;
    std::size_t k_initial = 0;

    TrainConfig config() const {
        TrainConfig c;
        c.k = k;
        c.alpha = alpha;
        c.hidden_dim = hidden;
        c.epochs = epochs;
        c.batch_size = batch;
        c.init_sigma = sigma;
        c.momentum = {momentum, std::nullopt, 0};
        c.learning_rate = {lr, std::nullopt, 0};
        c.momentum_rule = parse_rule(momentum_rule);
        c.k_schedule_enabled = schedule_k;
        c.k_initial = k_initial;
        c.seed = seed;
        return c;
    }
};

void add_model_options(CLI::App* app, OptionRegistry& reg, TrainOptions& o) {
    reg.add(app, "--hidden", o.hidden, "hidden units")->required()->check(CLI::PositiveNumber);
    reg.add(app, "--k", o.k, "active hidden units per sample")->required()->check(CLI::PositiveNumber);
    reg.add(app, "--alpha", o.alpha, "test-time encoding uses round(alpha*k) units")->check(CLI::Range(1.0, 1e6));
    reg.add(app, "--epochs", o.epochs, "training epochs");
    reg.add(app, "--batch", o.batch, "minibatch size")->check(CLI::PositiveNumber);
    reg.add(app, "--lr", o.lr, "learning rate")->check(CLI::PositiveNumber);
    reg.add(app, "--momentum", o.momentum, "momentum in [0, 1)")->check(CLI::Range(0.0, 0.999999));
    reg.add(app, "--momentum-rule", o.momentum_rule, "new: p += v_new (default); old: p += v_old")
        ->check(CLI::IsMember({"new", "old"}));
    reg.add(app, "--sigma", o.sigma, "std of the Gaussian initial weights")->check(CLI::PositiveNumber);
    reg.add(app, "--seed", o.seed, "master seed");
    reg.flag(app, "--schedule-k,!--no-schedule-k", o.schedule_k, "anneal k over the first half of training");
    reg.add(app, "--k-initial", o.k_initial, "starting k of the schedule (0: max(k, round(0.1*hidden)))");
}

TrainConfig checked_config(const TrainOptions& o) {
    TrainConfig c = o.config();
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return c;
}

std::string loss_csv(const TrainResult& r) {
    std::string s = kLossHeader;
    for (const EpochStats& e : r.epochs)
        s += std::to_string(e.epoch) + "," + format_double(e.mean_loss) + "," + std::to_string(e.dead_units()) + "\n";
    return s;
}

Runner setup_train(CLI::App* app, OptionRegistry& reg) {
    auto o = std::make_shared<TrainOptions>();
    const DataNeeds needs{.synthetic = true, .split = true};
    add_data_options(app, reg, o->data, needs);
    add_model_options(app, reg, *o);
    return [o, needs](Context& ctx) {
        const TrainConfig config = checked_config(*o);
        ctx.manifest.set("resolved.k_initial", std::to_string(config.resolved_k_initial()));
        const LoadedData d = load_data(o->data, needs, o->seed, ctx);
        const TrainResult r = train_from_scratch(d.train.x, config);
        ctx.write_output("model.ksae", serialize_checkpoint(r.model));
        ctx.write_output("loss.csv", loss_csv(r));
        if (!r.epochs.empty())
            *ctx.out << "trained " << config.epochs << " epochs on " << d.train.size()
                     << " samples; final mean loss " << format_double(r.epochs.back().mean_loss) << ", "
                     << r.epochs.back().dead_units() << " dead units\n";
    };
}

// ---------------------------------------------------------------- encode

struct EncodeOptions {
    DataOptions data;
    std::string checkpoint;
    std::size_t k = 0;
    double alpha = 1.0;
    std::uint64_t seed = 0;
};

void add_encoder_options(CLI::App* app, OptionRegistry& reg, std::string& checkpoint, std::size_t& k, double& alpha) {
    reg.add(app, "--checkpoint", checkpoint, "model checkpoint (KSAE file)")->required();
    reg.add(app, "--k", k, "sparsity level the model was trained with")->required()->check(CLI::PositiveNumber);
    reg.add(app, "--alpha", alpha, "keep round(alpha*k) units")->check(CLI::Range(1.0, 1e6));
}

Runner setup_encode(CLI::App* app, OptionRegistry& reg) {
    auto o = std::make_shared<EncodeOptions>();
    const DataNeeds needs{.synthetic = true};
    add_data_options(app, reg, o->data, needs);
    add_encoder_options(app, reg, o->checkpoint, o->k, o->alpha);
    reg.add(app, "--seed", o->seed, "seed for --synthetic data");
    return [o, needs](Context& ctx) {
        const KsaeModel model = load_model(o->checkpoint, ctx);
        require_k(o->k, model.hidden_dim());
        const LoadedData d = load_data(o->data, needs, o->seed, ctx);
        require_input_dim(model, d.train.x);
        const std::vector<SparseCode> codes = encode_batch(model, d.train.x, o->k, o->alpha);
        std::string csv = kCodesHeader;
        for (std::size_t s = 0; s < codes.size(); ++s)
            for (std::size_t e = 0; e < codes[s].nnz(); ++e)
                csv += std::to_string(s) + "," + std::to_string(codes[s].indices()[e]) + "," +
                       format_double(codes[s].values()[e]) + "\n";
        ctx.write_output("codes.csv", csv);
        ctx.manifest.set("resolved.encoding_width", std::to_string(encoding_width(o->k, o->alpha, model.hidden_dim())));
        *ctx.out << "encoded " << codes.size() << " samples with "
                 << encoding_width(o->k, o->alpha, model.hidden_dim()) << " active units each\n";
    };
}

// ---------------------------------------------------------------- recover

struct RecoverOptions {
    DataOptions data;
    std::string synthetic;
    std::string checkpoint;
    std::size_t k = 0;
    std::size_t trials = 100;
    double noise = 0.0;
    std::size_t kmax_sweep = 0;
    bool orthonormal = false;
    std::uint64_t seed = 0;
};

struct RecoveryRow {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::size_t k = 0;
    double mu = 0.0;
    bool condition_holds = false;
    bool recovered = false;
    std::size_t iterations = 0;
    double residual = 0.0;
};

std::string recovery_line(const RecoveryRow& r) {
    return std::to_string(r.trial) + "," + std::to_string(r.seed) + "," + std::to_string(r.k) + "," +
           format_double(r.mu) + "," + (r.condition_holds ? "1" : "0") + "," + (r.recovered ? "1" : "0") + "," +
           std::to_string(r.iterations) + "," + format_double(r.residual) + "\n";
}

Runner setup_recover(CLI::App* app, OptionRegistry& reg) {
    auto o = std::make_shared<RecoverOptions>();
    const DataNeeds needs{.synthetic = false};
    add_data_options(app, reg, o->data, needs);
    reg.add(app, "--synthetic", o->synthetic, "planted problems DxHxkK with a fresh Gaussian dictionary per trial");
    reg.add(app, "--checkpoint", o->checkpoint, "recover codes of --images under a trained dictionary");
    reg.add(app, "--k", o->k, "sparsity for --checkpoint mode");
    reg.add(app, "--trials", o->trials, "trials (planted) or samples (checkpoint) to run")->check(CLI::PositiveNumber);
    reg.add(app, "--noise", o->noise, "Gaussian noise std added to planted signals")->check(CLI::NonNegativeNumber);
    reg.add(app, "--kmax-sweep", o->kmax_sweep, "run --trials trials for every k = 1..K (planted mode)");
    reg.flag(app, "--orthonormal", o->orthonormal, "square orthonormal dictionaries (needs D = H)");
    reg.add(app, "--seed", o->seed, "master seed; trial t uses a seed derived from (seed, t)");
    return [o, needs](Context& ctx) {
        if (o->synthetic.empty() == o->checkpoint.empty()) throw UsageError("give exactly one of --synthetic or --checkpoint");
        std::string csv = kRecoveryHeader;
        std::size_t recovered = 0;
        std::size_t total = 0;
        if (!o->synthetic.empty()) {
            const SyntheticSpec spec = parse_synthetic_spec(o->synthetic, true);
            if (o->orthonormal && spec.input_dim != spec.hidden_dim)
                throw UsageError("--orthonormal needs a square dictionary (D = H)");
            if (o->kmax_sweep > spec.input_dim) throw UsageError("--kmax-sweep must not exceed D");
            std::vector<std::size_t> ks;
            if (o->kmax_sweep == 0) {
                ks.push_back(spec.k);
            } else {
                for (std::size_t k = 1; k <= o->kmax_sweep; ++k) ks.push_back(k);
            }
            for (std::size_t k : ks)
                for (std::size_t i = 0; i < o->trials; ++i) {
                    const std::uint64_t seed = Rng::derive_seed(o->seed, total);
                    const PlantedTrial t =
                        run_planted_trial(spec.input_dim, spec.hidden_dim, k, o->noise, o->orthonormal, seed);
                    const RecoveryRow row{total++, seed, k, t.mu, t.condition_holds, t.support_recovered,
                                          t.iterations, t.residual};
                    recovered += row.recovered ? 1 : 0;
                    csv += recovery_line(row);
                }
        } else {
            if (o->k == 0) throw UsageError("--checkpoint mode needs --k");
            const KsaeModel model = load_model(o->checkpoint, ctx);
            require_k(o->k, model.hidden_dim());
            const LoadedData d = load_data(o->data, needs, o->seed, ctx);
            require_input_dim(model, d.train.x);
            const double mu = mutual_coherence(normalize_columns(model.weights));
            const DenseMatrix pre = forward_batch(model, d.train.x);
            const std::size_t n = std::min(o->trials, d.train.size());
            for (std::size_t s = 0; s < n; ++s) {
                Vector x(d.train.x.row(s).begin(), d.train.x.row(s).end());
                for (std::size_t i = 0; i < x.size(); ++i) x[i] -= model.output_bias[i];
                const ItiResult iti = iti_recover(model.weights, x, o->k);
                RecoveryRow row;
                row.trial = s;
                row.seed = o->seed;
                row.k = o->k;
                row.mu = mu;
                row.condition_holds = iti.code.nnz() > 0 && theorem31_condition(mu, iti.code).holds;
                // Agreement between the encoder's selection and the ITI support.
                row.recovered = iti.code.nnz() > 0 && iti.code.support() == top_k_support(pre.row(s), o->k);
                row.iterations = iti.iterations;
                row.residual = iti.residual_norm;
                recovered += row.recovered ? 1 : 0;
                ++total;
                csv += recovery_line(row);
            }
        }
        ctx.write_output("recovery.csv", csv);
        *ctx.out << "support recovered in " << recovered << " of " << total << " trials\n";
    };
}

// ---------------------------------------------------------------- coherence

struct CoherenceOptions {
    std::string checkpoint;
    std::string synthetic;
    std::string codes;
    std::uint64_t seed = 0;
};

std::vector<SparseCode> read_codes_csv(const std::string& path, std::size_t dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line != "sample,index,value") throw std::runtime_error(path + ": expected header sample,index,value");
    std::vector<std::vector<std::pair<std::size_t, double>>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string a, b, c;
        if (!std::getline(fields, a, ',') || !std::getline(fields, b, ',') || !std::getline(fields, c))
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected three fields");
        std::size_t sample = 0;
        std::size_t index = 0;
        double value = 0.0;
        try {
            sample = std::stoull(a);
            index = std::stoull(b);
            value = std::stod(c);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed number");
        }
        if (index >= dim)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": index " + std::to_string(index) +
                                     " >= " + std::to_string(dim));
        if (sample >= rows.size()) rows.resize(sample + 1);
        rows[sample].emplace_back(index, value);
    }
    std::vector<SparseCode> codes;
    for (auto& r : rows) {
        std::sort(r.begin(), r.end());
        std::vector<std::size_t> idx;
        Vector val;
        for (const auto& [i, v] : r) {
            idx.push_back(i);
            val.push_back(v);
        }
        codes.emplace_back(dim, std::move(idx), std::move(val));
    }
    return codes;
}

bool unit_norm_columns(const DenseMatrix& w) {
    for (std::size_t j = 0; j < w.cols(); ++j)
        if (std::abs(norm2(w.column(j)) - 1.0) > 1e-9) return false;
    return true;
}

Runner setup_coherence(CLI::App* app, OptionRegistry& reg) {
    auto o = std::make_shared<CoherenceOptions>();
    reg.add(app, "--checkpoint", o->checkpoint, "dictionary from a model checkpoint");
    reg.add(app, "--synthetic", o->synthetic, "random Gaussian dictionary DxH (or DxHxkK)");
    reg.add(app, "--codes", o->codes, "codes CSV (sample,index,value) to test the one-step recovery condition on");
    reg.add(app, "--seed", o->seed, "seed for --synthetic");
    return [o](Context& ctx) {
        if (o->synthetic.empty() == o->checkpoint.empty()) throw UsageError("give exactly one of --synthetic or --checkpoint");
        DenseMatrix w;
        if (!o->checkpoint.empty()) {
            w = load_model(o->checkpoint, ctx).weights;
        } else {
            const SyntheticSpec spec = parse_synthetic_spec(o->synthetic, false);
            Rng rng(Rng::derive_seed(o->seed, 3));
            w = gaussian_matrix(rng, spec.input_dim, spec.hidden_dim, 1.0);
        }
        std::string report = "atoms=" + std::to_string(w.cols()) + "\ninput_dim=" + std::to_string(w.rows()) + "\n";
        if (!unit_norm_columns(w)) {
            *ctx.err << "warning: dictionary atoms are not unit-norm; normalizing them\n";
            report += "mu_unnormalized=" + format_double(max_abs_inner_product(w)) + "\n";
            w = normalize_columns(w);
        }
        const double mu = mutual_coherence(w);
        report += "mu=" + format_double(mu) + "\n";
        report += "donoho_max_k=" + std::to_string(donoho_max_k(mu, w.cols())) + "\n";
        if (!o->codes.empty()) {
            ctx.note_input("codes", o->codes);
            const std::vector<SparseCode> codes = read_codes_csv(o->codes, w.cols());
            std::size_t holds = 0;
            std::size_t in_scope = 0;
            for (const SparseCode& z : codes) {
                const ConditionCheck c = theorem31_condition(mu, z);
                if (c.scope != ConditionScope::kInScope) continue;
                ++in_scope;
                holds += c.holds ? 1 : 0;
            }
            report += "codes=" + std::to_string(codes.size()) + "\n";
            report += "codes_in_scope=" + std::to_string(in_scope) + "\n";
            report += "condition_holds_fraction=" +
                      format_double(in_scope == 0 ? 0.0 : static_cast<double>(holds) / static_cast<double>(in_scope)) +
                      "\n";
        }
        ctx.write_output("coherence.txt", report);
        *ctx.out << report;
    };
}

// ---------------------------------------------------------------- visualize

struct VisualizeOptions {
    std::string checkpoint;
    std::string shape;
    std::size_t max_filters = 0;
};

Runner setup_visualize(CLI::App* app, OptionRegistry& reg) {
    auto o = std::make_shared<VisualizeOptions>();
    reg.add(app, "--checkpoint", o->checkpoint, "model checkpoint")->required();
    reg.add(app, "--shape", o->shape, "filter shape HxW (default: square)");
    reg.add(app, "--max-filters", o->max_filters, "draw only the first N filters (0: all)");
    return [o](Context& ctx) {
        const KsaeModel model = load_model(o->checkpoint, ctx);
        std::pair<std::size_t, std::size_t> shape;
        if (o->shape.empty()) {
            auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(model.input_dim()))));
            if (side * side != model.input_dim())
                throw UsageError("input_dim " + std::to_string(model.input_dim()) + " is not square; pass --shape");
            shape = {side, side};
        } else {
            shape = parse_shape(o->shape);
        }
        const GrayImage img = render_filter_grid(model.weights, shape.first, shape.second, o->max_filters);
        ctx.write_output("filters.pgm", encode_pgm(img));
        *ctx.out << "wrote " << img.width << "x" << img.height << " filter grid\n";
    };
}

// ---------------------------------------------------------------- hist

struct HistOptions {
    DataOptions data;
    std::string checkpoint;
    std::size_t k = 0;
    double alpha = 1.0;
    std::size_t bins = 20;
    std::uint64_t seed = 0;
};

Runner setup_hist(CLI::App* app, OptionRegistry& reg) {
    auto o = std::make_shared<HistOptions>();
    const DataNeeds needs{.synthetic = true};
    add_data_options(app, reg, o->data, needs);
    add_encoder_options(app, reg, o->checkpoint, o->k, o->alpha);
    reg.add(app, "--bins", o->bins, "equal-width bins over the nonzero activities")->check(CLI::PositiveNumber);
    reg.add(app, "--seed", o->seed, "seed for --synthetic data");
    return [o, needs](Context& ctx) {
        const KsaeModel model = load_model(o->checkpoint, ctx);
        require_k(o->k, model.hidden_dim());
        const LoadedData d = load_data(o->data, needs, o->seed, ctx);
        require_input_dim(model, d.train.x);
        const std::vector<SparseCode> codes = encode_batch(model, d.train.x, o->k, o->alpha);
        Vector nonzero;
        for (const SparseCode& c : codes)
            for (double v : c.values())
                if (v != 0.0) nonzero.push_back(v);
        const std::size_t total = d.train.size() * model.hidden_dim();
        std::string csv = kHistHeader;
        csv += "0,0," + std::to_string(total - nonzero.size()) + "\n";
        if (!nonzero.empty()) {
            const auto [lo_it, hi_it] = std::minmax_element(nonzero.begin(), nonzero.end());
            const double lo = *lo_it;
            const double hi = *hi_it;
            const double width = (hi - lo) / static_cast<double>(o->bins);
            std::vector<std::size_t> counts(o->bins, 0);
            for (double v : nonzero) {
                std::size_t b = width > 0.0 ? static_cast<std::size_t>((v - lo) / width) : 0;
                counts[std::min(b, o->bins - 1)] += 1;
            }
            for (std::size_t b = 0; b < o->bins; ++b) {
                const double b_lo = lo + static_cast<double>(b) * width;
                const double b_hi = b + 1 == o->bins ? hi : lo + static_cast<double>(b + 1) * width;
                csv += format_double(b_lo) + "," + format_double(b_hi) + "," + std::to_string(counts[b]) + "\n";
            }
        }
        ctx.write_output("hist.csv", csv);
        *ctx.out << "histogram of " << total << " activities, " << nonzero.size() << " nonzero\n";
    };
}

// ---------------------------------------------------------------- supervised commands

struct SupervisedOptions {
    std::size_t epochs = 20;
    std::size_t batch = 100;
    double lr = 1.0;
    double lr_final = 0.001;
    double momentum = 0.25;
    std::string momentum_rule = "new";
    std::uint64_t seed = 0;
    std::string run_id = "run";

    SupervisedSchedule schedule() const {
        SupervisedSchedule s;
        s.epochs = epochs;
        s.batch_size = batch;
        s.learning_rate = {lr, lr_final, epochs > 1 ? epochs - 1 : 1};
        s.momentum = {momentum, std::nullopt, 0};
        s.momentum_rule = parse_rule(momentum_rule);
        s.seed = seed;
        return s;
    }
};

void add_supervised_options(CLI::App* app, OptionRegistry& reg, SupervisedOptions& o, const std::string& prefix) {
    reg.add(app, "--" + prefix + "epochs", o.epochs, "supervised epochs");
    reg.add(app, "--" + prefix + "batch", o.batch, "supervised minibatch size")->check(CLI::PositiveNumber);
    reg.add(app, "--" + prefix + "lr", o.lr, "initial supervised learning rate")->check(CLI::PositiveNumber);
    reg.add(app, "--" + prefix + "lr-final", o.lr_final, "learning rate reached linearly at the last epoch")
        ->check(CLI::PositiveNumber);
    reg.add(app, "--" + prefix + "momentum", o.momentum, "supervised momentum")->check(CLI::Range(0.0, 0.999999));
    reg.add(app, "--" + prefix + "momentum-rule", o.momentum_rule, "new | old")->check(CLI::IsMember({"new", "old"}));
}

struct EvalRow {
    std::string run_id;
    std::string dataset;
    std::size_t n_train = 0;
    std::string hidden;
    std::string k;
    std::string alpha;
    std::string stage;
    double error_rate = 0.0;
};

std::string eval_csv(const std::vector<EvalRow>& rows) {
    std::string s = kEvalHeader;
    for (const EvalRow& r : rows)
        s += r.run_id + "," + r.dataset + "," + std::to_string(r.n_train) + "," + r.hidden + "," + r.k + "," +
             r.alpha + "," + r.stage + "," + format_double(r.error_rate) + "\n";
    return s;
}

void report_rows(Context& ctx, const std::vector<EvalRow>& rows) {
    for (const EvalRow& r : rows)
        *ctx.out << r.stage << " " << r.dataset << " error " << format_double(r.error_rate) << "\n";
}

struct EvalOptions {
    DataOptions data;
    SupervisedOptions sup;
    std::string features = "ksae";
    std::string checkpoint;
    std::size_t k = 0;
    double alpha = 1.0;
};

const DataNeeds kSupervisedNeeds{.synthetic = false, .labels = true, .test = true, .split = true};

Runner setup_eval(CLI::App* app, OptionRegistry& reg) {
    auto o = std::make_shared<EvalOptions>();
    add_data_options(app, reg, o->data, kSupervisedNeeds);
    reg.add(app, "--features", o->features, "ksae: frozen sparse features; raw: pixels")
        ->check(CLI::IsMember({"raw", "ksae"}));
    reg.add(app, "--checkpoint", o->checkpoint, "model checkpoint (ksae features)");
    reg.add(app, "--k", o->k, "sparsity level of the model");
    reg.add(app, "--alpha", o->alpha, "keep round(alpha*k) units")->check(CLI::Range(1.0, 1e6));
    add_supervised_options(app, reg, o->sup, "");
    reg.add(app, "--seed", o->sup.seed, "seed of the minibatch order");
    reg.add(app, "--run-id", o->sup.run_id, "run_id column of eval.csv");
    return [o](Context& ctx) {
        const bool ksae_features = o->features == "ksae";
        if (ksae_features && (o->checkpoint.empty() || o->k == 0))
            throw UsageError("--features ksae needs --checkpoint and --k");
        if (!ksae_features && !o->checkpoint.empty()) throw UsageError("--features raw takes no --checkpoint");
        const LoadedData d = load_data(o->data, kSupervisedNeeds, o->sup.seed, ctx);
        DenseMatrix train_f = d.train.x;
        DenseMatrix test_f = d.test->x;
        EvalRow base{o->sup.run_id, "", d.train.size(), "0", "0", "0", "raw", 0.0};
        if (ksae_features) {
            const KsaeModel model = load_model(o->checkpoint, ctx);
            require_k(o->k, model.hidden_dim());
            require_input_dim(model, train_f);
            train_f = encode_dense(model, train_f, o->k, o->alpha);
            test_f = encode_dense(model, test_f, o->k, o->alpha);
            base.hidden = std::to_string(model.hidden_dim());
            base.k = std::to_string(o->k);
            base.alpha = format_double(o->alpha);
            base.stage = "frozen";
        }
        const HeadTrainResult r = train_head(SoftmaxHead::zeros(train_f.cols(), d.train.class_count), train_f,
                                             d.train.y, o->sup.schedule());
        ctx.write_output("head.khed", serialize_head(r.head));
        std::vector<EvalRow> rows(2, base);
        rows[0].dataset = "train";
        rows[0].error_rate = evaluate(r.head, train_f, d.train.y);
        rows[1].dataset = "test";
        rows[1].error_rate = evaluate(r.head, test_f, d.test->y);
        ctx.write_output("eval.csv", eval_csv(rows));
        report_rows(ctx, rows);
    };
}

struct FinetuneOptions {
    DataOptions data;
    SupervisedOptions sup;
    std::string checkpoint;
    std::string head;
    std::size_t k = 0;
    double alpha = 1.0;
};

Runner setup_finetune(CLI::App* app, OptionRegistry& reg) {
    auto o = std::make_shared<FinetuneOptions>();
    add_data_options(app, reg, o->data, kSupervisedNeeds);
    add_encoder_options(app, reg, o->checkpoint, o->k, o->alpha);
    reg.add(app, "--head", o->head, "starting softmax head (KHED); trained on frozen features when absent");
    add_supervised_options(app, reg, o->sup, "");
    reg.add(app, "--seed", o->sup.seed, "seed of the minibatch order");
    reg.add(app, "--run-id", o->sup.run_id, "run_id column of eval.csv");
    return [o](Context& ctx) {
        const KsaeModel model = load_model(o->checkpoint, ctx);
        require_k(o->k, model.hidden_dim());
        const LoadedData d = load_data(o->data, kSupervisedNeeds, o->sup.seed, ctx);
        require_input_dim(model, d.train.x);
        const LabeledDataset& train = d.train;
        const LabeledDataset& test = *d.test;

        SoftmaxHead head;
        if (!o->head.empty()) {
            ctx.note_input("head", o->head);
            head = load_head(o->head);
            if (head.feature_dim() != model.hidden_dim() || head.class_count() < train.class_count)
                throw std::runtime_error("head shape does not match the checkpoint and labels");
        } else {
            head = train_head(SoftmaxHead::zeros(model.hidden_dim(), train.class_count),
                              encode_dense(model, train.x, o->k, o->alpha), train.y, o->sup.schedule())
                       .head;
        }
        const EvalRow base{o->sup.run_id, "", train.size(), std::to_string(model.hidden_dim()), std::to_string(o->k),
                           format_double(o->alpha), "", 0.0};
        std::vector<EvalRow> rows;
        auto add_rows = [&](const std::string& stage, const KsaeModel& m, const SoftmaxHead& h) {
            for (const auto* part : {&train, &test}) {
                EvalRow r = base;
                r.dataset = part == &train ? "train" : "test";
                r.stage = stage;
                r.error_rate = evaluate(h, encode_dense(m, part->x, o->k, o->alpha), part->y);
                rows.push_back(r);
            }
        };
        add_rows("frozen", model, head);
        const ShallowFinetuneResult r = finetune_shallow(model, head, train, o->k, o->alpha, o->sup.schedule());
        add_rows("finetune", r.model, r.head);
        ctx.write_output("model.ksae", serialize_checkpoint(r.model));
        ctx.write_output("head.khed", serialize_head(r.head));
        ctx.write_output("eval.csv", eval_csv(rows));
        report_rows(ctx, rows);
    };
}

struct PretrainDeepOptions {
    DataOptions data;
    SupervisedOptions sup;
    std::string hidden;
    std::string k;
    std::string alpha = "1";
    std::size_t epochs = 10;
    std::size_t batch = 100;
    double lr = 0.01;
    double momentum = 0.9;
    double sigma = 0.01;
    bool schedule_k = true;
    std::string stage_epochs;
};

std::string join(const std::vector<std::string>& parts) {
    std::string s;
    for (const auto& p : parts) s += (s.empty() ? "" : ":") + p;
    return s;
}

Runner setup_pretrain_deep(CLI::App* app, OptionRegistry& reg) {
    auto o = std::make_shared<PretrainDeepOptions>();
    add_data_options(app, reg, o->data, kSupervisedNeeds);
    reg.add(app, "--hidden", o->hidden, "hidden units per layer, e.g. 256,128")->required();
    reg.add(app, "--k", o->k, "k per layer, e.g. 6,4")->required();
    reg.add(app, "--alpha", o->alpha, "alpha per layer (one value applies to all)");
    reg.add(app, "--epochs", o->epochs, "unsupervised epochs per layer");
    reg.add(app, "--batch", o->batch, "unsupervised minibatch size")->check(CLI::PositiveNumber);
    reg.add(app, "--lr", o->lr, "unsupervised learning rate")->check(CLI::PositiveNumber);
    reg.add(app, "--momentum", o->momentum, "unsupervised momentum")->check(CLI::Range(0.0, 0.999999));
    reg.add(app, "--sigma", o->sigma, "std of the Gaussian initial weights")->check(CLI::PositiveNumber);
    reg.flag(app, "--schedule-k,!--no-schedule-k", o->schedule_k, "anneal k during pre-training");
    o->sup.lr = 0.3;
    add_supervised_options(app, reg, o->sup, "sup-");
    reg.add(app, "--stage-epochs", o->stage_epochs, "epochs of the head,upper,all stages (default: thirds of --sup-epochs)");
    reg.add(app, "--seed", o->sup.seed, "master seed");
    reg.add(app, "--run-id", o->sup.run_id, "run_id column of eval.csv");
    return [o](Context& ctx) {
        const std::vector<std::size_t> hidden = parse_size_list(o->hidden, "--hidden");
        const std::vector<std::size_t> ks = parse_size_list(o->k, "--k");
        std::vector<double> alphas = parse_double_list(o->alpha, "--alpha");
        if (alphas.size() == 1) alphas.assign(hidden.size(), alphas.front());
        if (ks.size() != hidden.size() || alphas.size() != hidden.size())
            throw UsageError("--hidden, --k and --alpha need one value per layer");
        DeepFinetuneSchedule fs;
        fs.base = o->sup.schedule();
        if (!o->stage_epochs.empty()) {
            std::vector<std::size_t> stages;
            for (const auto& part : parse_double_list(o->stage_epochs, "--stage-epochs")) {
                if (part < 0 || part != std::floor(part)) throw UsageError("--stage-epochs: whole numbers expected");
                stages.push_back(static_cast<std::size_t>(part));
            }
            if (stages.size() != 3) throw UsageError("--stage-epochs needs three values (head,upper,all)");
            for (std::size_t i = 0; i < 3; ++i) fs.stage_epochs[i] = stages[i];
        }
        std::vector<TrainConfig> configs;
        for (std::size_t l = 0; l < hidden.size(); ++l) {
            TrainConfig c;
            c.k = ks[l];
            c.alpha = alphas[l];
            c.hidden_dim = hidden[l];
            c.epochs = o->epochs;
            c.batch_size = o->batch;
            c.init_sigma = o->sigma;
            c.momentum = {o->momentum, std::nullopt, 0};
            c.learning_rate = {o->lr, std::nullopt, 0};
            c.k_schedule_enabled = o->schedule_k;
            c.seed = Rng::derive_seed(o->sup.seed, 10 + l);
            try {
                c.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError("layer " + std::to_string(l + 1) + ": " + e.what());
            }
            configs.push_back(c);
        }

        const LoadedData d = load_data(o->data, kSupervisedNeeds, o->sup.seed, ctx);
        PretrainResult pre = pretrain_stack(d.train.x, configs);
        for (std::size_t l = 0; l < pre.stack.layers.size(); ++l)
            ctx.write_output("layer" + std::to_string(l + 1) + ".ksae", serialize_checkpoint(pre.stack.layers[l]));

        std::vector<std::string> hs, kstr, as;
        for (std::size_t l = 0; l < hidden.size(); ++l) {
            hs.push_back(std::to_string(hidden[l]));
            kstr.push_back(std::to_string(ks[l]));
            as.push_back(format_double(alphas[l]));
        }
        const EvalRow base{o->sup.run_id, "", d.train.size(), join(hs), join(kstr), join(as), "", 0.0};
        std::vector<EvalRow> rows;
        const DeepFinetuneResult r = finetune_deep(std::move(pre.stack), d.train, fs,
                                                   [&](const std::string& stage, const DeepStack& stack) {
                                                       for (const auto* part : {&d.train, &*d.test}) {
                                                           EvalRow row = base;
                                                           row.dataset = part == &d.train ? "train" : "test";
                                                           row.stage = stage;
                                                           row.error_rate = evaluate(stack, *part);
                                                           rows.push_back(row);
                                                       }
                                                   });
        for (std::size_t l = 0; l < r.stack.layers.size(); ++l)
            ctx.write_output("finetuned_layer" + std::to_string(l + 1) + ".ksae",
                             serialize_checkpoint(r.stack.layers[l]));
        ctx.write_output("head.khed", serialize_head(r.stack.head));
        ctx.write_output("eval.csv", eval_csv(rows));
        report_rows(ctx, rows);
    };
}

}  // namespace

std::vector<CommandSpec> command_table() {
    return {
        {"train", "train a k-sparse autoencoder", setup_train},
        {"encode", "write alpha*k-sparse codes of a dataset", setup_encode},
        {"recover", "sparse recovery trials with iterative thresholding and inversion", setup_recover},
        {"coherence", "mutual coherence and recovery-condition statistics of a dictionary", setup_coherence},
        {"visualize", "draw the filters of a checkpoint as a PGM grid", setup_visualize},
        {"hist", "histogram of the sparse hidden activities", setup_hist},
        {"eval", "softmax classifier on raw pixels or frozen sparse features", setup_eval},
        {"finetune", "supervised fine-tuning through the sparse layer", setup_finetune},
        {"pretrain-deep", "greedy layer-wise pre-training and three-stage fine-tuning", setup_pretrain_deep},
    };
}

}  // namespace ksae::cli
