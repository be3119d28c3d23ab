// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "ksae/checkpoint.hpp"
#include "ksae/cli.hpp"
#include "ksae/datasets.hpp"
#include "ksae/heads.hpp"
#include "ksae/kernels.hpp"
#include "ksae/linalg.hpp"
#include "ksae/pgm.hpp"
#include "ksae/recovery.hpp"
#include "ksae/topk.hpp"
#include "ksae/train.hpp"
#include "support/planted_training.hpp"
#include "support/theorem_instances.hpp"

using namespace ksae;

namespace {

const std::filesystem::path kData = KSAE_DATA_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

LabeledDataset digits() {
    static const LabeledDataset d =
        load_idx(kData / "digits5k-images-idx3-ubyte.gz", kData / "digits5k-labels-idx1-ubyte.gz");
    return d;
}

// Same 4000/1000 split for every digit criterion, one per seed.
DatasetSplit digit_split(std::uint64_t seed) { return split(digits(), 4000, seed); }

double rel_err(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double central(std::span<double> p, std::size_t i, const std::function<double()>& f) {
    const double h = 1e-6;
    const double saved = p[i];
    p[i] = saved + h;
    const double up = f();
    p[i] = saved - h;
    const double down = f();
    p[i] = saved;
    return (up - down) / (2 * h);
}

KsaeModel random_model(Rng& rng, std::size_t in, std::size_t hid) {
    KsaeModel m = KsaeModel::random(in, hid, 0.5, rng);
    for (double& v : m.hidden_bias) v = 0.1 * rng.gaussian();
    for (double& v : m.output_bias) v = 0.1 * rng.gaussian();
    return m;
}

// ---------------------------------------------------------------- AC1

Outcome ac1_sparsity() {
    std::size_t violations = 0, codes = 0;
    const DatasetSplit sp = digit_split(1);
    const DenseMatrix x = sp.train.x.slice_rows(0, 1000);
    TrainConfig c;
    c.k = 10;
    c.hidden_dim = 100;
    c.epochs = 6;
    c.seed = 1;
    const TrainResult r = train_from_scratch(x, c, [&](std::size_t epoch, std::size_t, std::size_t k,
                                                       std::span<const SparseCode> batch) {
        if (k != scheduled_k(c, epoch)) ++violations;
        for (const auto& z : batch) {
            ++codes;
            if (z.nnz() > k) ++violations;
        }
    });
    for (const auto& e : r.epochs)
        if (e.max_code_nnz > scheduled_k(c, e.epoch)) ++violations;

    // Test time: exactly max(k, round(alpha k)) units, capped at hidden_dim.
    std::size_t test_codes = 0;
    for (double alpha : {1.0, 1.5, 2.0, 3.0, 4.25, 50.0}) {
        const std::size_t expect = std::min<std::size_t>(
            c.hidden_dim, std::max<std::size_t>(c.k, static_cast<std::size_t>(std::lround(alpha * c.k))));
        for (const auto& z : encode_batch(r.model, sp.validation.x, c.k, alpha)) {
            ++test_codes;
            if (z.nnz() != expect) ++violations;
        }
    }
    // And through a stacked forward pass.
    DeepStack stack{{r.model}, {{c.k, 3.0}}, SoftmaxHead::zeros(c.hidden_dim, 10)};
    const StackForward f = stack_forward(stack, sp.validation.x);
    for (const auto& z : f.codes[0]) {
        ++test_codes;
        if (z.nnz() != 30) ++violations;
    }
    return {violations == 0,
            fmt("%zu training codes, %zu test-time codes, %zu violations", codes, test_codes, violations)};
}

// ---------------------------------------------------------------- AC2

// Mean ||x - (W_S z_S + b_out)||^2 with z_S = W_S^T x + b_S, supports fixed.
double frozen_recon_loss(const KsaeModel& m, const DenseMatrix& x, const std::vector<SupportSet>& s) {
    double total = 0.0;
    for (std::size_t b = 0; b < x.rows(); ++b) {
        Vector xhat(m.output_bias);
        for (std::size_t j : s[b]) {
            double z = m.hidden_bias[j];
            for (std::size_t i = 0; i < x.cols(); ++i) z += m.weights(i, j) * x(b, i);
            for (std::size_t i = 0; i < x.cols(); ++i) xhat[i] += m.weights(i, j) * z;
        }
        for (std::size_t i = 0; i < x.cols(); ++i) total += (x(b, i) - xhat[i]) * (x(b, i) - xhat[i]);
    }
    return total / static_cast<double>(x.rows());
}

Outcome ac2_gradients() {
    // Relative error |a - b| / max(|a|, |b|, 1e-3); the floor only matters for
    // entries whose gradient is itself below 1e-3.
    constexpr double kFloor = 1e-3;
    Rng rng(2024);
    double worst_ae = 0, worst_head = 0, worst_stack = 0;
    std::size_t checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t in = 2 + rng.uniform_index(11), hid = 2 + rng.uniform_index(19);
        const std::size_t k = 1 + rng.uniform_index(hid);
        KsaeModel m = random_model(rng, in, hid);
        const DenseMatrix x = gaussian_matrix(rng, 1 + rng.uniform_index(6), in, 1.0);
        const Gradients g = backward(m, x, k);
        std::vector<SupportSet> s;
        for (const auto& z : g.codes) s.push_back(z.support());
        auto f = [&] { return frozen_recon_loss(m, x, s); };
        auto params = m.parameters();
        const std::array<std::span<const double>, 3> an{g.weights.values(), g.hidden_bias, g.output_bias};
        for (std::size_t p = 0; p < 3; ++p)
            for (std::size_t i = 0; i < params[p].size(); ++i, ++checked)
                worst_ae = std::max(worst_ae, rel_err(an[p][i], central(params[p], i, f), kFloor));
    }
    // Softmax head alone, then one and two sparse layers under it.
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t layers = static_cast<std::size_t>(trial % 3);
        const std::size_t in = 2 + rng.uniform_index(11), classes = 2 + rng.uniform_index(4);
        DeepStack st;
        std::size_t width = in;
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t hid = 2 + rng.uniform_index(19);
            st.layers.push_back(random_model(rng, width, hid));
            const std::size_t k = 1 + rng.uniform_index(hid);
            st.sparsity.push_back({k, 1.0 + 2.0 * rng.uniform()});
            width = hid;
        }
        st.head = SoftmaxHead::zeros(width, classes);
        for (double& v : st.head.weights.values()) v = rng.gaussian();
        for (double& v : st.head.bias) v = rng.gaussian();
        const std::size_t batch = 1 + rng.uniform_index(6);
        const DenseMatrix x = gaussian_matrix(rng, batch, in, 1.0);
        std::vector<std::uint32_t> y;
        for (std::size_t b = 0; b < batch; ++b) y.push_back(static_cast<std::uint32_t>(rng.uniform_index(classes)));
        const StackGradients g = stack_gradients(st, x, y);
        // Independent head oracle: -mean log softmax(h W + b)[y].
        auto f = [&] {
            // Layer l keeps (W_l^T h + b_l) on its frozen support, zero elsewhere.
            DenseMatrix h = x;
            for (std::size_t l = 0; l < layers; ++l) {
                const KsaeModel& m = st.layers[l];
                DenseMatrix next(batch, m.hidden_dim());
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t j : g.supports[l][b]) {
                        double z = m.hidden_bias[j];
                        for (std::size_t i = 0; i < m.input_dim(); ++i) z += m.weights(i, j) * h(b, i);
                        next(b, j) = z;
                    }
                h = std::move(next);
            }
            double total = 0;
            for (std::size_t b = 0; b < batch; ++b) {
                std::vector<double> logit(classes);
                for (std::size_t c = 0; c < classes; ++c) {
                    logit[c] = st.head.bias[c];
                    for (std::size_t i = 0; i < width; ++i) logit[c] += h(b, i) * st.head.weights(i, c);
                }
                const double mx = *std::max_element(logit.begin(), logit.end());
                double z = 0;
                for (double l : logit) z += std::exp(l - mx);
                total += -(logit[y[b]] - mx - std::log(z));
            }
            return total / static_cast<double>(batch);
        };
        double& worst = layers == 0 ? worst_head : worst_stack;
        auto check = [&](std::span<double> p, std::span<const double> a) {
            for (std::size_t i = 0; i < p.size(); ++i, ++checked) worst = std::max(worst, rel_err(a[i], central(p, i, f), kFloor));
        };
        for (std::size_t l = 0; l < layers; ++l) {
            check(st.layers[l].weights.values(), g.layer_weights[l].values());
            check(st.layers[l].hidden_bias, g.layer_biases[l]);
        }
        check(st.head.weights.values(), g.head.weights.values());
        check(st.head.bias, g.head.bias);
    }
    const double worst = std::max({worst_ae, worst_head, worst_stack});
    return {worst < 1e-5, fmt("%zu entries; max relative error: autoencoder %.2e, head %.2e, sparse layers %.2e",
                              checked, worst_ae, worst_head, worst_stack)};
}

// ---------------------------------------------------------------- AC3

Outcome ac3_theorem() {
    Rng rng(31);
    const std::size_t n = 12000;
    std::size_t held = 0, near = 0, counterexamples = 0, recovered_outside = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = ksae::testing::make_theorem_instance(rng, i);
        const bool ok = ksae::testing::one_step_recovers(t);
        if (t.check.holds) {
            ++held;
            if (t.check.lhs >= 0.9 * t.check.rhs) ++near;
            if (!ok) ++counterexamples;
        } else if (ok) {
            ++recovered_outside;
        }
    }
    return {counterexamples == 0 && n >= 10000 && near > 0,
            fmt("%zu instances, condition held in %zu (%zu with lhs/rhs in [0.9, 1]), %zu counterexamples; "
                "%zu recovered without the condition",
                n, held, near, counterexamples, recovered_outside)};
}

// ---------------------------------------------------------------- AC4

Outcome ac4_iti() {
    std::size_t recovered = 0, bad_residual = 0;
    double worst = 0;
    for (std::size_t t = 0; t < 100; ++t) {
        const PlantedTrial r = run_planted_trial(64, 128, 5, 0.0, false, Rng::derive_seed(0, t));
        if (!r.support_recovered) continue;
        ++recovered;
        worst = std::max(worst, r.residual);
        if (!(r.residual < 1e-8)) ++bad_residual;
    }
    return {recovered >= 95 && bad_residual == 0,
            fmt("%zu/100 supports recovered (pinned: 100), max residual on recovered trials %.2e", recovered, worst)};
}

// ---------------------------------------------------------------- AC5

Outcome ac5_topk() {
    Rng rng(5);
    std::size_t mismatches = 0, with_ties = 0;
    for (std::size_t t = 0; t < 10000; ++t) {
        const std::size_t n = 1 + rng.uniform_index(64);
        Vector v(n);
        const int mode = static_cast<int>(t % 4);
        for (double& x : v) {
            if (mode == 0) x = rng.gaussian();
            else if (mode == 1) x = static_cast<double>(rng.uniform_index(4)) - 1.5;  // heavy ties
            else if (mode == 2) x = 0.0;
            else x = rng.uniform() < 0.5 ? 1e-300 * rng.gaussian() : 1e300 * rng.gaussian();
        }
        const std::size_t k = 1 + rng.uniform_index(n);
        Vector sorted = v;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        if (k < n && sorted[k - 1] == sorted[k]) ++with_ties;
        if (top_k_support(v, k) != top_k_by_threshold(v, k)) ++mismatches;
    }
    return {mismatches == 0, fmt("10000 vectors (%zu with a tie at the k-th value), %zu mismatches", with_ties, mismatches)};
}

// ---------------------------------------------------------------- AC6

Outcome ac6_classification() {
    double raw_sum = 0, ksae_sum = 0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const DatasetSplit sp = digit_split(seed);
        TrainConfig c;
        c.k = 6;
        c.hidden_dim = 256;
        c.epochs = 10;
        c.seed = seed;
        const KsaeModel model = train_from_scratch(sp.train.x, c).model;
        const SupervisedSchedule budget = SupervisedSchedule::digits_defaults(20, seed);
        const SoftmaxHead raw = train_head(SoftmaxHead::zeros(784, 10), sp.train.x, sp.train.y, budget).head;
        const DenseMatrix f_train = encode_dense(model, sp.train.x, 6, 3.0);
        const DenseMatrix f_test = encode_dense(model, sp.validation.x, 6, 3.0);
        const SoftmaxHead head = train_head(SoftmaxHead::zeros(256, 10), f_train, sp.train.y, budget).head;
        const double e_raw = evaluate(raw, sp.validation.x, sp.validation.y);
        const double e_ksae = evaluate(head, f_test, sp.validation.y);
        raw_sum += e_raw;
        ksae_sum += e_ksae;
        per_seed += fmt(" [seed %llu: %.3f vs %.3f]", static_cast<unsigned long long>(seed), e_ksae, e_raw);
    }
    return {ksae_sum < raw_sum,
            fmt("4000 train / 1000 test, 256 hidden, k=6, alpha=3: mean test error k-sparse %.4f vs raw pixels %.4f;",
                ksae_sum / 3, raw_sum / 3) +
                per_seed};
}

// ---------------------------------------------------------------- AC7

Outcome ac7_scheduling() {
    double with = 0, without = 0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const DatasetSplit sp = digit_split(seed);
        TrainConfig c;
        c.k = 5;  // 2% of 256
        c.hidden_dim = 256;
        c.epochs = 10;
        c.seed = seed;
        const double a = static_cast<double>(train_from_scratch(sp.train.x, c).epochs.back().dead_units()) / 256.0;
        c.k_schedule_enabled = false;
        const double b = static_cast<double>(train_from_scratch(sp.train.x, c).epochs.back().dead_units()) / 256.0;
        with += a;
        without += b;
        per_seed += fmt(" [seed %llu: %.3f vs %.3f]", static_cast<unsigned long long>(seed), a, b);
    }
    return {with <= without, fmt("k=5 of 256, 10 epochs: mean dead fraction with scheduling %.3f vs without %.3f;",
                                 with / 3, without / 3) +
                                 per_seed};
}

// ---------------------------------------------------------------- AC8

Outcome ac8_incoherence() {
    std::size_t lower = 0, low_error = 0;
    double worst_ratio = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(Rng::derive_seed(seed, 3));
        const SynthProblem p = ksae::testing::orthonormal_planted(rng, 32, 2000, 3);
        const TrainConfig c = ksae::testing::planted_config(seed);
        Rng init_gen = init_rng(c);
        const KsaeModel init = KsaeModel::random(32, 32, c.init_sigma, init_gen);
        const TrainResult r = train(init, p.samples, c);
        const double ratio = r.epochs.back().mean_loss / r.epochs.front().mean_loss;
        worst_ratio = std::max(worst_ratio, ratio);
        if (ratio < 0.01) ++low_error;
        if (mutual_coherence(normalize_columns(r.model.weights)) < mutual_coherence(normalize_columns(init.weights)))
            ++lower;
    }
    return {lower >= 9, fmt("%zu/10 seeds with mu(learned) < mu(init) (32x32 orthonormal planted data, k=3); "
                            "%zu/10 reached loss < 1%% of the first epoch, worst %.2e",
                            lower, low_error, worst_ratio)};
}

// ---------------------------------------------------------------- AC9

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

// Every output file. The manifest's wall-clock time, output directory and
// thread count are the only lines expected to differ.
std::map<std::string, std::string> outputs(const std::filesystem::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        std::string body = slurp(e.path());
        if (e.path().filename() == "manifest.txt") {
            std::istringstream in(body);
            body.clear();
            for (std::string line; std::getline(in, line);)
                if (line.rfind("duration_seconds=", 0) != 0 && line.rfind("out=", 0) != 0 &&
                    line.rfind("threads=", 0) != 0)
                    body += line + "\n";
        }
        files[e.path().filename().string()] = body;
    }
    return files;
}

Outcome ac9_determinism(const std::filesystem::path& work) {
    const std::string img = (kData / "digits5k-images-idx3-ubyte.gz").string();
    const std::string lab = (kData / "digits5k-labels-idx1-ubyte.gz").string();
    const std::string ckpt = (work / "det_train_a" / "model.ksae").string();
    const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
        {"train", {"train", "--images", img, "--labels", lab, "--n-train", "1000", "--hidden", "64", "--k", "5",
                   "--epochs", "3", "--seed", "3"}},
        {"train_synthetic", {"train", "--synthetic", "32x64xk4", "--samples", "500", "--hidden", "64", "--k", "4",
                             "--epochs", "3", "--seed", "4"}},
        {"encode", {"encode", "--checkpoint", ckpt, "--k", "5", "--alpha", "2", "--images", img, "--labels", lab}},
        {"recover", {"recover", "--synthetic", "32x64xk4", "--trials", "10", "--noise", "0.01", "--seed", "5"}},
        {"coherence", {"coherence", "--checkpoint", ckpt}},
        {"visualize", {"visualize", "--checkpoint", ckpt}},
        {"hist", {"hist", "--checkpoint", ckpt, "--k", "5", "--images", img, "--labels", lab}},
        {"eval", {"eval", "--checkpoint", ckpt, "--features", "ksae", "--k", "5", "--alpha", "2", "--images", img,
                  "--labels", lab, "--n-train", "1000", "--epochs", "2"}},
        {"finetune", {"finetune", "--checkpoint", ckpt, "--k", "5", "--images", img, "--labels", lab, "--n-train",
                      "1000", "--epochs", "2"}},
        {"pretrain-deep", {"pretrain-deep", "--hidden", "32,16", "--k", "4,3", "--alpha", "2", "--epochs", "2",
                           "--sup-epochs", "3", "--images", img, "--labels", lab, "--n-train", "500"}},
    };
    std::size_t files = 0;
    std::vector<std::string> failures;
    for (const auto& [name, args] : commands) {
        std::map<std::string, std::string> runs[2];
        for (int i = 0; i < 2; ++i) {
            const auto dir = work / ("det_" + name + (i == 0 ? "_a" : "_b"));
            std::vector<std::string> a = args;
            a.push_back("--out");
            a.push_back(dir.string());
            // The second run uses a different thread count.
            ::setenv("KSAE_THREADS", i == 0 ? "1" : "3", 1);
            std::ostringstream out, err;
            if (cli::run(a, out, err) != cli::kExitOk) failures.push_back(name + " exited with an error: " + err.str());
            runs[i] = outputs(dir);
        }
        files += runs[0].size();
        if (runs[0] != runs[1]) failures.push_back(name + " outputs differ");
        if (name == "train" && runs[0].empty()) failures.push_back("train wrote nothing");
    }
    ::unsetenv("KSAE_THREADS");
    kernels::set_thread_count(1);
    std::string detail =
        fmt("%zu commands run twice (1 and 3 threads), %zu output files compared byte for byte", commands.size(), files);
    for (const auto& f : failures) detail += "; " + f;
    return {failures.empty(), detail};
}

// ---------------------------------------------------------------- AC10

Bytes gunzip_file(const std::filesystem::path& p) {
    gzFile f = gzopen(p.string().c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open " + p.string());
    Bytes out;
    std::uint8_t buf[1 << 15];
    for (int n; (n = gzread(f, buf, sizeof buf)) > 0;) out.insert(out.end(), buf, buf + n);
    gzclose(f);
    return out;
}

Outcome ac10_formats(const std::filesystem::path& work) {
    std::vector<std::string> failures;

    // IDX: the fixture's decompressed bytes come back exactly.
    const auto img_gz = kData / "digits5k-images-idx3-ubyte.gz";
    const auto lab_gz = kData / "digits5k-labels-idx1-ubyte.gz";
    const LabeledDataset d = load_idx(img_gz, lab_gz);
    if (encode_idx_images(d) != gunzip_file(img_gz)) failures.push_back("IDX image bytes differ");
    if (encode_idx_labels(d) != gunzip_file(lab_gz)) failures.push_back("IDX label bytes differ");
    save_idx(d, work / "img.idx", work / "lab.idx");
    const LabeledDataset back = load_idx(work / "img.idx", work / "lab.idx");
    if (back.x != d.x || back.y != d.y || back.image_rows != 28 || back.class_count != d.class_count)
        failures.push_back("IDX reload differs");

    // Checkpoint: bit-exact through a file.
    Rng rng(10);
    const KsaeModel m = random_model(rng, 12, 20);
    save_checkpoint(m, work / "m.ksae");
    const KsaeModel m2 = load_checkpoint(work / "m.ksae");
    if (!(m2 == m) || serialize_checkpoint(m2) != read_file(work / "m.ksae")) failures.push_back("checkpoint differs");

    // PGM: four 2x2 filters -> 5x5 image, bytes written out by hand.
    const DenseMatrix w = DenseMatrix::from_rows({
        {0.0, 5.0, -1.0, 0.3},
        {1.0, 5.0, 1.0, 0.1},
        {2.0, 5.0, 0.0, 0.2},
        {3.0, 5.0, 0.0, 0.4},
    });
    const std::string header = "P5\n5 5\n255\n";
    Bytes golden(header.begin(), header.end());
    for (std::uint8_t v : {0, 85, 0, 128, 128, 170, 255, 0, 128, 128, 0, 0, 0, 0, 0, 0, 255, 0, 170, 0, 128, 128, 0, 85,
                           255})
        golden.push_back(v);
    if (encode_pgm(render_filter_grid(w, 2, 2)) != golden) failures.push_back("PGM bytes differ from the golden");

    std::string detail = fmt("IDX fixture (%zu images), checkpoint 12x20, PGM 4-filter golden", d.size());
    for (const auto& f : failures) detail += "; " + f;
    return {failures.empty(), detail};
}

// ---------------------------------------------------------------- AC11

Outcome ac11_decoder_identity() {
    Rng rng(11);
    double worst = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t in = 1 + rng.uniform_index(30), hid = 1 + rng.uniform_index(40);
        KsaeModel m = random_model(rng, in, hid);
        std::fill(m.output_bias.begin(), m.output_bias.end(), 0.0);  // the identity has no output bias
        const Vector x = rng_gaussian(rng, in, 1.0);
        const std::size_t k = 1 + rng.uniform_index(hid);
        const SupportSet s = top_k_support(forward(m, x), k);
        const DenseMatrix batch(1, in, x);
        const std::array<SupportSet, 1> supports{s};
        const Gradients g = backward_with_supports(m, batch, supports, GradientPath::kDecoder);
        // Closed form (W_G z_G - x) z_G^T; the squared norm contributes a factor 2.
        Vector z(hid, 0.0);
        Vector r(in, 0.0);
        for (std::size_t j : s) {
            z[j] = m.hidden_bias[j];
            for (std::size_t i = 0; i < in; ++i) z[j] += m.weights(i, j) * x[i];
        }
        for (std::size_t i = 0; i < in; ++i) {
            for (std::size_t j : s) r[i] += m.weights(i, j) * z[j];
            r[i] -= x[i];
        }
        for (std::size_t i = 0; i < in; ++i)
            for (std::size_t j = 0; j < hid; ++j) {
                const double closed = s.contains(j) ? r[i] * z[j] : 0.0;
                worst = std::max(worst, std::abs(g.weights(i, j) / 2.0 - closed));
            }
    }
    return {worst <= 1e-10, fmt("1000 random instances up to 30x40, max |dW/2 - (W_G z_G - x) z_G^T| = %.2e", worst)};
}

}  // namespace

int main() {
    const auto work = std::filesystem::temp_directory_path() / "ksae_acceptance";
    std::filesystem::remove_all(work);
    std::filesystem::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"AC1 sparsity invariant", ac1_sparsity},
        {"AC2 gradient check", ac2_gradients},
        {"AC3 one-step recovery condition", ac3_theorem},
        {"AC4 ITI planted recovery", ac4_iti},
        {"AC5 top-k equivalence", ac5_topk},
        {"AC6 classification ordering", ac6_classification},
        {"AC7 sparsity scheduling", ac7_scheduling},
        {"AC8 learned incoherence", ac8_incoherence},
        {"AC9 determinism", [&] { return ac9_determinism(work); }},
        {"AC10 format goldens", [&] { return ac10_formats(work); }},
        {"AC11 decoder gradient identity", ac11_decoder_identity},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << fmt("%.1fs", secs) << "): " << o.detail
                  << std::endl;
        failed += o.pass ? 0 : 1;
    }
    std::filesystem::remove_all(work);
    std::cout << (failed == 0 ? "all criteria pass" : fmt("%d criteria failed", failed)) << std::endl;
    return failed == 0 ? 0 : 1;
}
