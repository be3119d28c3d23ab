#include "ksae/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <regex>
#include <sstream>

#include "cli_internal.hpp"
#include "ksae/kernels.hpp"

namespace ksae::cli {

// Shortest text that reads back to the same double.
std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_crc(std::uint32_t crc) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", crc);
    return buf;
}

std::string OptionRegistry::format_value(double v) { return format_double(v); }

void Manifest::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_)
        if (k == key) {
            v = value;
            return;
        }
    entries_.emplace_back(key, value);
}

std::string Manifest::text() const {
    std::string s;
    for (const auto& [k, v] : entries_) s += k + "=" + v + "\n";
    return s;
}

void Context::note_input(const std::string& key, const std::filesystem::path& path) {
    manifest.set("input." + key + ".path", path.string());
    manifest.set("input." + key + ".crc32", format_crc(crc32_of(read_file(path))));
}

void Context::write_output(const std::string& name, std::span<const std::uint8_t> bytes) {
    write_file_atomic(output_path(name), bytes);
    manifest.set("output." + name + ".crc32", format_crc(crc32_of(bytes)));
    outputs.push_back(name);
}

void Context::write_output(const std::string& name, const std::string& text) {
    write_output(name, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void add_data_options(CLI::App* app, OptionRegistry& reg, DataOptions& opts, const DataNeeds& needs) {
    reg.add(app, "--images", opts.images, "IDX image file (plain or gzip)");
    reg.add(app, "--labels", opts.labels, "IDX label file matching --images");
    if (needs.split) {
        reg.add(app, "--test-images", opts.test_images, "held-out IDX image file");
        reg.add(app, "--test-labels", opts.test_labels, "held-out IDX label file");
        reg.add(app, "--n-train", opts.n_train, "split --images: this many for training, the rest held out");
        reg.add(app, "--split-seed", opts.split_seed, "seed of the train/held-out split");
    }
    if (needs.synthetic) {
        reg.add(app, "--synthetic", opts.synthetic, "planted sparse data DxHxkK, e.g. 64x128xk5");
        reg.add(app, "--samples", opts.samples, "number of synthetic samples")->check(CLI::PositiveNumber);
        reg.add(app, "--noise", opts.noise, "Gaussian noise std added to synthetic samples")
            ->check(CLI::NonNegativeNumber);
    }
    if (needs.preprocess) {
        reg.add(app, "--preprocess", opts.preprocess, "none | standardize | zca")
            ->check(CLI::IsMember({"none", "standardize", "zca"}));
        reg.add(app, "--stats", opts.stats, "apply saved preprocessing statistics (KPRE file)");
        reg.add(app, "--zca-epsilon", opts.zca_epsilon, "ZCA eigenvalue regularizer")->check(CLI::PositiveNumber);
    }
}

namespace {

std::size_t parse_count(const std::string& text, const std::string& what) {
    if (text.empty() || !std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; }))
        throw UsageError(what + ": expected a positive integer, got '" + text + "'");
    const std::size_t v = std::stoull(text);
    if (v == 0) throw UsageError(what + ": must be positive");
    return v;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) parts.push_back(cur);
    if (!s.empty() && s.back() == sep) parts.emplace_back();
    return parts;
}

}  // namespace

SyntheticSpec parse_synthetic_spec(const std::string& spec, bool k_required) {
    static const std::regex with_k(R"(^(\d+)x(\d+)xk(\d+)$)");
    static const std::regex without_k(R"(^(\d+)x(\d+)$)");
    std::smatch m;
    SyntheticSpec s;
    if (std::regex_match(spec, m, with_k)) {
        s.k = parse_count(m[3], "--synthetic k");
    } else if (!k_required && std::regex_match(spec, m, without_k)) {
    } else {
        throw UsageError("--synthetic: expected " + std::string(k_required ? "DxHxkK" : "DxH or DxHxkK") +
                         " (e.g. 64x128xk5), got '" + spec + "'");
    }
    s.input_dim = parse_count(m[1], "--synthetic D");
    s.hidden_dim = parse_count(m[2], "--synthetic H");
    if (s.input_dim > s.hidden_dim) throw UsageError("--synthetic: D must not exceed H");
    if (s.k > s.input_dim) throw UsageError("--synthetic: k must not exceed D");
    return s;
}

std::pair<std::size_t, std::size_t> parse_shape(const std::string& spec) {
    const auto parts = split_on(spec, 'x');
    if (parts.size() != 2) throw UsageError("--shape: expected HxW, got '" + spec + "'");
    return {parse_count(parts[0], "--shape H"), parse_count(parts[1], "--shape W")};
}

std::vector<std::size_t> parse_size_list(const std::string& spec, const std::string& flag) {
    std::vector<std::size_t> out;
    for (const auto& p : split_on(spec, ',')) out.push_back(parse_count(p, flag));
    if (out.empty()) throw UsageError(flag + ": empty list");
    return out;
}

std::vector<double> parse_double_list(const std::string& spec, const std::string& flag) {
    std::vector<double> out;
    for (const auto& p : split_on(spec, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(p, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != p.size()) throw UsageError(flag + ": '" + p + "' is not a number");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError(flag + ": empty list");
    return out;
}

LoadedData load_data(const DataOptions& opts, const DataNeeds& needs, std::uint64_t seed, Context& ctx) {
    LoadedData d;
    const bool have_images = !opts.images.empty() || !opts.labels.empty();
    if (have_images && !opts.synthetic.empty()) throw UsageError("give either --images/--labels or --synthetic");
    if (!opts.synthetic.empty()) {
        if (needs.labels) throw UsageError(ctx.command + " needs labelled data (--images/--labels)");
        const SyntheticSpec spec = parse_synthetic_spec(opts.synthetic, true);
        Rng rng(Rng::derive_seed(seed, 3));
        d.synthetic = make_synth_problem(rng, spec.input_dim, spec.hidden_dim, opts.samples, spec.k, opts.noise);
        d.train.x = d.synthetic->samples;
    } else {
        if (opts.images.empty() || opts.labels.empty())
            throw UsageError(std::string("data required: --images and --labels") +
                             (needs.synthetic ? " (or --synthetic)" : ""));
        ctx.note_input("images", opts.images);
        ctx.note_input("labels", opts.labels);
        d.train = load_idx(opts.images, opts.labels);
        d.labeled = true;
    }

    const bool have_test = !opts.test_images.empty() || !opts.test_labels.empty();
    if (have_test && opts.n_train > 0) throw UsageError("give either --test-images/--test-labels or --n-train");
    if (have_test) {
        if (opts.test_images.empty() || opts.test_labels.empty())
            throw UsageError("--test-images and --test-labels go together");
        if (!d.labeled) throw UsageError("--test-images needs --images");
        ctx.note_input("test_images", opts.test_images);
        ctx.note_input("test_labels", opts.test_labels);
        d.test = load_idx(opts.test_images, opts.test_labels);
        if (d.test->x.cols() != d.train.x.cols())
            throw std::runtime_error("test images have dimension " + std::to_string(d.test->x.cols()) +
                                     ", training images " + std::to_string(d.train.x.cols()));
        const std::size_t classes = std::max(d.train.class_count, d.test->class_count);
        d.train.class_count = d.test->class_count = classes;
    } else if (opts.n_train > 0) {
        if (!d.labeled) throw UsageError("--n-train needs --images/--labels");
        if (opts.n_train >= d.train.size())
            throw UsageError("--n-train " + std::to_string(opts.n_train) + " leaves nothing held out of " +
                             std::to_string(d.train.size()) + " samples");
        DatasetSplit parts = split(d.train, opts.n_train, opts.split_seed);
        d.train = std::move(parts.train);
        d.test = std::move(parts.validation);
    }
    if (needs.test && !d.test) throw UsageError(ctx.command + " needs held-out data (--test-images/--test-labels or --n-train)");

    if (needs.preprocess) {
        std::optional<PreprocessStats> stats;
        if (!opts.stats.empty()) {
            if (opts.preprocess != "none") throw UsageError("--stats and --preprocess are mutually exclusive");
            ctx.note_input("stats", opts.stats);
            stats = load_stats(opts.stats);
            d.train.x = stats->apply(d.train.x);
        } else if (opts.preprocess == "standardize") {
            Preprocessed p = standardize(d.train.x);
            d.train.x = std::move(p.data);
            stats = std::move(p.stats);
        } else if (opts.preprocess == "zca") {
            Preprocessed p = zca_whiten(d.train.x, opts.zca_epsilon);
            d.train.x = std::move(p.data);
            stats = std::move(p.stats);
        }
        if (stats) {
            if (d.test) d.test->x = stats->apply(d.test->x);
            if (opts.stats.empty()) ctx.write_output("stats.kpre", serialize_stats(*stats));
        }
    }
    return d;
}

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// Manifest bookkeeping keys that a config file may contain but that are not flags.
bool ignored_config_key(const std::string& key) {
    return key == "command" || key == "config" || key == "outputs" || key == "duration_seconds" || key == "threads" ||
           key.find('.') != std::string::npos;
}

// Turns `--config FILE` into flags placed ahead of the command-line ones;
// with last-wins options the command line overrides the file.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    if (args.empty()) return args;
    std::vector<std::string> rest(args.begin() + 1, args.end());
    std::optional<std::string> config;
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < rest.size(); ++i) {
        if (rest[i] == "--config") {
            if (i + 1 >= rest.size()) throw UsageError("--config needs a file");
            config = rest[++i];
        } else if (rest[i].rfind("--config=", 0) == 0) {
            config = rest[i].substr(9);
        } else {
            kept.push_back(rest[i]);
        }
    }
    std::vector<std::string> out{args.front()};
    if (config) {
        std::ifstream in(*config);
        if (!in) throw UsageError("cannot read config file " + *config);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            line = trim(line);
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw UsageError(*config + ":" + std::to_string(line_no) + ": expected key=value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            // Empty values are unset options in a manifest.
            if (ignored_config_key(key) || value.empty()) continue;
            out.push_back("--" + key + "=" + value);
        }
    }
    out.insert(out.end(), kept.begin(), kept.end());
    return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::steady_clock::now();
    CLI::App app{"k-sparse autoencoders, sparse recovery and coherence diagnostics", "ksae"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    struct Slot {
        CLI::App* app;
        std::string name;
        std::unique_ptr<OptionRegistry> registry;
        Runner runner;
        std::string out_dir;
    };
    std::vector<std::unique_ptr<Slot>> slots;
    for (const CommandSpec& spec : command_table()) {
        auto slot = std::make_unique<Slot>();
        slot->app = app.add_subcommand(spec.name, spec.description);
        slot->app->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        slot->name = spec.name;
        slot->registry = std::make_unique<OptionRegistry>();
        slot->registry->add(slot->app, "--out", slot->out_dir, "output directory")->required();
        slot->app->add_option("--config", "file of key=value lines; flags given on the command line win");
        slot->runner = spec.setup(slot->app, *slot->registry);
        slots.push_back(std::move(slot));
    }

    std::vector<std::string> expanded;
    try {
        expanded = expand_config(args);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }
    std::vector<std::string> argv_store{"ksae"};
    argv_store.insert(argv_store.end(), expanded.begin(), expanded.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    Slot* chosen = nullptr;
    for (auto& s : slots)
        if (s->app->parsed()) chosen = s.get();
    if (chosen == nullptr) return kExitUsage;

    Context ctx;
    ctx.command = chosen->name;
    ctx.out_dir = chosen->out_dir;
    ctx.out = &out;
    ctx.err = &err;
    ctx.manifest.set("command", chosen->name);
    try {
        std::filesystem::create_directories(ctx.out_dir);
        const int threads = kernels::configure_threads_from_env();
        for (const auto& [key, value] : chosen->registry->entries()) ctx.manifest.set(key, value());
        chosen->runner(ctx);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        std::string listed;
        for (const auto& o : ctx.outputs) listed += (listed.empty() ? "" : ",") + o;
        ctx.manifest.set("outputs", listed);
        ctx.manifest.set("threads", std::to_string(threads));
        ctx.manifest.set("duration_seconds", format_double(seconds));
        write_text_atomic(ctx.out_dir / "manifest.txt", ctx.manifest.text());
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << chosen->name << ": " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}

}  // namespace ksae::cli
