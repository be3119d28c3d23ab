#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "ksae/datasets.hpp"
#include "ksae/io.hpp"
#include "ksae/recovery.hpp"

namespace ksae::cli {

// Bad flag values or combinations detected after parsing; exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every option a command registers, so the manifest can list the resolved
// value of each knob, defaults included.
class OptionRegistry {
public:
    template <class T>
    CLI::Option* add(CLI::App* app, const std::string& name, T& var, const std::string& help) {
        CLI::Option* opt = app->add_option(name, var, help);
        record(opt, var);
        return opt;
    }
    CLI::Option* flag(CLI::App* app, const std::string& names, bool& var, const std::string& help) {
        CLI::Option* opt = app->add_flag(names, var, help);
        record(opt, var);
        return opt;
    }
    const std::vector<std::pair<std::string, std::function<std::string()>>>& entries() const { return entries_; }

private:
    template <class T>
    void record(CLI::Option* opt, T& var) {
        entries_.emplace_back(opt->get_lnames().front(), [&var] { return format_value(var); });
    }
    static std::string format_value(const std::string& v) { return v; }
    static std::string format_value(bool v) { return v ? "true" : "false"; }
    static std::string format_value(double v);
    template <class T>
    static std::string format_value(T v) {
        return std::to_string(v);
    }

    std::vector<std::pair<std::string, std::function<std::string()>>> entries_;
};

// Flat key=value run record written next to every command's outputs.
class Manifest {
public:
    void set(const std::string& key, const std::string& value);
    std::string text() const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

struct Context {
    std::string command;
    std::filesystem::path out_dir;
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;
    Manifest manifest;
    std::vector<std::string> outputs;

    // Records the CRC32 of an input file in the manifest.
    void note_input(const std::string& key, const std::filesystem::path& path);
    // Atomically writes a file into out_dir and records it.
    void write_output(const std::string& name, std::span<const std::uint8_t> bytes);
    void write_output(const std::string& name, const std::string& text);
    std::filesystem::path output_path(const std::string& name) const { return out_dir / name; }
};

struct DataOptions {
    std::string images;
    std::string labels;
    std::string test_images;
    std::string test_labels;
    std::size_t n_train = 0;
    std::uint64_t split_seed = 0;
    std::string synthetic;
    std::size_t samples = 1000;
    double noise = 0.0;
    std::string preprocess = "none";
    std::string stats;
    double zca_epsilon = 0.01;
};

struct DataNeeds {
    bool synthetic = true;   // --synthetic accepted
    bool labels = false;     // labelled data required
    bool test = false;       // a held-out set is required (--test-* or --n-train)
    bool split = false;      // --test-* / --n-train accepted
    bool preprocess = true;  // --preprocess / --stats accepted
};

void add_data_options(CLI::App* app, OptionRegistry& reg, DataOptions& opts, const DataNeeds& needs);

struct SyntheticSpec {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t k = 0;
};

// "DxH" or "DxHxkK", e.g. 64x128xk5.
SyntheticSpec parse_synthetic_spec(const std::string& spec, bool k_required);
// "AxB" -> {A, B}
std::pair<std::size_t, std::size_t> parse_shape(const std::string& spec);
// "a,b,c" -> values
std::vector<std::size_t> parse_size_list(const std::string& spec, const std::string& flag);
std::vector<double> parse_double_list(const std::string& spec, const std::string& flag);

struct LoadedData {
    LabeledDataset train;                 // unlabelled when synthetic
    std::optional<LabeledDataset> test;
    std::optional<SynthProblem> synthetic;
    bool labeled = false;
};

// Loads, splits and preprocesses as requested. Preprocessing statistics come
// from the training part only; freshly computed ones are written as stats.kpre.
LoadedData load_data(const DataOptions& opts, const DataNeeds& needs, std::uint64_t seed, Context& ctx);

std::string format_double(double v);
std::string format_crc(std::uint32_t crc);

using Runner = std::function<void(Context&)>;
struct CommandSpec {
    std::string name;
    std::string description;
    std::function<Runner(CLI::App*, OptionRegistry&)> setup;
};

std::vector<CommandSpec> command_table();

}  // namespace ksae::cli
