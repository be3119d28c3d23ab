#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ksae/dense_matrix.hpp"
#include "ksae/io.hpp"
#include "ksae/rng.hpp"

namespace ksae {

struct LabeledDataset {
    DenseMatrix x;                    // samples x input_dim
    std::vector<std::uint32_t> y;     // 0-based labels
    std::size_t class_count = 0;
    std::size_t image_rows = 0;       // 0 when the samples are not images
    std::size_t image_cols = 0;

    std::size_t size() const noexcept { return x.rows(); }
    // Throws unless y matches x and every label < class_count.
    void validate() const;
    LabeledDataset subset(std::span<const std::size_t> indices) const;
};

class IdxError : public std::runtime_error {
public:
    enum class Kind { kIo, kBadMagic, kTruncated, kCountMismatch };
    IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Big-endian IDX image/label pair (plain or gzip-compressed). Pixels are
// scaled to [0, 1] and each image flattened row-major.
LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
// Inverse of load_idx for [0, 1] pixels (rounded back to bytes); writes plain IDX.
void save_idx(const LabeledDataset& data, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);
Bytes encode_idx_images(const LabeledDataset& data);
Bytes encode_idx_labels(const LabeledDataset& data);

struct DatasetSplit {
    LabeledDataset train;
    LabeledDataset validation;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> validation_indices;
};

// Seeded shuffle, first n_train go to train. Requires 0 < n_train < size.
DatasetSplit split(const LabeledDataset& data, std::size_t n_train, std::uint64_t seed);

struct PreprocessStats {
    Vector mean;
    Vector std;                                // all ones for whitening
    std::optional<DenseMatrix> zca_transform;  // symmetric when present
    double zca_epsilon = 0.0;

    // (x - mean) / std, then the ZCA transform if present.
    DenseMatrix apply(const DenseMatrix& x) const;
};

inline constexpr double kStdFloor = 1e-8;

struct Preprocessed {
    DenseMatrix data;
    PreprocessStats stats;
};

// Per-dimension (x - mean) / max(std, 1e-8), population std. Needs >= 2 samples.
Preprocessed standardize(const DenseMatrix& x);

struct PatchOrigin {
    std::size_t image = 0;
    std::size_t row = 0;
    std::size_t col = 0;
};

struct PatchSet {
    DenseMatrix patches;  // n_patches x patch_size^2, row-major within the patch
    std::vector<PatchOrigin> origins;
};

PatchSet extract_patches(const DenseMatrix& images, std::size_t image_rows, std::size_t image_cols,
                         std::size_t patch_size, std::size_t n_patches, Rng& rng);

// Regularizer added to the patch variance, in [0, 255] pixel units.
inline constexpr double kContrastRegularizer = 10.0;

// Per patch: (p - mean) / sqrt(var + 10), evaluated on the patch rescaled to
// the [0, 255] range. The result is scale-free.
DenseMatrix contrast_normalize(const DenseMatrix& patches);

// Centers the data and maps it through V diag(1 / sqrt(lambda + epsilon)) V^T
// from the eigendecomposition of the sample covariance.
Preprocessed zca_whiten(const DenseMatrix& patches, double epsilon = 0.01);

// "KPRE" container: version u32, dim u64, has_zca u32, epsilon f64, mean, std,
// [zca dim*dim], crc32; little-endian.
Bytes serialize_stats(const PreprocessStats& stats);
PreprocessStats parse_stats(std::span<const std::uint8_t> bytes);
void save_stats(const PreprocessStats& stats, const std::filesystem::path& path);
PreprocessStats load_stats(const std::filesystem::path& path);

}  // namespace ksae
