#include "ksae/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

#include <zlib.h>

#include "ksae/linalg.hpp"

namespace ksae {

void LabeledDataset::validate() const {
    if (y.size() != x.rows())
        throw std::invalid_argument("LabeledDataset: " + std::to_string(y.size()) + " labels for " +
                                    std::to_string(x.rows()) + " samples");
    for (std::uint32_t label : y)
        if (label >= class_count)
            throw std::invalid_argument("LabeledDataset: label " + std::to_string(label) + " >= class_count " +
                                        std::to_string(class_count));
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out;
    out.x = x.gather_rows(indices);
    out.y.reserve(indices.size());
    for (std::size_t i : indices) out.y.push_back(y.at(i));
    out.class_count = class_count;
    out.image_rows = image_rows;
    out.image_cols = image_cols;
    return out;
}

namespace {

// Whole file through zlib, which passes uncompressed input through unchanged.
Bytes read_maybe_gzip(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (f == nullptr) throw IdxError(IdxError::Kind::kIo, "cannot open " + path.string());
    Bytes out;
    std::vector<std::uint8_t> buf(1 << 16);
    for (;;) {
        const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
        if (n < 0) {
            gzclose(f);
            throw IdxError(IdxError::Kind::kIo, "read error in " + path.string());
        }
        if (n == 0) break;
        out.insert(out.end(), buf.begin(), buf.begin() + n);
    }
    gzclose(f);
    return out;
}

std::uint32_t read_be32(const Bytes& b, std::size_t pos) {
    return (static_cast<std::uint32_t>(b[pos]) << 24) | (static_cast<std::uint32_t>(b[pos + 1]) << 16) |
           (static_cast<std::uint32_t>(b[pos + 2]) << 8) | static_cast<std::uint32_t>(b[pos + 3]);
}

void write_be32(Bytes& b, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const Bytes img = read_maybe_gzip(images_path);
    const Bytes lab = read_maybe_gzip(labels_path);
    const std::string ip = images_path.string();
    const std::string lp = labels_path.string();

    if (img.size() < 16) throw IdxError(IdxError::Kind::kTruncated, ip + ": header truncated");
    if (read_be32(img, 0) != kIdxImagesMagic) throw IdxError(IdxError::Kind::kBadMagic, ip + ": not an IDX image file");
    if (lab.size() < 8) throw IdxError(IdxError::Kind::kTruncated, lp + ": header truncated");
    if (read_be32(lab, 0) != kIdxLabelsMagic) throw IdxError(IdxError::Kind::kBadMagic, lp + ": not an IDX label file");

    const std::size_t count = read_be32(img, 4);
    const std::size_t rows = read_be32(img, 8);
    const std::size_t cols = read_be32(img, 12);
    const std::size_t label_count = read_be32(lab, 4);
    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + count * pixels) throw IdxError(IdxError::Kind::kTruncated, ip + ": pixel data truncated");
    if (lab.size() < 8 + label_count) throw IdxError(IdxError::Kind::kTruncated, lp + ": label data truncated");
    if (count != label_count)
        throw IdxError(IdxError::Kind::kCountMismatch, ip + " holds " + std::to_string(count) + " images but " + lp +
                                                           " holds " + std::to_string(label_count) + " labels");

    LabeledDataset out;
    out.image_rows = rows;
    out.image_cols = cols;
    out.x = DenseMatrix(count, pixels);
    auto values = out.x.values();
    for (std::size_t i = 0; i < count * pixels; ++i) values[i] = static_cast<double>(img[16 + i]) / 255.0;
    out.y.resize(count);
    std::uint32_t max_label = 0;
    for (std::size_t i = 0; i < count; ++i) {
        out.y[i] = lab[8 + i];
        max_label = std::max(max_label, out.y[i]);
    }
    out.class_count = count == 0 ? 0 : max_label + 1;
    return out;
}

Bytes encode_idx_images(const LabeledDataset& data) {
    if (data.image_rows * data.image_cols != data.x.cols())
        throw std::invalid_argument("encode_idx_images: image shape does not match sample width");
    Bytes b;
    b.reserve(16 + data.x.size());
    write_be32(b, kIdxImagesMagic);
    write_be32(b, static_cast<std::uint32_t>(data.x.rows()));
    write_be32(b, static_cast<std::uint32_t>(data.image_rows));
    write_be32(b, static_cast<std::uint32_t>(data.image_cols));
    for (double v : data.x.values()) b.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    return b;
}

Bytes encode_idx_labels(const LabeledDataset& data) {
    Bytes b;
    b.reserve(8 + data.y.size());
    write_be32(b, kIdxLabelsMagic);
    write_be32(b, static_cast<std::uint32_t>(data.y.size()));
    for (std::uint32_t label : data.y) {
        if (label > 255) throw std::invalid_argument("encode_idx_labels: label does not fit in a byte");
        b.push_back(static_cast<std::uint8_t>(label));
    }
    return b;
}

void save_idx(const LabeledDataset& data, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
    write_file_atomic(images_path, encode_idx_images(data));
    write_file_atomic(labels_path, encode_idx_labels(data));
}

DatasetSplit split(const LabeledDataset& data, std::size_t n_train, std::uint64_t seed) {
    if (n_train == 0 || n_train >= data.size())
        throw std::out_of_range("split: n_train=" + std::to_string(n_train) + " outside (0, " +
                                std::to_string(data.size()) + ")");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    DatasetSplit out;
    out.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    out.train = data.subset(out.train_indices);
    out.validation = data.subset(out.validation_indices);
    return out;
}

DenseMatrix PreprocessStats::apply(const DenseMatrix& x) const {
    if (x.cols() != mean.size())
        throw std::invalid_argument("PreprocessStats::apply: data is " + shape_string(x) + " but stats have dim " +
                                    std::to_string(mean.size()));
    DenseMatrix out(x.rows(), x.cols());
    for (std::size_t s = 0; s < x.rows(); ++s)
        for (std::size_t d = 0; d < x.cols(); ++d) out(s, d) = (x(s, d) - mean[d]) / std[d];
    if (zca_transform) return matmul(out, *zca_transform);
    return out;
}

Preprocessed standardize(const DenseMatrix& x) {
    if (x.rows() < 2) throw std::invalid_argument("standardize: need at least 2 samples");
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    PreprocessStats stats;
    stats.mean.assign(d, 0.0);
    stats.std.assign(d, 0.0);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < d; ++j) stats.mean[j] += x(s, j);
    for (auto& m : stats.mean) m /= static_cast<double>(n);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = x(s, j) - stats.mean[j];
            stats.std[j] += diff * diff;
        }
    for (auto& sd : stats.std) sd = std::max(std::sqrt(sd / static_cast<double>(n)), kStdFloor);
    DenseMatrix data = stats.apply(x);
    return {std::move(data), std::move(stats)};
}

PatchSet extract_patches(const DenseMatrix& images, std::size_t image_rows, std::size_t image_cols,
                         std::size_t patch_size, std::size_t n_patches, Rng& rng) {
    if (image_rows * image_cols != images.cols())
        throw std::invalid_argument("extract_patches: image shape " + std::to_string(image_rows) + "x" +
                                    std::to_string(image_cols) + " does not match sample width " +
                                    std::to_string(images.cols()));
    if (patch_size == 0 || patch_size > image_rows || patch_size > image_cols)
        throw std::invalid_argument("extract_patches: patch size " + std::to_string(patch_size) +
                                    " does not fit the image");
    if (images.rows() == 0 && n_patches > 0) throw std::invalid_argument("extract_patches: no images");
    PatchSet out;
    out.patches = DenseMatrix(n_patches, patch_size * patch_size);
    out.origins.reserve(n_patches);
    for (std::size_t p = 0; p < n_patches; ++p) {
        PatchOrigin o;
        o.image = rng.uniform_index(images.rows());
        o.row = rng.uniform_index(image_rows - patch_size + 1);
        o.col = rng.uniform_index(image_cols - patch_size + 1);
        const auto img = images.row(o.image);
        auto dst = out.patches.row(p);
        for (std::size_t r = 0; r < patch_size; ++r)
            for (std::size_t c = 0; c < patch_size; ++c)
                dst[r * patch_size + c] = img[(o.row + r) * image_cols + (o.col + c)];
        out.origins.push_back(o);
    }
    return out;
}

DenseMatrix contrast_normalize(const DenseMatrix& patches) {
    if (patches.empty()) throw std::invalid_argument("contrast_normalize: no patches");
    DenseMatrix out(patches.rows(), patches.cols());
    const double d = static_cast<double>(patches.cols());
    for (std::size_t s = 0; s < patches.rows(); ++s) {
        const auto p = patches.row(s);
        double mean = 0.0;
        for (double v : p) mean += 255.0 * v;
        mean /= d;
        double var = 0.0;
        for (double v : p) var += (255.0 * v - mean) * (255.0 * v - mean);
        var /= d;
        const double scale = 1.0 / std::sqrt(var + kContrastRegularizer);
        auto o = out.row(s);
        for (std::size_t i = 0; i < p.size(); ++i) o[i] = (255.0 * p[i] - mean) * scale;
    }
    return out;
}

Preprocessed zca_whiten(const DenseMatrix& patches, double epsilon) {
    const std::size_t n = patches.rows();
    const std::size_t d = patches.cols();
    if (n < 2) throw std::invalid_argument("zca_whiten: need at least 2 samples");
    if (!(epsilon > 0.0)) throw std::invalid_argument("zca_whiten: epsilon must be positive");
    if (n <= d)
        std::cerr << "warning: zca_whiten with " << n << " samples for " << d
                  << " dimensions; the covariance estimate is rank deficient\n";

    PreprocessStats stats;
    stats.mean.assign(d, 0.0);
    stats.std.assign(d, 1.0);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < d; ++j) stats.mean[j] += patches(s, j);
    for (auto& m : stats.mean) m /= static_cast<double>(n);
    DenseMatrix centered(n, d);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < d; ++j) centered(s, j) = patches(s, j) - stats.mean[j];

    DenseMatrix cov = matmul_tn(centered, centered);
    for (auto& v : cov.values()) v /= static_cast<double>(n - 1);
    const EigenDecomposition eig = sym_eig(cov);

    Vector gain(d);
    for (std::size_t k = 0; k < d; ++k) gain[k] = 1.0 / std::sqrt(std::max(eig.eigenvalues[k], 0.0) + epsilon);
    DenseMatrix t(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += eig.eigenvectors(i, k) * gain[k] * eig.eigenvectors(j, k);
            t(i, j) = s;
            t(j, i) = s;
        }
    stats.zca_transform = std::move(t);
    stats.zca_epsilon = epsilon;
    DenseMatrix whitened = matmul(centered, *stats.zca_transform);
    return {std::move(whitened), std::move(stats)};
}

Bytes serialize_stats(const PreprocessStats& stats) {
    if (stats.std.size() != stats.mean.size()) throw std::invalid_argument("serialize_stats: mean/std length mismatch");
    BinaryWriter w("KPRE");
    w.u32(1);
    w.u64(stats.mean.size());
    w.u32(stats.zca_transform ? 1u : 0u);
    w.f64(stats.zca_epsilon);
    w.f64s(stats.mean);
    w.f64s(stats.std);
    if (stats.zca_transform) w.f64s(stats.zca_transform->values());
    return std::move(w).finish();
}

PreprocessStats parse_stats(std::span<const std::uint8_t> bytes) {
    BinaryReader r(bytes, "KPRE");
    if (const std::uint32_t version = r.u32(); version != 1)
        throw FormatError("unsupported stats version " + std::to_string(version));
    const std::uint64_t d = r.u64();
    if (d > (1ull << 24)) throw FormatError("implausible stats dimension");
    const std::uint32_t has_zca = r.u32();
    PreprocessStats stats;
    stats.zca_epsilon = r.f64();
    stats.mean = r.f64s(d);
    stats.std = r.f64s(d);
    if (has_zca == 1) stats.zca_transform = DenseMatrix(d, d, r.f64s(d * d));
    else if (has_zca != 0) throw FormatError("bad ZCA flag");
    r.expect_end();
    return stats;
}

void save_stats(const PreprocessStats& stats, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_stats(stats));
}

PreprocessStats load_stats(const std::filesystem::path& path) { return parse_stats(read_file(path)); }

}  // namespace ksae
