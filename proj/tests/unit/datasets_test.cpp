#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <zlib.h>

#include "ksae/datasets.hpp"
#include "ksae/io.hpp"
#include "ksae/linalg.hpp"
#include "test_util.hpp"

using namespace ksae;
using ksae::testing::TempDir;

namespace {

void write_bytes(const std::filesystem::path& p, const Bytes& b) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Two 2x3 images, labels 7 and 2, written out byte by byte.
Bytes tiny_images() {
    return {0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3,
            0, 51, 102, 153, 204, 255,  //
            255, 0, 0, 0, 0, 255};
}
Bytes tiny_labels() { return {0x00, 0x00, 0x08, 0x01, 0, 0, 0, 2, 7, 2}; }

Bytes gzip(const Bytes& raw) {
    z_stream zs{};
    deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY);
    Bytes out(deflateBound(&zs, raw.size()) + 32);
    zs.next_in = const_cast<Bytef*>(raw.data());
    zs.avail_in = static_cast<uInt>(raw.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    deflate(&zs, Z_FINISH);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

DenseMatrix covariance(const DenseMatrix& x) {
    const std::size_t n = x.rows(), d = x.cols();
    Vector mean(d, 0.0);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x(s, j) / static_cast<double>(n);
    DenseMatrix c(d, d);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                c(i, j) += (x(s, i) - mean[i]) * (x(s, j) - mean[j]) / static_cast<double>(n - 1);
    return c;
}

}  // namespace

TEST(Idx, LoadsHandWrittenFiles) {
    TempDir dir("idx");
    write_bytes(dir / "img", tiny_images());
    write_bytes(dir / "lab", tiny_labels());
    const LabeledDataset d = load_idx(dir / "img", dir / "lab");
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.image_rows, 2u);
    EXPECT_EQ(d.image_cols, 3u);
    EXPECT_EQ(d.class_count, 8u);
    EXPECT_EQ(d.y, (std::vector<std::uint32_t>{7, 2}));
    EXPECT_DOUBLE_EQ(d.x(0, 1), 0.2);
    EXPECT_DOUBLE_EQ(d.x(0, 5), 1.0);
    EXPECT_DOUBLE_EQ(d.x(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(d.x(1, 1), 0.0);
}

TEST(Idx, EncodeReproducesTheBytes) {
    TempDir dir("idx_enc");
    write_bytes(dir / "img", tiny_images());
    write_bytes(dir / "lab", tiny_labels());
    const LabeledDataset d = load_idx(dir / "img", dir / "lab");
    EXPECT_EQ(encode_idx_images(d), tiny_images());
    EXPECT_EQ(encode_idx_labels(d), tiny_labels());
    save_idx(d, dir / "img2", dir / "lab2");
    EXPECT_EQ(read_file(dir / "img2"), tiny_images());
}

TEST(Idx, ReadsGzip) {
    TempDir dir("idx_gz");
    write_bytes(dir / "img.gz", gzip(tiny_images()));
    write_bytes(dir / "lab.gz", gzip(tiny_labels()));
    const LabeledDataset d = load_idx(dir / "img.gz", dir / "lab.gz");
    EXPECT_EQ(d.y, (std::vector<std::uint32_t>{7, 2}));
    EXPECT_DOUBLE_EQ(d.x(0, 2), 0.4);
}

TEST(Idx, ReportsMalformedFiles) {
    TempDir dir("idx_bad");
    auto kind_of = [&](const Bytes& img, const Bytes& lab) {
        write_bytes(dir / "img", img);
        write_bytes(dir / "lab", lab);
        try {
            load_idx(dir / "img", dir / "lab");
        } catch (const IdxError& e) {
            return e.kind();
        }
        ADD_FAILURE() << "no error";
        return IdxError::Kind::kIo;
    };
    Bytes img = tiny_images();
    Bytes lab = tiny_labels();

    Bytes bad_magic = img;
    bad_magic[3] = 0x01;
    EXPECT_EQ(kind_of(bad_magic, lab), IdxError::Kind::kBadMagic);
    EXPECT_EQ(kind_of(img, img), IdxError::Kind::kBadMagic);

    Bytes short_pixels(img.begin(), img.end() - 1);
    EXPECT_EQ(kind_of(short_pixels, lab), IdxError::Kind::kTruncated);
    EXPECT_EQ(kind_of(Bytes(img.begin(), img.begin() + 10), lab), IdxError::Kind::kTruncated);
    EXPECT_EQ(kind_of(img, Bytes(lab.begin(), lab.end() - 1)), IdxError::Kind::kTruncated);

    Bytes three_labels = {0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3};
    EXPECT_EQ(kind_of(img, three_labels), IdxError::Kind::kCountMismatch);

    EXPECT_THROW(load_idx(dir / "missing", dir / "lab"), IdxError);
}

TEST(Idx, BundledDigits) {
    const std::filesystem::path data = KSAE_DATA_DIR;
    const LabeledDataset d =
        load_idx(data / "digits5k-images-idx3-ubyte.gz", data / "digits5k-labels-idx1-ubyte.gz");
    EXPECT_EQ(d.size(), 5000u);
    EXPECT_EQ(d.x.cols(), 784u);
    EXPECT_EQ(d.class_count, 10u);
    EXPECT_NO_THROW(d.validate());
    std::set<std::uint32_t> seen(d.y.begin(), d.y.end());
    EXPECT_EQ(seen.size(), 10u);
    const auto [lo, hi] = std::minmax_element(d.x.values().begin(), d.x.values().end());
    EXPECT_EQ(*lo, 0.0);
    EXPECT_EQ(*hi, 1.0);
}

TEST(Split, PartitionsAndIsSeeded) {
    LabeledDataset d;
    d.x = DenseMatrix(10, 1);
    for (std::size_t i = 0; i < 10; ++i) {
        d.x(i, 0) = static_cast<double>(i);
        d.y.push_back(static_cast<std::uint32_t>(i % 3));
    }
    d.class_count = 3;
    const DatasetSplit a = split(d, 7, 5);
    const DatasetSplit b = split(d, 7, 5);
    const DatasetSplit c = split(d, 7, 6);
    EXPECT_EQ(a.train_indices, b.train_indices);
    EXPECT_NE(a.train_indices, c.train_indices);
    ASSERT_EQ(a.train.size(), 7u);
    ASSERT_EQ(a.validation.size(), 3u);
    std::set<std::size_t> all(a.train_indices.begin(), a.train_indices.end());
    all.insert(a.validation_indices.begin(), a.validation_indices.end());
    EXPECT_EQ(all.size(), 10u);
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(a.train.x(i, 0), static_cast<double>(a.train_indices[i]));
        EXPECT_EQ(a.train.y[i], a.train_indices[i] % 3);
    }
    EXPECT_EQ(a.train.class_count, 3u);
    EXPECT_THROW(split(d, 0, 1), std::out_of_range);
    EXPECT_THROW(split(d, 10, 1), std::out_of_range);
}

TEST(Standardize, ZeroMeanUnitVarianceAndConstantColumns) {
    Rng rng(3);
    DenseMatrix x(50, 3);
    for (std::size_t s = 0; s < 50; ++s) {
        x(s, 0) = 5.0 + 2.0 * rng.gaussian();
        x(s, 1) = -1.0 + 0.1 * rng.gaussian();
        x(s, 2) = 4.0;
    }
    const Preprocessed p = standardize(x);
    for (std::size_t j = 0; j < 2; ++j) {
        double m = 0, v = 0;
        for (std::size_t s = 0; s < 50; ++s) m += p.data(s, j) / 50.0;
        for (std::size_t s = 0; s < 50; ++s) v += (p.data(s, j) - m) * (p.data(s, j) - m) / 50.0;
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v, 1.0, 1e-12);
    }
    EXPECT_EQ(p.stats.std[2], kStdFloor);
    for (std::size_t s = 0; s < 50; ++s) EXPECT_EQ(p.data(s, 2), 0.0);
    EXPECT_LT(max_abs_diff(p.stats.apply(x), p.data), 1e-15);
    EXPECT_THROW(standardize(DenseMatrix(1, 3)), std::invalid_argument);
}

TEST(Patches, CopyTheRightPixels) {
    // Image s has pixel value 1000*s + 10*r + c.
    const std::size_t rows = 6, cols = 5;
    DenseMatrix imgs(3, rows * cols);
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) imgs(s, r * cols + c) = 1000.0 * s + 10.0 * r + c;
    Rng rng(1);
    const PatchSet ps = extract_patches(imgs, rows, cols, 3, 40, rng);
    ASSERT_EQ(ps.patches.rows(), 40u);
    ASSERT_EQ(ps.patches.cols(), 9u);
    for (std::size_t p = 0; p < 40; ++p) {
        const PatchOrigin& o = ps.origins[p];
        ASSERT_LE(o.row + 3, rows);
        ASSERT_LE(o.col + 3, cols);
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 3; ++c)
                EXPECT_EQ(ps.patches(p, r * 3 + c), 1000.0 * o.image + 10.0 * (o.row + r) + (o.col + c));
    }
    EXPECT_THROW(extract_patches(imgs, 5, 5, 3, 1, rng), std::invalid_argument);
    EXPECT_THROW(extract_patches(imgs, rows, cols, 6, 1, rng), std::invalid_argument);
}

TEST(ContrastNormalize, MatchesFormulaAndIsScaleFree) {
    DenseMatrix p = DenseMatrix::from_rows({{0.0, 0.2, 0.4, 0.6}, {0.5, 0.5, 0.5, 0.5}});
    const DenseMatrix n = contrast_normalize(p);
    // Row 0 in pixel units: 0, 51, 102, 153; mean 76.5, variance 3251.25.
    const double scale = 1.0 / std::sqrt(3251.25 + 10.0);
    EXPECT_NEAR(n(0, 0), -76.5 * scale, 1e-12);
    EXPECT_NEAR(n(0, 3), 76.5 * scale, 1e-12);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(n(1, j), 0.0);

    Rng rng(8);
    DenseMatrix x(20, 16);
    for (double& v : x.values()) v = rng.uniform();
    const DenseMatrix a = contrast_normalize(x);
    for (std::size_t s = 0; s < 20; ++s) {
        double m = 0;
        for (std::size_t j = 0; j < 16; ++j) m += a(s, j);
        EXPECT_NEAR(m, 0.0, 1e-12);
    }
}

TEST(Zca, WhitenedCovarianceIsIdentity) {
    Rng rng(4);
    const std::size_t n = 2000, d = 6;
    DenseMatrix mix = gaussian_matrix(rng, d, d, 1.0);
    DenseMatrix x = matmul(gaussian_matrix(rng, n, d, 1.0), mix);
    for (std::size_t s = 0; s < n; ++s) x(s, 0) += 3.0;
    const Preprocessed p = zca_whiten(x, 1e-9);
    const DenseMatrix c = covariance(p.data);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(c(i, j), i == j ? 1.0 : 0.0, 1e-6);
    ASSERT_TRUE(p.stats.zca_transform.has_value());
    const DenseMatrix& t = *p.stats.zca_transform;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) EXPECT_EQ(t(i, j), t(j, i));
    EXPECT_LT(max_abs_diff(p.stats.apply(x), p.data), 1e-10);
    EXPECT_THROW(zca_whiten(x, 0.0), std::invalid_argument);
}

TEST(Zca, EpsilonShrinksSmallDirections) {
    // Eigenvalue lambda maps to lambda / (lambda + eps) after whitening.
    Rng rng(5);
    DenseMatrix x(4000, 2);
    for (std::size_t s = 0; s < 4000; ++s) {
        x(s, 0) = 10.0 * rng.gaussian();
        x(s, 1) = 0.1 * rng.gaussian();
    }
    const DenseMatrix c_in = covariance(x);
    const Preprocessed p = zca_whiten(x, 0.01);
    const DenseMatrix c = covariance(p.data);
    const EigenDecomposition e = sym_eig(c_in);
    double expected_small = 1e300;
    for (double l : e.eigenvalues) expected_small = std::min(expected_small, l / (l + 0.01));
    const EigenDecomposition w = sym_eig(c);
    EXPECT_NEAR(*std::min_element(w.eigenvalues.begin(), w.eigenvalues.end()), expected_small, 1e-9);
}

TEST(Stats, RoundTripAndCorruption) {
    Rng rng(6);
    DenseMatrix x = gaussian_matrix(rng, 30, 4, 1.0);
    const Preprocessed z = zca_whiten(x, 0.1);
    const Preprocessed s = standardize(x);
    TempDir dir("kpre");
    for (const PreprocessStats* st : {&z.stats, &s.stats}) {
        save_stats(*st, dir / "s.kpre");
        const PreprocessStats back = load_stats(dir / "s.kpre");
        EXPECT_EQ(back.mean, st->mean);
        EXPECT_EQ(back.std, st->std);
        EXPECT_EQ(back.zca_epsilon, st->zca_epsilon);
        EXPECT_EQ(back.zca_transform, st->zca_transform);
    }
    Bytes bytes = serialize_stats(z.stats);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "KPRE");
    for (std::size_t i : {0ul, 5ul, bytes.size() / 2, bytes.size() - 1}) {
        Bytes bad = bytes;
        bad[i] ^= 0x10;
        EXPECT_THROW(parse_stats(bad), FormatError) << "byte " << i;
    }
    EXPECT_THROW(parse_stats(Bytes(bytes.begin(), bytes.end() - 3)), FormatError);
}

TEST(Zca, HugeEpsilonIsAScaledIdentity) {
    Rng rng(6);
    const DenseMatrix x = gaussian_matrix(rng, 500, 4, 1.0);
    const double eps = 1e8;
    const Preprocessed p = zca_whiten(x, eps);
    const DenseMatrix& t = *p.stats.zca_transform;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            EXPECT_NEAR(t(i, j) * std::sqrt(eps), i == j ? 1.0 : 0.0, 1e-7);
}

TEST(ContrastNormalize, ShiftInvariant) {
    Rng rng(9);
    DenseMatrix x(10, 9);
    for (double& v : x.values()) v = rng.uniform();
    DenseMatrix shifted = x;
    for (double& v : shifted.values()) v += 0.37;
    EXPECT_LT(max_abs_diff(contrast_normalize(x), contrast_normalize(shifted)), 1e-12);
}

TEST(Patches, FullSizePatchIsTheWholeImage) {
    Rng rng(2);
    DenseMatrix imgs(4, 12);
    for (double& v : imgs.values()) v = rng.uniform();
    const PatchSet ps = extract_patches(imgs, 3, 4, 3, 1, rng);
    // Non-square images: only the 3x3 windows exist; a square image yields itself.
    DenseMatrix sq(2, 9);
    for (double& v : sq.values()) v = rng.uniform();
    const PatchSet whole = extract_patches(sq, 3, 3, 3, 5, rng);
    for (std::size_t p = 0; p < 5; ++p) {
        EXPECT_EQ(whole.origins[p].row, 0u);
        EXPECT_EQ(whole.origins[p].col, 0u);
        for (std::size_t j = 0; j < 9; ++j) EXPECT_EQ(whole.patches(p, j), sq(whole.origins[p].image, j));
    }
    EXPECT_EQ(ps.patches.cols(), 9u);
}
