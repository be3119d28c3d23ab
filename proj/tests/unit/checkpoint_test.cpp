#include <gtest/gtest.h>

#include <cstring>

#include "ksae/checkpoint.hpp"
#include "test_util.hpp"

using namespace ksae;
using ksae::testing::TempDir;

namespace {

std::uint32_t le32(const Bytes& b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
           static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

}  // namespace

TEST(Checkpoint, LayoutIsAsDocumented) {
    KsaeModel m(2, 3);
    for (std::size_t i = 0; i < 6; ++i) m.weights.values()[i] = static_cast<double>(i) + 0.5;
    m.hidden_bias = {-1, -2, -3};
    m.output_bias = {7, 8};
    const Bytes b = serialize_checkpoint(m);
    ASSERT_EQ(b.size(), 4 + 4 + 8 + 8 + 8 * (6 + 3 + 2) + 4u);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "KSAE");
    EXPECT_EQ(le32(b, 4), 1u);
    EXPECT_EQ(le32(b, 8), 2u);
    EXPECT_EQ(le32(b, 16), 3u);
    double w01 = 0;
    std::memcpy(&w01, b.data() + 24 + 8, 8);
    EXPECT_EQ(w01, m.weights(0, 1));
    double bout1 = 0;
    std::memcpy(&bout1, b.data() + 24 + 8 * 10, 8);
    EXPECT_EQ(bout1, 8.0);
    EXPECT_EQ(le32(b, b.size() - 4), crc32_of(std::span(b).first(b.size() - 4)));
}

TEST(Checkpoint, RoundTripIsExact) {
    Rng rng(1);
    const KsaeModel m = ksae::testing::random_model(rng, 17, 9);
    TempDir dir("ckpt");
    save_checkpoint(m, dir / "m.ksae");
    EXPECT_EQ(load_checkpoint(dir / "m.ksae"), m);
    EXPECT_EQ(parse_checkpoint(serialize_checkpoint(m)), m);
}

TEST(Checkpoint, RejectsCorruption) {
    Rng rng(2);
    const Bytes good = serialize_checkpoint(ksae::testing::random_model(rng, 4, 5));
    for (std::size_t i = 0; i < good.size(); i += 7) {
        Bytes bad = good;
        bad[i] ^= 0x01;
        EXPECT_THROW(parse_checkpoint(bad), FormatError) << "byte " << i;
    }
    EXPECT_THROW(parse_checkpoint(Bytes(good.begin(), good.end() - 1)), FormatError);
    EXPECT_THROW(parse_checkpoint(Bytes{}), FormatError);
    Bytes longer = good;
    longer.insert(longer.end() - 4, 0);
    EXPECT_THROW(parse_checkpoint(longer), FormatError);
}

TEST(Checkpoint, MissingFileThrows) {
    TempDir dir("ckpt_missing");
    EXPECT_ANY_THROW(load_checkpoint(dir / "nope.ksae"));
}
