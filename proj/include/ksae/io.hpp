#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ksae/dense_matrix.hpp"

namespace ksae {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Bytes = std::vector<std::uint8_t>;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

// Little-endian serializer for the binary containers ("KSAE", "KPRE", ...).
class BinaryWriter {
public:
    explicit BinaryWriter(std::string_view magic);

    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void f64s(std::span<const double> values);

    // Appends the CRC32 of everything written so far and returns the bytes.
    Bytes finish() &&;

private:
    Bytes bytes_;
};

class BinaryReader {
public:
    // Checks the magic and the trailing CRC32; throws FormatError otherwise.
    BinaryReader(std::span<const std::uint8_t> bytes, std::string_view magic);

    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    Vector f64s(std::size_t count);
    // Throws unless the whole payload has been consumed.
    void expect_end() const;

private:
    void need(std::size_t n) const;

    std::span<const std::uint8_t> payload_;
    std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace ksae
