#include "ksae/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <unistd.h>
#include <zlib.h>

namespace ksae {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        crc = crc32(crc, bytes.data() + pos, chunk);
        pos += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

BinaryWriter::BinaryWriter(std::string_view magic) {
    if (magic.size() != 4) throw std::invalid_argument("BinaryWriter: magic must be 4 bytes");
    bytes_.insert(bytes_.end(), magic.begin(), magic.end());
}

void BinaryWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::f64s(std::span<const double> values) {
    bytes_.reserve(bytes_.size() + 8 * values.size());
    for (double v : values) f64(v);
}

Bytes BinaryWriter::finish() && {
    const std::uint32_t crc = crc32_of(bytes_);
    u32(crc);
    return std::move(bytes_);
}

BinaryReader::BinaryReader(std::span<const std::uint8_t> bytes, std::string_view magic) {
    if (bytes.size() < 8) throw FormatError("container truncated: " + std::to_string(bytes.size()) + " bytes");
    if (std::memcmp(bytes.data(), magic.data(), 4) != 0)
        throw FormatError("bad magic: expected \"" + std::string(magic) + "\"");
    const auto body = bytes.first(bytes.size() - 4);
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body.size() + i]) << (8 * i);
    if (crc32_of(body) != stored) throw FormatError("CRC32 mismatch: file is corrupt");
    payload_ = body.subspan(4);
}

void BinaryReader::need(std::size_t n) const {
    if (payload_.size() - pos_ < n) throw FormatError("container truncated");
}

std::uint32_t BinaryReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(payload_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

std::uint64_t BinaryReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(payload_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

Vector BinaryReader::f64s(std::size_t count) {
    if (count > (payload_.size() - pos_) / 8) throw FormatError("container truncated");
    Vector out(count);
    for (auto& v : out) v = f64();
    return out;
}

void BinaryReader::expect_end() const {
    if (pos_ != payload_.size()) throw FormatError("trailing bytes in container");
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::filesystem::remove(tmp);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace ksae
