#include "ksae/checkpoint.hpp"

#include <string>

namespace ksae {

Bytes serialize_checkpoint(const KsaeModel& model) {
    BinaryWriter w("KSAE");
    w.u32(kCheckpointVersion);
    w.u64(model.input_dim());
    w.u64(model.hidden_dim());
    w.f64s(model.weights.values());
    w.f64s(model.hidden_bias);
    w.f64s(model.output_bias);
    return std::move(w).finish();
}

KsaeModel parse_checkpoint(std::span<const std::uint8_t> bytes) {
    BinaryReader r(bytes, "KSAE");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t in = r.u64();
    const std::uint64_t hid = r.u64();
    if (in == 0 || hid == 0 || in > (1ull << 32) || hid > (1ull << 32))
        throw FormatError("implausible checkpoint dimensions");
    DenseMatrix w(in, hid, r.f64s(in * hid));
    Vector b = r.f64s(hid);
    Vector b_out = r.f64s(in);
    r.expect_end();
    return KsaeModel(std::move(w), std::move(b), std::move(b_out));
}

void save_checkpoint(const KsaeModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(model));
}

KsaeModel load_checkpoint(const std::filesystem::path& path) {
    try {
        return parse_checkpoint(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace ksae
