// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/checkpoint.hpp"

#include "selfpitch/binio.hpp"

namespace selfpitch {

namespace {
constexpr std::uint32_t kVersion = 1;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    binio::Writer w(path);
    w.tag("PLCK");
    w.u32(kVersion);
    w.u32(std::uint32_t(ckpt.tensors.size()));
    for (const auto& [name, entry] : ckpt.tensors) {
        w.u32(std::uint32_t(name.size()));
        w.bytes(name.data(), name.size());
        const ad::Shape& s = entry.first;
        w.u32(std::uint32_t(s.rank));
        for (int i = 0; i < s.rank; ++i) w.u32(std::uint32_t(s.d[std::size_t(i)]));
        w.f32s(entry.second.data(), entry.second.size());
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    binio::Reader r(path);
    if (r.tag() != "PLCK") throw FormatError("checkpoint magic: not a PLCK file: " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError("checkpoint version: expected " + std::to_string(kVersion) + ", got " +
                          std::to_string(version));
    const std::uint32_t count = r.u32();
    Checkpoint ckpt;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = r.u32();
        if (name_len > 4096) throw FormatError("checkpoint: implausible name length in " + path);
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        const std::uint32_t rank = r.u32();
        if (rank > 3) throw FormatError("checkpoint: tensor '" + name + "' has rank > 3");
        ad::Shape shape;
        shape.rank = int(rank);
        for (std::uint32_t i = 0; i < rank; ++i) shape.d[i] = int(r.u32());
        std::vector<float> data(std::size_t(shape.numel()));
        r.f32s(data.data(), data.size());
        ckpt.tensors[name] = {shape, std::move(data)};
    }
    return ckpt;
}

}  // namespace selfpitch
