// Checkpoint container: magic "ALPW", u32 version, u32 entry count, then per
// entry a u16 name length, the name bytes, u8 rank, u32 extents, and raw
// little-endian float32 values. Entries are written in registry order, so
// saving the same store twice is byte-identical.
#pragma once

#include <map>

#include "alp/binio.hpp"
#include "alp/optim.hpp"

namespace alp::ndmath {

constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(std::ostream& os, const ParamStore& store) {
    binio::write_magic(os, "ALPW");
    binio::write_pod<std::uint32_t>(os, kCheckpointVersion);
    binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(store.names.size()));
    for (const auto& name : store.names) {
        const Array& a = store.by_name.at(name)->value;
        if (name.size() > 0xffff) throw ContractError("checkpoint: name too long: " + name);
        binio::write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        binio::write_bytes(os, name.data(), name.size());
        binio::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(a.rank()));
        for (int e : a.shape) binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(e));
        binio::write_f32s(os, a.data(), a.v.size());
    }
    if (!os) throw IoError("checkpoint: write failed");
}

inline void save_checkpoint(const std::string& path, const ParamStore& store) {
    auto os = binio::open_out(path);
    save_checkpoint(os, store);
}

// Name -> array, in file order.
inline std::vector<std::pair<std::string, Array>> load_checkpoint_entries(std::istream& is) {
    binio::expect_magic(is, "ALPW", "checkpoint");
    const auto version = binio::read_pod<std::uint32_t>(is, "version");
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    const auto count = binio::read_pod<std::uint32_t>(is, "entry count");
    std::vector<std::pair<std::string, Array>> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = binio::read_pod<std::uint16_t>(is, "name length");
        std::string name(name_len, '\0');
        binio::read_bytes(is, name.data(), name_len, "name");
        const auto rank = binio::read_pod<std::uint8_t>(is, "rank");
        Shape shape(rank);
        for (auto& e : shape)
            e = static_cast<int>(binio::read_pod<std::uint32_t>(is, "extent"));
        Array a(shape);
        binio::read_f32s(is, a.data(), a.v.size(), ("values of " + name).c_str());
        out.emplace_back(std::move(name), std::move(a));
    }
    return out;
}

inline std::vector<std::pair<std::string, Array>> load_checkpoint_entries(
    const std::string& path) {
    auto is = binio::open_in(path);
    return load_checkpoint_entries(is);
}

// Copies matching entries into an existing store. `groups` empty means all.
// Shape mismatches and names missing from the store are errors naming the
// entry; store parameters not present in the file are left untouched.
inline int load_checkpoint_into(std::istream& is, ParamStore& store,
                                const std::vector<std::string>& groups = {}) {
    int loaded = 0;
    for (auto& [name, arr] : load_checkpoint_entries(is)) {
        if (!groups.empty()) {
            const auto g = ParamStore::group_of(name);
            if (std::find(groups.begin(), groups.end(), g) == groups.end()) continue;
        }
        if (!store.has(name)) throw IoError("checkpoint: no such parameter '" + name + "'");
        NodePtr p = store.get(name);
        if (p->value.shape != arr.shape)
            throw IoError("checkpoint: shape mismatch for '" + name + "': file " +
                          shape_str(arr.shape) + " vs model " + shape_str(p->value.shape));
        p->value = std::move(arr);
        ++loaded;
    }
    return loaded;
}

inline int load_checkpoint_into(const std::string& path, ParamStore& store,
                                const std::vector<std::string>& groups = {}) {
    auto is = binio::open_in(path);
    return load_checkpoint_into(is, store, groups);
}

}  // namespace alp::ndmath
