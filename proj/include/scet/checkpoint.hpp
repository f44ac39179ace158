#pragma once

// Checkpoint format, little-endian:
//   magic "SCETCKPT" | u32 version | u32 d, w, s, heads | f64 gdfn_expansion
//   u32 param count | per parameter:
//     u16 name length, UTF-8 name | u8 rank | u32 extents | raw f32 data
// No padding between records.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "scet/model.hpp"

namespace scet {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CorruptCheckpointError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct UnknownParamError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct ParamShapeError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct ConfigMismatchError : CheckpointError {
    using CheckpointError::CheckpointError;
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'S', 'C', 'E', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCkptVersion = 1;

template <typename V>
void write_le(std::ostream& os, V v) {
    char buf[sizeof(V)];
    std::memcpy(buf, &v, sizeof(V));
    os.write(buf, sizeof(V));
}

template <typename V>
V read_le(std::istream& is) {
    char buf[sizeof(V)];
    is.read(buf, sizeof(V));
    if (!is) throw CorruptCheckpointError("checkpoint truncated");
    V v;
    std::memcpy(&v, buf, sizeof(V));
    return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const SCETModel<T>& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open for writing: " + path);
    os.write(detail::kCkptMagic, 8);
    detail::write_le<std::uint32_t>(os, detail::kCkptVersion);
    const SCETConfig& c = model.config();
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.num_blocks));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.channels));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.scale));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.mdta_heads));
    detail::write_le<double>(os, c.gdfn_expansion);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.registry().size()));
    for (const auto& [name, t] : model.registry()) {
        detail::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
        for (int d : t.shape()) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        for (std::size_t i = 0; i < t.size(); ++i) detail::write_le<float>(os, static_cast<float>(t[i]));
    }
    if (!os) throw CheckpointError("write failed: " + path);
}

inline SCETConfig read_checkpoint_config(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
        throw CorruptCheckpointError("bad checkpoint magic");
    const auto version = detail::read_le<std::uint32_t>(is);
    if (version != detail::kCkptVersion)
        throw CorruptCheckpointError("unsupported checkpoint version " + std::to_string(version));
    SCETConfig c;
    c.num_blocks = static_cast<int>(detail::read_le<std::uint32_t>(is));
    c.channels = static_cast<int>(detail::read_le<std::uint32_t>(is));
    c.scale = static_cast<int>(detail::read_le<std::uint32_t>(is));
    c.mdta_heads = static_cast<int>(detail::read_le<std::uint32_t>(is));
    c.gdfn_expansion = detail::read_le<double>(is);
    return c;
}

template <typename T = float>
SCETModel<T> load_checkpoint(const std::string& path, const SCETConfig* expected = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path);
    SCETConfig cfg = read_checkpoint_config(is);
    if (expected) {
        if (cfg.num_blocks != expected->num_blocks || cfg.channels != expected->channels ||
            cfg.scale != expected->scale || cfg.mdta_heads != expected->mdta_heads)
            throw ConfigMismatchError(
                "checkpoint config (d=" + std::to_string(cfg.num_blocks) + ", w=" + std::to_string(cfg.channels) +
                ", s=" + std::to_string(cfg.scale) + ", heads=" + std::to_string(cfg.mdta_heads) +
                ") does not match requested (d=" + std::to_string(expected->num_blocks) +
                ", w=" + std::to_string(expected->channels) + ", s=" + std::to_string(expected->scale) +
                ", heads=" + std::to_string(expected->mdta_heads) + ")");
    }
    cfg.validate();
    SCETModel<T> model(cfg);
    const auto count = detail::read_le<std::uint32_t>(is);
    if (count != model.registry().size())
        throw CorruptCheckpointError("checkpoint holds " + std::to_string(count) + " parameters, config implies " +
                                     std::to_string(model.registry().size()));
    for (std::uint32_t p = 0; p < count; ++p) {
        const auto name_len = detail::read_le<std::uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw CorruptCheckpointError("checkpoint truncated in parameter name");
        Tensor<T>* t = model.registry().find(name);
        if (!t) throw UnknownParamError("unknown parameter name in checkpoint: " + name);
        const auto rank = detail::read_le<std::uint8_t>(is);
        if (rank != static_cast<std::uint8_t>(t->rank()))
            throw ParamShapeError("parameter " + name + ": rank " + std::to_string(rank) + " vs expected " +
                                  std::to_string(t->rank()));
        Shape shape;
        for (int i = 0; i < rank; ++i) shape.push_back(static_cast<int>(detail::read_le<std::uint32_t>(is)));
        if (shape != t->shape())
            throw ParamShapeError("parameter " + name + ": shape " + shape_str(shape) + " vs expected " +
                                  shape_str(t->shape()));
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = static_cast<T>(detail::read_le<float>(is));
    }
    return model;
}

}  // namespace scet
