#include "tqa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace tqa {

namespace {

constexpr char kMagic[4] = {'T', '2', 'A', '1'};

void put_u32(std::ostream& out, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
    put_u32(out, static_cast<uint32_t>(v));
    put_u32(out, static_cast<uint32_t>(v >> 32));
}

void put_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

[[noreturn]] void truncated(const std::string& name) {
    throw CheckpointError(CheckpointErrorCode::truncated, name + ": checkpoint ends early");
}

uint32_t get_u32(std::istream& in, const std::string& name) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) truncated(name);
    return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
           static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t get_u64(std::istream& in, const std::string& name) {
    const uint64_t lo = get_u32(in, name);
    const uint64_t hi = get_u32(in, name);
    return lo | hi << 32;
}

} // namespace

void save_checkpoint(std::ostream& out, const Params& params, const ModelConfig& cfg,
                     uint64_t vocab_digest) {
    cfg.validate();
    out.write(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(cfg.d_model));
    put_u32(out, static_cast<uint32_t>(cfg.n_layers));
    put_u32(out, static_cast<uint32_t>(cfg.n_heads));
    put_u32(out, static_cast<uint32_t>(cfg.d_ff));
    put_u32(out, static_cast<uint32_t>(cfg.max_len));
    put_u32(out, static_cast<uint32_t>(cfg.vocab_size));
    put_u32(out, (cfg.use_position_embeddings ? 1u : 0u) |
                     (cfg.use_segment_embeddings ? 2u : 0u));
    put_u64(out, vocab_digest);

    const auto groups = params.group_list();
    put_u32(out, static_cast<uint32_t>(groups.size()));
    for (const auto& [name, mat] : groups) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<uint32_t>(mat->rows()));
        put_u32(out, static_cast<uint32_t>(mat->cols()));
        for (size_t k = 0; k < mat->size(); ++k) put_f32(out, (*mat)[k]);
    }
}

void save_checkpoint_file(const std::string& path, const Params& params, const ModelConfig& cfg,
                          uint64_t vocab_digest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw CheckpointError(CheckpointErrorCode::io, path + ": cannot open for writing");
    }
    save_checkpoint(out, params, cfg, vocab_digest);
    out.flush();
    if (!out) throw CheckpointError(CheckpointErrorCode::io, path + ": write failed");
}

LoadedCheckpoint load_checkpoint(std::istream& in, const std::string& name,
                                 std::optional<uint64_t> expected_vocab_digest) {
    char magic[4];
    if (!in.read(magic, 4)) truncated(name);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw CheckpointError(CheckpointErrorCode::bad_magic,
                              name + ": not a checkpoint (bad magic)");
    }
    const uint32_t version = get_u32(in, name);
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointErrorCode::version_mismatch,
                              name + ": checkpoint format version " + std::to_string(version) +
                                  ", expected " + std::to_string(kCheckpointVersion));
    }
    LoadedCheckpoint loaded;
    loaded.config.d_model = static_cast<int>(get_u32(in, name));
    loaded.config.n_layers = static_cast<int>(get_u32(in, name));
    loaded.config.n_heads = static_cast<int>(get_u32(in, name));
    loaded.config.d_ff = static_cast<int>(get_u32(in, name));
    loaded.config.max_len = static_cast<int>(get_u32(in, name));
    loaded.config.vocab_size = static_cast<int>(get_u32(in, name));
    const uint32_t flags = get_u32(in, name);
    loaded.config.use_position_embeddings = (flags & 1u) != 0;
    loaded.config.use_segment_embeddings = (flags & 2u) != 0;
    loaded.vocab_digest = get_u64(in, name);
    if (expected_vocab_digest && *expected_vocab_digest != loaded.vocab_digest) {
        throw CheckpointError(CheckpointErrorCode::vocab_digest_mismatch,
                              name + ": checkpoint was trained with a different vocabulary");
    }
    loaded.config.validate();

    loaded.params = allocate_params<float>(loaded.config);
    const auto groups = loaded.params.group_list();
    const uint32_t count = get_u32(in, name);
    if (count != groups.size()) {
        throw CheckpointError(CheckpointErrorCode::truncated,
                              name + ": checkpoint stores " + std::to_string(count) +
                                  " groups, config implies " + std::to_string(groups.size()));
    }
    for (const auto& [gname, mat] : groups) {
        const uint32_t name_len = get_u32(in, name);
        std::string stored(name_len, '\0');
        if (!in.read(stored.data(), name_len)) truncated(name);
        const uint32_t rows = get_u32(in, name);
        const uint32_t cols = get_u32(in, name);
        if (stored != gname || rows != mat->rows() || cols != mat->cols()) {
            throw CheckpointError(CheckpointErrorCode::truncated,
                                  name + ": group '" + stored + "' (" + std::to_string(rows) + "x" +
                                      std::to_string(cols) + ") does not match expected '" + gname +
                                      "' (" + mat->shape_str() + ")");
        }
        for (size_t k = 0; k < mat->size(); ++k) {
            const uint32_t bits = get_u32(in, name);
            float v;
            std::memcpy(&v, &bits, 4);
            (*mat)[k] = v;
        }
    }
    return loaded;
}

LoadedCheckpoint load_checkpoint_file(const std::string& path,
                                      std::optional<uint64_t> expected_vocab_digest) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointErrorCode::io, path + ": cannot open");
    return load_checkpoint(in, path, expected_vocab_digest);
}

} // namespace tqa
