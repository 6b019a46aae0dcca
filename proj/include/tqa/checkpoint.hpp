#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "tqa/model.hpp"

namespace tqa {

// Binary checkpoint: magic "T2A1", format version, model config, vocabulary
// digest, then every parameter group in declaration order as
// (name, rows, cols, row-major float32), all little-endian.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& out, const Params& params, const ModelConfig& cfg,
                     uint64_t vocab_digest);
void save_checkpoint_file(const std::string& path, const Params& params, const ModelConfig& cfg,
                          uint64_t vocab_digest);

struct LoadedCheckpoint {
    Params params;
    ModelConfig config;
    uint64_t vocab_digest = 0;
};

// expected_vocab_digest, when given, must match the stored digest
// (CheckpointErrorCode::vocab_digest_mismatch otherwise).
LoadedCheckpoint load_checkpoint(std::istream& in, const std::string& name,
                                 std::optional<uint64_t> expected_vocab_digest = std::nullopt);
LoadedCheckpoint load_checkpoint_file(const std::string& path,
                                      std::optional<uint64_t> expected_vocab_digest = std::nullopt);

} // namespace tqa
