#pragma once

#include <stdexcept>
#include <string>

namespace tqa {

// Malformed input files, dangling references, bad checkpoints.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatches and other contract violations inside the math engine.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or other numeric breakdown during training.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class CheckpointErrorCode {
    bad_magic,
    version_mismatch,
    truncated,
    vocab_digest_mismatch,
    io,
};

class CheckpointError : public DataError {
public:
    CheckpointError(CheckpointErrorCode code, const std::string& msg)
        : DataError(msg), code_(code) {}
    CheckpointErrorCode code() const { return code_; }

private:
    CheckpointErrorCode code_;
};

} // namespace tqa
