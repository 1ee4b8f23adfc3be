#pragma once
// Error taxonomy shared by the library and the CLI. The CLI maps these onto
// process exit codes, so every throw site should pick the category that
// matches what the caller can do about it:
//   ValidationError   bad input data or malformed file contents  (exit 1)
//   VerificationError a checked numerical invariant was violated (exit 2)
//   IoError           the underlying stream failed               (exit 3)

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lq {

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VerificationError : std::runtime_error {
    explicit VerificationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    IoError(const std::string& msg, std::uint64_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::uint64_t byte_offset = 0;
};

}  // namespace lq
