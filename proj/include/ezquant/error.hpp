#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ezquant {

enum class IoErrorKind {
    IoFailure,        // unreadable/unwritable path, short write
    FormatViolation,  // structurally invalid content
    VersionMismatch,  // recognized file, unsupported version
};

// Error from the file-format layer. `offset` is the byte position at which the
// reader detected the problem (0 when it concerns the file as a whole).
class io_error : public std::runtime_error {
public:
    io_error(IoErrorKind kind, uint64_t offset, const std::string& what)
        : std::runtime_error(what), kind_(kind), offset_(offset) {}

    IoErrorKind kind() const { return kind_; }
    uint64_t offset() const { return offset_; }

private:
    IoErrorKind kind_;
    uint64_t offset_;
};

// Broken internal invariant. The CLI maps this to exit code 70.
class invariant_error : public std::logic_error {
public:
    explicit invariant_error(const std::string& what) : std::logic_error(what) {}
};

}  // namespace ezquant
