#pragma once

#include <stdexcept>
#include <string>

namespace fusenet {

// Caller handed us something structurally unusable (shape mismatch, bad
// argument, contract violation).  Messages name the offending values.
class PreconditionError : public std::invalid_argument {
public:
    explicit PreconditionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A numeric quantity left the finite range (NaN/Inf) somewhere it never
// should.  Always identifies where.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file content.  Carries the byte offset where parsing gave up.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, long long offset)
        : std::runtime_error(msg + " (byte " + std::to_string(offset) + ")"), offset_(offset) {}
    long long offset() const { return offset_; }

private:
    long long offset_;
};

// Filesystem-level failure (missing file, short read, unwritable path).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace fusenet
