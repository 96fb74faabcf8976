#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bsdh {

// Base for every error raised by the library. The CLI prints what() verbatim.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf or an out-of-domain scalar.
class InvalidValueError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Malformed or truncated file. offset is the byte position where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

// A linear or eigen solve that could not be completed.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Recall/AP are undefined for a query without any relevant database item.
class NoRelevantItemsError : public Error {
public:
    using Error::Error;
};

}  // namespace bsdh
