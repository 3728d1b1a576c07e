#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace carver {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MalformedUri : public Error {
public:
    explicit MalformedUri(const std::string& uri) : Error("malformed URI: " + uri) {}
};

// Input file could not be parsed; entry is the 0-based line or HAR entry index.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t entry)
        : Error(what + " (entry " + std::to_string(entry) + ")"), entry_(entry) {}

    std::size_t entry() const noexcept { return entry_; }

private:
    std::size_t entry_;
};

class EmptyRecording : public Error {
public:
    EmptyRecording() : Error("recording contains no API calls under the base URL") {}
};

class MixedOrigin : public Error {
public:
    MixedOrigin() : Error("recorded URLs share no common scheme and authority") {}
};

}  // namespace carver
