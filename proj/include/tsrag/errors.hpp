#pragma once

#include <stdexcept>
#include <string>

namespace tsrag {

// Input data is broken: malformed files, degenerate series, violated
// structural expectations. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A forecasting backend misbehaved: transport failures, bad status codes,
// replies that cannot be parsed. The CLI maps this to exit code 3.
class BackendError : public std::runtime_error {
public:
    explicit BackendError(const std::string& what) : std::runtime_error(what) {}
    BackendError(const std::string& what, std::string raw)
        : std::runtime_error(what), raw_response_(std::move(raw)) {}

    // Verbatim backend output, kept so callers can log what failed to parse.
    const std::string& raw_response() const { return raw_response_; }

private:
    std::string raw_response_;
};

}  // namespace tsrag
