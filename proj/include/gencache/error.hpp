#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gencache {

enum class ErrorCode {
    invalid_argument,
    conflict,
    not_found,
    unavailable,
    format,
    io,
    timeout,
    rate_limited,
    schema,
    all_failed,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Nominal HTTP status for an error code (used by the service and CLI).
int http_status(ErrorCode code);

}  // namespace gencache
