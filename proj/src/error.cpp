#include "gencache/error.hpp"

namespace gencache {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::not_found: return "not-found";
        case ErrorCode::unavailable: return "unavailable";
        case ErrorCode::format: return "format";
        case ErrorCode::io: return "io";
        case ErrorCode::timeout: return "timeout";
        case ErrorCode::rate_limited: return "rate-limited";
        case ErrorCode::schema: return "schema";
        case ErrorCode::all_failed: return "all-failed";
    }
    return "unknown";
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument:
        case ErrorCode::schema:
        case ErrorCode::format: return 400;
        case ErrorCode::not_found: return 404;
        case ErrorCode::conflict: return 409;
        case ErrorCode::rate_limited: return 429;
        case ErrorCode::all_failed: return 502;
        case ErrorCode::unavailable: return 503;
        case ErrorCode::timeout: return 504;
        case ErrorCode::io: return 500;
    }
    return 500;
}

}  // namespace gencache
