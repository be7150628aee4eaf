#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rectedit {

enum class ErrorCode {
    invalid_range,
    shape_mismatch,
    timestep_out_of_range,
    ordering,
    transport,
    budget_violation,
    malformed_response,
    insufficient_negatives,
    unreadable_source,
    format_version,
    quota_exceeds_available,
    failure_ceiling,
    missing_negatives,
    decode,
    degenerate_size,
    window_out_of_range,
    parse,
    empty_list,
    size_mismatch,
    config,
    unknown_command,
    invariant,
};

/// Exit-code families used by the command line front end.
enum class ErrorCategory { config = 2, data = 3, external_client = 4, internal = 5 };

std::string_view to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    bool retryable() const noexcept { return code_ == ErrorCode::transport; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string &message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string &message) {
    if (!condition) {
        throw Error(code, message);
    }
}

}  // namespace rectedit
