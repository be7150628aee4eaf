#include "rectedit/error.hpp"

namespace rectedit {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_range: return "invalid-range";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::timestep_out_of_range: return "timestep-out-of-range";
    case ErrorCode::ordering: return "ordering";
    case ErrorCode::transport: return "transport";
    case ErrorCode::budget_violation: return "budget-violation";
    case ErrorCode::malformed_response: return "malformed-response";
    case ErrorCode::insufficient_negatives: return "insufficient-negatives";
    case ErrorCode::unreadable_source: return "unreadable-source";
    case ErrorCode::format_version: return "format-version";
    case ErrorCode::quota_exceeds_available: return "quota-exceeds-available";
    case ErrorCode::failure_ceiling: return "failure-ceiling";
    case ErrorCode::missing_negatives: return "missing-negatives";
    case ErrorCode::decode: return "decode";
    case ErrorCode::degenerate_size: return "degenerate-size";
    case ErrorCode::window_out_of_range: return "window-out-of-range";
    case ErrorCode::parse: return "parse";
    case ErrorCode::empty_list: return "empty-list";
    case ErrorCode::size_mismatch: return "size-mismatch";
    case ErrorCode::config: return "config";
    case ErrorCode::unknown_command: return "unknown-command";
    case ErrorCode::invariant: return "invariant";
    }
    return "unknown";
}

ErrorCategory category_of(ErrorCode code) {
    switch (code) {
    case ErrorCode::config:
    case ErrorCode::unknown_command:
    case ErrorCode::invalid_range:
    case ErrorCode::window_out_of_range:
        return ErrorCategory::config;
    case ErrorCode::transport:
    case ErrorCode::budget_violation:
    case ErrorCode::malformed_response:
    case ErrorCode::insufficient_negatives:
    case ErrorCode::parse:
        return ErrorCategory::external_client;
    case ErrorCode::unreadable_source:
    case ErrorCode::format_version:
    case ErrorCode::quota_exceeds_available:
    case ErrorCode::failure_ceiling:
    case ErrorCode::missing_negatives:
    case ErrorCode::decode:
    case ErrorCode::degenerate_size:
    case ErrorCode::size_mismatch:
    case ErrorCode::empty_list:
        return ErrorCategory::data;
    case ErrorCode::shape_mismatch:
    case ErrorCode::timestep_out_of_range:
    case ErrorCode::ordering:
    case ErrorCode::invariant:
        return ErrorCategory::internal;
    }
    return ErrorCategory::internal;
}

}  // namespace rectedit
