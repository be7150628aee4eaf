#pragma once

#include "rectedit/text_encoder.hpp"
#include "rectedit/vlm_client.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace rectedit {

enum class SubstitutedAttribute { quantity, location, object };

std::string to_string(SubstitutedAttribute attribute);
/// Throws ErrorCode::malformed_response for unknown names.
SubstitutedAttribute attribute_from_string(const std::string &text);

struct RectificationRecord {
    std::string layout_diff;
    std::string local_attr_diff;
    std::string style_detail_diff;
    std::string summarized_instruction;
    int token_count = 0;
    double cost_usd = 0.0;
    std::string model_id;
    /// Follow-up summarization requests that were needed.
    int summarize_retries = 0;
};

struct NegativeSet {
    std::string positive;
    std::vector<std::string> negatives;
    std::vector<SubstitutedAttribute> attributes;

    /// Throws ErrorCode::invariant when a negative is invalid or duplicated.
    void validate(int max_diff_tokens) const;
};

struct NegativeVerdict {
    bool valid = false;
    /// Empty when valid; otherwise identical, no-token-change or diff-too-large.
    std::string reason;
};

/// Lowercase, strip punctuation, split on whitespace.
std::vector<std::string> diff_tokens(const std::string &text);

/// Token-level edit distance (substitution, insertion, deletion all cost 1).
int token_edit_distance(const std::vector<std::string> &a, const std::vector<std::string> &b);

NegativeVerdict validate_negative(const std::string &positive, const std::string &candidate, int max_diff_tokens);

/// Exponential backoff for transport failures.
struct RetryPolicy {
    int max_attempts = 4;
    double initial_delay_ms = 200.0;
    double multiplier = 2.0;
    double max_delay_ms = 5000.0;
    /// Replaced in tests to avoid real sleeps.
    std::function<void(double)> sleep_ms;

    double delay_for(int attempt) const;
};

/// Sends `request`, retrying transport errors under `policy`. Other errors propagate.
VlmResponse complete_with_retry(VlmClient &client, const VlmRequest &request, const RetryPolicy &policy);

/// Per-pair USD prices keyed by model id. Unknown ids use `fallback_usd`.
struct PriceTable {
    std::map<std::string, double> per_pair_usd;
    double fallback_usd = 0.02;

    double price(const std::string &model_id) const;
};

struct ForgeConfig {
    std::string model_id = "gpt-4o";
    int token_budget = kMaxTextTokens;
    /// R: follow-up requests per summary and per unfilled negative slot.
    int max_retries = 2;
    int k = 3;
    int max_diff_tokens = 5;
    int max_response_tokens = 512;
    double temperature = 0.0;
    RetryPolicy retry;
    PriceTable prices;

    void validate() const;
};

struct PairMeta {
    std::string id;
    std::string raw_instruction;
};

struct EncodedPair {
    PairMeta meta;
    std::vector<std::uint8_t> original_png;
    std::vector<std::uint8_t> edited_png;
};

std::string build_rectify_prompt(const PairMeta &meta, int token_budget = kMaxTextTokens);
std::string build_summarize_prompt(const std::string &summary, int token_budget, int attempt);
std::string build_negatives_prompt(const std::string &positive, int needed, int max_diff_tokens,
                                   const std::vector<std::string> &rejected, int attempt);

/// Throws budget_violation after R follow-ups, malformed_response on missing sections,
/// decode when either image is unreadable, transport once retries are spent.
RectificationRecord rectify_instruction(const EncodedPair &pair, VlmClient &client, const ForgeConfig &config);

/// Throws insufficient_negatives once a slot stays unfilled for R follow-ups.
NegativeSet generate_negatives(const EncodedPair &pair, const std::string &rectified, VlmClient &client,
                               const ForgeConfig &config);

}  // namespace rectedit
