#include "rectedit/instruction_forge.hpp"

#include "rectedit/error.hpp"
#include "rectedit/image.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <set>
#include <sstream>
#include <thread>

namespace rectedit {

std::string to_string(SubstitutedAttribute attribute) {
    switch (attribute) {
    case SubstitutedAttribute::quantity: return "quantity";
    case SubstitutedAttribute::location: return "location";
    case SubstitutedAttribute::object: return "object";
    }
    return "object";
}

SubstitutedAttribute attribute_from_string(const std::string &text) {
    if (text == "quantity") return SubstitutedAttribute::quantity;
    if (text == "location") return SubstitutedAttribute::location;
    if (text == "object") return SubstitutedAttribute::object;
    fail(ErrorCode::malformed_response, "unknown substituted attribute '" + text + "'");
}

std::vector<std::string> diff_tokens(const std::string &text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        } else if (!std::ispunct(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

int token_edit_distance(const std::vector<std::string> &a, const std::vector<std::string> &b) {
    std::vector<int> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        int diagonal = row[0];
        row[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const int above = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diagonal + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diagonal = above;
        }
    }
    return row[b.size()];
}

namespace {

int multiset_symmetric_difference(std::vector<std::string> a, std::vector<std::string> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::string> out;
    std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return static_cast<int>(out.size());
}

}  // namespace

NegativeVerdict validate_negative(const std::string &positive, const std::string &candidate, int max_diff_tokens) {
    require(!positive.empty() && !candidate.empty(), ErrorCode::invariant, "validate_negative needs two texts");
    const auto p = diff_tokens(positive);
    const auto c = diff_tokens(candidate);
    if (p == c) {
        return {false, "identical"};
    }
    const int sym = multiset_symmetric_difference(p, c);
    if (sym == 0) {
        return {false, "no-token-change"};
    }
    if (sym > 2 * max_diff_tokens || token_edit_distance(p, c) > max_diff_tokens) {
        return {false, "diff-too-large"};
    }
    return {true, ""};
}

void NegativeSet::validate(int max_diff_tokens) const {
    require(negatives.size() == attributes.size(), ErrorCode::invariant, "negative/attribute count mismatch");
    std::set<std::vector<std::string>> seen;
    for (const auto &n : negatives) {
        const auto verdict = validate_negative(positive, n, max_diff_tokens);
        require(verdict.valid, ErrorCode::invariant, "negative '" + n + "' rejected: " + verdict.reason);
        require(seen.insert(diff_tokens(n)).second, ErrorCode::invariant, "duplicate negative '" + n + "'");
    }
}

double RetryPolicy::delay_for(int attempt) const {
    double delay = initial_delay_ms;
    for (int i = 0; i < attempt; ++i) delay *= multiplier;
    return std::min(delay, max_delay_ms);
}

VlmResponse complete_with_retry(VlmClient &client, const VlmRequest &request, const RetryPolicy &policy) {
    for (int attempt = 0;; ++attempt) {
        try {
            return client.complete(request);
        } catch (const Error &e) {
            if (!e.retryable() || attempt + 1 >= policy.max_attempts) {
                throw;
            }
        }
        const double delay = policy.delay_for(attempt);
        if (policy.sleep_ms) {
            policy.sleep_ms(delay);
        } else {
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
        }
    }
}

double PriceTable::price(const std::string &model_id) const {
    const auto it = per_pair_usd.find(model_id);
    return it == per_pair_usd.end() ? fallback_usd : it->second;
}

void ForgeConfig::validate() const {
    require(!model_id.empty(), ErrorCode::config, "forge model_id is empty");
    require(token_budget >= 1, ErrorCode::config, "token_budget must be >= 1");
    require(max_retries >= 0, ErrorCode::config, "max_retries must be >= 0");
    require(k >= 1, ErrorCode::config, "k must be >= 1");
    require(max_diff_tokens >= 1, ErrorCode::config, "max_diff_tokens must be >= 1");
    require(retry.max_attempts >= 1, ErrorCode::config, "retry attempts must be >= 1");
}

std::string build_rectify_prompt(const PairMeta &meta, int token_budget) {
    std::ostringstream out;
    out << "You are given two images: the original image first and the edited image second.\n"
        << "Describe every difference between them, section by section, using these headings:\n\n"
        << "1. Overall Image Layout: objects added, removed or moved; changes in composition.\n"
        << "2. Local Object Attributes: changes in color, shape, texture or size of individual objects.\n"
        << "3. Image Details / Style Change: fine details, lighting, and any global style change. "
        << "Report Image Details and Style Change together in this single section.\n\n"
        << "Write \"none\" for a section without differences.\n"
        << "Then write one editing instruction that turns the original into the edited image. "
        << "The summarized instruction must be at most " << token_budget
        << " tokens (" << token_budget << " tokens is the text encoder limit).\n";
    if (!meta.raw_instruction.empty()) {
        out << "The instruction supplied with this pair was: \"" << meta.raw_instruction
            << "\". It may be wrong; describe what the images show.\n";
    }
    out << "Respond with sections {layout, local_attributes, style_details, summary}.\n";
    return out.str();
}

std::string build_summarize_prompt(const std::string &summary, int token_budget, int attempt) {
    std::ostringstream out;
    out << "Shorten this editing instruction to at most " << token_budget
        << " tokens while keeping every edit it describes (attempt " << attempt << "):\n"
        << summary << "\nRespond with sections {layout, local_attributes, style_details, summary}; "
        << "only summary is read.\n";
    return out.str();
}

std::string build_negatives_prompt(const std::string &positive, int needed, int max_diff_tokens,
                                   const std::vector<std::string> &rejected, int attempt) {
    std::ostringstream out;
    out << "Editing instruction: \"" << positive << "\"\n"
        << "Write " << needed << " wrong instructions. Each changes exactly one attribute of the instruction: "
        << "a quantity, a spatial location, or an object. Keep the rest of the text unchanged and change at most "
        << max_diff_tokens << " words.\n"
        << "Respond with candidates [{text, attribute}] where attribute is quantity, location or object.\n";
    if (!rejected.empty()) {
        out << "Attempt " << attempt << ". These candidates were rejected, do not repeat them:\n";
        for (const auto &r : rejected) {
            out << "- " << r << "\n";
        }
    }
    return out.str();
}

namespace {

VlmRequest make_request(const EncodedPair &pair, VlmTask task, std::string prompt, const ForgeConfig &config) {
    VlmRequest request;
    request.task = task;
    request.model_id = config.model_id;
    request.images = {pair.original_png, pair.edited_png};
    request.prompt = std::move(prompt);
    request.max_response_tokens = config.max_response_tokens;
    request.temperature = config.temperature;
    return request;
}

const VlmSections &require_sections(const VlmResponse &response) {
    if (!response.sections) {
        fail(ErrorCode::malformed_response, "VLM response has no sections");
    }
    return *response.sections;
}

bool is_blank(const std::string &text) {
    return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

RectificationRecord rectify_instruction(const EncodedPair &pair, VlmClient &client, const ForgeConfig &config) {
    config.validate();
    decode_png(pair.original_png);
    decode_png(pair.edited_png);

    const auto first = complete_with_retry(
        client, make_request(pair, VlmTask::rectify, build_rectify_prompt(pair.meta, config.token_budget), config),
        config.retry);
    const auto &sections = require_sections(first);

    RectificationRecord record;
    record.layout_diff = sections.layout;
    record.local_attr_diff = sections.local_attributes;
    record.style_detail_diff = sections.style_details;
    record.summarized_instruction = sections.summary;
    record.model_id = config.model_id;
    record.cost_usd = config.prices.price(config.model_id);

    if (is_blank(record.summarized_instruction)) {
        fail(ErrorCode::malformed_response, "VLM response has an empty summary for pair " + pair.meta.id);
    }
    while (count_tokens(record.summarized_instruction) > config.token_budget) {
        if (record.summarize_retries >= config.max_retries) {
            fail(ErrorCode::budget_violation,
                 "summary for pair " + pair.meta.id + " still has " +
                     std::to_string(count_tokens(record.summarized_instruction)) + " tokens after " +
                     std::to_string(config.max_retries) + " follow-ups");
        }
        ++record.summarize_retries;
        const auto follow = complete_with_retry(
            client,
            make_request(pair, VlmTask::summarize,
                         build_summarize_prompt(record.summarized_instruction, config.token_budget,
                                                record.summarize_retries),
                         config),
            config.retry);
        record.summarized_instruction = require_sections(follow).summary;
        if (is_blank(record.summarized_instruction)) {
            fail(ErrorCode::malformed_response, "follow-up summary is empty for pair " + pair.meta.id);
        }
    }
    record.token_count = count_tokens(record.summarized_instruction);
    return record;
}

NegativeSet generate_negatives(const EncodedPair &pair, const std::string &rectified, VlmClient &client,
                               const ForgeConfig &config) {
    config.validate();
    require(!is_blank(rectified), ErrorCode::invariant, "rectified instruction is empty");

    NegativeSet set;
    set.positive = rectified;
    std::set<std::vector<std::string>> accepted;
    std::vector<std::string> rejected;
    int stalled = 0;
    int attempt = 0;
    while (static_cast<int>(set.negatives.size()) < config.k) {
        const int needed = config.k - static_cast<int>(set.negatives.size());
        const auto response = complete_with_retry(
            client,
            make_request(pair, VlmTask::negatives,
                         build_negatives_prompt(rectified, needed, config.max_diff_tokens, rejected, attempt),
                         config),
            config.retry);
        ++attempt;
        bool progressed = false;
        for (const auto &candidate : response.candidates) {
            if (static_cast<int>(set.negatives.size()) >= config.k) {
                break;
            }
            if (is_blank(candidate.text)) {
                continue;
            }
            const auto verdict = validate_negative(rectified, candidate.text, config.max_diff_tokens);
            SubstitutedAttribute attribute{};
            bool known_attribute = true;
            try {
                attribute = attribute_from_string(candidate.attribute);
            } catch (const Error &) {
                known_attribute = false;
            }
            if (!verdict.valid || !known_attribute || !accepted.insert(diff_tokens(candidate.text)).second) {
                if (std::find(rejected.begin(), rejected.end(), candidate.text) == rejected.end()) {
                    rejected.push_back(candidate.text);
                }
                continue;
            }
            set.negatives.push_back(candidate.text);
            set.attributes.push_back(attribute);
            progressed = true;
        }
        if (static_cast<int>(set.negatives.size()) >= config.k) {
            break;
        }
        stalled = progressed ? 0 : stalled + 1;
        if (stalled > config.max_retries) {
            fail(ErrorCode::insufficient_negatives,
                 "pair " + pair.meta.id + ": only " + std::to_string(set.negatives.size()) + " of " +
                     std::to_string(config.k) + " valid negatives after " + std::to_string(config.max_retries) +
                     " follow-ups");
        }
    }
    return set;
}

}  // namespace rectedit
