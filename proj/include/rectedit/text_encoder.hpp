#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rectedit {

/// Hard cap on encoder sequence length, matching the CLIP text encoder budget.
inline constexpr int kMaxTextTokens = 77;

/// Lowercased alphanumeric words; everything else separates tokens.
std::vector<std::string> split_words(std::string_view text);

/// Number of encoder tokens before truncation.
int count_tokens(std::string_view text);

struct TokenizedText {
    std::vector<int> ids;
    bool truncated = false;
};

/// Hashing tokenizer: each word maps to fnv1a(word) mod vocab_size.
TokenizedText hash_tokenize(std::string_view text, int vocab_size);

struct TextEmbedding {
    std::vector<int> tokens;
    /// Row-major [tokens.size() x embed_dim].
    std::vector<double> vectors;
    int embed_dim = 0;
    bool truncated = false;

    int seq_len() const noexcept { return static_cast<int>(tokens.size()); }
    bool is_null() const noexcept { return tokens.empty(); }

    friend bool operator==(const TextEmbedding &, const TextEmbedding &) = default;
};

/// Pluggable frozen encoder. Implementations must be deterministic and
/// return at most kMaxTextTokens rows; the denoiser truncates and flags
/// anything longer.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual int embed_dim() const = 0;
    virtual TextEmbedding encode(std::string_view text) const = 0;
};

}  // namespace rectedit
