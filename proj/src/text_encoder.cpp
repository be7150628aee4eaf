#include "rectedit/text_encoder.hpp"

#include "rectedit/hashing.hpp"

#include <cctype>

namespace rectedit {

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }
    return words;
}

int count_tokens(std::string_view text) { return static_cast<int>(split_words(text).size()); }

TokenizedText hash_tokenize(std::string_view text, int vocab_size) {
    TokenizedText out;
    const auto words = split_words(text);
    out.truncated = words.size() > static_cast<std::size_t>(kMaxTextTokens);
    const std::size_t n = out.truncated ? kMaxTextTokens : words.size();
    out.ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.ids.push_back(static_cast<int>(fnv1a64(words[i]) % static_cast<std::uint64_t>(vocab_size)));
    }
    return out;
}

}  // namespace rectedit
