#include "rrseg/tokenizer.hpp"

#include <cctype>

#include "rrseg/errors.hpp"

namespace rrseg {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

TextTokenizer::TextTokenizer(int64_t vocab_size, int64_t max_len)
    : vocab_size_(vocab_size), max_len_(max_len) {
    if (vocab_size < kReservedIds + 1) throw ConfigError("tokenizer vocab_size too small");
    if (max_len < 2) throw ConfigError("tokenizer max_len must be >= 2");
}

std::vector<std::string> TextTokenizer::split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

std::vector<int64_t> TextTokenizer::encode(const std::string& text) const {
    std::vector<std::string> words = split_words(text);
    if (words.empty()) throw EmptyTextError("referring text has no words: '" + text + "'");
    if (static_cast<int64_t>(words.size()) > max_len_ - 1)
        words.resize(static_cast<size_t>(max_len_ - 1));
    std::vector<int64_t> ids;
    ids.reserve(words.size() + 1);
    for (const auto& w : words)
        ids.push_back(kReservedIds +
                      static_cast<int64_t>(fnv1a(w) % static_cast<uint64_t>(vocab_size_ - kReservedIds)));
    ids.push_back(kEosId);
    return ids;
}

}  // namespace rrseg
