#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rrseg {

// Hashing tokenizer: lowercase, split on non-alphanumerics, FNV-1a into
// vocab buckets. Every word maps to some bucket deterministically, so there
// is no out-of-vocabulary failure mode. Id 0 is reserved (padding), id 1 is
// the end-of-sequence token appended to every encoding.
class TextTokenizer {
public:
    static constexpr int64_t kPadId = 0;
    static constexpr int64_t kEosId = 1;
    static constexpr int64_t kReservedIds = 2;

    TextTokenizer(int64_t vocab_size, int64_t max_len);

    // Word ids plus a trailing EOS; length <= max_len. Throws EmptyTextError
    // when the text has no words after trimming.
    std::vector<int64_t> encode(const std::string& text) const;

    static std::vector<std::string> split_words(const std::string& text);

    int64_t vocab_size() const { return vocab_size_; }
    int64_t max_len() const { return max_len_; }

private:
    int64_t vocab_size_;
    int64_t max_len_;
};

}  // namespace rrseg
