#pragma once

#include <string>
#include <utility>
#include <vector>

namespace tek {

class CorpusIndex;

// Reserved token ids. The vocab file stores only regular tokens
// (line number = id - 5); specials are implicit.
inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kMaskId = 3;
inline constexpr int kUnkId = 4;
inline constexpr int kNumSpecials = 5;

inline constexpr const char* kSpecialNames[kNumSpecials] = {"[PAD]", "[CLS]", "[SEP]",
                                                            "[MASK]", "[UNK]"};

inline bool is_special_id(int id) { return id >= 0 && id < kNumSpecials; }

struct WordSpan {
    std::string text;  // lowercased surface
    int start = 0;     // scalar-value offsets into the source
    int end = 0;
};

// Splits on whitespace; ASCII punctuation marks become single-codepoint
// tokens. Word text is ASCII-lowercased.
std::vector<WordSpan> word_split(const std::string& text);

class Vocab {
  public:
    Vocab() = default;

    // Frequency-ranked word types from titles and sentence text, lexicographic
    // tie-break, truncated to max_size - 5 regular tokens.
    static Vocab build(const CorpusIndex& corpus, size_t max_size);

    static Vocab from_tokens(const std::vector<std::string>& tokens);

    static Vocab load(const std::string& path);
    void save(const std::string& path) const;

    size_t size() const { return tokens_.size(); }

    // UNK for out-of-vocabulary words.
    int id(const std::string& token) const;

    // Throws on out-of-range ids.
    const std::string& token(int id) const;

    bool contains(const std::string& token) const;

  private:
    std::vector<std::string> tokens_;                 // index == id, specials first
    std::vector<std::pair<std::string, int>> sorted_; // binary-searchable token -> id
    void rebuild_lookup();
};

struct TokenizedText {
    std::vector<int> ids;
    std::vector<std::pair<int, int>> offsets;  // scalar-value spans, (0,0) for specials
    std::string source;
};

TokenizedText encode(const std::string& text, const Vocab& vocab);

// Space-joined token strings; special ids are omitted.
std::string decode(const std::vector<int>& ids, const Vocab& vocab);

}  // namespace tek
