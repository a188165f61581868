#include "tek/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include "tek/common.hpp"
#include "tek/corpus.hpp"
#include "tek/utf8.hpp"

namespace tek {

namespace {

bool is_space_cp(uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v';
}

bool is_punct_cp(uint32_t cp) {
    if (cp >= 128) {
        return false;  // non-ASCII treated as word characters
    }
    const char c = static_cast<char>(cp);
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
           (c >= '{' && c <= '~');
}

uint32_t lower_cp(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') {
        return cp + 32;
    }
    return cp;
}

}  // namespace

std::vector<WordSpan> word_split(const std::string& text) {
    const utf8::Decoded d = utf8::decode(text);
    std::vector<WordSpan> out;
    size_t i = 0;
    const size_t n = d.size();
    while (i < n) {
        const uint32_t cp = d.codepoints[i];
        if (is_space_cp(cp)) {
            ++i;
            continue;
        }
        if (is_punct_cp(cp)) {
            WordSpan w;
            utf8::append(w.text, cp);
            w.start = static_cast<int>(i);
            w.end = static_cast<int>(i + 1);
            out.push_back(std::move(w));
            ++i;
            continue;
        }
        const size_t start = i;
        std::string word;
        while (i < n && !is_space_cp(d.codepoints[i]) && !is_punct_cp(d.codepoints[i])) {
            utf8::append(word, lower_cp(d.codepoints[i]));
            ++i;
        }
        out.push_back(WordSpan{std::move(word), static_cast<int>(start), static_cast<int>(i)});
    }
    return out;
}

void Vocab::rebuild_lookup() {
    sorted_.clear();
    sorted_.reserve(tokens_.size());
    for (size_t i = 0; i < tokens_.size(); ++i) {
        sorted_.emplace_back(tokens_[i], static_cast<int>(i));
    }
    std::sort(sorted_.begin(), sorted_.end());
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    v.tokens_.reserve(tokens.size() + kNumSpecials);
    for (int i = 0; i < kNumSpecials; ++i) {
        v.tokens_.push_back(kSpecialNames[i]);
    }
    for (const auto& t : tokens) {
        v.tokens_.push_back(t);
    }
    v.rebuild_lookup();
    return v;
}

Vocab Vocab::build(const CorpusIndex& corpus, size_t max_size) {
    require(max_size >= static_cast<size_t>(kNumSpecials), "vocab max_size must be >= 5");
    std::unordered_map<std::string, size_t> freq;
    auto count = [&freq](const std::string& text) {
        for (auto& w : word_split(text)) {
            ++freq[w.text];
        }
    };
    for (const auto& page : corpus.pages()) {
        count(page.title);
        for (const auto& sent : page.sentences) {
            count(sent.text);
        }
    }
    std::vector<std::pair<std::string, size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    const size_t keep = std::min(ranked.size(), max_size - kNumSpecials);
    std::vector<std::string> tokens;
    tokens.reserve(keep);
    for (size_t i = 0; i < keep; ++i) {
        tokens.push_back(ranked[i].first);
    }
    return from_tokens(tokens);
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open vocab file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        tokens.push_back(line);
    }
    // a trailing newline-less empty final line never reaches here; empty lines
    // mid-file would be malformed tokens
    for (const auto& t : tokens) {
        require(!t.empty(), "empty token line in vocab file: " + path);
    }
    return from_tokens(tokens);
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write vocab file: " + path);
    for (size_t i = kNumSpecials; i < tokens_.size(); ++i) {
        out << tokens_[i] << '\n';
    }
}

int Vocab::id(const std::string& token) const {
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(),
                               std::make_pair(token, 0),
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    if (it != sorted_.end() && it->first == token) {
        return it->second;
    }
    return kUnkId;
}

bool Vocab::contains(const std::string& token) const {
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(),
                               std::make_pair(token, 0),
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    return it != sorted_.end() && it->first == token;
}

const std::string& Vocab::token(int id) const {
    require(id >= 0 && static_cast<size_t>(id) < tokens_.size(),
            "token id out of range: " + std::to_string(id));
    return tokens_[static_cast<size_t>(id)];
}

TokenizedText encode(const std::string& text, const Vocab& vocab) {
    TokenizedText out;
    out.source = text;
    for (auto& w : word_split(text)) {
        out.ids.push_back(vocab.id(w.text));
        out.offsets.emplace_back(w.start, w.end);
    }
    return out;
}

std::string decode(const std::vector<int>& ids, const Vocab& vocab) {
    std::string out;
    for (int id : ids) {
        const std::string& tok = vocab.token(id);  // validates range
        if (is_special_id(id)) {
            continue;
        }
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += tok;
    }
    return out;
}

}  // namespace tek
