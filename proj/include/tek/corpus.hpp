#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace tek {

struct Mention {
    int start = 0;  // scalar-value offsets into the sentence text
    int end = 0;
    std::string surface;
    std::string target;     // page_id
    bool dangling = false;  // target missing from the corpus; kept, never scored
};

struct Sentence {
    std::string text;
    std::vector<Mention> links;
};

struct Page {
    std::string page_id;
    std::string title;
    std::vector<Sentence> sentences;
};

struct CorpusStats {
    size_t pages = 0;
    size_t sentences = 0;
    size_t dangling_links = 0;
};

// Normalization used for alias keys and linker matching: ASCII lowercase,
// whitespace runs collapsed to one space, trimmed.
std::string normalize_surface(const std::string& s);

// Immutable after ingest; concurrent reads are safe.
class CorpusIndex {
  public:
    struct AliasEntry {
        // (page_id, hyperlink occurrence count), page_id ascending
        std::vector<std::pair<std::string, size_t>> pages;
        std::string best;  // most hyperlink occurrences, tie -> smallest page_id
    };

    static CorpusIndex ingest(const std::string& path);
    static CorpusIndex ingest_jsonl(const std::string& text, const std::string& origin);

    // Canonical single-JSON serialization; byte-identical for identical input.
    void save(const std::string& path) const;
    static CorpusIndex load(const std::string& path);
    // Accepts either a saved index or a corpus jsonl file.
    static CorpusIndex open(const std::string& path);

    const Page& page(const std::string& page_id) const;
    bool has_page(const std::string& page_id) const;
    const std::vector<Page>& pages() const { return pages_; }

    const std::vector<Sentence>& sentences_of(const std::string& page_id) const;

    // Longest-match, left-to-right, non-overlapping dictionary linking over
    // raw text. Matches may not begin or end on whitespace.
    std::vector<Mention> link_entities(const std::string& text) const;

    const std::map<std::string, AliasEntry>& alias_dict() const { return aliases_; }
    const CorpusStats& stats() const { return stats_; }
    std::string serialize() const;

  private:
    std::vector<Page> pages_;
    std::unordered_map<std::string, size_t> id_to_idx_;
    std::map<std::string, AliasEntry> aliases_;
    size_t max_alias_len_ = 0;
    CorpusStats stats_;

    void finalize();
};

}  // namespace tek
