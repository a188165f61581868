#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "tek/corpus.hpp"
#include "tek/tokenizer.hpp"

namespace tek {

struct SentenceRef {
    std::string page_id;
    int sentence_index = 0;

    bool operator==(const SentenceRef& o) const {
        return page_id == o.page_id && sentence_index == o.sentence_index;
    }
};

// One retrieved background sentence, formatted as "title : sentence" tokens
// (no trailing separator; the packer appends it).
struct Background {
    std::string entity_title;
    SentenceRef sentence;
    int64_t score = 0;
    std::vector<int> formatted_tokens;
};

// A mention that survived linking: position orders the candidate pool.
struct EntityMention {
    int position = 0;  // first token/char offset of the mention in X
    std::string page_id;
};

enum class QueryMode { kQa, kPretrain };

struct RetrievalQuery {
    QueryMode mode = QueryMode::kQa;
    std::vector<int> query_tokens;  // question tokens (qa) or block tokens (pretrain)
    std::vector<EntityMention> mentions;
};

// Tokenized view of a corpus, built once per (index, vocab) pair and shared
// read-only by retrieval, packing and block generation.
class CorpusTokens {
  public:
    CorpusTokens(const CorpusIndex& index, const Vocab& vocab);

    const CorpusIndex& index() const { return *index_; }
    const Vocab& vocab() const { return *vocab_; }

    const std::vector<int>& sentence_tokens(size_t page_idx, size_t sent_idx) const {
        return sentences_[page_idx][sent_idx].ids;
    }
    const std::vector<std::pair<int, int>>& sentence_offsets(size_t page_idx,
                                                             size_t sent_idx) const {
        return sentences_[page_idx][sent_idx].offsets;
    }
    const std::vector<int>& title_tokens(size_t page_idx) const { return titles_[page_idx]; }
    size_t page_index(const std::string& page_id) const;
    int colon_id() const { return colon_id_; }

    // page token stream = sentence token lists concatenated in order
    size_t page_stream_len(size_t page_idx) const;
    // global token index of the first token of sentence sent_idx
    size_t sentence_start(size_t page_idx, size_t sent_idx) const;
    std::vector<int> stream_slice(size_t page_idx, size_t start, size_t len) const;

  private:
    struct TokSent {
        std::vector<int> ids;
        std::vector<std::pair<int, int>> offsets;
    };
    const CorpusIndex* index_;
    const Vocab* vocab_;
    std::unordered_map<std::string, size_t> page_idx_;
    std::vector<std::vector<TokSent>> sentences_;
    std::vector<std::vector<int>> titles_;
    std::vector<std::vector<size_t>> sent_starts_;  // per page, per sentence, +1 total
    int colon_id_ = kUnkId;
};

// Count of shared 1-, 2- and 3-grams, equally weighted, set semantics.
int64_t ngram_overlap(std::span<const int> query_tokens, std::span<const int> sentence_tokens);

// Precomputed query-side n-gram sets for scoring many sentences.
class QueryNgrams {
  public:
    explicit QueryNgrams(std::span<const int> query_tokens);
    int64_t score(std::span<const int> sentence_tokens) const;

  private:
    std::unordered_set<uint64_t> grams_[3];
};

struct Candidate {
    std::string entity_title;
    SentenceRef ref;
    size_t page_idx = 0;
    size_t sent_idx = 0;
};

// Deduplicated union of the sentences of all mentioned pages, ordered by
// (first mention position of the entity, sentence index). Dangling or unknown
// targets contribute nothing.
std::vector<Candidate> candidate_pool(const std::vector<EntityMention>& mentions,
                                      const CorpusTokens& tokens);

// Scores the pool against the query and stable-sorts descending. Candidates
// identical to a sentence of the passage are dropped.
std::vector<Background> rank_backgrounds(
    const RetrievalQuery& query, const CorpusTokens& tokens,
    const std::optional<std::vector<SentenceRef>>& exclude = std::nullopt);

struct PretrainBlock {
    std::string page_id;
    size_t page_idx = 0;
    size_t token_start = 0;
    std::vector<int> tokens;
    std::vector<EntityMention> mentions;
};

struct PretrainBackground {
    bool fallback = false;
    std::vector<Background> backgrounds;   // already selected under the budget
    std::vector<int> fallback_tokens;      // following context, <= budget tokens
};

// Non-overlapping blocks of block_len tokens over each page's token stream.
std::vector<PretrainBlock> make_pretrain_blocks(const CorpusTokens& tokens, size_t block_len);

PretrainBlock block_at(const CorpusTokens& tokens, const std::string& page_id, size_t start,
                       size_t len);

// Entity-linked backgrounds greedily fitted under budget_tokens (sentence +
// separator per background), or the following document context when the block
// links no entities.
PretrainBackground retrieve_pretrain_background(const PretrainBlock& block,
                                                const CorpusTokens& tokens,
                                                size_t budget_tokens);

}  // namespace tek
