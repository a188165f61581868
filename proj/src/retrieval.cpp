#include "tek/retrieval.hpp"

#include <algorithm>

#include "tek/common.hpp"

namespace tek {

CorpusTokens::CorpusTokens(const CorpusIndex& index, const Vocab& vocab)
    : index_(&index), vocab_(&vocab) {
    const auto& pages = index.pages();
    sentences_.resize(pages.size());
    titles_.resize(pages.size());
    sent_starts_.resize(pages.size());
    for (size_t p = 0; p < pages.size(); ++p) {
        page_idx_.emplace(pages[p].page_id, p);
        titles_[p] = encode(pages[p].title, vocab).ids;
        sentences_[p].reserve(pages[p].sentences.size());
        sent_starts_[p].reserve(pages[p].sentences.size() + 1);
        size_t pos = 0;
        for (const auto& sent : pages[p].sentences) {
            TokenizedText t = encode(sent.text, vocab);
            sent_starts_[p].push_back(pos);
            pos += t.ids.size();
            sentences_[p].push_back(TokSent{std::move(t.ids), std::move(t.offsets)});
        }
        sent_starts_[p].push_back(pos);
    }
    colon_id_ = vocab.id(":");
}

size_t CorpusTokens::page_index(const std::string& page_id) const {
    auto it = page_idx_.find(page_id);
    require(it != page_idx_.end(), "unknown page_id: " + page_id);
    return it->second;
}

size_t CorpusTokens::page_stream_len(size_t page_idx) const {
    return sent_starts_[page_idx].back();
}

size_t CorpusTokens::sentence_start(size_t page_idx, size_t sent_idx) const {
    return sent_starts_[page_idx][sent_idx];
}

std::vector<int> CorpusTokens::stream_slice(size_t page_idx, size_t start, size_t len) const {
    std::vector<int> out;
    out.reserve(len);
    const auto& sents = sentences_[page_idx];
    for (size_t s = 0; s < sents.size() && out.size() < len; ++s) {
        const size_t sent_begin = sent_starts_[page_idx][s];
        const size_t sent_end = sent_starts_[page_idx][s + 1];
        if (sent_end <= start) {
            continue;
        }
        const size_t from = start > sent_begin ? start - sent_begin : 0;
        for (size_t i = from; i < sents[s].ids.size() && out.size() < len; ++i) {
            out.push_back(sents[s].ids[i]);
        }
    }
    return out;
}

namespace {

// token ids fit in 21 bits; n-grams pack exactly into a u64 key
constexpr uint64_t kIdBits = 21;
constexpr uint64_t kIdMask = (1ull << kIdBits) - 1;

inline uint64_t key1(int a) { return static_cast<uint64_t>(a) & kIdMask; }
inline uint64_t key2(int a, int b) { return (key1(a) << kIdBits) | key1(b); }
inline uint64_t key3(int a, int b, int c) { return (key2(a, b) << kIdBits) | key1(c); }

}  // namespace

QueryNgrams::QueryNgrams(std::span<const int> q) {
    for (size_t i = 0; i < q.size(); ++i) {
        grams_[0].insert(key1(q[i]));
        if (i + 1 < q.size()) {
            grams_[1].insert(key2(q[i], q[i + 1]));
        }
        if (i + 2 < q.size()) {
            grams_[2].insert(key3(q[i], q[i + 1], q[i + 2]));
        }
    }
}

int64_t QueryNgrams::score(std::span<const int> s) const {
    // set semantics on both sides: count distinct shared grams once
    std::unordered_set<uint64_t> seen[3];
    int64_t total = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        const uint64_t k1 = key1(s[i]);
        if (grams_[0].count(k1) != 0 && seen[0].insert(k1).second) {
            ++total;
        }
        if (i + 1 < s.size()) {
            const uint64_t k2 = key2(s[i], s[i + 1]);
            if (grams_[1].count(k2) != 0 && seen[1].insert(k2).second) {
                ++total;
            }
        }
        if (i + 2 < s.size()) {
            const uint64_t k3 = key3(s[i], s[i + 1], s[i + 2]);
            if (grams_[2].count(k3) != 0 && seen[2].insert(k3).second) {
                ++total;
            }
        }
    }
    return total;
}

int64_t ngram_overlap(std::span<const int> query_tokens,
                      std::span<const int> sentence_tokens) {
    return QueryNgrams(query_tokens).score(sentence_tokens);
}

std::vector<Candidate> candidate_pool(const std::vector<EntityMention>& mentions,
                                      const CorpusTokens& tokens) {
    std::vector<EntityMention> ordered = mentions;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const EntityMention& a, const EntityMention& b) {
                         return a.position < b.position;
                     });
    const CorpusIndex& index = tokens.index();
    std::vector<Candidate> pool;
    std::unordered_set<std::string> seen_pages;
    for (const auto& m : ordered) {
        if (!index.has_page(m.page_id) || !seen_pages.insert(m.page_id).second) {
            continue;
        }
        const size_t page_idx = tokens.page_index(m.page_id);
        const Page& page = index.pages()[page_idx];
        for (size_t s = 0; s < page.sentences.size(); ++s) {
            pool.push_back(Candidate{page.title,
                                     SentenceRef{m.page_id, static_cast<int>(s)}, page_idx, s});
        }
    }
    return pool;
}

std::vector<Background> rank_backgrounds(
    const RetrievalQuery& query, const CorpusTokens& tokens,
    const std::optional<std::vector<SentenceRef>>& exclude) {
    std::vector<Candidate> pool = candidate_pool(query.mentions, tokens);
    const QueryNgrams grams(query.query_tokens);
    std::vector<Background> ranked;
    ranked.reserve(pool.size());
    for (const auto& cand : pool) {
        if (exclude.has_value() &&
            std::find(exclude->begin(), exclude->end(), cand.ref) != exclude->end()) {
            continue;
        }
        Background bg;
        bg.entity_title = cand.entity_title;
        bg.sentence = cand.ref;
        const auto& sent = tokens.sentence_tokens(cand.page_idx, cand.sent_idx);
        bg.score = grams.score(sent);
        const auto& title = tokens.title_tokens(cand.page_idx);
        bg.formatted_tokens.reserve(title.size() + 1 + sent.size());
        bg.formatted_tokens.insert(bg.formatted_tokens.end(), title.begin(), title.end());
        bg.formatted_tokens.push_back(tokens.colon_id());
        bg.formatted_tokens.insert(bg.formatted_tokens.end(), sent.begin(), sent.end());
        ranked.push_back(std::move(bg));
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Background& a, const Background& b) { return a.score > b.score; });
    return ranked;
}

std::vector<PretrainBlock> make_pretrain_blocks(const CorpusTokens& tokens, size_t block_len) {
    require(block_len > 0, "block_len must be positive");
    std::vector<PretrainBlock> blocks;
    const auto& pages = tokens.index().pages();
    for (size_t p = 0; p < pages.size(); ++p) {
        const size_t total = tokens.page_stream_len(p);
        for (size_t start = 0; start < total; start += block_len) {
            blocks.push_back(block_at(tokens, pages[p].page_id, start,
                                      std::min(block_len, total - start)));
        }
    }
    return blocks;
}

PretrainBlock block_at(const CorpusTokens& tokens, const std::string& page_id, size_t start,
                       size_t len) {
    const size_t page_idx = tokens.page_index(page_id);
    const Page& page = tokens.index().pages()[page_idx];
    PretrainBlock block;
    block.page_id = page_id;
    block.page_idx = page_idx;
    block.token_start = start;
    block.tokens = tokens.stream_slice(page_idx, start, len);
    require(block.tokens.size() == len, "block range exceeds page: " + page_id);
    const size_t end = start + len;
    // pretraining uses hyperlinks, not the dictionary linker
    for (size_t s = 0; s < page.sentences.size(); ++s) {
        const size_t sent_begin = tokens.sentence_start(page_idx, s);
        const auto& offsets = tokens.sentence_offsets(page_idx, s);
        for (const auto& link : page.sentences[s].links) {
            if (link.dangling) {
                continue;
            }
            // first sentence token overlapping the link's character span
            size_t tok = offsets.size();
            for (size_t t = 0; t < offsets.size(); ++t) {
                if (offsets[t].second > link.start && offsets[t].first < link.end) {
                    tok = t;
                    break;
                }
            }
            if (tok == offsets.size()) {
                continue;
            }
            const size_t global = sent_begin + tok;
            if (global >= start && global < end) {
                block.mentions.push_back(
                    EntityMention{static_cast<int>(global - start), link.target});
            }
        }
    }
    return block;
}

PretrainBackground retrieve_pretrain_background(const PretrainBlock& block,
                                                const CorpusTokens& tokens,
                                                size_t budget_tokens) {
    PretrainBackground out;
    if (!block.mentions.empty()) {
        RetrievalQuery query;
        query.mode = QueryMode::kPretrain;
        query.query_tokens = block.tokens;
        query.mentions = block.mentions;
        std::vector<Background> ranked = rank_backgrounds(query, tokens);
        size_t used = 0;
        for (auto& bg : ranked) {
            const size_t cost = bg.formatted_tokens.size() + 1;  // + separator
            if (used + cost <= budget_tokens) {
                used += cost;
                out.backgrounds.push_back(std::move(bg));
            }
        }
        return out;
    }
    out.fallback = true;
    const size_t after = block.token_start + block.tokens.size();
    const size_t total = tokens.page_stream_len(block.page_idx);
    if (after < total) {
        out.fallback_tokens =
            tokens.stream_slice(block.page_idx, after, std::min(budget_tokens, total - after));
    }
    return out;
}

}  // namespace tek
