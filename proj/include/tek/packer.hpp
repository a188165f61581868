#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tek/retrieval.hpp"
#include "tek/tokenizer.hpp"

namespace tek {

struct PackConfig {
    int total_len = 512;
    int n_c = 384;    // context budget: [CLS] question [SEP] passage [SEP]
    int n_b = 128;    // background budget, separators included
    int stride = 128;

    void validate() const;
};

// Region spans are [begin, end) token positions and exclude separators; each
// background's terminating SEP sits at regions.backgrounds[i].second.
struct Regions {
    int cls_pos = 0;
    std::pair<int, int> question{1, 1};
    std::pair<int, int> passage{1, 1};
    std::vector<std::pair<int, int>> backgrounds;
    int context_len = 0;  // CLS..final context SEP, before any background
    bool fallback_background = false;
};

struct PackedInput {
    std::vector<int> ids;
    Regions regions;
    int window_start = 0;  // document token offset of the passage window
};

struct QAExample {
    PackedInput packed;
    // inclusive token positions; (0, 0) is the CLS no-answer label
    int answer_start = 0;
    int answer_end = 0;
    std::string qid;
    std::string doc_id;
    int window_index = 0;
};

// [CLS] q [SEP] p [SEP] then ranked backgrounds greedily: one is included iff
// its formatted tokens + separator fit the remaining background budget;
// non-fitting candidates are skipped, later ones still tried.
PackedInput pack_rc(const std::vector<int>& question_tokens,
                    const std::vector<int>& passage_tokens,
                    const std::vector<Background>& backgrounds, const PackConfig& cfg);

struct Window {
    int start = 0;
    std::vector<int> tokens;
};

// Fixed-capacity windows advanced by cfg.stride; capacity is
// n_c - question_len - 3. An empty document yields one empty window.
std::vector<Window> sliding_windows(const std::vector<int>& doc_tokens, size_t question_len,
                                    const PackConfig& cfg);

// Distant supervision: earliest span in the passage region whose normalized
// detokenization equals a normalized gold answer, shortest at equal starts,
// boundary tokens required to survive normalization. (0,0) when absent.
// Background regions are never searched.
std::pair<int, int> label_answer(const PackedInput& window,
                                 const std::vector<std::string>& gold_answers,
                                 const Vocab& vocab);

// [CLS] X [SEP] then entity backgrounds (greedy fit) or the fallback context
// verbatim: no prefixes, no separators, truncated to the budget.
PackedInput pack_pretrain(const std::vector<int>& block_tokens,
                          const PretrainBackground& background, const PackConfig& cfg);

}  // namespace tek
