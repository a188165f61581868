#include "tek/packer.hpp"

#include <algorithm>

#include "tek/common.hpp"
#include "tek/metrics.hpp"

namespace tek {

void PackConfig::validate() const {
    require(total_len > 0, "total_len must be positive");
    require(n_b >= 0, "n_b must be non-negative");
    require(n_c + n_b == total_len, "n_c + n_b must equal total_len");
    require(0 < stride && stride <= n_c, "stride must be in (0, n_c]");
}

namespace {

void append_backgrounds(PackedInput& out, const std::vector<Background>& backgrounds,
                        const PackConfig& cfg) {
    size_t used = 0;
    for (const auto& bg : backgrounds) {
        const size_t cost = bg.formatted_tokens.size() + 1;
        if (used + cost > static_cast<size_t>(cfg.n_b)) {
            continue;  // skip, later candidates may still fit
        }
        used += cost;
        const int begin = static_cast<int>(out.ids.size());
        out.ids.insert(out.ids.end(), bg.formatted_tokens.begin(), bg.formatted_tokens.end());
        out.regions.backgrounds.emplace_back(begin, static_cast<int>(out.ids.size()));
        out.ids.push_back(kSepId);
    }
}

void pad_to(PackedInput& out, int total_len) {
    require(out.ids.size() <= static_cast<size_t>(total_len), "packed input overflow");
    out.ids.resize(static_cast<size_t>(total_len), kPadId);
}

}  // namespace

PackedInput pack_rc(const std::vector<int>& question_tokens,
                    const std::vector<int>& passage_tokens,
                    const std::vector<Background>& backgrounds, const PackConfig& cfg) {
    cfg.validate();
    require(static_cast<int>(question_tokens.size()) <= cfg.n_c - 3, "question too long");
    require(static_cast<int>(question_tokens.size() + passage_tokens.size()) + 3 <= cfg.n_c,
            "passage window exceeds context budget");
    PackedInput out;
    out.ids.reserve(static_cast<size_t>(cfg.total_len));
    out.ids.push_back(kClsId);
    out.regions.question = {1, static_cast<int>(1 + question_tokens.size())};
    out.ids.insert(out.ids.end(), question_tokens.begin(), question_tokens.end());
    out.ids.push_back(kSepId);
    const int p_begin = static_cast<int>(out.ids.size());
    out.ids.insert(out.ids.end(), passage_tokens.begin(), passage_tokens.end());
    out.regions.passage = {p_begin, static_cast<int>(out.ids.size())};
    out.ids.push_back(kSepId);
    out.regions.context_len = static_cast<int>(out.ids.size());
    append_backgrounds(out, backgrounds, cfg);
    pad_to(out, cfg.total_len);
    return out;
}

std::vector<Window> sliding_windows(const std::vector<int>& doc_tokens, size_t question_len,
                                    const PackConfig& cfg) {
    cfg.validate();
    const int capacity = cfg.n_c - static_cast<int>(question_len) - 3;
    require(capacity > 0, "question consumes context budget");
    const size_t w = static_cast<size_t>(capacity);
    std::vector<Window> windows;
    for (size_t start = 0;; start += static_cast<size_t>(cfg.stride)) {
        if (start >= doc_tokens.size() && start > 0) {
            break;
        }
        Window win;
        win.start = static_cast<int>(start);
        const size_t end = std::min(doc_tokens.size(), start + w);
        win.tokens.assign(doc_tokens.begin() + static_cast<long>(start),
                          doc_tokens.begin() + static_cast<long>(end));
        windows.push_back(std::move(win));
        if (start + w >= doc_tokens.size()) {
            break;  // this window reached the document end
        }
    }
    return windows;
}

std::pair<int, int> label_answer(const PackedInput& window,
                                 const std::vector<std::string>& gold_answers,
                                 const Vocab& vocab) {
    std::vector<std::string> golds;
    size_t max_gold_words = 0;
    for (const auto& g : gold_answers) {
        std::string n = em_normalize(g);
        if (n.empty()) {
            continue;
        }
        max_gold_words =
            std::max(max_gold_words, static_cast<size_t>(std::count(n.begin(), n.end(), ' ')) + 1);
        golds.push_back(std::move(n));
    }
    if (golds.empty()) {
        return {0, 0};
    }
    const auto [p_begin, p_end] = window.regions.passage;
    std::vector<std::string> norm(static_cast<size_t>(p_end - p_begin));
    for (int i = p_begin; i < p_end; ++i) {
        norm[static_cast<size_t>(i - p_begin)] =
            em_normalize(vocab.token(window.ids[static_cast<size_t>(i)]));
    }
    // punctuation-only tokens inside a span add nothing; bound the scan length
    const size_t max_span = 2 * max_gold_words + 4;
    for (int start = p_begin; start < p_end; ++start) {
        const std::string& first = norm[static_cast<size_t>(start - p_begin)];
        if (first.empty()) {
            continue;
        }
        std::string acc;
        const int limit = std::min(p_end, start + static_cast<int>(max_span));
        for (int end = start; end < limit; ++end) {
            const std::string& t = norm[static_cast<size_t>(end - p_begin)];
            if (!t.empty()) {
                if (!acc.empty()) {
                    acc.push_back(' ');
                }
                acc += t;
            } else if (end == start) {
                break;
            } else {
                continue;  // span may pass through it but cannot end on it
            }
            for (const auto& g : golds) {
                if (acc == g) {
                    return {start, end};
                }
            }
            if (acc.size() > 0) {
                bool viable = false;
                for (const auto& g : golds) {
                    if (g.size() >= acc.size() && g.compare(0, acc.size(), acc) == 0) {
                        viable = true;
                        break;
                    }
                }
                if (!viable) {
                    break;
                }
            }
        }
    }
    return {0, 0};
}

PackedInput pack_pretrain(const std::vector<int>& block_tokens,
                          const PretrainBackground& background, const PackConfig& cfg) {
    cfg.validate();
    require(static_cast<int>(block_tokens.size()) + 2 <= cfg.n_c, "block too long");
    PackedInput out;
    out.ids.reserve(static_cast<size_t>(cfg.total_len));
    out.ids.push_back(kClsId);
    out.ids.insert(out.ids.end(), block_tokens.begin(), block_tokens.end());
    out.regions.passage = {1, static_cast<int>(out.ids.size())};
    out.ids.push_back(kSepId);
    out.regions.context_len = static_cast<int>(out.ids.size());
    if (background.fallback) {
        out.regions.fallback_background = true;
        const size_t take =
            std::min(background.fallback_tokens.size(), static_cast<size_t>(cfg.n_b));
        if (take > 0) {
            const int begin = static_cast<int>(out.ids.size());
            out.ids.insert(out.ids.end(), background.fallback_tokens.begin(),
                           background.fallback_tokens.begin() + static_cast<long>(take));
            out.regions.backgrounds.emplace_back(begin, static_cast<int>(out.ids.size()));
        }
    } else {
        append_backgrounds(out, background.backgrounds, cfg);
    }
    pad_to(out, cfg.total_len);
    return out;
}

}  // namespace tek
