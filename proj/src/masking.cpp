#include "tek/masking.hpp"

#include <algorithm>
#include <cmath>

#include "tek/common.hpp"

namespace tek {

void MaskConfig::validate() const {
    require(0.0 < mask_rate && mask_rate < 1.0, "mask_rate must be in (0, 1)");
    require(0.0 < geom_p && geom_p < 1.0, "geom_p must be in (0, 1)");
    require(max_span >= 1, "max_span must be >= 1");
    require(std::abs(p_mask + p_random + p_keep - 1.0) < 1e-12,
            "replacement probabilities must sum to 1");
}

SpanLengthSampler::SpanLengthSampler(const MaskConfig& cfg) {
    cfg.validate();
    pmf_.resize(static_cast<size_t>(cfg.max_span));
    double total = 0.0;
    double q = 1.0;  // (1-p)^(k-1)
    for (int k = 1; k <= cfg.max_span; ++k) {
        pmf_[static_cast<size_t>(k - 1)] = q * cfg.geom_p;
        total += pmf_[static_cast<size_t>(k - 1)];
        q *= 1.0 - cfg.geom_p;
    }
    cdf_.resize(pmf_.size());
    double acc = 0.0;
    for (size_t i = 0; i < pmf_.size(); ++i) {
        pmf_[i] /= total;
        acc += pmf_[i];
        cdf_[i] = acc;
        mean_ += static_cast<double>(i + 1) * pmf_[i];
    }
    cdf_.back() = 1.0;
}

int SpanLengthSampler::draw(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<int>(it - cdf_.begin()) + 1;
}

std::vector<std::pair<int, int>> sample_spans(const std::vector<int>& ids,
                                              const MaskConfig& cfg, Rng& rng) {
    const SpanLengthSampler lengths(cfg);
    std::vector<bool> maskable(ids.size());
    std::vector<bool> masked(ids.size(), false);
    size_t maskable_count = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
        maskable[i] = !is_special_id(ids[i]);
        if (maskable[i]) {
            ++maskable_count;
        }
    }
    std::vector<std::pair<int, int>> spans;
    if (maskable_count == 0) {
        return spans;
    }
    const double target = cfg.mask_rate * static_cast<double>(maskable_count);
    size_t total_masked = 0;
    std::vector<int> open;  // unmasked maskable positions
    open.reserve(maskable_count);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (maskable[i]) {
            open.push_back(static_cast<int>(i));
        }
    }
    while (static_cast<double>(total_masked) < target && !open.empty()) {
        const int len = lengths.draw(rng);
        const size_t pick = static_cast<size_t>(rng.below(open.size()));
        const int start = open[pick];
        int covered = 0;
        for (int pos = start; pos < static_cast<int>(ids.size()) && covered < len; ++pos) {
            if (!maskable[static_cast<size_t>(pos)] || masked[static_cast<size_t>(pos)]) {
                break;  // spans neither cross separators nor re-mask
            }
            masked[static_cast<size_t>(pos)] = true;
            ++covered;
        }
        spans.emplace_back(start, covered);
        total_masked += static_cast<size_t>(covered);
        open.erase(std::remove_if(open.begin(), open.end(),
                                  [&masked](int p) { return masked[static_cast<size_t>(p)]; }),
                   open.end());
    }
    return spans;
}

MaskedExample apply_mask(const std::vector<int>& ids,
                         const std::vector<std::pair<int, int>>& spans, const MaskConfig& cfg,
                         Rng& rng, const Vocab& vocab) {
    cfg.validate();
    MaskedExample out;
    out.input_ids = ids;
    out.target_ids.assign(ids.size(), kNoTarget);
    const size_t vocab_regular = vocab.size() - static_cast<size_t>(kNumSpecials);
    for (const auto& [start, len] : spans) {
        require(start >= 0 && len >= 0 &&
                    static_cast<size_t>(start + len) <= ids.size(),
                "mask span out of range");
        const double u = rng.uniform();
        for (int pos = start; pos < start + len; ++pos) {
            const int id = ids[static_cast<size_t>(pos)];
            require(!is_special_id(id), "mask span touches a special token");
            out.target_ids[static_cast<size_t>(pos)] = id;
            out.mask_positions.push_back(pos);
            if (u < cfg.p_mask) {
                out.input_ids[static_cast<size_t>(pos)] = kMaskId;
            } else if (u < cfg.p_mask + cfg.p_random) {
                require(vocab_regular > 0, "vocab has no regular tokens for random replacement");
                out.input_ids[static_cast<size_t>(pos)] =
                    kNumSpecials + static_cast<int>(rng.below(vocab_regular));
            }
            // else keep the original token; the position still counts as masked
        }
    }
    std::sort(out.mask_positions.begin(), out.mask_positions.end());
    return out;
}

MaskedExample mask_example(const std::vector<int>& ids, const MaskConfig& cfg,
                           uint64_t example_index, const Vocab& vocab) {
    Rng rng = Rng::for_stream(cfg.seed, example_index);
    const auto spans = sample_spans(ids, cfg, rng);
    return apply_mask(ids, spans, cfg, rng, vocab);
}

}  // namespace tek
