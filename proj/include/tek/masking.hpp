#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tek/rng.hpp"
#include "tek/tokenizer.hpp"

namespace tek {

inline constexpr int kNoTarget = -1;

struct MaskConfig {
    double mask_rate = 0.15;
    double geom_p = 0.2;
    int max_span = 10;
    double p_mask = 0.8;    // whole-span replacement probabilities
    double p_random = 0.1;
    double p_keep = 0.1;
    uint64_t seed = 0;

    void validate() const;
};

struct MaskedExample {
    std::vector<int> input_ids;
    std::vector<int> target_ids;  // originals at masked positions, kNoTarget elsewhere
    std::vector<int> mask_positions;
};

// Span length sampler: geometric(p) truncated to [1, max_span] and
// renormalized (drawn by inverse CDF; a clip at max_span would shift the mean).
class SpanLengthSampler {
  public:
    explicit SpanLengthSampler(const MaskConfig& cfg);
    int draw(Rng& rng) const;
    double mean() const { return mean_; }
    const std::vector<double>& pmf() const { return pmf_; }

  private:
    std::vector<double> cdf_;
    std::vector<double> pmf_;
    double mean_ = 0.0;
};

// Repeatedly draws a span length and a uniform start among unmasked
// non-special positions until mask_rate * maskable is reached. Spans stop at
// special tokens and at already-masked positions. Returned spans are
// (start, length), disjoint, in selection order.
std::vector<std::pair<int, int>> sample_spans(const std::vector<int>& ids,
                                              const MaskConfig& cfg, Rng& rng);

// Whole-span 80/10/10 replacement.
MaskedExample apply_mask(const std::vector<int>& ids,
                         const std::vector<std::pair<int, int>>& spans, const MaskConfig& cfg,
                         Rng& rng, const Vocab& vocab);

// sample + apply with a per-example stream derived from (cfg.seed, index);
// parallel generation is order-independent.
MaskedExample mask_example(const std::vector<int>& ids, const MaskConfig& cfg,
                           uint64_t example_index, const Vocab& vocab);

}  // namespace tek
