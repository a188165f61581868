#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tek/rng.hpp"
#include "tek/tensor.hpp"

namespace tek {

struct EncoderConfig {
    int layers = 4;
    int heads = 4;
    int hidden = 128;
    int ffn = 512;
    int max_positions = 512;
    int vocab_size = 0;
    double dropout = 0.0;

    void validate() const;
    int head_dim() const { return hidden / heads; }
};

struct LayerParams {
    Vec ln1_g, ln1_b;
    Mat wq, wk, wv, wo;
    Vec bq, bk, bv, bo;
    Vec ln2_g, ln2_b;
    Mat w1;
    Vec b1;
    Mat w2;
    Vec b2;
};

struct ParamRef {
    std::string name;
    double* data;
    size_t n;
    bool decay;  // weight matrices and embeddings decay; biases and norms do not
};

// Pre-norm Transformer encoder with tied MLM projection and two QA weight
// vectors on top. Parameters live in declaration order; the checkpoint file
// and the optimizer state both follow param_refs().
struct ModelState {
    EncoderConfig cfg;
    Mat tok_emb;  // vocab_size x hidden, also the MLM output projection
    Mat pos_emb;  // max_positions x hidden
    std::vector<LayerParams> layers;
    Vec final_ln_g, final_ln_b;
    Vec qa_start_w, qa_end_w;

    static ModelState init(const EncoderConfig& cfg, uint64_t seed);
    static ModelState zeros_like(const ModelState& other);

    std::vector<ParamRef> param_refs();
    void zero();
    size_t num_params() const;
};

struct LayerCache {
    Mat x_in;
    Vec ln1_mean, ln1_inv;
    Mat h0;
    Mat q, k, v;
    std::vector<Mat> probs;  // one S x S attention matrix per head
    Mat ctx;
    Vec attn_drop;  // dropout multipliers, empty when inactive
    Mat x1;
    Vec ln2_mean, ln2_inv;
    Mat h1;
    Mat u;
    Mat g;
    Vec ffn_drop;
    Mat x2;
};

struct ForwardCache {
    int s_eff = 0;
    std::vector<int> ids;
    std::vector<uint8_t> key_ok;
    Mat x0;
    std::vector<LayerCache> layers;
    Vec final_mean, final_inv;
    Mat y;  // s_eff x hidden
};

// Hidden states for the first s_eff positions, where s_eff covers the last
// attended position. PAD keys are excluded from attention; trailing PAD is
// never computed at all.
const Mat& forward(const ModelState& state, const std::vector<int>& ids,
                   const std::vector<uint8_t>& attention_mask, ForwardCache& cache,
                   bool train = false, Rng* dropout_rng = nullptr);

// Mean cross-entropy at positions where targets != kNoTarget (-1), softmax
// over the vocabulary through the tied embedding matrix.
double mlm_loss(const Mat& hidden, const std::vector<int>& targets, const ModelState& state);

void qa_logits(const Mat& hidden, const ModelState& state, Vec& start_logits, Vec& end_logits);

// Mean of start and end cross-entropies restricted to candidate positions.
double qa_loss(const Vec& start_logits, const Vec& end_logits,
               const std::vector<int>& candidates, int gold_start, int gold_end);

struct SpanPred {
    int start = 0;
    int end = 0;          // inclusive
    double score = 0.0;   // best in-passage pair, or null_score when none exists
    double null_score = 0.0;
    bool has_span = false;
};

// Best (i <= j, j - i < max_answer_len) pair inside [passage_begin,
// passage_end) by start+end logit sum; the null candidate scores at cls_pos.
SpanPred predict_span(const Vec& start_logits, const Vec& end_logits, int passage_begin,
                      int passage_end, int cls_pos = 0, int max_answer_len = 30);

// Forward + loss + exact gradients accumulated into grads (scaled by
// loss_scale). Pass grads = nullptr for the loss alone. A dropout_rng enables
// train-mode dropout when the config asks for it.
double mlm_value_and_grad(const ModelState& state, const std::vector<int>& ids,
                          const std::vector<uint8_t>& attention_mask,
                          const std::vector<int>& targets, ModelState* grads,
                          double loss_scale = 1.0, Rng* dropout_rng = nullptr);

double qa_value_and_grad(const ModelState& state, const std::vector<int>& ids,
                         const std::vector<uint8_t>& attention_mask,
                         const std::vector<int>& candidates, int gold_start, int gold_end,
                         ModelState* grads, double loss_scale = 1.0, Rng* dropout_rng = nullptr);

void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

std::vector<uint8_t> attention_mask_for(const std::vector<int>& ids);

}  // namespace tek
