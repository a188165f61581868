#include "tek/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include "tek/common.hpp"
#include "tek/kernels.hpp"
#include "tek/tokenizer.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace tek {

namespace {

using kernels::add_row_bias;
using kernels::gelu;
using kernels::gelu_backward;
using kernels::layer_norm;
using kernels::layer_norm_backward;
using kernels::matmul;
using kernels::matmul_nt;
using kernels::matmul_tn;
using kernels::softmax_backward_rows;
using kernels::softmax_rows;

void slice_head(Mat& dst, const Mat& src, int head, int dh) {
    dst = Mat(src.rows, dh);
    for (int i = 0; i < src.rows; ++i) {
        std::memcpy(dst.row(i), src.row(i) + head * dh,
                    static_cast<size_t>(dh) * sizeof(double));
    }
}

void place_head(Mat& dst, const Mat& src, int head, int dh) {
    for (int i = 0; i < src.rows; ++i) {
        std::memcpy(dst.row(i) + head * dh, src.row(i),
                    static_cast<size_t>(dh) * sizeof(double));
    }
}

void bias_grad(Vec& db, const Mat& dY) {
    for (int i = 0; i < dY.rows; ++i) {
        const double* d = dY.row(i);
        for (int j = 0; j < dY.cols; ++j) {
            db[static_cast<size_t>(j)] += d[j];
        }
    }
}

void add_into(Mat& dst, const Mat& src) {
    for (size_t i = 0; i < dst.v.size(); ++i) {
        dst.v[i] += src.v[i];
    }
}

void apply_multipliers(Mat& x, const Vec& mult) {
    if (mult.empty()) {
        return;
    }
    for (size_t i = 0; i < x.v.size(); ++i) {
        x.v[i] *= mult[i];
    }
}

Vec draw_dropout(Rng& rng, size_t n, double p) {
    Vec mult(n);
    const double keep = 1.0 / (1.0 - p);
    for (size_t i = 0; i < n; ++i) {
        mult[i] = rng.uniform() < p ? 0.0 : keep;
    }
    return mult;
}

}  // namespace

void EncoderConfig::validate() const {
    require(layers >= 1, "layers must be >= 1");
    require(heads >= 1 && hidden >= 1 && hidden % heads == 0,
            "hidden must be divisible by heads");
    require(ffn >= 1, "ffn must be >= 1");
    require(max_positions >= 1, "max_positions must be >= 1");
    require(vocab_size >= kNumSpecials, "vocab_size must cover the reserved ids");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
}

ModelState ModelState::init(const EncoderConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelState s;
    s.cfg = cfg;
    const int h = cfg.hidden;
    s.tok_emb = Mat(cfg.vocab_size, h);
    s.pos_emb = Mat(cfg.max_positions, h);
    s.layers.resize(static_cast<size_t>(cfg.layers));
    for (auto& l : s.layers) {
        l.ln1_g.assign(static_cast<size_t>(h), 1.0);
        l.ln1_b.assign(static_cast<size_t>(h), 0.0);
        l.wq = Mat(h, h);
        l.wk = Mat(h, h);
        l.wv = Mat(h, h);
        l.wo = Mat(h, h);
        l.bq.assign(static_cast<size_t>(h), 0.0);
        l.bk.assign(static_cast<size_t>(h), 0.0);
        l.bv.assign(static_cast<size_t>(h), 0.0);
        l.bo.assign(static_cast<size_t>(h), 0.0);
        l.ln2_g.assign(static_cast<size_t>(h), 1.0);
        l.ln2_b.assign(static_cast<size_t>(h), 0.0);
        l.w1 = Mat(h, cfg.ffn);
        l.b1.assign(static_cast<size_t>(cfg.ffn), 0.0);
        l.w2 = Mat(cfg.ffn, h);
        l.b2.assign(static_cast<size_t>(h), 0.0);
    }
    s.final_ln_g.assign(static_cast<size_t>(h), 1.0);
    s.final_ln_b.assign(static_cast<size_t>(h), 0.0);
    s.qa_start_w.assign(static_cast<size_t>(h), 0.0);
    s.qa_end_w.assign(static_cast<size_t>(h), 0.0);

    Rng rng(seed);
    constexpr double kInitStd = 0.02;
    for (auto& ref : s.param_refs()) {
        // weights get small gaussian noise; norms and biases keep their
        // identity/zero initialization
        if (ref.decay) {
            for (size_t i = 0; i < ref.n; ++i) {
                ref.data[i] = rng.normal(0.0, kInitStd);
            }
        }
    }
    return s;
}

ModelState ModelState::zeros_like(const ModelState& other) {
    ModelState s = other;
    s.zero();
    return s;
}

void ModelState::zero() {
    for (auto& ref : param_refs()) {
        std::fill(ref.data, ref.data + ref.n, 0.0);
    }
}

std::vector<ParamRef> ModelState::param_refs() {
    std::vector<ParamRef> refs;
    auto mat = [&refs](const std::string& name, Mat& m, bool decay) {
        refs.push_back(ParamRef{name, m.v.data(), m.v.size(), decay});
    };
    auto vec = [&refs](const std::string& name, Vec& v, bool decay) {
        refs.push_back(ParamRef{name, v.data(), v.size(), decay});
    };
    mat("tok_emb", tok_emb, true);
    mat("pos_emb", pos_emb, true);
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        auto& lp = layers[l];
        vec(p + "ln1_g", lp.ln1_g, false);
        vec(p + "ln1_b", lp.ln1_b, false);
        mat(p + "wq", lp.wq, true);
        vec(p + "bq", lp.bq, false);
        mat(p + "wk", lp.wk, true);
        vec(p + "bk", lp.bk, false);
        mat(p + "wv", lp.wv, true);
        vec(p + "bv", lp.bv, false);
        mat(p + "wo", lp.wo, true);
        vec(p + "bo", lp.bo, false);
        vec(p + "ln2_g", lp.ln2_g, false);
        vec(p + "ln2_b", lp.ln2_b, false);
        mat(p + "w1", lp.w1, true);
        vec(p + "b1", lp.b1, false);
        mat(p + "w2", lp.w2, true);
        vec(p + "b2", lp.b2, false);
    }
    vec("final_ln_g", final_ln_g, false);
    vec("final_ln_b", final_ln_b, false);
    vec("qa_start_w", qa_start_w, true);
    vec("qa_end_w", qa_end_w, true);
    return refs;
}

size_t ModelState::num_params() const {
    size_t total = 0;
    for (auto& ref : const_cast<ModelState*>(this)->param_refs()) {
        total += ref.n;
    }
    return total;
}

const Mat& forward(const ModelState& state, const std::vector<int>& ids,
                   const std::vector<uint8_t>& attention_mask, ForwardCache& cache, bool train,
                   Rng* dropout_rng) {
    const EncoderConfig& cfg = state.cfg;
    require(ids.size() == attention_mask.size(), "ids/attention_mask size mismatch");
    require(ids.size() <= static_cast<size_t>(cfg.max_positions),
            "input longer than max_positions");
    int s_eff = 0;
    for (size_t i = 0; i < attention_mask.size(); ++i) {
        if (attention_mask[i] != 0) {
            s_eff = static_cast<int>(i) + 1;
        }
    }
    require(s_eff > 0, "input has no attended positions");

    cache.s_eff = s_eff;
    cache.ids.assign(ids.begin(), ids.begin() + s_eff);
    cache.key_ok.assign(attention_mask.begin(), attention_mask.begin() + s_eff);
    const int h = cfg.hidden;
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool use_dropout = train && cfg.dropout > 0.0 && dropout_rng != nullptr;

    cache.x0 = Mat(s_eff, h);
    for (int i = 0; i < s_eff; ++i) {
        const int id = ids[static_cast<size_t>(i)];
        require(id >= 0 && id < cfg.vocab_size, "token id out of range");
        const double* te = state.tok_emb.row(id);
        const double* pe = state.pos_emb.row(i);
        double* x = cache.x0.row(i);
        for (int j = 0; j < h; ++j) {
            x[j] = te[j] + pe[j];
        }
    }

    cache.layers.assign(static_cast<size_t>(cfg.layers), LayerCache{});
    const Mat* x = &cache.x0;
    for (int l = 0; l < cfg.layers; ++l) {
        LayerCache& lc = cache.layers[static_cast<size_t>(l)];
        const LayerParams& lp = state.layers[static_cast<size_t>(l)];
        lc.x_in = *x;

        lc.h0 = Mat(s_eff, h);
        layer_norm(lc.h0, lc.x_in, lp.ln1_g, lp.ln1_b, lc.ln1_mean, lc.ln1_inv);

        lc.q = Mat(s_eff, h);
        lc.k = Mat(s_eff, h);
        lc.v = Mat(s_eff, h);
        matmul(lc.q, lc.h0, lp.wq);
        add_row_bias(lc.q, lp.bq);
        matmul(lc.k, lc.h0, lp.wk);
        add_row_bias(lc.k, lp.bk);
        matmul(lc.v, lc.h0, lp.wv);
        add_row_bias(lc.v, lp.bv);

        lc.probs.assign(static_cast<size_t>(cfg.heads), Mat{});
        lc.ctx = Mat(s_eff, h);
        for (int a = 0; a < cfg.heads; ++a) {
            Mat qa, ka, va;
            slice_head(qa, lc.q, a, dh);
            slice_head(ka, lc.k, a, dh);
            slice_head(va, lc.v, a, dh);
            Mat scores(s_eff, s_eff);
            matmul_nt(scores, qa, ka);
            for (double& sv : scores.v) {
                sv *= scale;
            }
            Mat& probs = lc.probs[static_cast<size_t>(a)];
            probs = Mat(s_eff, s_eff);
            softmax_rows(probs, scores, cache.key_ok);
            Mat ctx_a(s_eff, dh);
            matmul(ctx_a, probs, va);
            place_head(lc.ctx, ctx_a, a, dh);
        }

        Mat attn(s_eff, h);
        matmul(attn, lc.ctx, lp.wo);
        add_row_bias(attn, lp.bo);
        if (use_dropout) {
            lc.attn_drop = draw_dropout(*dropout_rng, attn.v.size(), cfg.dropout);
            apply_multipliers(attn, lc.attn_drop);
        }
        lc.x1 = lc.x_in;
        add_into(lc.x1, attn);

        lc.h1 = Mat(s_eff, h);
        layer_norm(lc.h1, lc.x1, lp.ln2_g, lp.ln2_b, lc.ln2_mean, lc.ln2_inv);
        lc.u = Mat(s_eff, cfg.ffn);
        matmul(lc.u, lc.h1, lp.w1);
        add_row_bias(lc.u, lp.b1);
        lc.g = Mat(s_eff, cfg.ffn);
        gelu(lc.g, lc.u);
        Mat f(s_eff, h);
        matmul(f, lc.g, lp.w2);
        add_row_bias(f, lp.b2);
        if (use_dropout) {
            lc.ffn_drop = draw_dropout(*dropout_rng, f.v.size(), cfg.dropout);
            apply_multipliers(f, lc.ffn_drop);
        }
        lc.x2 = lc.x1;
        add_into(lc.x2, f);
        x = &lc.x2;
    }

    cache.y = Mat(s_eff, h);
    layer_norm(cache.y, *x, state.final_ln_g, state.final_ln_b, cache.final_mean,
               cache.final_inv);
    return cache.y;
}

namespace {

// Backpropagates dY (gradient at the final layer-norm output) through the
// whole stack, accumulating parameter gradients.
void encoder_backward(const ModelState& state, const ForwardCache& cache, const Mat& dY,
                      ModelState& grads) {
    const EncoderConfig& cfg = state.cfg;
    const int s_eff = cache.s_eff;
    const int h = cfg.hidden;
    const int dh = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const Mat& x_last =
        cfg.layers > 0 ? cache.layers[static_cast<size_t>(cfg.layers - 1)].x2 : cache.x0;
    Mat dx(s_eff, h);
    layer_norm_backward(dx, grads.final_ln_g, grads.final_ln_b, dY, x_last, state.final_ln_g,
                        cache.final_mean, cache.final_inv);

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerCache& lc = cache.layers[static_cast<size_t>(l)];
        const LayerParams& lp = state.layers[static_cast<size_t>(l)];
        LayerParams& gp = grads.layers[static_cast<size_t>(l)];

        // ffn block: x2 = x1 + drop(gelu(ln2(x1) w1 + b1) w2 + b2)
        Mat df = dx;
        apply_multipliers(df, lc.ffn_drop);
        bias_grad(gp.b2, df);
        Mat dg(s_eff, cfg.ffn);
        matmul_nt(dg, df, lp.w2);
        matmul_tn(gp.w2, lc.g, df, /*accumulate=*/true);
        Mat du(s_eff, cfg.ffn);
        gelu_backward(du, lc.u, dg);
        bias_grad(gp.b1, du);
        Mat dh1(s_eff, h);
        matmul_nt(dh1, du, lp.w1);
        matmul_tn(gp.w1, lc.h1, du, /*accumulate=*/true);
        Mat dx1(s_eff, h);
        layer_norm_backward(dx1, gp.ln2_g, gp.ln2_b, dh1, lc.x1, lp.ln2_g, lc.ln2_mean,
                            lc.ln2_inv);
        add_into(dx1, dx);  // residual path

        // attention block: x1 = x_in + drop(ctx wo + bo)
        Mat dattn = dx1;
        apply_multipliers(dattn, lc.attn_drop);
        bias_grad(gp.bo, dattn);
        Mat dctx(s_eff, h);
        matmul_nt(dctx, dattn, lp.wo);
        matmul_tn(gp.wo, lc.ctx, dattn, /*accumulate=*/true);

        Mat dq(s_eff, h);
        Mat dk(s_eff, h);
        Mat dv(s_eff, h);
        for (int a = 0; a < cfg.heads; ++a) {
            Mat qa, ka, va, dctx_a;
            slice_head(qa, lc.q, a, dh);
            slice_head(ka, lc.k, a, dh);
            slice_head(va, lc.v, a, dh);
            slice_head(dctx_a, dctx, a, dh);
            const Mat& probs = lc.probs[static_cast<size_t>(a)];
            Mat dprobs(s_eff, s_eff);
            matmul_nt(dprobs, dctx_a, va);
            Mat dva(s_eff, dh);
            matmul_tn(dva, probs, dctx_a);
            Mat dscores(s_eff, s_eff);
            softmax_backward_rows(dscores, probs, dprobs);
            for (double& sv : dscores.v) {
                sv *= scale;
            }
            Mat dqa(s_eff, dh);
            matmul(dqa, dscores, ka);
            Mat dka(s_eff, dh);
            matmul_tn(dka, dscores, qa);
            place_head(dq, dqa, a, dh);
            place_head(dk, dka, a, dh);
            place_head(dv, dva, a, dh);
        }

        bias_grad(gp.bq, dq);
        bias_grad(gp.bk, dk);
        bias_grad(gp.bv, dv);
        Mat dh0(s_eff, h);
        matmul_nt(dh0, dq, lp.wq);
        matmul_nt(dh0, dk, lp.wk, /*accumulate=*/true);
        matmul_nt(dh0, dv, lp.wv, /*accumulate=*/true);
        matmul_tn(gp.wq, lc.h0, dq, /*accumulate=*/true);
        matmul_tn(gp.wk, lc.h0, dk, /*accumulate=*/true);
        matmul_tn(gp.wv, lc.h0, dv, /*accumulate=*/true);

        Mat dx_in(s_eff, h);
        layer_norm_backward(dx_in, gp.ln1_g, gp.ln1_b, dh0, lc.x_in, lp.ln1_g, lc.ln1_mean,
                            lc.ln1_inv);
        add_into(dx_in, dx1);  // residual path
        dx = std::move(dx_in);
    }

    for (int i = 0; i < s_eff; ++i) {
        const int id = cache.ids[static_cast<size_t>(i)];
        double* dte = grads.tok_emb.row(id);
        double* dpe = grads.pos_emb.row(i);
        const double* d = dx.row(i);
        for (int j = 0; j < h; ++j) {
            dte[j] += d[j];
            dpe[j] += d[j];
        }
    }
}

struct MlmRows {
    std::vector<int> positions;
    Mat y_rows;       // M x H
    Mat logits;       // M x V
    double loss = 0.0;
};

MlmRows mlm_rows(const Mat& hidden, const std::vector<int>& targets, const ModelState& state) {
    MlmRows r;
    for (int i = 0; i < hidden.rows; ++i) {
        if (static_cast<size_t>(i) < targets.size() && targets[static_cast<size_t>(i)] >= 0) {
            r.positions.push_back(i);
        }
    }
    const int m = static_cast<int>(r.positions.size());
    if (m == 0) {
        return r;
    }
    r.y_rows = Mat(m, hidden.cols);
    for (int i = 0; i < m; ++i) {
        std::memcpy(r.y_rows.row(i), hidden.row(r.positions[static_cast<size_t>(i)]),
                    static_cast<size_t>(hidden.cols) * sizeof(double));
    }
    r.logits = Mat(m, state.cfg.vocab_size);
    matmul_nt(r.logits, r.y_rows, state.tok_emb);
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const double* row = r.logits.row(i);
        double max_v = row[0];
        for (int v = 1; v < r.logits.cols; ++v) {
            max_v = std::max(max_v, row[v]);
        }
        double lse = 0.0;
        for (int v = 0; v < r.logits.cols; ++v) {
            lse += std::exp(row[v] - max_v);
        }
        lse = std::log(lse) + max_v;
        total += lse - row[targets[static_cast<size_t>(r.positions[static_cast<size_t>(i)])]];
    }
    r.loss = total / m;
    return r;
}

double candidate_ce(const Vec& logits, const std::vector<int>& candidates, int gold,
                    Vec* dlogits, double scale) {
    double max_v = -1e300;
    for (int c : candidates) {
        max_v = std::max(max_v, logits[static_cast<size_t>(c)]);
    }
    double total = 0.0;
    for (int c : candidates) {
        total += std::exp(logits[static_cast<size_t>(c)] - max_v);
    }
    const double lse = std::log(total) + max_v;
    const double loss = lse - logits[static_cast<size_t>(gold)];
    if (dlogits != nullptr) {
        for (int c : candidates) {
            const double p = std::exp(logits[static_cast<size_t>(c)] - lse);
            (*dlogits)[static_cast<size_t>(c)] += (p - (c == gold ? 1.0 : 0.0)) * scale;
        }
    }
    return loss;
}

}  // namespace

double mlm_loss(const Mat& hidden, const std::vector<int>& targets, const ModelState& state) {
    MlmRows r = mlm_rows(hidden, targets, state);
    if (r.positions.empty()) {
        std::cerr << "warning: mlm_loss with zero masked positions\n";
        return 0.0;
    }
    return r.loss;
}

void qa_logits(const Mat& hidden, const ModelState& state, Vec& start_logits, Vec& end_logits) {
    start_logits.assign(static_cast<size_t>(hidden.rows), 0.0);
    end_logits.assign(static_cast<size_t>(hidden.rows), 0.0);
    for (int i = 0; i < hidden.rows; ++i) {
        const double* y = hidden.row(i);
        double s = 0.0;
        double e = 0.0;
        for (int j = 0; j < hidden.cols; ++j) {
            s += y[j] * state.qa_start_w[static_cast<size_t>(j)];
            e += y[j] * state.qa_end_w[static_cast<size_t>(j)];
        }
        start_logits[static_cast<size_t>(i)] = s;
        end_logits[static_cast<size_t>(i)] = e;
    }
}

double qa_loss(const Vec& start_logits, const Vec& end_logits,
               const std::vector<int>& candidates, int gold_start, int gold_end) {
    require(!candidates.empty(), "qa_loss: empty candidate set");
    const bool s_ok = std::find(candidates.begin(), candidates.end(), gold_start) !=
                      candidates.end();
    const bool e_ok = std::find(candidates.begin(), candidates.end(), gold_end) !=
                      candidates.end();
    require(s_ok && e_ok, "qa_loss: gold span outside candidate positions");
    const double ls = candidate_ce(start_logits, candidates, gold_start, nullptr, 0.0);
    const double le = candidate_ce(end_logits, candidates, gold_end, nullptr, 0.0);
    return 0.5 * (ls + le);
}

SpanPred predict_span(const Vec& start_logits, const Vec& end_logits, int passage_begin,
                      int passage_end, int cls_pos, int max_answer_len) {
    const int n = static_cast<int>(start_logits.size());
    SpanPred pred;
    pred.null_score = start_logits[static_cast<size_t>(cls_pos)] +
                      end_logits[static_cast<size_t>(cls_pos)];
    passage_begin = std::max(passage_begin, 0);
    passage_end = std::min(passage_end, n);
    pred.start = cls_pos;
    pred.end = cls_pos;
    pred.score = pred.null_score;
    for (int i = passage_begin; i < passage_end; ++i) {
        const int j_limit = std::min(passage_end, i + max_answer_len);
        for (int j = i; j < j_limit; ++j) {
            const double score =
                start_logits[static_cast<size_t>(i)] + end_logits[static_cast<size_t>(j)];
            if (!pred.has_span || score > pred.score) {
                pred.has_span = true;
                pred.start = i;
                pred.end = j;
                pred.score = score;
            }
        }
    }
    return pred;
}

double mlm_value_and_grad(const ModelState& state, const std::vector<int>& ids,
                          const std::vector<uint8_t>& attention_mask,
                          const std::vector<int>& targets, ModelState* grads,
                          double loss_scale, Rng* dropout_rng) {
    ForwardCache cache;
    const Mat& y = forward(state, ids, attention_mask, cache, dropout_rng != nullptr,
                           dropout_rng);
    MlmRows r = mlm_rows(y, targets, state);
    if (r.positions.empty()) {
        std::cerr << "warning: mlm loss with zero masked positions\n";
        return 0.0;
    }
    require(std::isfinite(r.loss), "non-finite MLM loss");
    if (grads == nullptr) {
        return r.loss;
    }
    const int m = static_cast<int>(r.positions.size());
    Mat dlogits(m, state.cfg.vocab_size);
    for (int i = 0; i < m; ++i) {
        const double* row = r.logits.row(i);
        double max_v = row[0];
        for (int v = 1; v < dlogits.cols; ++v) {
            max_v = std::max(max_v, row[v]);
        }
        double total = 0.0;
        for (int v = 0; v < dlogits.cols; ++v) {
            total += std::exp(row[v] - max_v);
        }
        const double inv = 1.0 / total;
        double* drow = dlogits.row(i);
        const int gold = targets[static_cast<size_t>(r.positions[static_cast<size_t>(i)])];
        for (int v = 0; v < dlogits.cols; ++v) {
            drow[v] = std::exp(row[v] - max_v) * inv * loss_scale / m;
        }
        drow[gold] -= loss_scale / m;
    }
    Mat dy_rows(m, state.cfg.hidden);
    matmul(dy_rows, dlogits, state.tok_emb);
    matmul_tn(grads->tok_emb, dlogits, r.y_rows, /*accumulate=*/true);
    Mat dY(cache.s_eff, state.cfg.hidden);
    for (int i = 0; i < m; ++i) {
        std::memcpy(dY.row(r.positions[static_cast<size_t>(i)]), dy_rows.row(i),
                    static_cast<size_t>(state.cfg.hidden) * sizeof(double));
    }
    encoder_backward(state, cache, dY, *grads);
    return r.loss;
}

double qa_value_and_grad(const ModelState& state, const std::vector<int>& ids,
                         const std::vector<uint8_t>& attention_mask,
                         const std::vector<int>& candidates, int gold_start, int gold_end,
                         ModelState* grads, double loss_scale, Rng* dropout_rng) {
    ForwardCache cache;
    const Mat& y = forward(state, ids, attention_mask, cache, dropout_rng != nullptr,
                           dropout_rng);
    for (int c : candidates) {
        require(c >= 0 && c < cache.s_eff, "qa candidate outside attended positions");
    }
    Vec start_logits, end_logits;
    qa_logits(y, state, start_logits, end_logits);
    const double loss = qa_loss(start_logits, end_logits, candidates, gold_start, gold_end);
    require(std::isfinite(loss), "non-finite QA loss");
    if (grads == nullptr) {
        return loss;
    }
    Vec dstart(start_logits.size(), 0.0);
    Vec dend(end_logits.size(), 0.0);
    candidate_ce(start_logits, candidates, gold_start, &dstart, 0.5 * loss_scale);
    candidate_ce(end_logits, candidates, gold_end, &dend, 0.5 * loss_scale);
    Mat dY(cache.s_eff, state.cfg.hidden);
    for (int i = 0; i < cache.s_eff; ++i) {
        const double ds = dstart[static_cast<size_t>(i)];
        const double de = dend[static_cast<size_t>(i)];
        const double* yrow = y.row(i);
        double* drow = dY.row(i);
        for (int j = 0; j < state.cfg.hidden; ++j) {
            drow[j] = ds * state.qa_start_w[static_cast<size_t>(j)] +
                      de * state.qa_end_w[static_cast<size_t>(j)];
            grads->qa_start_w[static_cast<size_t>(j)] += ds * yrow[j];
            grads->qa_end_w[static_cast<size_t>(j)] += de * yrow[j];
        }
    }
    encoder_backward(state, cache, dY, *grads);
    return loss;
}

namespace {

constexpr char kMagic[8] = {'T', 'E', 'K', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    auto put_u32 = [&out](uint32_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    auto put_i32 = [&out](int32_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    put_u32(kCheckpointVersion);
    put_i32(state.cfg.layers);
    put_i32(state.cfg.heads);
    put_i32(state.cfg.hidden);
    put_i32(state.cfg.ffn);
    put_i32(state.cfg.max_positions);
    put_i32(state.cfg.vocab_size);
    const float dropout = static_cast<float>(state.cfg.dropout);
    out.write(reinterpret_cast<const char*>(&dropout), sizeof(dropout));
    std::vector<float> buf;
    for (auto& ref : const_cast<ModelState&>(state).param_refs()) {
        buf.resize(ref.n);
        for (size_t i = 0; i < ref.n; ++i) {
            buf[i] = static_cast<float>(ref.data[i]);
        }
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    require(out.good(), "checkpoint write failed: " + path);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    require(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
            "not a checkpoint file: " + path);
    auto get_u32 = [&in]() {
        uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        return v;
    };
    auto get_i32 = [&in]() {
        int32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        return v;
    };
    require(get_u32() == kCheckpointVersion, "unsupported checkpoint version: " + path);
    EncoderConfig cfg;
    cfg.layers = get_i32();
    cfg.heads = get_i32();
    cfg.hidden = get_i32();
    cfg.ffn = get_i32();
    cfg.max_positions = get_i32();
    cfg.vocab_size = get_i32();
    float dropout = 0.0F;
    in.read(reinterpret_cast<char*>(&dropout), sizeof(dropout));
    cfg.dropout = dropout;
    cfg.validate();
    ModelState state = ModelState::init(cfg, 0);
    std::vector<float> buf;
    for (auto& ref : state.param_refs()) {
        buf.resize(ref.n);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        require(in.good(), "checkpoint truncated: " + path);
        for (size_t i = 0; i < ref.n; ++i) {
            require(std::isfinite(buf[i]), "non-finite parameter in checkpoint: " + path);
            ref.data[i] = buf[i];
        }
    }
    in.peek();
    require(in.eof(), "trailing bytes in checkpoint: " + path);
    return state;
}

std::vector<uint8_t> attention_mask_for(const std::vector<int>& ids) {
    std::vector<uint8_t> mask(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        mask[i] = ids[i] == kPadId ? 0 : 1;
    }
    return mask;
}

}  // namespace tek
