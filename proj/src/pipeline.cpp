#include "tek/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tek/common.hpp"
#include "tek/utf8.hpp"

namespace tek {

using nlohmann::json;

std::vector<QARecord> load_qa_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open dataset file: " + path);
    std::vector<QARecord> records;
    std::unordered_set<std::string> qids;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail("dataset line " + std::to_string(line_no) + ": invalid JSON (" + e.what() +
                 ")");
        }
        QARecord r;
        try {
            r.qid = j.at("qid").get<std::string>();
            r.question = j.at("question").get<std::string>();
            r.context = j.at("context").get<std::string>();
            for (const auto& a : j.at("answers")) {
                r.answers.push_back(a.get<std::string>());
            }
            if (j.contains("passage_ref")) {
                std::vector<SentenceRef> refs;
                for (const auto& jr : j.at("passage_ref")) {
                    refs.push_back(SentenceRef{jr.at("page_id").get<std::string>(),
                                               jr.at("sentence_index").get<int>()});
                }
                r.passage_ref = std::move(refs);
            }
        } catch (const json::exception& e) {
            fail("dataset line " + std::to_string(line_no) + ": bad record (" + e.what() + ")");
        }
        require(qids.insert(r.qid).second,
                "dataset line " + std::to_string(line_no) + ": duplicate qid '" + r.qid + "'");
        records.push_back(std::move(r));
    }
    return records;
}

std::string qa_record_to_json(const QARecord& record) {
    json j = {{"qid", record.qid},
              {"question", record.question},
              {"context", record.context},
              {"answers", record.answers}};
    if (record.passage_ref.has_value()) {
        json refs = json::array();
        for (const auto& r : *record.passage_ref) {
            refs.push_back({{"page_id", r.page_id}, {"sentence_index", r.sentence_index}});
        }
        j["passage_ref"] = refs;
    }
    return j.dump();
}

std::vector<EntityMention> link_qa_mentions(const QARecord& record, const CorpusIndex& index) {
    std::vector<EntityMention> mentions;
    const int q_len = static_cast<int>(utf8::length(record.question));
    for (const auto& m : index.link_entities(record.question)) {
        mentions.push_back(EntityMention{m.start, m.target});
    }
    for (const auto& m : index.link_entities(record.context)) {
        mentions.push_back(EntityMention{q_len + 1 + m.start, m.target});
    }
    return mentions;
}

std::vector<QAExample> build_qa_examples(const std::vector<QARecord>& records,
                                         const CorpusTokens& tokens, const PackConfig& cfg,
                                         bool with_labels) {
    cfg.validate();
    const Vocab& vocab = tokens.vocab();
    std::vector<std::vector<QAExample>> per_record(records.size());
#pragma omp parallel for schedule(dynamic)
    for (long ri = 0; ri < static_cast<long>(records.size()); ++ri) {
        const QARecord& record = records[static_cast<size_t>(ri)];
        const TokenizedText q = encode(record.question, vocab);
        const TokenizedText doc = encode(record.context, vocab);
        RetrievalQuery query;
        query.mode = QueryMode::kQa;
        query.query_tokens = q.ids;
        query.mentions = link_qa_mentions(record, tokens.index());
        const std::vector<Background> backgrounds =
            rank_backgrounds(query, tokens, record.passage_ref);
        const std::vector<Window> windows = sliding_windows(doc.ids, q.ids.size(), cfg);
        for (size_t w = 0; w < windows.size(); ++w) {
            QAExample ex;
            ex.packed = pack_rc(q.ids, windows[w].tokens, backgrounds, cfg);
            ex.packed.window_start = windows[w].start;
            ex.qid = record.qid;
            ex.doc_id = record.qid;
            ex.window_index = static_cast<int>(w);
            if (with_labels) {
                const auto [s, e] = label_answer(ex.packed, record.answers, vocab);
                ex.answer_start = s;
                ex.answer_end = e;
            }
            per_record[static_cast<size_t>(ri)].push_back(std::move(ex));
        }
    }
    std::vector<QAExample> out;
    for (auto& v : per_record) {
        for (auto& ex : v) {
            out.push_back(std::move(ex));
        }
    }
    return out;
}

std::vector<PackedInput> build_pretrain_packed(const CorpusTokens& tokens,
                                               const PackConfig& cfg) {
    cfg.validate();
    require(cfg.n_c > 2, "n_c leaves no room for a block");
    const std::vector<PretrainBlock> blocks =
        make_pretrain_blocks(tokens, static_cast<size_t>(cfg.n_c - 2));
    std::vector<PackedInput> out(blocks.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(blocks.size()); ++i) {
        const PretrainBackground bg = retrieve_pretrain_background(
            blocks[static_cast<size_t>(i)], tokens, static_cast<size_t>(cfg.n_b));
        out[static_cast<size_t>(i)] =
            pack_pretrain(blocks[static_cast<size_t>(i)].tokens, bg, cfg);
    }
    return out;
}

std::vector<MaskedExample> mask_packed(const std::vector<PackedInput>& packed,
                                       const MaskConfig& cfg, const Vocab& vocab) {
    std::vector<MaskedExample> out(packed.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(packed.size()); ++i) {
        out[static_cast<size_t>(i)] = mask_example(packed[static_cast<size_t>(i)].ids, cfg,
                                                   static_cast<uint64_t>(i), vocab);
    }
    return out;
}

std::vector<Prediction> predict_examples(const ModelState& state,
                                         const std::vector<QAExample>& examples,
                                         const Vocab& vocab, int max_answer_len) {
    // group windows by qid, preserving first-appearance order
    std::vector<std::string> qid_order;
    std::map<std::string, std::vector<const QAExample*>> groups;
    for (const auto& ex : examples) {
        auto [it, inserted] = groups.try_emplace(ex.qid);
        if (inserted) {
            qid_order.push_back(ex.qid);
        }
        it->second.push_back(&ex);
    }
    std::vector<Prediction> predictions(qid_order.size());
#pragma omp parallel for schedule(dynamic)
    for (long gi = 0; gi < static_cast<long>(qid_order.size()); ++gi) {
        const auto& windows = groups.find(qid_order[static_cast<size_t>(gi)])->second;
        std::vector<WindowPrediction> candidates;
        std::vector<const QAExample*> by_window = windows;
        std::sort(by_window.begin(), by_window.end(),
                  [](const QAExample* a, const QAExample* b) {
                      return a->window_index < b->window_index;
                  });
        for (const QAExample* ex : by_window) {
            ForwardCache cache;
            const auto mask = attention_mask_for(ex->packed.ids);
            const Mat& y = forward(state, ex->packed.ids, mask, cache);
            Vec start_logits, end_logits;
            qa_logits(y, state, start_logits, end_logits);
            const SpanPred span =
                predict_span(start_logits, end_logits, ex->packed.regions.passage.first,
                             std::min(ex->packed.regions.passage.second, cache.s_eff),
                             ex->packed.regions.cls_pos, max_answer_len);
            if (span.has_span) {
                candidates.push_back(WindowPrediction{ex->window_index, span.start, span.end,
                                                      span.score, false});
            }
            candidates.push_back(
                WindowPrediction{ex->window_index, 0, 0, span.null_score, true});
        }
        const WindowPrediction best = aggregate_windows(candidates);
        Prediction pred;
        pred.qid = qid_order[static_cast<size_t>(gi)];
        pred.score = best.score;
        pred.window_index = best.window_index;
        pred.start = best.start;
        pred.end = best.end;
        if (!best.is_null) {
            const QAExample* ex = nullptr;
            for (const QAExample* w : by_window) {
                if (w->window_index == best.window_index) {
                    ex = w;
                    break;
                }
            }
            std::vector<int> span_ids(ex->packed.ids.begin() + best.start,
                                      ex->packed.ids.begin() + best.end + 1);
            pred.answer_text = decode(span_ids, vocab);
        }
        predictions[static_cast<size_t>(gi)] = std::move(pred);
    }
    return predictions;
}

EvalOutput evaluate_dataset(const ModelState& state, const std::vector<QARecord>& records,
                            const CorpusTokens& tokens, const PackConfig& cfg,
                            int max_answer_len) {
    const std::vector<QAExample> examples =
        build_qa_examples(records, tokens, cfg, /*with_labels=*/false);
    EvalOutput out;
    out.predictions = predict_examples(state, examples, tokens.vocab(), max_answer_len);
    std::vector<std::pair<std::string, std::string>> preds;
    for (const auto& p : out.predictions) {
        preds.emplace_back(p.qid, p.answer_text);
    }
    std::vector<std::pair<std::string, std::vector<std::string>>> golds;
    for (const auto& r : records) {
        golds.emplace_back(r.qid, r.answers);
    }
    out.report = score_predictions(preds, golds);
    return out;
}

std::vector<AblateRow> run_ablation(const ModelState& state,
                                    const std::vector<QARecord>& records,
                                    const CorpusTokens& tokens, int stride) {
    std::vector<AblateRow> rows;
    for (const auto& [n_c, n_b] : ablation_configs()) {
        PackConfig cfg;
        cfg.n_c = n_c;
        cfg.n_b = n_b;
        cfg.total_len = n_c + n_b;
        cfg.stride = std::min(stride, n_c);
        const EvalOutput out = evaluate_dataset(state, records, tokens, cfg);
        rows.push_back(AblateRow{n_c, n_b, out.report.em, out.report.f1, out.report.n});
    }
    return rows;
}

namespace {

json regions_to_json(const Regions& r) {
    json backgrounds = json::array();
    for (const auto& [b, e] : r.backgrounds) {
        backgrounds.push_back({b, e});
    }
    return {{"cls", r.cls_pos},
            {"question", {r.question.first, r.question.second}},
            {"passage", {r.passage.first, r.passage.second}},
            {"backgrounds", backgrounds},
            {"context_len", r.context_len},
            {"fallback", r.fallback_background}};
}

Regions regions_from_json(const json& j) {
    Regions r;
    r.cls_pos = j.at("cls").get<int>();
    r.question = {j.at("question")[0].get<int>(), j.at("question")[1].get<int>()};
    r.passage = {j.at("passage")[0].get<int>(), j.at("passage")[1].get<int>()};
    for (const auto& jb : j.at("backgrounds")) {
        r.backgrounds.emplace_back(jb[0].get<int>(), jb[1].get<int>());
    }
    r.context_len = j.at("context_len").get<int>();
    r.fallback_background = j.at("fallback").get<bool>();
    return r;
}

}  // namespace

std::string packed_to_json(const PackedInput& packed) {
    json j = {{"ids", packed.ids},
              {"regions", regions_to_json(packed.regions)},
              {"window_start", packed.window_start}};
    return j.dump();
}

PackedInput packed_from_json(const std::string& line) {
    const json j = json::parse(line);
    PackedInput p;
    p.ids = j.at("ids").get<std::vector<int>>();
    p.regions = regions_from_json(j.at("regions"));
    p.window_start = j.at("window_start").get<int>();
    return p;
}

std::string qa_example_to_json(const QAExample& example) {
    json j = {{"qid", example.qid},
              {"doc_id", example.doc_id},
              {"window_index", example.window_index},
              {"window_start", example.packed.window_start},
              {"ids", example.packed.ids},
              {"regions", regions_to_json(example.packed.regions)},
              {"answer_start", example.answer_start},
              {"answer_end", example.answer_end}};
    return j.dump();
}

QAExample qa_example_from_json(const std::string& line) {
    const json j = json::parse(line);
    QAExample ex;
    ex.qid = j.at("qid").get<std::string>();
    ex.doc_id = j.at("doc_id").get<std::string>();
    ex.window_index = j.at("window_index").get<int>();
    ex.packed.window_start = j.at("window_start").get<int>();
    ex.packed.ids = j.at("ids").get<std::vector<int>>();
    ex.packed.regions = regions_from_json(j.at("regions"));
    ex.answer_start = j.at("answer_start").get<int>();
    ex.answer_end = j.at("answer_end").get<int>();
    return ex;
}

std::string masked_to_json(const MaskedExample& masked) {
    json j = {{"input_ids", masked.input_ids},
              {"target_ids", masked.target_ids},
              {"mask_positions", masked.mask_positions}};
    return j.dump();
}

MaskedExample masked_from_json(const std::string& line) {
    const json j = json::parse(line);
    MaskedExample m;
    m.input_ids = j.at("input_ids").get<std::vector<int>>();
    m.target_ids = j.at("target_ids").get<std::vector<int>>();
    m.mask_positions = j.at("mask_positions").get<std::vector<int>>();
    return m;
}

std::string prediction_to_json(const Prediction& pred) {
    json j = {{"qid", pred.qid},     {"answer", pred.answer_text},
              {"score", pred.score}, {"window_index", pred.window_index},
              {"start", pred.start}, {"end", pred.end}};
    return j.dump();
}

}  // namespace tek
