#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tek/masking.hpp"
#include "tek/metrics.hpp"
#include "tek/model.hpp"
#include "tek/packer.hpp"
#include "tek/retrieval.hpp"

namespace tek {

// MRQA-style record; passage_ref optionally names the corpus sentences the
// context was built from so retrieval can drop verbatim duplicates.
struct QARecord {
    std::string qid;
    std::string question;
    std::string context;
    std::vector<std::string> answers;
    std::optional<std::vector<SentenceRef>> passage_ref;
};

std::vector<QARecord> load_qa_jsonl(const std::string& path);
std::string qa_record_to_json(const QARecord& record);

// Linked mentions of a question + context pair: question mentions order
// before context mentions.
std::vector<EntityMention> link_qa_mentions(const QARecord& record, const CorpusIndex& index);

// Retrieval + sliding windows + packing (+ distant-supervision labels when
// requested) for every record. Window order: record order, then window index.
std::vector<QAExample> build_qa_examples(const std::vector<QARecord>& records,
                                         const CorpusTokens& tokens, const PackConfig& cfg,
                                         bool with_labels = true);

std::vector<PackedInput> build_pretrain_packed(const CorpusTokens& tokens,
                                               const PackConfig& cfg);

std::vector<MaskedExample> mask_packed(const std::vector<PackedInput>& packed,
                                       const MaskConfig& cfg, const Vocab& vocab);

// Per-window spans aggregated to one prediction per qid (max start+end
// score; the null candidate competes).
std::vector<Prediction> predict_examples(const ModelState& state,
                                         const std::vector<QAExample>& examples,
                                         const Vocab& vocab, int max_answer_len = 30);

struct EvalOutput {
    EvalReport report;
    std::vector<Prediction> predictions;
};

EvalOutput evaluate_dataset(const ModelState& state, const std::vector<QARecord>& records,
                            const CorpusTokens& tokens, const PackConfig& cfg,
                            int max_answer_len = 30);

struct AblateRow {
    int n_c = 0;
    int n_b = 0;
    double em = 0.0;
    double f1 = 0.0;
    size_t n = 0;
};

// The context/background trade-off sweep: packs and evaluates one fixed model
// under each (n_c, n_b) configuration.
std::vector<AblateRow> run_ablation(const ModelState& state,
                                    const std::vector<QARecord>& records,
                                    const CorpusTokens& tokens, int stride);

inline const std::vector<std::pair<int, int>>& ablation_configs() {
    static const std::vector<std::pair<int, int>> configs = {
        {512, 0}, {384, 0}, {384, 128}, {256, 256}, {128, 384}};
    return configs;
}

// JSONL codecs shared by the CLI and the tests.
std::string qa_example_to_json(const QAExample& example);
QAExample qa_example_from_json(const std::string& line);
std::string packed_to_json(const PackedInput& packed);
PackedInput packed_from_json(const std::string& line);
std::string masked_to_json(const MaskedExample& masked);
MaskedExample masked_from_json(const std::string& line);
std::string prediction_to_json(const Prediction& pred);

}  // namespace tek
