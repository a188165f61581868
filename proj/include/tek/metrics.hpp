#pragma once

#include <string>
#include <utility>
#include <vector>

namespace tek {

// SQuAD-style answer normalization: lowercase, drop ASCII punctuation, drop
// the articles a/an/the, collapse whitespace.
std::string em_normalize(const std::string& s);

struct EmF1 {
    int em = 0;
    double f1 = 0.0;
};

// EM is exact normalized match to any gold; F1 is the best token-level
// precision/recall harmonic mean over golds. Empty gold list is an error.
EmF1 em_f1(const std::string& prediction, const std::vector<std::string>& gold_answers);

struct WindowPrediction {
    int window_index = 0;
    int start = 0;
    int end = 0;        // inclusive; (0,0) with is_null marks the no-answer candidate
    double score = 0.0;
    bool is_null = false;
};

// Maximum start+end score across windows; ties go to the earliest window,
// then the earliest start.
WindowPrediction aggregate_windows(const std::vector<WindowPrediction>& candidates);

struct Prediction {
    std::string qid;
    std::string answer_text;  // empty for null
    double score = 0.0;
    int window_index = 0;
    int start = 0;
    int end = 0;
};

struct PerExampleScore {
    std::string qid;
    int em = 0;
    double f1 = 0.0;
    std::string prediction;
};

struct EvalReport {
    double em = 0.0;  // percentages
    double f1 = 0.0;
    size_t n = 0;
    std::vector<PerExampleScore> per_example;
};

EvalReport score_predictions(
    const std::vector<std::pair<std::string, std::string>>& qid_predictions,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& qid_golds);

std::string eval_report_json(const EvalReport& report);

}  // namespace tek
