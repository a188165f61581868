#include "tek/metrics.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tek/common.hpp"

namespace tek {

std::string em_normalize(const std::string& s) {
    // lowercase + strip ASCII punctuation, then drop articles, then collapse
    std::string stripped;
    stripped.reserve(s.size());
    for (unsigned char c : s) {
        if (c < 128 && ((c >= '!' && c <= '/') || (c >= ':' && c <= '@') ||
                        (c >= '[' && c <= '`') || (c >= '{' && c <= '~'))) {
            continue;
        }
        if (c >= 'A' && c <= 'Z') {
            stripped.push_back(static_cast<char>(c + 32));
        } else {
            stripped.push_back(static_cast<char>(c));
        }
    }
    std::istringstream in(stripped);
    std::string word;
    std::string out;
    while (in >> word) {
        if (word == "a" || word == "an" || word == "the") {
            continue;
        }
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += word;
    }
    return out;
}

namespace {

std::vector<std::string> norm_tokens(const std::string& s) {
    std::istringstream in(em_normalize(s));
    std::vector<std::string> out;
    std::string word;
    while (in >> word) {
        out.push_back(word);
    }
    return out;
}

double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() && gold.empty()) {
        return 1.0;
    }
    if (pred.empty() || gold.empty()) {
        return 0.0;
    }
    std::map<std::string, int> gold_counts;
    for (const auto& t : gold) {
        ++gold_counts[t];
    }
    int common = 0;
    for (const auto& t : pred) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) {
        return 0.0;
    }
    const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

EmF1 em_f1(const std::string& prediction, const std::vector<std::string>& gold_answers) {
    require(!gold_answers.empty(), "em_f1: empty gold answer list");
    const std::string pred_norm = em_normalize(prediction);
    const std::vector<std::string> pred_toks = norm_tokens(prediction);
    EmF1 result;
    for (const auto& gold : gold_answers) {
        if (em_normalize(gold) == pred_norm) {
            result.em = 1;
        }
        result.f1 = std::max(result.f1, token_f1(pred_toks, norm_tokens(gold)));
    }
    return result;
}

WindowPrediction aggregate_windows(const std::vector<WindowPrediction>& candidates) {
    require(!candidates.empty(), "aggregate_windows: no candidates");
    const WindowPrediction* best = &candidates[0];
    for (const auto& c : candidates) {
        if (c.score > best->score ||
            (c.score == best->score &&
             (c.window_index < best->window_index ||
              (c.window_index == best->window_index && c.start < best->start)))) {
            best = &c;
        }
    }
    return *best;
}

EvalReport score_predictions(
    const std::vector<std::pair<std::string, std::string>>& qid_predictions,
    const std::vector<std::pair<std::string, std::vector<std::string>>>& qid_golds) {
    std::map<std::string, const std::vector<std::string>*> golds;
    for (const auto& [qid, answers] : qid_golds) {
        require(golds.emplace(qid, &answers).second, "duplicate qid: " + qid);
    }
    EvalReport report;
    double em_sum = 0.0;
    double f1_sum = 0.0;
    for (const auto& [qid, pred] : qid_predictions) {
        auto it = golds.find(qid);
        require(it != golds.end(), "prediction for unknown qid: " + qid);
        const EmF1 score = em_f1(pred, *it->second);
        em_sum += score.em;
        f1_sum += score.f1;
        report.per_example.push_back(PerExampleScore{qid, score.em, score.f1, pred});
    }
    report.n = qid_predictions.size();
    if (report.n > 0) {
        report.em = 100.0 * em_sum / static_cast<double>(report.n);
        report.f1 = 100.0 * f1_sum / static_cast<double>(report.n);
    }
    return report;
}

std::string eval_report_json(const EvalReport& report) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& ex : report.per_example) {
        per.push_back({{"qid", ex.qid}, {"em", ex.em}, {"f1", ex.f1}, {"pred", ex.prediction}});
    }
    nlohmann::json root = {
        {"em", report.em}, {"f1", report.f1}, {"n", report.n}, {"per_example", per}};
    return root.dump(2);
}

}  // namespace tek
