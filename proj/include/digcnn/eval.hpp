#pragma once

#include <string>
#include <vector>

#include "digcnn/corpus.hpp"

namespace digcnn {

struct SentenceScore {
    std::size_t counted = 0;
    std::size_t correct_heads = 0;
    std::size_t correct_labeled = 0;
};

struct EvalReport {
    double uas = 0.0;  // percent
    double las = 0.0;  // percent
    std::size_t counted_tokens = 0;
    std::size_t total_tokens = 0;
    std::size_t correct_heads = 0;
    std::size_t correct_labeled = 0;
    PunctConvention convention = PunctConvention::Ud;
    bool include_punct = false;
    std::vector<SentenceScore> per_sentence;
};

/// Attachment scores of pred against gold. Punctuation (per convention) is
/// skipped unless include_punct. A gold label of -1 never matches.
inline EvalReport evaluate(const std::vector<TokenSentence>& gold, const std::vector<ParseTree>& pred,
                           PunctConvention convention, bool include_punct = false, bool per_sentence = false) {
    if (gold.size() != pred.size()) {
        throw ContractViolation("evaluate: " + std::to_string(gold.size()) + " gold sentences but " +
                                std::to_string(pred.size()) + " predictions");
    }
    EvalReport report;
    report.convention = convention;
    report.include_punct = include_punct;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const TokenSentence& g = gold[i];
        const ParseTree& p = pred[i];
        if (!g.has_gold()) throw ContractViolation("evaluate: gold sentence " + std::to_string(i) + " has no heads");
        if (p.heads.size() != g.size() || p.labels.size() != g.size()) {
            throw ContractViolation("evaluate: sentence " + std::to_string(i) + " has " + std::to_string(g.num_words()) +
                                    " gold tokens but the prediction has " +
                                    std::to_string(p.heads.empty() ? 0 : p.heads.size() - 1));
        }
        SentenceScore s;
        for (std::size_t t = 1; t < g.size(); ++t) {
            ++report.total_tokens;
            if (!include_punct && is_eval_punct(g, t, convention)) continue;
            ++s.counted;
            if (p.heads[t] == g.gold_heads[t]) {
                ++s.correct_heads;
                if (g.gold_labels[t] >= 0 && p.labels[t] == g.gold_labels[t]) ++s.correct_labeled;
            }
        }
        report.counted_tokens += s.counted;
        report.correct_heads += s.correct_heads;
        report.correct_labeled += s.correct_labeled;
        if (per_sentence) report.per_sentence.push_back(s);
    }
    if (report.counted_tokens > 0) {
        const auto counted = static_cast<double>(report.counted_tokens);
        report.uas = 100.0 * static_cast<double>(report.correct_heads) / counted;
        report.las = 100.0 * static_cast<double>(report.correct_labeled) / counted;
    }
    return report;
}

/// The annotation carried by a parsed file, as a ParseTree. Labels are
/// resolved through vocab; unknown labels become -1.
inline ParseTree tree_from_annotation(const TokenSentence& s, const Vocabulary& vocab) {
    if (!s.has_gold()) throw DataError("sentence has no HEAD/DEPREL annotation");
    ParseTree t;
    t.heads = s.gold_heads;
    t.labels.assign(s.size(), -1);
    for (std::size_t p = 1; p < s.size(); ++p) {
        auto id = vocab.label_id(s.gold_relations[p]);
        t.labels[p] = id ? static_cast<int>(*id) : -1;
    }
    return t;
}

}  // namespace digcnn
