#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "digcnn/error.hpp"

namespace digcnn {

enum class ReadMode { Train, Parse };
enum class PunctConvention { Ptb, Ud };

inline PunctConvention parse_convention(std::string_view s) {
    if (s == "ptb") return PunctConvention::Ptb;
    if (s == "ud") return PunctConvention::Ud;
    throw ConfigError("unknown punctuation convention '" + std::string(s) + "' (expected ptb or ud)");
}

inline const char* to_string(PunctConvention c) { return c == PunctConvention::Ptb ? "ptb" : "ud"; }

/// A CoNLL line that is not a token row (comment, multiword range, empty node),
/// kept so the writer can reproduce the block. before_token is the 1-based
/// position of the token row it precedes (T+1 for trailing lines).
struct PassthroughLine {
    std::size_t before_token = 1;
    std::string text;
};

/// One sentence. Position 0 is the dummy root; every per-token array has N
/// entries. Gold heads/labels are empty when the input carried no annotation.
struct TokenSentence {
    std::vector<std::string> forms;
    std::vector<std::string> upos;
    std::vector<std::string> xpos;
    std::vector<std::size_t> word_ids;
    std::vector<std::size_t> pos_ids;
    std::vector<int> gold_heads;            // gold_heads[0] == -1
    std::vector<int> gold_labels;           // -1 for the root and for labels unknown to the vocabulary
    std::vector<std::string> gold_relations;  // raw DEPREL strings, "" for the root
    std::vector<std::vector<std::string>> columns;  // original CoNLL columns; columns[0] is empty
    std::vector<PassthroughLine> passthrough;

    std::size_t size() const noexcept { return forms.size(); }
    std::size_t num_words() const noexcept { return forms.empty() ? 0 : forms.size() - 1; }
    bool has_gold() const noexcept { return !gold_heads.empty(); }

    /// POS string used for the model: UPOS when present, XPOS otherwise.
    const std::string& model_pos(std::size_t p) const { return upos[p] != "_" ? upos[p] : xpos[p]; }
};

inline std::string lowercase(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

/// Index maps for words, POS tags, and dependency labels. Words are looked up
/// lowercased; unknown words map to unknown_word.
class Vocabulary {
public:
    static constexpr std::size_t root_word = 0;
    static constexpr std::size_t unknown_word = 1;
    static constexpr std::size_t root_pos = 0;
    static constexpr std::size_t unknown_pos = 1;
    static constexpr const char* root_symbol = "<root>";
    static constexpr const char* unknown_symbol = "<unk>";
    static constexpr int format_version = 1;

    Vocabulary() {
        words_ = {root_symbol, unknown_symbol};
        pos_ = {root_symbol, unknown_symbol};
    }

    std::size_t add_word(std::string_view form) { return add(words_, word_index_, lowercase(form)); }
    std::size_t add_pos(std::string_view tag) { return add(pos_, pos_index_, std::string(tag)); }
    std::size_t add_label(std::string_view label) { return add(labels_, label_index_, std::string(label)); }

    std::size_t word_id(std::string_view form) const {
        auto it = word_index_.find(lowercase(form));
        return it == word_index_.end() ? unknown_word : it->second;
    }
    std::size_t pos_id(std::string_view tag) const {
        auto it = pos_index_.find(std::string(tag));
        return it == pos_index_.end() ? unknown_pos : it->second;
    }
    std::optional<std::size_t> label_id(std::string_view label) const {
        auto it = label_index_.find(std::string(label));
        if (it == label_index_.end()) return std::nullopt;
        return it->second;
    }

    const std::vector<std::string>& words() const noexcept { return words_; }
    const std::vector<std::string>& pos_tags() const noexcept { return pos_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::size_t num_words() const noexcept { return words_.size(); }
    std::size_t num_pos() const noexcept { return pos_.size(); }
    std::size_t num_labels() const noexcept { return labels_.size(); }

    /// Fills word_ids, pos_ids and gold_labels from the string fields.
    void assign_ids(TokenSentence& s) const {
        s.word_ids.assign(s.size(), 0);
        s.pos_ids.assign(s.size(), 0);
        s.word_ids[0] = root_word;
        s.pos_ids[0] = root_pos;
        for (std::size_t p = 1; p < s.size(); ++p) {
            s.word_ids[p] = word_id(s.forms[p]);
            s.pos_ids[p] = pos_id(s.model_pos(p));
        }
        if (s.has_gold()) {
            s.gold_labels.assign(s.size(), -1);
            for (std::size_t p = 1; p < s.size(); ++p) {
                auto id = label_id(s.gold_relations[p]);
                s.gold_labels[p] = id ? static_cast<int>(*id) : -1;
            }
        }
    }

    /// Adds every word, tag and label of the sentence in first-occurrence order.
    void extend(const TokenSentence& s) {
        for (std::size_t p = 1; p < s.size(); ++p) {
            add_word(s.forms[p]);
            add_pos(s.model_pos(p));
            if (s.has_gold()) add_label(s.gold_relations[p]);
        }
    }

    void write(std::ostream& out) const {
        out << "version\t" << format_version << '\n';
        write_kind(out, "word", words_);
        write_kind(out, "pos", pos_);
        write_kind(out, "label", labels_);
    }

    static Vocabulary read(std::istream& in) {
        std::string line;
        if (!std::getline(in, line) || line != "version\t" + std::to_string(format_version)) {
            throw DataError("vocabulary: missing or unsupported version header");
        }
        std::vector<std::string> words, pos, labels;
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto t1 = line.find('\t');
            auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
            if (t2 == std::string::npos) throw DataError("vocabulary", lineno, "expected kind<TAB>index<TAB>surface");
            const std::string kind = line.substr(0, t1);
            std::size_t index = 0;
            const char* b = line.data() + t1 + 1;
            const char* e = line.data() + t2;
            if (std::from_chars(b, e, index).ptr != e) throw DataError("vocabulary", lineno, "bad index");
            std::vector<std::string>* target = kind == "word" ? &words : kind == "pos" ? &pos : kind == "label" ? &labels : nullptr;
            if (!target) throw DataError("vocabulary", lineno, "unknown entry kind '" + kind + "'");
            if (index != target->size()) throw DataError("vocabulary", lineno, "indices must be dense and ascending");
            target->push_back(line.substr(t2 + 1));
        }
        return from_lists(std::move(words), std::move(pos), std::move(labels));
    }

    static Vocabulary from_lists(std::vector<std::string> words, std::vector<std::string> pos,
                                 std::vector<std::string> labels) {
        if (words.size() < 2 || words[root_word] != root_symbol || words[unknown_word] != unknown_symbol ||
            pos.size() < 2 || pos[root_pos] != root_symbol || pos[unknown_pos] != unknown_symbol) {
            throw DataError("vocabulary: reserved entries missing");
        }
        Vocabulary v;
        v.words_ = std::move(words);
        v.pos_ = std::move(pos);
        v.labels_ = std::move(labels);
        v.reindex();
        return v;
    }

    bool operator==(const Vocabulary& o) const {
        return words_ == o.words_ && pos_ == o.pos_ && labels_ == o.labels_;
    }

private:
    static std::size_t add(std::vector<std::string>& list, std::unordered_map<std::string, std::size_t>& index,
                           std::string key) {
        auto it = index.find(key);
        if (it != index.end()) return it->second;
        const std::size_t id = list.size();
        index.emplace(key, id);
        list.push_back(std::move(key));
        return id;
    }

    static void write_kind(std::ostream& out, const char* kind, const std::vector<std::string>& list) {
        for (std::size_t i = 0; i < list.size(); ++i) out << kind << '\t' << i << '\t' << list[i] << '\n';
    }

    void reindex() {
        word_index_.clear();
        pos_index_.clear();
        label_index_.clear();
        for (std::size_t i = 2; i < words_.size(); ++i) word_index_.emplace(words_[i], i);
        for (std::size_t i = 2; i < pos_.size(); ++i) pos_index_.emplace(pos_[i], i);
        for (std::size_t i = 0; i < labels_.size(); ++i) label_index_.emplace(labels_[i], i);
    }

    std::vector<std::string> words_;
    std::vector<std::string> pos_;
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::size_t> word_index_;
    std::unordered_map<std::string, std::size_t> pos_index_;
    std::unordered_map<std::string, std::size_t> label_index_;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
        auto tab = line.find('\t', start);
        cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return cols;
}

inline std::optional<long> parse_int(std::string_view s) {
    long v = 0;
    if (s.empty()) return std::nullopt;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline TokenSentence root_sentence() {
    TokenSentence s;
    s.forms.push_back(Vocabulary::root_symbol);
    s.upos.push_back(Vocabulary::root_symbol);
    s.xpos.push_back(Vocabulary::root_symbol);
    s.columns.emplace_back();
    return s;
}

}  // namespace detail

/// Parses CoNLL-U / CoNLL-X text. Word and POS ids are left unassigned.
/// name is used in error positions.
inline std::vector<TokenSentence> parse_conll(std::istream& in, const std::string& name = "<input>") {
    std::vector<TokenSentence> out;
    TokenSentence current = detail::root_sentence();
    std::vector<std::size_t> head_lines;  // line of each token, for range errors
    bool block_open = false;
    int annotated = -1;  // -1 unknown, 0 no heads, 1 heads

    auto finish = [&](std::size_t lineno) {
        if (!block_open) return;
        if (current.num_words() == 0) throw DataError(name, lineno, "sentence block has no token rows");
        if (annotated == 1) {
            const auto n = static_cast<long>(current.size());
            for (std::size_t p = 1; p < current.size(); ++p) {
                if (current.gold_heads[p] >= n) {
                    throw DataError(name, head_lines[p], "HEAD " + std::to_string(current.gold_heads[p]) +
                                                              " out of range for a sentence of " +
                                                              std::to_string(n - 1) + " tokens");
                }
            }
        } else {
            current.gold_heads.clear();
            current.gold_relations.clear();
        }
        out.push_back(std::move(current));
        current = detail::root_sentence();
        head_lines.assign(1, 0);
        block_open = false;
        annotated = -1;
    };

    head_lines.assign(1, 0);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) {
            finish(lineno);
            continue;
        }
        block_open = true;
        if (line[0] == '#') {
            current.passthrough.push_back({current.size(), line});
            continue;
        }
        auto cols = detail::split_tabs(line);
        if (cols.size() < 8) {
            throw DataError(name, lineno, "expected at least 8 tab-separated columns, found " + std::to_string(cols.size()));
        }
        const std::string& id = cols[0];
        if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) {
            current.passthrough.push_back({current.size(), line});
            continue;
        }
        auto id_value = detail::parse_int(id);
        if (!id_value || *id_value != static_cast<long>(current.size())) {
            throw DataError(name, lineno, "malformed ID '" + id + "' (expected " + std::to_string(current.size()) + ")");
        }
        const std::string& head = cols[6];
        const int has_head = head == "_" ? 0 : 1;
        if (annotated == -1) {
            annotated = has_head;
            if (has_head) {
                current.gold_heads.push_back(-1);
                current.gold_relations.emplace_back();
            }
        } else if (annotated != has_head) {
            throw DataError(name, lineno, "HEAD column mixes annotated and unannotated rows");
        }
        if (has_head) {
            auto h = detail::parse_int(head);
            if (!h) throw DataError(name, lineno, "malformed HEAD '" + head + "'");
            if (*h < 0) throw DataError(name, lineno, "HEAD " + head + " out of range");
            if (*h == *id_value) throw DataError(name, lineno, "token " + id + " is its own head");
            current.gold_heads.push_back(static_cast<int>(*h));
            current.gold_relations.push_back(cols[7]);
            head_lines.push_back(lineno);
        }
        current.forms.push_back(cols[1]);
        current.upos.push_back(cols[3]);
        current.xpos.push_back(cols[4]);
        current.columns.push_back(std::move(cols));
    }
    finish(lineno + 1);
    return out;
}

inline std::vector<TokenSentence> read_conll(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return parse_conll(in, path);
}

/// Reads a treebank and assigns vocabulary ids. Train mode first extends the
/// vocabulary with every word, tag and label; parse mode maps unknowns.
inline std::vector<TokenSentence> read_conll(const std::string& path, Vocabulary& vocab, ReadMode mode) {
    auto sentences = read_conll(path);
    if (mode == ReadMode::Train) {
        for (const auto& s : sentences) {
            if (!s.has_gold()) throw DataError(path + ": training data must carry HEAD/DEPREL annotation");
            vocab.extend(s);
        }
    }
    for (auto& s : sentences) vocab.assign_ids(s);
    return sentences;
}

/// Deterministic vocabulary in first-occurrence order. Words seen fewer than
/// min_count times are left out and map to the unknown word.
inline Vocabulary build_vocab(const std::vector<TokenSentence>& sentences, std::size_t min_count = 1) {
    std::unordered_map<std::string, std::size_t> counts;
    if (min_count > 1) {
        for (const auto& s : sentences) {
            for (std::size_t p = 1; p < s.size(); ++p) ++counts[lowercase(s.forms[p])];
        }
    }
    Vocabulary v;
    for (const auto& s : sentences) {
        for (std::size_t p = 1; p < s.size(); ++p) {
            if (min_count <= 1 || counts[lowercase(s.forms[p])] >= min_count) v.add_word(s.forms[p]);
            v.add_pos(s.model_pos(p));
            if (s.has_gold()) v.add_label(s.gold_relations[p]);
        }
    }
    return v;
}

/// Predicted heads and labels for the real tokens. heads[0]/labels[0] belong
/// to the root and are -1.
struct ParseTree {
    std::vector<int> heads;
    std::vector<int> labels;

    std::size_t size() const noexcept { return heads.size(); }
    bool operator==(const ParseTree&) const = default;
};

/// Writes sentences with HEAD and DEPREL replaced by the predictions.
inline void write_conll(std::ostream& out, const std::vector<TokenSentence>& sentences,
                        const std::vector<ParseTree>& trees, const Vocabulary& vocab) {
    if (sentences.size() != trees.size()) {
        throw ContractViolation("write_conll: " + std::to_string(sentences.size()) + " sentences but " +
                                std::to_string(trees.size()) + " trees");
    }
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        const TokenSentence& s = sentences[i];
        const ParseTree& t = trees[i];
        if (t.heads.size() != s.size() || t.labels.size() != s.size()) {
            throw ContractViolation("write_conll: tree " + std::to_string(i) + " does not match its sentence length");
        }
        std::size_t next_extra = 0;
        auto flush_extra = [&](std::size_t before) {
            while (next_extra < s.passthrough.size() && s.passthrough[next_extra].before_token <= before) {
                out << s.passthrough[next_extra++].text << '\n';
            }
        };
        for (std::size_t p = 1; p < s.size(); ++p) {
            flush_extra(p);
            std::vector<std::string> cols = s.columns[p];
            cols[6] = std::to_string(t.heads[p]);
            const int label = t.labels[p];
            if (label < 0 || static_cast<std::size_t>(label) >= vocab.num_labels()) {
                throw ContractViolation("write_conll: label index " + std::to_string(label) + " outside vocabulary");
            }
            cols[7] = vocab.labels()[static_cast<std::size_t>(label)];
            for (std::size_t c = 0; c < cols.size(); ++c) {
                if (c) out << '\t';
                out << cols[c];
            }
            out << '\n';
        }
        flush_extra(s.size());
        out << '\n';
    }
}

inline void write_conll(const std::string& path, const std::vector<TokenSentence>& sentences,
                        const std::vector<ParseTree>& trees, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    write_conll(out, sentences, trees, vocab);
    if (!out) throw DataError("write to '" + path + "' failed");
}

/// Whether a token is excluded from attachment scoring.
/// ptb: XPOS in {``, '', :, ",", .}; ud: UPOS == PUNCT.
inline bool is_eval_punct(std::string_view upos, std::string_view xpos, PunctConvention convention) {
    if (convention == PunctConvention::Ud) return upos == "PUNCT";
    return xpos == "``" || xpos == "''" || xpos == ":" || xpos == "," || xpos == ".";
}

inline bool is_eval_punct(const TokenSentence& s, std::size_t p, PunctConvention convention) {
    return is_eval_punct(s.upos[p], s.xpos[p], convention);
}

}  // namespace digcnn
