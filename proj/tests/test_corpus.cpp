#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "digcnn/digcnn.hpp"

using namespace digcnn;

namespace {

const std::string data_dir = DIGCNN_TEST_DATA;

std::vector<TokenSentence> parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse_conll(in, "test.conllu");
}

std::string row(int id, const std::string& form, const std::string& upos, const std::string& xpos,
                const std::string& head, const std::string& rel) {
    return std::to_string(id) + "\t" + form + "\t_\t" + upos + "\t" + xpos + "\t_\t" + head + "\t" + rel + "\t_\t_\n";
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("digcnn_corpus_" + name)).string();
}

}  // namespace

TEST(ReadConll, TwoTokenBlock) {
    auto s = parse_text(row(1, "dog", "NOUN", "NN", "2", "nsubj") + row(2, "barks", "VERB", "VBZ", "0", "root") + "\n");
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].size(), 3u);
    EXPECT_EQ(s[0].forms[0], Vocabulary::root_symbol);
    EXPECT_EQ(s[0].gold_heads, (std::vector<int>{-1, 2, 0}));
    EXPECT_EQ(s[0].gold_relations[1], "nsubj");
}

TEST(ReadConll, EmptyInput) {
    EXPECT_TRUE(parse_text("").empty());
    EXPECT_TRUE(parse_text("\n\n").empty());
}

TEST(ReadConll, SkipsMultiwordRangesAndEmptyNodes) {
    auto s = parse_text(row(1, "We", "PRON", "PRP", "3", "nsubj") + "2-3\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n" +
                        row(2, "do", "AUX", "VBP", "3", "aux") + "2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n" +
                        row(3, "know", "VERB", "VB", "0", "root"));
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].num_words(), 3u);
    EXPECT_EQ(s[0].passthrough.size(), 2u);
}

TEST(ReadConll, ParallelArraysAndRootInvariants) {
    auto sentences = read_conll(data_dir + "/toy_train.conllu");
    ASSERT_EQ(sentences.size(), 8u);
    for (const auto& s : sentences) {
        EXPECT_EQ(s.forms[0], Vocabulary::root_symbol);
        EXPECT_EQ(s.upos.size(), s.size());
        EXPECT_EQ(s.xpos.size(), s.size());
        EXPECT_EQ(s.gold_heads.size(), s.size());
        EXPECT_EQ(s.gold_relations.size(), s.size());
        EXPECT_EQ(s.columns.size(), s.size());
        for (std::size_t p = 1; p < s.size(); ++p) {
            EXPECT_NE(s.gold_heads[p], static_cast<int>(p));
            EXPECT_LT(s.gold_heads[p], static_cast<int>(s.size()));
        }
    }
    EXPECT_EQ(sentences.back().num_words(), 5u);
}

TEST(ReadConll, ErrorsCarryPositions) {
    try {
        parse_text(row(1, "a", "X", "X", "0", "root") + row(3, "b", "X", "X", "1", "dep"));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_EQ(e.file(), "test.conllu");
    }
    EXPECT_THROW(parse_text(row(1, "a", "X", "X", "zero", "root")), DataError);
    EXPECT_THROW(parse_text("1\ta\tb\n"), DataError);
    EXPECT_THROW(parse_text(row(1, "a", "X", "X", "1", "root")), DataError);
    try {
        parse_text(row(1, "a", "X", "X", "0", "root") + row(2, "b", "X", "X", "7", "dep") + "\n");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("out of range"), std::string::npos);
    }
    EXPECT_THROW(read_conll(data_dir + "/does_not_exist.conllu"), DataError);
}

TEST(ReadConll, UnannotatedInputHasNoGold) {
    auto s = parse_text(row(1, "a", "X", "X", "_", "_") + row(2, "b", "X", "X", "_", "_"));
    ASSERT_EQ(s.size(), 1u);
    EXPECT_FALSE(s[0].has_gold());
}

TEST(ReadConll, TrainModeExtendsParseModeMapsUnknowns) {
    Vocabulary vocab;
    auto train = read_conll(data_dir + "/toy_train.conllu", vocab, ReadMode::Train);
    const std::size_t words = vocab.num_words();
    auto dev = read_conll(data_dir + "/toy_dev.conllu", vocab, ReadMode::Parse);
    EXPECT_EQ(vocab.num_words(), words);
    // "young" only appears in the dev file.
    const auto& girl = dev[2];
    EXPECT_EQ(girl.forms[2], "young");
    EXPECT_EQ(girl.word_ids[2], Vocabulary::unknown_word);
    EXPECT_EQ(girl.word_ids[0], Vocabulary::root_word);
    EXPECT_EQ(girl.pos_ids[0], Vocabulary::root_pos);
    // Lowercased lookup: "The" and "the" share an id.
    EXPECT_EQ(train[0].word_ids[1], vocab.word_id("the"));
}

TEST(BuildVocab, ReservedOnlyForEmptyCorpus) {
    const Vocabulary v = build_vocab({});
    EXPECT_EQ(v.num_words(), 2u);
    EXPECT_EQ(v.num_pos(), 2u);
    EXPECT_EQ(v.num_labels(), 0u);
}

TEST(BuildVocab, DeterministicAndCoversLabels) {
    auto a = read_conll(data_dir + "/toy_train.conllu");
    auto b = read_conll(data_dir + "/toy_train.conllu");
    const Vocabulary va = build_vocab(a), vb = build_vocab(b);
    EXPECT_EQ(va, vb);
    for (const auto& s : a)
        for (std::size_t p = 1; p < s.size(); ++p) EXPECT_TRUE(va.label_id(s.gold_relations[p]).has_value());
    EXPECT_EQ(va.words()[2], "the");
    EXPECT_EQ(va.labels()[0], "det");
}

TEST(BuildVocab, MinCountDropsRareWords) {
    auto s = read_conll(data_dir + "/toy_train.conllu");
    const Vocabulary v = build_vocab(s, 2);
    EXPECT_NE(v.word_id("the"), Vocabulary::unknown_word);
    EXPECT_EQ(v.word_id("barks"), Vocabulary::unknown_word);
}

TEST(Vocabulary, TextRoundTrip) {
    const Vocabulary v = build_vocab(read_conll(data_dir + "/toy_train.conllu"));
    std::stringstream first;
    v.write(first);
    const Vocabulary back = Vocabulary::read(first);
    EXPECT_EQ(back, v);
    std::stringstream second;
    back.write(second);
    EXPECT_EQ(second.str(), first.str());
    EXPECT_EQ(first.str().substr(0, 10), "version\t1\n");

    std::stringstream bad("version\t1\nword\t5\tx\n");
    EXPECT_THROW(Vocabulary::read(bad), DataError);
}

TEST(WriteConll, RoundTripsGoldAnnotation) {
    Vocabulary vocab;
    auto sentences = read_conll(data_dir + "/toy_train.conllu", vocab, ReadMode::Train);
    std::vector<ParseTree> trees;
    for (const auto& s : sentences) trees.push_back(tree_from_annotation(s, vocab));
    const std::string path = temp_path("roundtrip.conllu");
    write_conll(path, sentences, trees, vocab);
    auto back = read_conll(path, vocab, ReadMode::Parse);
    ASSERT_EQ(back.size(), sentences.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].gold_heads, sentences[i].gold_heads);
        EXPECT_EQ(back[i].gold_labels, sentences[i].gold_labels);
        EXPECT_EQ(back[i].passthrough.size(), sentences[i].passthrough.size());
    }
    // Byte-identical to the input since every field is preserved.
    std::ifstream a(data_dir + "/toy_train.conllu"), b(path);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(WriteConll, PrintsPredictedHeads) {
    Vocabulary vocab;
    vocab.add_label("dep");
    auto s = parse_text(row(1, "a", "X", "X", "_", "_") + row(2, "b", "X", "X", "_", "_"));
    ParseTree t{{-1, 2, 0}, {-1, 0, 0}};
    std::ostringstream out;
    write_conll(out, s, {t}, vocab);
    EXPECT_EQ(out.str(), "1\ta\t_\tX\tX\t_\t2\tdep\t_\t_\n2\tb\t_\tX\tX\t_\t0\tdep\t_\t_\n\n");
    EXPECT_THROW(write_conll(out, s, {}, vocab), ContractViolation);
}

TEST(WriteConll, ReEvaluationIsUnchanged) {
    Vocabulary vocab;
    auto gold = read_conll(data_dir + "/toy_train.conllu", vocab, ReadMode::Train);
    std::vector<ParseTree> pred;
    for (const auto& s : gold) {
        ParseTree t = tree_from_annotation(s, vocab);
        for (std::size_t p = 1; p < t.size(); p += 2) t.heads[p] = 0;
        for (std::size_t p = 2; p < t.size(); p += 3) t.labels[p] = 0;
        pred.push_back(t);
    }
    const EvalReport direct = evaluate(gold, pred, PunctConvention::Ud);
    const std::string path = temp_path("reeval.conllu");
    write_conll(path, gold, pred, vocab);
    auto reread = read_conll(path);
    std::vector<ParseTree> again;
    for (const auto& s : reread) again.push_back(tree_from_annotation(s, vocab));
    const EvalReport via_file = evaluate(gold, again, PunctConvention::Ud);
    EXPECT_EQ(via_file.uas, direct.uas);
    EXPECT_EQ(via_file.las, direct.las);
}

TEST(IsEvalPunct, Conventions) {
    EXPECT_TRUE(is_eval_punct("PUNCT", ",", PunctConvention::Ptb));
    EXPECT_TRUE(is_eval_punct("X", "``", PunctConvention::Ptb));
    EXPECT_TRUE(is_eval_punct("X", "''", PunctConvention::Ptb));
    EXPECT_TRUE(is_eval_punct("X", ":", PunctConvention::Ptb));
    EXPECT_TRUE(is_eval_punct("X", ".", PunctConvention::Ptb));
    EXPECT_FALSE(is_eval_punct("NOUN", "NN", PunctConvention::Ptb));
    EXPECT_FALSE(is_eval_punct("PUNCT", "-LRB-", PunctConvention::Ptb));
    EXPECT_TRUE(is_eval_punct("PUNCT", "-LRB-", PunctConvention::Ud));
    EXPECT_FALSE(is_eval_punct("NOUN", ",", PunctConvention::Ud));
}
