// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. The treebank criterion has its own binary.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "digcnn/digcnn.hpp"
#include "oracles.hpp"

using namespace digcnn;

namespace {

const std::string data_dir = DIGCNN_TEST_DATA;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double budget_seconds, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.pass && secs >= budget_seconds) {
        o.pass = false;
        o.detail += " (over the time budget)";
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %s: %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

TokenSentence synthetic_sentence(std::size_t n, std::mt19937_64& rng, std::size_t words, std::size_t tags,
                                 std::size_t labels) {
    TokenSentence s;
    std::uniform_int_distribution<std::size_t> w(2, words - 1), t(2, tags - 1), l(0, labels - 1);
    for (std::size_t p = 0; p < n; ++p) {
        s.forms.push_back(p == 0 ? "<root>" : "w");
        s.upos.push_back(p == 0 ? "<root>" : "X");
        s.xpos.push_back(s.upos.back());
        s.word_ids.push_back(p == 0 ? 0 : w(rng));
        s.pos_ids.push_back(p == 0 ? 0 : t(rng));
        s.gold_relations.push_back(p == 0 ? "" : "dep");
        s.gold_heads.push_back(p == 0 ? -1 : static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)));
        s.gold_labels.push_back(p == 0 ? -1 : static_cast<int>(l(rng)));
        if (p > 0 && s.gold_heads[p] == static_cast<int>(p)) s.gold_heads[p] = 0;
    }
    return s;
}

ModelConfig tiny(std::size_t lc, std::size_t lb, std::size_t labels) {
    ModelConfig c;
    c.word_emb_dim = 6;
    c.pos_emb_dim = 3;
    c.hidden_channels = 8;
    c.conv_radius = 1;
    c.layers_per_block = lc;
    c.num_blocks = lb;
    c.num_labels = labels;
    c.input_dropout = 0.0;
    c.block_dropout = 0.0;
    return c;
}

void randomize(ModelParams<double>& p, std::mt19937_64& rng, double lo, double hi) {
    for (auto& [name, v] : p.named_parameters()) v.mutable_value() = oracle::random_tensor(v.shape(), rng, lo, hi);
}

Outcome gradient_check() {
    const ModelConfig c = tiny(2, 2, 3);
    ModelParams<double> p(c, 5, 4);
    std::mt19937_64 rng(101);
    randomize(p, rng, -0.5, 0.5);
    std::mt19937_64 srng(7);
    const TokenSentence s = synthetic_sentence(4, srng, 5, 4, 3);  // root + 3 tokens
    auto loss_value = [&] {
        NoGradGuard guard;
        Rng r(0);
        return sentence_loss(forward(s, p, c, Mode::Infer, r), s).value()[0];
    };
    Rng r(0);
    backward(sentence_loss(forward(s, p, c, Mode::Infer, r), s));
    double worst = 0.0;
    std::size_t checked = 0;
    for (auto& [name, v] : p.named_parameters()) {
        const auto g = oracle::check_gradient(v.mutable_value(), v.grad(), loss_value);
        worst = std::max(worst, g.max_rel_error);
        checked += g.checked;
    }
    return {worst < 1e-4, std::to_string(checked) + " entries, max relative error " + fmt("%.3g", worst)};
}

Outcome eisner_oracle() {
    std::mt19937_64 rng(202);
    std::normal_distribution<double> dist(0.0, 2.0);
    std::size_t cases = 0;
    for (std::size_t n = 3; n <= 7; ++n) {
        for (int trial = 0; trial < 200; ++trial) {
            ArcScoreMatrix<double> arcs(n);
            for (std::size_t d = 1; d < n; ++d)
                for (std::size_t h = 0; h < n; ++h)
                    if (h != d) {
                        arcs.at(d, h) = dist(rng);
                        arcs.best_label[d * n + h] = 0;
                    }
            const ParseTree tree = eisner_decode(arcs);
            const auto best = oracle::best_projective_tree(n, [&](std::size_t d, std::size_t h) { return arcs.at(d, h); });
            if (!is_projective(tree)) return {false, "non-projective output at N=" + std::to_string(n)};
            if (std::abs(tree_score(arcs, tree) - best.score) > 1e-9) {
                return {false, "score gap at N=" + std::to_string(n) + " trial " + std::to_string(trial)};
            }
            ++cases;
        }
    }
    return {true, std::to_string(cases) + " matrices match the exhaustive maximum"};
}

Outcome receptive_field() {
    // Single block, L_c = 4: positive parameters keep every path alive.
    ModelConfig c = tiny(4, 1, 1);
    c.hidden_channels = 2;
    ModelParams<double> p(c, 3, 3);
    std::mt19937_64 rng(303);
    randomize(p, rng, 0.05, 0.5);
    const std::size_t n = 40, i = 5, j = 20;
    const auto in = oracle::random_tensor({n, n, 2}, rng, 0.1, 1.0);
    const auto base = block_forward(Var<double>::leaf(in), p.block_layers).value();
    auto moved = [&](std::size_t y, std::size_t x) {
        auto bumped = in;
        bumped.at(y, x, 0) += 1.0;
        const auto out = block_forward(Var<double>::leaf(bumped), p.block_layers).value();
        return out.at(i, j, 0) != base.at(i, j, 0) || out.at(i, j, 1) != base.at(i, j, 1);
    };
    const bool block_ok = moved(i + 15, j) && moved(i + 16, j) && !moved(i + 17, j) && moved(i, j + 15) &&
                          moved(i, j + 16) && !moved(i, j + 17) && !moved(i, j - 17) && c.block_radius() == 16;

    // Whole model, L_c = 2, L_b = 2: changing token k moves exactly the cells
    // within 8 of row k or column k.
    ModelConfig c2 = tiny(2, 2, 1);
    c2.hidden_channels = 2;
    const std::size_t m = 24;
    ModelParams<double> p2(c2, m + 1, 3);
    randomize(p2, rng, 0.05, 0.5);
    TokenSentence s;
    for (std::size_t t = 0; t < m; ++t) {
        s.forms.push_back("w");
        s.upos.push_back("X");
        s.xpos.push_back("X");
        s.word_ids.push_back(t);
        s.pos_ids.push_back(t == 0 ? 0 : 1);
    }
    const auto base2 = predict_scores(s, p2, c2);
    const long k = 12;
    auto bumped = s;
    bumped.word_ids[k] = m;
    const auto out2 = predict_scores(bumped, p2, c2);
    long observed = 0;
    for (std::size_t d = 0; d < m; ++d) {
        if (out2.at(d, 0, 0) != base2.at(d, 0, 0)) observed = std::max(observed, std::abs(static_cast<long>(d) - k));
    }
    const bool total_ok = observed == 8 && c2.total_radius() == 8;
    return {block_ok && total_ok, "block radius " + std::to_string(c.block_radius()) + ", observed total radius " +
                                      std::to_string(observed)};
}

Outcome dilation_one() {
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<std::size_t> size(1, 9), chan(1, 4), rad(0, 2);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t h = size(rng), w = size(rng), cin = chan(rng), cout = chan(rng), r = rad(rng);
        Conv2dKernel<double> k(r, 1, cin, cout, false);
        k.weights.mutable_value() = oracle::random_tensor(k.weights.shape(), rng);
        k.bias.mutable_value() = oracle::random_tensor(k.bias.shape(), rng);
        const auto in = oracle::random_tensor({h, w, cin}, rng);
        const auto got = conv2d_dilated(Var<double>::leaf(in), k).value();
        const auto want = oracle::simple_conv2d(in, k.weights.value(), k.bias.value(), r);
        if (got != want) return {false, "mismatch on trial " + std::to_string(trial)};
    }
    return {true, "1000 random inputs match exactly"};
}

Outcome distributions() {
    std::mt19937_64 rng(505);
    double worst = 0.0;
    for (std::size_t n = 2; n <= 20; ++n) {
        const ModelConfig c = tiny(2, 2, 4);
        ModelParams<double> p(c, 9, 6);
        randomize(p, rng, -1.0, 1.0);
        const auto s = synthetic_sentence(n, rng, 9, 6, 4);
        Rng r(n);
        for (const auto& block : forward(s, p, c, Mode::Infer, r)) {
            const auto lp = dependent_log_probs(block.value());
            for (std::size_t d = 1; d < n; ++d) {
                double total = 0.0;
                for (std::size_t h = 0; h < n; ++h)
                    for (std::size_t l = 0; l < 4; ++l) total += std::exp(lp.at(d, h, l));
                worst = std::max(worst, std::abs(total - 1.0));
            }
        }
    }
    return {worst <= 1e-9, "max |sum - 1| = " + fmt("%.3g", worst)};
}

Outcome loss_structure() {
    std::mt19937_64 rng(606);
    const std::size_t n = 6, labels = 3;
    const auto gold = synthetic_sentence(n, rng, 5, 5, labels);
    std::vector<Var<double>> blocks;
    double manual = 0.0;
    for (int b = 0; b < 3; ++b) {
        const auto scores = oracle::random_tensor({n, n, labels}, rng, -3, 3);
        blocks.push_back(Var<double>::leaf(scores));
        manual += sentence_loss<double>({blocks.back()}, gold).value()[0];
    }
    manual /= 3.0;
    const double joint = sentence_loss(blocks, gold).value()[0];
    const double gap = std::abs(joint - manual);

    bool uniform_exact = true;
    for (std::size_t m = 2; m <= 15; ++m) {
        for (std::size_t l = 1; l <= 5; ++l) {
            const auto g = synthetic_sentence(m, rng, 5, 5, l);
            const Tensor<double> flat({m, m, l}, -1.5);
            const double loss = sentence_loss<double>({Var<double>::leaf(flat), Var<double>::leaf(flat)}, g).value()[0];
            if (loss != std::log(static_cast<double>((m - 1) * l))) uniform_exact = false;
        }
    }
    return {gap <= 1e-12 && uniform_exact,
            "block-mean gap " + fmt("%.3g", gap) + (uniform_exact ? ", uniform = ln U exactly" : ", uniform mismatch")};
}

Outcome overfit() {
    Vocabulary vocab;
    auto train_set = read_conll(data_dir + "/toy_train.conllu", vocab, ReadMode::Train);
    ModelConfig c = tiny(2, 2, vocab.num_labels());
    c.word_emb_dim = 16;
    c.pos_emb_dim = 8;
    c.hidden_channels = 16;
    TrainConfig tc;
    tc.batch_size = 4;
    tc.learning_rate = 0.01;
    tc.seed = 1;
    tc.epochs = 500;
    // Dev = train, so the per-epoch dev metrics are training scores and the
    // selected parameters are the best on the training set.
    std::size_t first_perfect = 0;
    auto result = train<double>(train_set, train_set, c, vocab, tc, [&](const MetricEvent& e) {
        if (e.metric == "dev_uas" && e.value == 100.0 && first_perfect == 0) first_perfect = e.epoch;
    });
    const auto trees = parse_all(train_set, result.best_params, c, DecoderKind::Greedy);
    const EvalReport all = evaluate(train_set, trees, PunctConvention::Ud, true);
    if (first_perfect == 0) return {false, "training UAS never reached 100% in 500 epochs"};
    return {all.uas == 100.0, "first 100% epoch " + std::to_string(first_perfect) + ", greedy UAS of kept model " +
                                  fmt("%.2f", all.uas) + " over all " + std::to_string(all.total_tokens) + " tokens"};
}

Outcome determinism() {
    Vocabulary vocab;
    auto train_set = read_conll(data_dir + "/toy_train.conllu", vocab, ReadMode::Train);
    auto dev_set = read_conll(data_dir + "/toy_dev.conllu", vocab, ReadMode::Parse);
    ModelConfig c = tiny(2, 2, vocab.num_labels());
    c.input_dropout = 0.15;
    c.block_dropout = 0.25;
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 3;
    tc.seed = 77;
    auto run = [&] {
        std::string log;
        auto result = train<double>(train_set, dev_set, c, vocab, tc,
                                    [&](const MetricEvent& e) { log += format_metric(e) + "\n"; });
        return std::make_pair(log, result.best_params);
    };
    const auto [log_a, params] = run();
    const auto [log_b, unused] = run();
    const bool logs_equal = !log_a.empty() && log_a == log_b;

    const std::string path = (std::filesystem::temp_directory_path() / ("digcnn_acceptance_" + std::to_string(::getpid()) + ".digc")).string();
    save_checkpoint(Checkpoint::from_params(c, vocab, params), path);
    const auto restored = load_checkpoint(path).params<double>();
    bool outputs_equal = true;
    for (const auto& s : dev_set) outputs_equal = outputs_equal && predict_scores(s, restored, c) == predict_scores(s, params, c);

    const auto trees = parse_all(dev_set, params, c, DecoderKind::Eisner);
    std::ostringstream first;
    write_conll(first, dev_set, trees, vocab);
    std::istringstream back_in(first.str());
    const auto reread = parse_conll(back_in);
    bool roundtrip = reread.size() == trees.size();
    std::vector<ParseTree> reread_trees;
    for (std::size_t i = 0; roundtrip && i < reread.size(); ++i) {
        const ParseTree t = tree_from_annotation(reread[i], vocab);
        roundtrip = t.heads == trees[i].heads && t.labels == trees[i].labels;
        reread_trees.push_back(t);
    }
    std::ostringstream second;
    if (roundtrip) write_conll(second, reread, reread_trees, vocab);
    roundtrip = roundtrip && first.str() == second.str();

    return {logs_equal && outputs_equal && roundtrip, std::string("logs ") + (logs_equal ? "identical" : "differ") +
                                                          ", checkpoint outputs " + (outputs_equal ? "identical" : "differ") +
                                                          ", CoNLL round-trip " + (roundtrip ? "exact" : "differs")};
}

Outcome sharing() {
    const ModelConfig one = tiny(3, 1, 4), three = tiny(3, 3, 4);
    Vocabulary vocab;
    read_conll(data_dir + "/toy_train.conllu", vocab, ReadMode::Train);
    auto table = [&](const ModelConfig& c) {
        ModelParams<double> p(c, vocab.num_words(), vocab.num_pos());
        std::vector<std::pair<std::string, Shape>> out;
        for (const auto& t : Checkpoint::from_params(c, vocab, p).tensors) out.emplace_back(t.name, t.shape);
        return out;
    };
    const auto a = table(one), b = table(three);
    return {a == b, std::to_string(a.size()) + " tensors, names and shapes " + (a == b ? "identical" : "differ")};
}

}  // namespace

int main() {
    criterion(1, "end-to-end gradient check", 60, gradient_check);
    criterion(2, "Eisner equals exhaustive projective maximum", 60, eisner_oracle);
    criterion(3, "receptive-field arithmetic", 60, receptive_field);
    criterion(4, "dilation-1 equals simple convolution", 60, dilation_one);
    criterion(5, "per-dependent distributions sum to one", 60, distributions);
    criterion(6, "loss structure", 60, loss_structure);
    criterion(7, "overfit 8-sentence corpus", 300, overfit);
    std::printf("[SKIP]  8 small-corpus generalization: run acceptance_treebank with "
                "DIGCNN_TREEBANK_TRAIN and DIGCNN_TREEBANK_DEV set\n");
    criterion(9, "determinism and round-trip", 120, determinism);
    criterion(10, "parameter sharing across block counts", 10, sharing);
    std::printf("%d failing criteria\n", failures);
    return failures == 0 ? 0 : 1;
}
