// Small-corpus generalization check on a real treebank. Set
// DIGCNN_TREEBANK_TRAIN and DIGCNN_TREEBANK_DEV to CoNLL-U files; without
// them the run reports itself skipped (exit 77).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "digcnn/digcnn.hpp"

using namespace digcnn;

int main() {
    const char* train_path = std::getenv("DIGCNN_TREEBANK_TRAIN");
    const char* dev_path = std::getenv("DIGCNN_TREEBANK_DEV");
    if (!train_path || !dev_path) {
        std::printf("[SKIP]  8 small-corpus generalization: DIGCNN_TREEBANK_TRAIN / DIGCNN_TREEBANK_DEV not set\n");
        return 77;
    }
    const auto start = std::chrono::steady_clock::now();
    try {
        auto train_set = read_conll(train_path);
        const Vocabulary vocab = build_vocab(train_set);
        for (auto& s : train_set) vocab.assign_ids(s);
        auto dev_set = read_conll(dev_path);
        for (auto& s : dev_set) vocab.assign_ids(s);
        if (train_set.size() < 1000) {
            std::printf("[FAIL]  8 small-corpus generalization: only %zu training sentences (need 1000)\n",
                        train_set.size());
            return 1;
        }

        ModelConfig model;  // default configuration
        model.num_labels = vocab.num_labels();
        TrainConfig cfg;
        cfg.convention = PunctConvention::Ud;
        if (const char* threads = std::getenv("DIGCNN_THREADS")) cfg.threads = std::stoul(threads);
        if (const char* epochs = std::getenv("DIGCNN_EPOCHS")) cfg.epochs = std::stoul(epochs);

        auto result = train<float>(train_set, dev_set, model, vocab, cfg, [](const MetricEvent& e) {
            if (e.metric != "train_loss") std::printf("  %s\n", format_metric(e).c_str());
            std::fflush(stdout);
        });
        const auto trees = parse_all(dev_set, result.best_params, model, DecoderKind::Greedy, {}, cfg.threads);
        const EvalReport r = evaluate(dev_set, trees, PunctConvention::Ud);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool pass = r.uas >= 70.0 && secs < 1800.0;
        std::printf("[%s]  8 small-corpus generalization: dev UAS %.2f over %zu tokens (%.0fs)\n",
                    pass ? "PASS" : "FAIL", r.uas, r.counted_tokens, secs);
        return pass ? 0 : 1;
    } catch (const std::exception& e) {
        std::printf("[FAIL]  8 small-corpus generalization: %s\n", e.what());
        return 1;
    }
}
