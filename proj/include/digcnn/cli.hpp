#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "digcnn/config.hpp"
#include "digcnn/decoder.hpp"
#include "digcnn/eval.hpp"
#include "digcnn/trainer.hpp"

namespace digcnn::cli {

enum ExitCode : int { Ok = 0, Failure = 1, DataFailure = 2, NumericFailure = 3 };

struct TrainArgs {
    std::string train_path;
    std::string dev_path;
    std::string out_path;
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> metrics_path;  // default: <out>.metrics.tsv
};

struct ParseArgs {
    std::string model_path;
    std::string input_path;
    std::string output_path;
    std::string decoder = "greedy";
    bool single_root = false;
    std::size_t threads = 1;
};

struct EvalArgs {
    std::string gold_path;
    std::string pred_path;
    bool include_punct = false;
    std::string convention = "ptb";
};

struct InspectArgs {
    std::string model_path;
};

namespace detail {

template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << '\n';
        return NumericFailure;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return DataFailure;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return DataFailure;
    } catch (const CheckpointError& e) {
        err << "error: " << e.what() << '\n';
        return DataFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return Failure;
    }
}

inline std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

template <typename T>
Checkpoint run_training(const std::vector<TokenSentence>& train_set, const std::vector<TokenSentence>& dev_set,
                        const ModelConfig& model, const Vocabulary& vocab, const TrainConfig& train,
                        std::ostream& metrics) {
    auto result = digcnn::train<T>(train_set, dev_set, model, vocab, train,
                                   [&metrics](const MetricEvent& e) { metrics << format_metric(e) << '\n'; });
    return Checkpoint::from_params(model, vocab, result.best_params);
}

template <typename T>
std::vector<ParseTree> run_parse(const Checkpoint& ckpt, const std::vector<TokenSentence>& sentences,
                                 DecoderKind decoder, EisnerOptions options, std::size_t threads) {
    const ModelParams<T> params = ckpt.params<T>();
    return parse_all(sentences, params, ckpt.config, decoder, options, threads);
}

}  // namespace detail

inline int cmd_train(const TrainArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        RunConfig cfg = args.config_path ? load_config(*args.config_path) : RunConfig{};
        if (args.seed) cfg.train.seed = *args.seed;

        auto train_raw = read_conll(args.train_path);
        for (const auto& s : train_raw) {
            if (!s.has_gold()) throw DataError(args.train_path + ": training sentences must carry HEAD/DEPREL");
        }
        const Vocabulary vocab = build_vocab(train_raw, cfg.min_count);
        for (auto& s : train_raw) vocab.assign_ids(s);
        auto dev = read_conll(args.dev_path);
        for (auto& s : dev) {
            if (!s.has_gold()) throw DataError(args.dev_path + ": dev sentences must carry HEAD/DEPREL");
            vocab.assign_ids(s);
        }

        cfg.model.num_labels = vocab.num_labels();
        if (cfg.num_labels && *cfg.num_labels != vocab.num_labels()) {
            throw ConfigError("config num_labels = " + std::to_string(*cfg.num_labels) + " but the training data has " +
                              std::to_string(vocab.num_labels()) + " labels");
        }
        if (vocab.num_labels() == 0) throw DataError(args.train_path + ": no dependency labels found");

        const std::string metrics_path = args.metrics_path.value_or(args.out_path + ".metrics.tsv");
        std::ofstream metrics(metrics_path);
        if (!metrics) throw DataError("cannot open metrics log '" + metrics_path + "'");

        const Checkpoint ckpt =
            cfg.precision == DType::Float32
                ? detail::run_training<float>(train_raw, dev, cfg.model, vocab, cfg.train, metrics)
                : detail::run_training<double>(train_raw, dev, cfg.model, vocab, cfg.train, metrics);
        save_checkpoint(ckpt, args.out_path);
        out << "wrote " << args.out_path << " and " << metrics_path << '\n';
        return Ok;
    });
}

inline int cmd_parse(const ParseArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        const DecoderKind decoder = parse_decoder(args.decoder);
        const Checkpoint ckpt = load_checkpoint(args.model_path);
        auto sentences = read_conll(args.input_path);
        for (auto& s : sentences) ckpt.vocab.assign_ids(s);
        const EisnerOptions options{args.single_root};
        auto trees = ckpt.dtype == DType::Float32
                         ? detail::run_parse<float>(ckpt, sentences, decoder, options, args.threads)
                         : detail::run_parse<double>(ckpt, sentences, decoder, options, args.threads);
        write_conll(args.output_path, sentences, trees, ckpt.vocab);
        out << "parsed " << sentences.size() << " sentences with the " << args.decoder << " decoder\n";
        return Ok;
    });
}

inline int cmd_eval(const EvalArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        const PunctConvention convention = parse_convention(args.convention);
        auto gold = read_conll(args.gold_path);
        auto pred = read_conll(args.pred_path);
        if (gold.size() != pred.size()) {
            throw DataError("gold has " + std::to_string(gold.size()) + " sentences, prediction has " +
                            std::to_string(pred.size()));
        }
        Vocabulary labels = build_vocab(gold);
        for (const auto& s : pred) {
            if (s.has_gold()) labels.extend(s);
        }
        std::vector<ParseTree> trees;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (!gold[i].has_gold()) throw DataError(args.gold_path + ": sentence " + std::to_string(i + 1) + " has no heads");
            if (pred[i].size() != gold[i].size()) {
                throw DataError("sentence " + std::to_string(i + 1) + " has " + std::to_string(gold[i].num_words()) +
                                " gold tokens but " + std::to_string(pred[i].num_words()) + " predicted tokens");
            }
            labels.assign_ids(gold[i]);
            trees.push_back(tree_from_annotation(pred[i], labels));
        }
        const EvalReport r = evaluate(gold, trees, convention, args.include_punct);
        out << "UAS\t" << detail::two_decimals(r.uas) << '\n';
        out << "LAS\t" << detail::two_decimals(r.las) << '\n';
        out << "counted\t" << r.counted_tokens << '\n';
        out << "total\t" << r.total_tokens << '\n';
        return Ok;
    });
}

inline int cmd_inspect(const InspectArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return detail::guarded(err, [&] {
        const Checkpoint ckpt = load_checkpoint(args.model_path);
        const ModelConfig& c = ckpt.config;
        out << "format_version\t" << Checkpoint::format_version << '\n';
        out << "dtype\t" << to_string(ckpt.dtype) << '\n';
        out << "word_emb_dim\t" << c.word_emb_dim << '\n';
        out << "pos_emb_dim\t" << c.pos_emb_dim << '\n';
        out << "hidden_channels\t" << c.hidden_channels << '\n';
        out << "conv_radius\t" << c.conv_radius << '\n';
        out << "layers_per_block\t" << c.layers_per_block << '\n';
        out << "num_blocks\t" << c.num_blocks << '\n';
        out << "num_labels\t" << c.num_labels << '\n';
        out << "input_dropout\t" << c.input_dropout << '\n';
        out << "block_dropout\t" << c.block_dropout << '\n';
        out << "receptive_radius\t" << c.total_radius() << '\n';
        out << "vocab_words\t" << ckpt.vocab.num_words() << '\n';
        out << "vocab_pos\t" << ckpt.vocab.num_pos() << '\n';
        out << "vocab_labels\t" << ckpt.vocab.num_labels() << '\n';
        std::size_t count = 0;
        for (const auto& t : ckpt.tensors) count += t.values.size();
        out << "parameters\t" << count << '\n';
        return Ok;
    });
}

}  // namespace digcnn::cli
