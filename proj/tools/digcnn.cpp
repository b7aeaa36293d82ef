#include <CLI11.hpp>

#include "digcnn/cli.hpp"

int main(int argc, char** argv) {
    using namespace digcnn::cli;

    CLI::App app{"Dilated iterated graph CNN dependency parser"};
    app.require_subcommand(1);

    TrainArgs train;
    std::uint64_t seed = 0;
    auto* train_cmd = app.add_subcommand("train", "train a parser on a CoNLL treebank");
    train_cmd->add_option("--train", train.train_path, "training treebank")->required();
    train_cmd->add_option("--dev", train.dev_path, "development treebank")->required();
    train_cmd->add_option("--out", train.out_path, "checkpoint to write")->required();
    auto* config_opt = train_cmd->add_option("--config", "key = value configuration file");
    auto* seed_opt = train_cmd->add_option("--seed", seed, "random seed (overrides the config)");
    auto* metrics_opt = train_cmd->add_option("--metrics", "metrics log (default <out>.metrics.tsv)");

    ParseArgs parse;
    auto* parse_cmd = app.add_subcommand("parse", "parse a CoNLL file with a trained model");
    parse_cmd->add_option("--model", parse.model_path, "checkpoint")->required();
    parse_cmd->add_option("--input", parse.input_path, "CoNLL input")->required();
    parse_cmd->add_option("--output", parse.output_path, "CoNLL output")->required();
    parse_cmd->add_option("--decoder", parse.decoder, "greedy or eisner")
        ->check(CLI::IsMember({"greedy", "eisner"}))
        ->capture_default_str();
    parse_cmd->add_flag("--single-root", parse.single_root, "eisner: allow one dependent of the root");
    parse_cmd->add_option("--threads", parse.threads, "worker threads")->capture_default_str();

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "attachment scores of a prediction against gold");
    eval_cmd->add_option("--gold", eval.gold_path, "gold CoNLL file")->required();
    eval_cmd->add_option("--pred", eval.pred_path, "predicted CoNLL file")->required();
    eval_cmd->add_flag("--include-punct", eval.include_punct, "score punctuation tokens too");
    eval_cmd->add_option("--convention", eval.convention, "punctuation convention: ptb or ud")
        ->check(CLI::IsMember({"ptb", "ud"}))
        ->capture_default_str();

    InspectArgs inspect;
    auto* inspect_cmd = app.add_subcommand("inspect", "print a checkpoint's configuration");
    inspect_cmd->add_option("--model", inspect.model_path, "checkpoint")->required();

    CLI11_PARSE(app, argc, argv);

    if (*train_cmd) {
        if (*config_opt) train.config_path = config_opt->as<std::string>();
        if (*seed_opt) train.seed = seed;
        if (*metrics_opt) train.metrics_path = metrics_opt->as<std::string>();
        return cmd_train(train);
    }
    if (*parse_cmd) return cmd_parse(parse);
    if (*eval_cmd) return cmd_eval(eval);
    return cmd_inspect(inspect);
}
