#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>

#include "digcnn/checkpoint.hpp"
#include "digcnn/trainer.hpp"

namespace digcnn {

/// Everything a training run is configured with.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DType precision = DType::Float32;
    std::size_t min_count = 1;
    std::optional<std::size_t> num_labels;  // when set, must match the training labels
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename U>
U parse_number(std::string_view value, const std::string& where) {
    U out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError(where + ": cannot parse '" + std::string(value) + "' as a number");
    }
    return out;
}

}  // namespace detail

/// Parses "key = value" lines. Blank lines and lines starting with '#' are
/// ignored; unknown keys are rejected.
inline RunConfig parse_config(std::istream& in, const std::string& name = "<config>") {
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view text = detail::trim(line);
        if (text.empty() || text.front() == '#') continue;
        const auto eq = text.find('=');
        const std::string where = name + ":" + std::to_string(lineno);
        if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key(detail::trim(text.substr(0, eq)));
        const std::string_view value = detail::trim(text.substr(eq + 1));
        auto size = [&] { return detail::parse_number<std::size_t>(value, where); };
        auto real = [&] { return detail::parse_number<double>(value, where); };

        if (key == "word_emb_dim") cfg.model.word_emb_dim = size();
        else if (key == "pos_emb_dim") cfg.model.pos_emb_dim = size();
        else if (key == "hidden_channels") cfg.model.hidden_channels = size();
        else if (key == "conv_radius") cfg.model.conv_radius = size();
        else if (key == "layers_per_block") cfg.model.layers_per_block = size();
        else if (key == "num_blocks") cfg.model.num_blocks = size();
        else if (key == "num_labels") cfg.num_labels = size();
        else if (key == "input_dropout") cfg.model.input_dropout = real();
        else if (key == "block_dropout") cfg.model.block_dropout = real();
        else if (key == "epochs") cfg.train.epochs = size();
        else if (key == "batch_size") cfg.train.batch_size = size();
        else if (key == "learning_rate") cfg.train.learning_rate = real();
        else if (key == "optimizer") cfg.train.optimizer = parse_optimizer(value);
        else if (key == "adam_beta1") cfg.train.adam_beta1 = real();
        else if (key == "adam_beta2") cfg.train.adam_beta2 = real();
        else if (key == "adam_eps") cfg.train.adam_eps = real();
        else if (key == "clip_norm") {
            if (value == "none") cfg.train.clip_norm.reset();
            else cfg.train.clip_norm = real();
        }
        else if (key == "seed") cfg.train.seed = detail::parse_number<std::uint64_t>(value, where);
        else if (key == "eval_every") cfg.train.eval_every = size();
        else if (key == "threads") cfg.train.threads = size();
        else if (key == "convention") cfg.train.convention = parse_convention(value);
        else if (key == "min_count") cfg.min_count = size();
        else if (key == "precision") {
            if (value == "float32") cfg.precision = DType::Float32;
            else if (value == "float64") cfg.precision = DType::Float64;
            else throw ConfigError(where + ": precision must be float32 or float64");
        }
        else throw ConfigError(where + ": unknown key '" + key + "'");
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    return parse_config(in, path);
}

}  // namespace digcnn
