#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "digcnn/corpus.hpp"
#include "digcnn/ops.hpp"

namespace digcnn {

struct ModelConfig {
    std::size_t word_emb_dim = 100;
    std::size_t pos_emb_dim = 25;
    std::size_t hidden_channels = 128;
    std::size_t conv_radius = 1;
    std::size_t layers_per_block = 4;
    std::size_t num_blocks = 2;
    std::size_t num_labels = 1;
    double input_dropout = 0.15;
    double block_dropout = 0.25;

    void validate() const {
        auto positive = [](std::size_t v, const char* name) {
            if (v == 0) throw ConfigError(std::string("model config: ") + name + " must be positive");
        };
        positive(word_emb_dim, "word_emb_dim");
        positive(pos_emb_dim, "pos_emb_dim");
        positive(hidden_channels, "hidden_channels");
        positive(conv_radius, "conv_radius");
        positive(layers_per_block, "layers_per_block");
        positive(num_blocks, "num_blocks");
        positive(num_labels, "num_labels");
        if (layers_per_block > 16) throw ConfigError("model config: layers_per_block must be at most 16");
        for (double rate : {input_dropout, block_dropout}) {
            if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("model config: dropout rates must lie in [0, 1)");
        }
    }

    std::size_t token_dim() const { return word_emb_dim + pos_emb_dim; }

    /// Dilation of block layer k (0-based): 2^k for the exponential layers,
    /// 1 for the trailing layer k == layers_per_block.
    std::size_t dilation(std::size_t k) const { return k < layers_per_block ? std::size_t{1} << k : 1; }

    std::size_t block_radius() const {
        std::size_t radius = 0;
        for (std::size_t k = 0; k <= layers_per_block; ++k) radius += conv_radius * dilation(k);
        return radius;
    }

    std::size_t total_radius() const { return num_blocks * block_radius(); }

    bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct ModelParams {
    Var<T> word_embeddings;  // V_w x word_emb_dim
    Var<T> pos_embeddings;   // V_p x pos_emb_dim
    Conv2dKernel<T> input_conv;
    std::vector<Conv2dKernel<T>> block_layers;  // layers_per_block + 1, shared by every block application
    Var<T> output_weight;  // hidden x labels
    Var<T> output_bias;

    ModelParams() = default;

    /// Zero-initialized parameters with the shapes implied by the config.
    ModelParams(const ModelConfig& config, std::size_t num_words, std::size_t num_pos) {
        config.validate();
        const std::size_t hidden = config.hidden_channels;
        word_embeddings = Var<T>::leaf(Tensor<T>({num_words, config.word_emb_dim}), true);
        pos_embeddings = Var<T>::leaf(Tensor<T>({num_pos, config.pos_emb_dim}), true);
        // The pair-grid projection is pointwise, so a token's receptive field
        // is exactly the block stack's.
        input_conv = Conv2dKernel<T>(0, 1, 2 * config.token_dim(), hidden);
        for (std::size_t k = 0; k <= config.layers_per_block; ++k) {
            block_layers.emplace_back(config.conv_radius, config.dilation(k), hidden, hidden);
        }
        output_weight = Var<T>::leaf(Tensor<T>({hidden, config.num_labels}), true);
        output_bias = Var<T>::leaf(Tensor<T>({config.num_labels}), true);
    }

    /// Fixed-order list of every learned tensor with its serialized name.
    std::vector<std::pair<std::string, Var<T>>> named_parameters() const {
        std::vector<std::pair<std::string, Var<T>>> out;
        out.emplace_back("word_embeddings", word_embeddings);
        out.emplace_back("pos_embeddings", pos_embeddings);
        out.emplace_back("input_conv.weight", input_conv.weights);
        out.emplace_back("input_conv.bias", input_conv.bias);
        for (std::size_t k = 0; k < block_layers.size(); ++k) {
            out.emplace_back("block." + std::to_string(k) + ".weight", block_layers[k].weights);
            out.emplace_back("block." + std::to_string(k) + ".bias", block_layers[k].bias);
        }
        out.emplace_back("output.weight", output_weight);
        out.emplace_back("output.bias", output_bias);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, v] : named_parameters()) n += v.value().size();
        return n;
    }

    /// Deep copy with fresh graph leaves.
    ModelParams clone() const {
        ModelParams copy = *this;
        auto fresh = [](Var<T>& v) { v = Var<T>::leaf(v.value(), v.requires_grad()); };
        fresh(copy.word_embeddings);
        fresh(copy.pos_embeddings);
        fresh(copy.input_conv.weights);
        fresh(copy.input_conv.bias);
        for (auto& layer : copy.block_layers) {
            fresh(layer.weights);
            fresh(layer.bias);
        }
        fresh(copy.output_weight);
        fresh(copy.output_bias);
        return copy;
    }

    void zero_grad() {
        for (auto& [name, v] : named_parameters()) v.zero_grad();
    }

    /// Glorot-uniform kernels and projection, zero biases, embeddings
    /// uniform in +-sqrt(3 / dim).
    void initialize(Rng& rng) {
        auto fill_uniform = [&rng](Var<T>& v, double limit) {
            for (T& x : v.mutable_value().data()) x = static_cast<T>((2.0 * detail::uniform01(rng) - 1.0) * limit);
        };
        auto glorot = [&](Conv2dKernel<T>& kernel) {
            const double taps = static_cast<double>(kernel.width() * kernel.width());
            const double fan_in = taps * static_cast<double>(kernel.in_channels());
            const double fan_out = taps * static_cast<double>(kernel.out_channels());
            fill_uniform(kernel.weights, std::sqrt(6.0 / (fan_in + fan_out)));
            kernel.bias.mutable_value().fill(T{0});
        };
        fill_uniform(word_embeddings, std::sqrt(3.0 / static_cast<double>(word_embeddings.shape()[1])));
        fill_uniform(pos_embeddings, std::sqrt(3.0 / static_cast<double>(pos_embeddings.shape()[1])));
        glorot(input_conv);
        for (auto& layer : block_layers) glorot(layer);
        const auto& ws = output_weight.shape();
        fill_uniform(output_weight, std::sqrt(6.0 / static_cast<double>(ws[0] + ws[1])));
        output_bias.mutable_value().fill(T{0});
    }
};

/// Closed-form parameter count for a configuration and vocabulary sizes.
inline std::size_t expected_parameter_count(const ModelConfig& c, std::size_t num_words, std::size_t num_pos) {
    const std::size_t h = c.hidden_channels;
    const std::size_t k = 2 * c.conv_radius + 1;
    return num_words * c.word_emb_dim + num_pos * c.pos_emb_dim + 2 * c.token_dim() * h + h +
           (c.layers_per_block + 1) * (k * k * h * h + h) + h * c.num_labels + c.num_labels;
}

/// Row p is [word embedding ; POS embedding] of position p.
template <typename T>
Var<T> embed_tokens(const TokenSentence& sentence, const ModelParams<T>& params) {
    if (sentence.size() < 2) throw ContractViolation("embed_tokens: sentence needs the root and at least one token");
    if (sentence.word_ids.size() != sentence.size() || sentence.pos_ids.size() != sentence.size()) {
        throw ContractViolation("embed_tokens: sentence has no vocabulary ids assigned");
    }
    return concat_columns(embedding_lookup(params.word_embeddings, std::span<const std::size_t>(sentence.word_ids)),
                          embedding_lookup(params.pos_embeddings, std::span<const std::size_t>(sentence.pos_ids)));
}

/// N x N x 2C grid whose cell (d, h) is [x_d ; x_h].
template <typename T>
Var<T> build_edge_input(const Var<T>& tokens) {
    if (tokens.value().rank() != 2 || tokens.shape()[0] < 2) {
        throw ContractViolation("build_edge_input: need an N x C token matrix with N >= 2");
    }
    return pair_grid(tokens);
}

/// One application of the shared block: conv + ReLU for each layer in order.
template <typename T>
Var<T> block_forward(const Var<T>& grid, const std::vector<Conv2dKernel<T>>& layers) {
    Var<T> x = grid;
    for (const auto& layer : layers) x = relu(conv2d_dilated(x, layer));
    return x;
}

/// Runs the network and returns the raw N x N x D scores after every block
/// application, in order. Inference uses the last entry.
template <typename T>
std::vector<Var<T>> forward(const TokenSentence& sentence, const ModelParams<T>& params, const ModelConfig& config,
                            Mode mode, Rng& rng) {
    Var<T> grid = build_edge_input(embed_tokens(sentence, params));
    grid = dropout(grid, config.input_dropout, mode, rng);
    Var<T> state = conv2d_dilated(grid, params.input_conv);
    std::vector<Var<T>> scores;
    scores.reserve(config.num_blocks);
    for (std::size_t m = 0; m < config.num_blocks; ++m) {
        state = dropout(block_forward(state, params.block_layers), config.block_dropout, mode, rng);
        scores.push_back(affine(state, params.output_weight, params.output_bias));
    }
    return scores;
}

/// Decode mask of an N x N x D score grid: dependent 0 (the root) and the
/// self-arc cells (d, d) are excluded.
inline std::vector<std::uint8_t> score_mask(std::size_t n, std::size_t labels) {
    std::vector<std::uint8_t> mask(n * n * labels, 1);
    for (std::size_t i = 0; i < n * labels; ++i) mask[i] = 0;
    for (std::size_t d = 0; d < n; ++d) {
        for (std::size_t l = 0; l < labels; ++l) mask[(d * n + d) * labels + l] = 0;
    }
    return mask;
}

/// Per-dependent masked log-softmax over the joint (head, label) outcomes.
template <typename T>
Var<T> dependent_log_probs(const Var<T>& scores) {
    const Shape& s = scores.shape();
    if (s.size() != 3 || s[0] != s[1] || s[0] < 2) {
        throw ContractViolation("dependent_log_probs: expected N x N x D scores, got " + shape_string(s));
    }
    return log_softmax_rows(scores, score_mask(s[0], s[2]), s[1] * s[2]);
}

template <typename T>
Tensor<T> dependent_log_probs(const Tensor<T>& scores) {
    NoGradGuard guard;
    return dependent_log_probs(Var<T>::leaf(scores)).value();
}

/// Inference-mode scores of the last block.
template <typename T>
Tensor<T> predict_scores(const TokenSentence& sentence, const ModelParams<T>& params, const ModelConfig& config) {
    NoGradGuard guard;
    Rng unused(0);
    auto scores = forward(sentence, params, config, Mode::Infer, unused);
    return scores.back().value();
}

}  // namespace digcnn
