#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "digcnn/checkpoint.hpp"
#include "digcnn/decoder.hpp"
#include "digcnn/eval.hpp"
#include "digcnn/model.hpp"

namespace digcnn {

enum class Optimizer { Sgd, Adam };

inline Optimizer parse_optimizer(std::string_view s) {
    if (s == "sgd") return Optimizer::Sgd;
    if (s == "adam") return Optimizer::Adam;
    throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

inline const char* to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::optional<double> clip_norm = 5.0;
    std::uint64_t seed = 1;
    std::size_t eval_every = 0;  // sentences between dev evaluations; 0 = once per epoch
    std::size_t threads = 1;
    PunctConvention convention = PunctConvention::Ud;

    void validate() const {
        if (epochs == 0) throw ConfigError("train config: epochs must be positive");
        if (batch_size == 0) throw ConfigError("train config: batch_size must be positive");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw ConfigError("train config: learning_rate must be a non-negative number");
        }
        if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("train config: clip_norm must be positive");
        if (threads == 0) throw ConfigError("train config: threads must be positive");
    }
};

/// Mean over block applications of the mean per-dependent negative
/// log-likelihood of the gold (head, label) pair.
template <typename T>
Var<T> sentence_loss(const std::vector<Var<T>>& per_block_scores, const TokenSentence& gold) {
    if (per_block_scores.empty()) throw ContractViolation("sentence_loss: no block scores");
    if (!gold.has_gold() || gold.gold_labels.size() != gold.size()) {
        throw ContractViolation("sentence_loss: sentence has no gold heads/labels");
    }
    const std::size_t n = gold.size();
    std::vector<Var<T>> losses;
    losses.reserve(per_block_scores.size());
    for (const Var<T>& scores : per_block_scores) {
        const Shape& s = scores.shape();
        if (s.size() != 3 || s[0] != n || s[1] != n) {
            throw ContractViolation("sentence_loss: score grid " + shape_string(s) + " does not match a sentence of " +
                                    std::to_string(n) + " positions");
        }
        const std::size_t labels = s[2];
        std::vector<std::size_t> picks;
        picks.reserve(n - 1);
        for (std::size_t d = 1; d < n; ++d) {
            const int h = gold.gold_heads[d];
            const int l = gold.gold_labels[d];
            if (h < 0 || static_cast<std::size_t>(h) >= n || static_cast<std::size_t>(h) == d || l < 0 ||
                static_cast<std::size_t>(l) >= labels) {
                throw ContractViolation("sentence_loss: gold arc of token " + std::to_string(d) + " is not scorable");
            }
            picks.push_back((d * n + static_cast<std::size_t>(h)) * labels + static_cast<std::size_t>(l));
        }
        losses.push_back(negative_mean_at(dependent_log_probs(scores), std::move(picks)));
    }
    return losses.size() == 1 ? losses.front() : mean(losses);
}

struct MetricEvent {
    std::size_t epoch = 0;
    std::size_t step = 0;
    std::string metric;
    double value = 0.0;
};

inline std::string format_metric(const MetricEvent& e) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", e.value);
    return std::to_string(e.epoch) + "\t" + std::to_string(e.step) + "\t" + e.metric + "\t" + buf;
}

template <typename T>
struct TrainResult {
    ModelParams<T> best_params;
    std::vector<MetricEvent> log;
    std::optional<double> best_dev_las;
};

template <typename T>
std::vector<ParseTree> parse_all(const std::vector<TokenSentence>& sentences, const ModelParams<T>& params,
                                 const ModelConfig& config, DecoderKind decoder, EisnerOptions options = {},
                                 std::size_t threads = 1) {
    std::vector<ParseTree> out(sentences.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = decode(predict_scores(sentences[i], params, config), decoder, options);
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, sentences.size()));
    if (threads == 1) {
        work(0, sentences.size());
        return out;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (sentences.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk, end = std::min(sentences.size(), begin + chunk);
        if (begin < end) pool.emplace_back(work, begin, end);
    }
    return out;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

template <typename T>
void copy_values(const ModelParams<T>& from, ModelParams<T>& to) {
    auto src = from.named_parameters();
    auto dst = to.named_parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.mutable_value() = src[i].second.value();
}

}  // namespace detail

/// Mini-batch training on the per-block averaged loss. Returns the parameters
/// with the best dev LAS under greedy decoding (the final parameters when
/// dev is empty) and the metrics log.
template <typename T>
TrainResult<T> train(const std::vector<TokenSentence>& train_set, const std::vector<TokenSentence>& dev_set,
                     const ModelConfig& model_config, const Vocabulary& vocab, const TrainConfig& cfg,
                     const std::function<void(const MetricEvent&)>& on_event = {}) {
    model_config.validate();
    cfg.validate();
    if (train_set.empty()) throw DataError("train: training set is empty");
    if (model_config.num_labels != vocab.num_labels()) {
        throw ConfigError("train: model has " + std::to_string(model_config.num_labels) + " labels, vocabulary has " +
                          std::to_string(vocab.num_labels()));
    }

    Rng rng(cfg.seed);
    ModelParams<T> params(model_config, vocab.num_words(), vocab.num_pos());
    params.initialize(rng);
    auto named = params.named_parameters();

    std::vector<Tensor<T>> adam_m, adam_v;
    for (const auto& [name, v] : named) {
        adam_m.emplace_back(v.shape());
        adam_v.emplace_back(v.shape());
    }

    const std::size_t workers = std::min(cfg.threads, cfg.batch_size);
    std::vector<ModelParams<T>> replicas;
    std::vector<std::vector<std::pair<std::string, Var<T>>>> replica_named;
    for (std::size_t w = 1; w < workers; ++w) {
        replicas.push_back(params.clone());
        replica_named.push_back(replicas.back().named_parameters());
    }

    TrainResult<T> result;
    auto emit = [&](MetricEvent e) {
        if (on_event) on_event(e);
        result.log.push_back(std::move(e));
    };

    auto evaluate_dev = [&](std::size_t epoch, std::size_t step) {
        if (dev_set.empty()) return;
        auto trees = parse_all(dev_set, params, model_config, DecoderKind::Greedy, {}, cfg.threads);
        EvalReport report = evaluate(dev_set, trees, cfg.convention);
        emit({epoch, step, "dev_uas", report.uas});
        emit({epoch, step, "dev_las", report.las});
        if (!result.best_dev_las || report.las > *result.best_dev_las) {
            result.best_dev_las = report.las;
            result.best_params = params.clone();
        }
    };

    std::vector<std::size_t> order(train_set.size());
    std::size_t step = 0;
    std::size_t since_eval = 0;
    std::size_t adam_t = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(detail::uniform01(rng) * static_cast<double>(i));
            std::swap(order[i - 1], order[std::min(j, i - 1)]);
        }

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::size_t count = end - start;
            ++step;

            params.zero_grad();
            for (auto& r : replicas) {
                detail::copy_values(params, r);
                r.zero_grad();
            }
            // Each worker takes a contiguous slice of the batch and accumulates
            // into its own parameter copy; slices are reduced in worker order.
            std::vector<T> worker_loss(workers, T{0});
            auto run = [&](std::size_t w, std::size_t begin, std::size_t stop) {
                const ModelParams<T>& p = w == 0 ? params : replicas[w - 1];
                for (std::size_t k = begin; k < stop; ++k) {
                    const std::size_t index = order[k];
                    Rng dropout_rng(detail::splitmix64(cfg.seed ^ detail::splitmix64(epoch * 0x100000001ull + index)));
                    auto scores = forward(train_set[index], p, model_config, Mode::Train, dropout_rng);
                    Var<T> loss = sentence_loss(scores, train_set[index]);
                    worker_loss[w] += loss.value()[0];
                    backward(loss);
                }
            };
            const std::size_t active = std::min(workers, count);
            const std::size_t chunk = (count + active - 1) / active;
            if (active == 1) {
                run(0, start, end);
            } else {
                std::vector<std::jthread> pool;
                for (std::size_t w = 0; w < active; ++w) {
                    const std::size_t b = start + w * chunk, e = std::min(end, b + chunk);
                    if (b < e) pool.emplace_back(run, w, b, e);
                }
            }

            T batch_loss{0};
            for (T l : worker_loss) batch_loss += l;
            batch_loss /= static_cast<T>(count);
            if (!std::isfinite(static_cast<double>(batch_loss))) {
                throw DivergenceError("training diverged: loss is " + std::to_string(static_cast<double>(batch_loss)) +
                                      " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(step));
            }
            emit({epoch, step, "train_loss", static_cast<double>(batch_loss)});

            // Reduce and average gradients.
            const T inv = T{1} / static_cast<T>(count);
            double norm_sq = 0.0;
            std::vector<Tensor<T>*> grads;
            for (std::size_t i = 0; i < named.size(); ++i) {
                Tensor<T>& g = named[i].second.mutable_grad();
                for (std::size_t w = 1; w < active; ++w) {
                    const Var<T>& rv = replica_named[w - 1][i].second;
                    if (!rv.has_grad()) continue;
                    for (std::size_t j = 0; j < g.size(); ++j) g[j] += rv.grad()[j];
                }
                for (T& v : g.data()) {
                    v *= inv;
                    norm_sq += static_cast<double>(v) * static_cast<double>(v);
                }
                grads.push_back(&g);
            }
            T clip_scale{1};
            if (cfg.clip_norm) {
                const double norm = std::sqrt(norm_sq);
                if (norm > *cfg.clip_norm) clip_scale = static_cast<T>(*cfg.clip_norm / norm);
            }

            const T lr = static_cast<T>(cfg.learning_rate);
            if (cfg.optimizer == Optimizer::Sgd) {
                for (std::size_t i = 0; i < named.size(); ++i) {
                    auto value = named[i].second.mutable_value().data();
                    const auto& g = *grads[i];
                    for (std::size_t j = 0; j < value.size(); ++j) value[j] -= lr * clip_scale * g[j];
                }
            } else {
                ++adam_t;
                const T b1 = static_cast<T>(cfg.adam_beta1), b2 = static_cast<T>(cfg.adam_beta2);
                const T eps = static_cast<T>(cfg.adam_eps);
                const T corr1 = T{1} - static_cast<T>(std::pow(cfg.adam_beta1, static_cast<double>(adam_t)));
                const T corr2 = T{1} - static_cast<T>(std::pow(cfg.adam_beta2, static_cast<double>(adam_t)));
                for (std::size_t i = 0; i < named.size(); ++i) {
                    auto value = named[i].second.mutable_value().data();
                    const auto& g = *grads[i];
                    auto& m = adam_m[i];
                    auto& v = adam_v[i];
                    for (std::size_t j = 0; j < value.size(); ++j) {
                        const T gj = g[j] * clip_scale;
                        m[j] = b1 * m[j] + (T{1} - b1) * gj;
                        v[j] = b2 * v[j] + (T{1} - b2) * gj * gj;
                        value[j] -= lr * (m[j] / corr1) / (std::sqrt(v[j] / corr2) + eps);
                    }
                }
            }

            since_eval += count;
            const bool last_batch = epoch == cfg.epochs && end == order.size();
            if (cfg.eval_every > 0 && (since_eval >= cfg.eval_every || last_batch)) {
                evaluate_dev(epoch, step);
                since_eval = 0;
            }
        }
        if (cfg.eval_every == 0) evaluate_dev(epoch, step);
    }
    if (!result.best_dev_las) result.best_params = params.clone();
    return result;
}

}  // namespace digcnn
