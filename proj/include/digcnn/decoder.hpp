#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "digcnn/corpus.hpp"
#include "digcnn/model.hpp"

namespace digcnn {

/// Best-label arc scores for tree decoding. Entry (d, h) scores the arc h -> d.
template <typename T>
struct ArcScoreMatrix {
    std::size_t n = 0;
    std::vector<T> scores;     // n x n, row = dependent
    std::vector<int> best_label;  // n x n, -1 where masked

    ArcScoreMatrix() = default;
    explicit ArcScoreMatrix(std::size_t n_)
        : n(n_), scores(n_ * n_, -std::numeric_limits<T>::infinity()), best_label(n_ * n_, -1) {}

    T& at(std::size_t d, std::size_t h) { return scores[d * n + h]; }
    T at(std::size_t d, std::size_t h) const { return scores[d * n + h]; }
    int label(std::size_t d, std::size_t h) const { return best_label[d * n + h]; }
};

namespace detail {

template <typename T>
void check_score_grid(const Tensor<T>& scores, const char* who) {
    if (scores.rank() != 3 || scores.dim(0) != scores.dim(1) || scores.dim(0) < 2) {
        throw ContractViolation(std::string(who) + ": expected N x N x D scores with N >= 2, got " +
                                shape_string(scores.shape()));
    }
}

inline ParseTree empty_tree(std::size_t n) {
    ParseTree t;
    t.heads.assign(n, -1);
    t.labels.assign(n, -1);
    return t;
}

}  // namespace detail

/// Independent per-dependent argmax over (head, label); ties go to the lowest
/// head, then the lowest label. The result need not be a tree.
template <typename T>
ParseTree greedy_decode(const Tensor<T>& scores) {
    detail::check_score_grid(scores, "greedy_decode");
    const std::size_t n = scores.dim(0), labels = scores.dim(2);
    ParseTree tree = detail::empty_tree(n);
    for (std::size_t d = 1; d < n; ++d) {
        bool found = false;
        T best{};
        for (std::size_t h = 0; h < n; ++h) {
            if (h == d) continue;
            for (std::size_t l = 0; l < labels; ++l) {
                const T v = scores.at(d, h, l);
                if (!found || v > best) {
                    found = true;
                    best = v;
                    tree.heads[d] = static_cast<int>(h);
                    tree.labels[d] = static_cast<int>(l);
                }
            }
        }
    }
    return tree;
}

/// Per-dependent log-probabilities maximized over labels.
template <typename T>
ArcScoreMatrix<T> reduce_to_arc_scores(const Tensor<T>& scores) {
    detail::check_score_grid(scores, "reduce_to_arc_scores");
    const std::size_t n = scores.dim(0), labels = scores.dim(2);
    const Tensor<T> logp = dependent_log_probs(scores);
    ArcScoreMatrix<T> arcs(n);
    for (std::size_t d = 1; d < n; ++d) {
        for (std::size_t h = 0; h < n; ++h) {
            if (h == d) continue;
            T best = logp.at(d, h, 0);
            int arg = 0;
            for (std::size_t l = 1; l < labels; ++l) {
                if (logp.at(d, h, l) > best) {
                    best = logp.at(d, h, l);
                    arg = static_cast<int>(l);
                }
            }
            arcs.at(d, h) = best;
            arcs.best_label[d * n + h] = arg;
        }
    }
    return arcs;
}

/// Sum of the arc scores a tree selects.
template <typename T>
T tree_score(const ArcScoreMatrix<T>& arcs, const ParseTree& tree) {
    T total{0};
    for (std::size_t d = 1; d < tree.size(); ++d) total += arcs.at(d, static_cast<std::size_t>(tree.heads[d]));
    return total;
}

struct EisnerOptions {
    /// Allow exactly one dependent of the root.
    bool single_root = false;
};

/// Maximum-score projective tree rooted at position 0 by the O(N^3)
/// complete/incomplete span recursion. Labels come from best_label.
template <typename T>
ParseTree eisner_decode(const ArcScoreMatrix<T>& arcs, EisnerOptions options = {}) {
    const std::size_t n = arcs.n;
    if (n < 2) throw ContractViolation("eisner_decode: need the root and at least one token");
    constexpr T neg_inf = -std::numeric_limits<T>::infinity();

    // Spans [s, t]. "right" spans are headed at s, "left" spans at t.
    enum { Left = 0, Right = 1 };
    auto idx = [n](std::size_t s, std::size_t t, int dir) { return (s * n + t) * 2 + static_cast<std::size_t>(dir); };
    std::vector<T> complete(n * n * 2, neg_inf), incomplete(n * n * 2, neg_inf);
    std::vector<std::size_t> complete_split(n * n * 2, 0), incomplete_split(n * n * 2, 0);
    for (std::size_t s = 0; s < n; ++s) {
        complete[idx(s, s, Left)] = T{0};
        complete[idx(s, s, Right)] = T{0};
    }

    for (std::size_t width = 1; width < n; ++width) {
        for (std::size_t s = 0; s + width < n; ++s) {
            const std::size_t t = s + width;
            // Incomplete spans: arc between s and t over two facing complete halves.
            T best_l = neg_inf, best_r = neg_inf;
            std::size_t arg_l = s, arg_r = s;
            const std::size_t last_split = (options.single_root && s == 0) ? 0 : t - 1;
            for (std::size_t q = s; q < t; ++q) {
                const T inner = complete[idx(s, q, Right)] + complete[idx(q + 1, t, Left)];
                if (q == s || inner + arcs.at(s, t) > best_l) {
                    best_l = inner + arcs.at(s, t);
                    arg_l = q;
                }
                if (q <= last_split && (q == s || inner + arcs.at(t, s) > best_r)) {
                    best_r = inner + arcs.at(t, s);
                    arg_r = q;
                }
            }
            incomplete[idx(s, t, Left)] = best_l;
            incomplete_split[idx(s, t, Left)] = arg_l;
            incomplete[idx(s, t, Right)] = best_r;
            incomplete_split[idx(s, t, Right)] = arg_r;

            // Complete spans.
            T cbest_l = neg_inf, cbest_r = neg_inf;
            std::size_t carg_l = s, carg_r = t;
            for (std::size_t q = s; q < t; ++q) {
                const T v = complete[idx(s, q, Left)] + incomplete[idx(q, t, Left)];
                if (q == s || v > cbest_l) {
                    cbest_l = v;
                    carg_l = q;
                }
            }
            for (std::size_t q = s + 1; q <= t; ++q) {
                const T v = incomplete[idx(s, q, Right)] + complete[idx(q, t, Right)];
                if (q == s + 1 || v > cbest_r) {
                    cbest_r = v;
                    carg_r = q;
                }
            }
            complete[idx(s, t, Left)] = cbest_l;
            complete_split[idx(s, t, Left)] = carg_l;
            complete[idx(s, t, Right)] = cbest_r;
            complete_split[idx(s, t, Right)] = carg_r;
        }
    }

    ParseTree tree = detail::empty_tree(n);
    struct Item {
        std::size_t s, t;
        int dir;
        bool complete;
    };
    std::vector<Item> stack{{0, n - 1, Right, true}};
    while (!stack.empty()) {
        const Item it = stack.back();
        stack.pop_back();
        if (it.s == it.t) continue;
        if (it.complete) {
            const std::size_t q = complete_split[idx(it.s, it.t, it.dir)];
            if (it.dir == Left) {
                stack.push_back({it.s, q, Left, true});
                stack.push_back({q, it.t, Left, false});
            } else {
                stack.push_back({it.s, q, Right, false});
                stack.push_back({q, it.t, Right, true});
            }
        } else {
            const std::size_t q = incomplete_split[idx(it.s, it.t, it.dir)];
            const std::size_t head = it.dir == Left ? it.t : it.s;
            const std::size_t dep = it.dir == Left ? it.s : it.t;
            tree.heads[dep] = static_cast<int>(head);
            tree.labels[dep] = arcs.label(dep, head);
            stack.push_back({it.s, q, Right, true});
            stack.push_back({q + 1, it.t, Left, true});
        }
    }
    return tree;
}

/// Throws unless every real token has an in-range head, the root has none,
/// and every token reaches the root.
inline void check_tree(const ParseTree& tree) {
    const std::size_t n = tree.size();
    if (n < 1 || tree.heads[0] != -1) throw ContractViolation("tree: the root must not have a head");
    for (std::size_t d = 1; d < n; ++d) {
        const int h = tree.heads[d];
        if (h < 0 || static_cast<std::size_t>(h) >= n || static_cast<std::size_t>(h) == d) {
            throw ContractViolation("tree: token " + std::to_string(d) + " has invalid head " + std::to_string(h));
        }
    }
    for (std::size_t d = 1; d < n; ++d) {
        std::size_t cur = d;
        for (std::size_t steps = 0; cur != 0; ++steps) {
            if (steps >= n) throw ContractViolation("tree: token " + std::to_string(d) + " lies on a cycle");
            cur = static_cast<std::size_t>(tree.heads[cur]);
        }
    }
}

/// True iff every arc h -> d dominates all tokens strictly between h and d.
inline bool is_projective(const ParseTree& tree) {
    check_tree(tree);
    const std::size_t n = tree.size();
    auto dominated_by = [&](std::size_t node, std::size_t ancestor) {
        while (node != ancestor && node != 0) node = static_cast<std::size_t>(tree.heads[node]);
        return node == ancestor;
    };
    for (std::size_t d = 1; d < n; ++d) {
        const auto h = static_cast<std::size_t>(tree.heads[d]);
        const std::size_t lo = std::min(h, d), hi = std::max(h, d);
        for (std::size_t k = lo + 1; k < hi; ++k) {
            if (!dominated_by(k, h)) return false;
        }
    }
    return true;
}

enum class DecoderKind { Greedy, Eisner };

inline DecoderKind parse_decoder(std::string_view s) {
    if (s == "greedy") return DecoderKind::Greedy;
    if (s == "eisner") return DecoderKind::Eisner;
    throw ConfigError("unknown decoder '" + std::string(s) + "' (expected greedy or eisner)");
}

template <typename T>
ParseTree decode(const Tensor<T>& scores, DecoderKind kind, EisnerOptions options = {}) {
    if (kind == DecoderKind::Greedy) return greedy_decode(scores);
    return eisner_decode(reduce_to_arc_scores(scores), options);
}

}  // namespace digcnn
