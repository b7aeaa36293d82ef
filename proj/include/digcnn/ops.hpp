#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "digcnn/autodiff.hpp"

namespace digcnn {

using Rng = std::mt19937_64;

enum class Mode { Train, Infer };

namespace detail {

template <typename T>
Tensor<T>* grad_of(const std::shared_ptr<Node<T>>& parent) {
    return parent->requires_grad ? &parent->ensure_grad() : nullptr;
}

/// Uniform double in [0,1) built from the top 53 bits; independent of the
/// standard library's distribution implementations.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Square dilated 2-D convolution kernel. weights are laid out
/// (2r+1) x (2r+1) x in x out so the output channel is the contiguous axis.
template <typename T>
struct Conv2dKernel {
    std::size_t radius = 0;
    std::size_t dilation = 1;
    Var<T> weights;
    Var<T> bias;

    Conv2dKernel() = default;

    Conv2dKernel(std::size_t radius_, std::size_t dilation_, std::size_t in_channels, std::size_t out_channels,
                 bool requires_grad = true)
        : radius(radius_), dilation(dilation_) {
        if (dilation == 0) throw ContractViolation("Conv2dKernel: dilation must be >= 1");
        const std::size_t k = 2 * radius + 1;
        weights = Var<T>::leaf(Tensor<T>({k, k, in_channels, out_channels}), requires_grad);
        bias = Var<T>::leaf(Tensor<T>({out_channels}), requires_grad);
    }

    std::size_t width() const { return 2 * radius + 1; }
    std::size_t in_channels() const { return weights.shape()[2]; }
    std::size_t out_channels() const { return weights.shape()[3]; }
};

/// Same-size dilated convolution with zero padding:
/// out(y,x,o) = bias(o) + sum_{a,b in [-r,r], c} w(a,b,c,o) * in(y + d*a, x + d*b, c).
/// Accumulation runs over kernel offsets, then input channels.
template <typename T>
Var<T> conv2d_dilated(const Var<T>& input, const Conv2dKernel<T>& kernel) {
    const Tensor<T>& in = input.value();
    const Tensor<T>& w = kernel.weights.value();
    const Tensor<T>& b = kernel.bias.value();
    if (in.rank() != 3) {
        throw ContractViolation("conv2d_dilated: input must be rank 3 (H x W x C), got " + shape_string(in.shape()));
    }
    if (w.rank() != 4 || w.dim(0) != w.dim(1) || w.dim(0) != kernel.width()) {
        throw ContractViolation("conv2d_dilated: kernel weights have shape " + shape_string(w.shape()) +
                                ", expected square window of width " + std::to_string(kernel.width()));
    }
    if (in.dim(2) != w.dim(2)) {
        throw ContractViolation("conv2d_dilated: input axis 2 (channels) has extent " + std::to_string(in.dim(2)) +
                                " but kernel expects " + std::to_string(w.dim(2)));
    }
    if (b.size() != w.dim(3)) {
        throw ContractViolation("conv2d_dilated: bias axis 0 has extent " + std::to_string(b.size()) +
                                " but kernel has " + std::to_string(w.dim(3)) + " output channels");
    }

    const auto height = static_cast<std::ptrdiff_t>(in.dim(0));
    const auto width = static_cast<std::ptrdiff_t>(in.dim(1));
    const std::size_t cin = in.dim(2);
    const std::size_t cout = w.dim(3);
    const auto r = static_cast<std::ptrdiff_t>(kernel.radius);
    const auto delta = static_cast<std::ptrdiff_t>(kernel.dilation);
    const std::size_t k = kernel.width();

    Tensor<T> out({in.dim(0), in.dim(1), cout});
    const T* pin = in.data().data();
    const T* pw = w.data().data();
    T* pout = out.data().data();
    for (std::ptrdiff_t y = 0; y < height; ++y) {
        for (std::ptrdiff_t x = 0; x < width; ++x) {
            T* acc = pout + (y * width + x) * cout;
            std::copy(b.data().begin(), b.data().end(), acc);
            for (std::ptrdiff_t a = -r; a <= r; ++a) {
                const std::ptrdiff_t sy = y + delta * a;
                if (sy < 0 || sy >= height) continue;
                for (std::ptrdiff_t bb = -r; bb <= r; ++bb) {
                    const std::ptrdiff_t sx = x + delta * bb;
                    if (sx < 0 || sx >= width) continue;
                    const T* src = pin + (sy * width + sx) * cin;
                    const T* wtap = pw + ((a + r) * static_cast<std::ptrdiff_t>(k) + (bb + r)) * cin * cout;
                    for (std::size_t c = 0; c < cin; ++c) {
                        const T v = src[c];
                        const T* wrow = wtap + c * cout;
                        for (std::size_t o = 0; o < cout; ++o) acc[o] += wrow[o] * v;
                    }
                }
            }
        }
    }

    return Var<T>::op(std::move(out), {input, kernel.weights, kernel.bias},
                      [=](Node<T>& self) {
                          const auto& in_node = self.parents[0];
                          const auto& w_node = self.parents[1];
                          const auto& b_node = self.parents[2];
                          Tensor<T>* gin = detail::grad_of(in_node);
                          Tensor<T>* gw = detail::grad_of(w_node);
                          Tensor<T>* gb = detail::grad_of(b_node);
                          const T* g = self.grad.data().data();
                          const T* vin = in_node->value.data().data();
                          const T* vw = w_node->value.data().data();
                          for (std::ptrdiff_t y = 0; y < height; ++y) {
                              for (std::ptrdiff_t x = 0; x < width; ++x) {
                                  const T* gcell = g + (y * width + x) * cout;
                                  if (gb) {
                                      T* pgb = gb->data().data();
                                      for (std::size_t o = 0; o < cout; ++o) pgb[o] += gcell[o];
                                  }
                                  for (std::ptrdiff_t a = -r; a <= r; ++a) {
                                      const std::ptrdiff_t sy = y + delta * a;
                                      if (sy < 0 || sy >= height) continue;
                                      for (std::ptrdiff_t bb = -r; bb <= r; ++bb) {
                                          const std::ptrdiff_t sx = x + delta * bb;
                                          if (sx < 0 || sx >= width) continue;
                                          const std::ptrdiff_t src_off = (sy * width + sx) * cin;
                                          const std::ptrdiff_t tap_off =
                                              ((a + r) * static_cast<std::ptrdiff_t>(k) + (bb + r)) * cin * cout;
                                          for (std::size_t c = 0; c < cin; ++c) {
                                              const T* wrow = vw + tap_off + c * cout;
                                              if (gin) {
                                                  T s{0};
                                                  for (std::size_t o = 0; o < cout; ++o) s += wrow[o] * gcell[o];
                                                  gin->data()[src_off + c] += s;
                                              }
                                              if (gw) {
                                                  const T v = vin[src_off + c];
                                                  T* gwrow = gw->data().data() + tap_off + c * cout;
                                                  for (std::size_t o = 0; o < cout; ++o) gwrow[o] += v * gcell[o];
                                              }
                                          }
                                      }
                                  }
                              }
                          }
                      });
}

/// Elementwise max(0, v). The subgradient at exactly 0 is 0.
template <typename T>
Var<T> relu(const Var<T>& input) {
    Tensor<T> out = input.value();
    for (T& v : out.data()) v = v > T{0} ? v : T{0};
    return Var<T>::op(std::move(out), {input}, [](Node<T>& self) {
        Tensor<T>* gin = detail::grad_of(self.parents[0]);
        if (!gin) return;
        const auto& x = self.parents[0]->value;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] > T{0}) (*gin)[i] += self.grad[i];
        }
    });
}

/// Matrix product over the trailing axis plus bias, broadcast over leading axes.
template <typename T>
Var<T> affine(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
    const Tensor<T>& x = input.value();
    const Tensor<T>& w = weight.value();
    const Tensor<T>& b = bias.value();
    if (x.rank() == 0) throw ContractViolation("affine: input must have at least one axis");
    if (w.rank() != 2) throw ContractViolation("affine: weight must be rank 2, got " + shape_string(w.shape()));
    const std::size_t cin = x.shape().back();
    if (cin != w.dim(0)) {
        throw ContractViolation("affine: input axis " + std::to_string(x.rank() - 1) + " has extent " +
                                std::to_string(cin) + " but weight has " + std::to_string(w.dim(0)) + " rows");
    }
    const std::size_t cout = w.dim(1);
    if (b.size() != cout) {
        throw ContractViolation("affine: bias has " + std::to_string(b.size()) + " entries, expected " +
                                std::to_string(cout));
    }
    const std::size_t rows = x.size() / cin;
    Shape out_shape = x.shape();
    out_shape.back() = cout;
    Tensor<T> out(out_shape);
    for (std::size_t m = 0; m < rows; ++m) {
        T* orow = out.data().data() + m * cout;
        std::copy(b.data().begin(), b.data().end(), orow);
        const T* xrow = x.data().data() + m * cin;
        for (std::size_t i = 0; i < cin; ++i) {
            const T v = xrow[i];
            const T* wrow = w.data().data() + i * cout;
            for (std::size_t o = 0; o < cout; ++o) orow[o] += v * wrow[o];
        }
    }
    return Var<T>::op(std::move(out), {input, weight, bias}, [rows, cin, cout](Node<T>& self) {
        Tensor<T>* gx = detail::grad_of(self.parents[0]);
        Tensor<T>* gw = detail::grad_of(self.parents[1]);
        Tensor<T>* gb = detail::grad_of(self.parents[2]);
        const T* xv = self.parents[0]->value.data().data();
        const T* wv = self.parents[1]->value.data().data();
        for (std::size_t m = 0; m < rows; ++m) {
            const T* g = self.grad.data().data() + m * cout;
            if (gb) {
                for (std::size_t o = 0; o < cout; ++o) (*gb)[o] += g[o];
            }
            for (std::size_t i = 0; i < cin; ++i) {
                if (gx) {
                    T s{0};
                    for (std::size_t o = 0; o < cout; ++o) s += wv[i * cout + o] * g[o];
                    (*gx)[m * cin + i] += s;
                }
                if (gw) {
                    const T v = xv[m * cin + i];
                    T* gwrow = gw->data().data() + i * cout;
                    for (std::size_t o = 0; o < cout; ++o) gwrow[o] += v * g[o];
                }
            }
        }
    });
}

/// Inverted dropout. Identity in infer mode or when rate is 0.
template <typename T>
Var<T> dropout(const Var<T>& input, double rate, Mode mode, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (mode == Mode::Infer || rate == 0.0) return input;
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> mask(input.shape());
    Tensor<T> out = input.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = detail::uniform01(rng) >= rate ? scale : T{0};
        out[i] *= mask[i];
    }
    return Var<T>::op(std::move(out), {input}, [mask = std::move(mask)](Node<T>& self) {
        Tensor<T>* gin = detail::grad_of(self.parents[0]);
        if (!gin) return;
        for (std::size_t i = 0; i < mask.size(); ++i) (*gin)[i] += self.grad[i] * mask[i];
    });
}

/// Max-stabilized log-softmax over the unmasked entries. Masked entries are -inf.
template <typename T>
std::vector<T> log_softmax_masked(std::span<const T> scores, std::span<const std::uint8_t> mask) {
    if (scores.size() != mask.size()) {
        throw ContractViolation("log_softmax_masked: " + std::to_string(scores.size()) + " scores but " +
                                std::to_string(mask.size()) + " mask entries");
    }
    constexpr T neg_inf = -std::numeric_limits<T>::infinity();
    T best = neg_inf;
    bool any = false;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (mask[i] && (!any || scores[i] > best)) {
            best = scores[i];
            any = true;
        }
    }
    if (!any) throw InvalidDistribution("log_softmax_masked: every entry is masked");
    T total{0};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (mask[i]) total += std::exp(scores[i] - best);
    }
    const T log_total = std::log(total);
    std::vector<T> out(scores.size(), neg_inf);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (mask[i]) out[i] = (scores[i] - best) - log_total;
    }
    return out;
}

/// Row-wise masked log-softmax: the input is viewed as rows of row_len entries
/// and mask has one flag per entry. Rows whose entries are all masked come out
/// as -inf and receive no gradient.
template <typename T>
Var<T> log_softmax_rows(const Var<T>& input, std::vector<std::uint8_t> mask, std::size_t row_len) {
    const Tensor<T>& x = input.value();
    if (row_len == 0 || x.size() % row_len != 0 || mask.size() != x.size()) {
        throw ContractViolation("log_softmax_rows: input of " + std::to_string(x.size()) +
                                " entries, mask of " + std::to_string(mask.size()) + ", row length " +
                                std::to_string(row_len));
    }
    const std::size_t rows = x.size() / row_len;
    Tensor<T> out(x.shape(), -std::numeric_limits<T>::infinity());
    for (std::size_t row = 0; row < rows; ++row) {
        const std::size_t off = row * row_len;
        std::span<const std::uint8_t> row_mask(mask.data() + off, row_len);
        if (std::none_of(row_mask.begin(), row_mask.end(), [](std::uint8_t m) { return m != 0; })) continue;
        auto lp = log_softmax_masked<T>(x.data().subspan(off, row_len), row_mask);
        std::copy(lp.begin(), lp.end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    }
    return Var<T>::op(std::move(out), {input}, [rows, row_len, mask = std::move(mask)](Node<T>& self) {
        Tensor<T>* gin = detail::grad_of(self.parents[0]);
        if (!gin) return;
        // d/dx_i = g_i - p_i * sum_j g_j over unmasked entries.
        for (std::size_t row = 0; row < rows; ++row) {
            const std::size_t off = row * row_len;
            T gsum{0};
            for (std::size_t i = off; i < off + row_len; ++i) {
                if (mask[i]) gsum += self.grad[i];
            }
            for (std::size_t i = off; i < off + row_len; ++i) {
                if (mask[i]) (*gin)[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
            }
        }
    });
}

/// -(1/n) * sum of the selected flat entries; a scalar.
template <typename T>
Var<T> negative_mean_at(const Var<T>& input, std::vector<std::size_t> indices) {
    if (indices.empty()) throw ContractViolation("negative_mean_at: no indices");
    const Tensor<T>& x = input.value();
    // Running mean: exact when all selected entries are equal.
    T running{0};
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= x.size()) throw ContractViolation("negative_mean_at: index out of range");
        running += (x[indices[k]] - running) / static_cast<T>(k + 1);
    }
    const T inv = T{1} / static_cast<T>(indices.size());
    return Var<T>::op(Tensor<T>::scalar(-running), {input}, [inv, indices = std::move(indices)](Node<T>& self) {
        Tensor<T>* gin = detail::grad_of(self.parents[0]);
        if (!gin) return;
        for (std::size_t idx : indices) (*gin)[idx] -= self.grad[0] * inv;
    });
}

template <typename T>
Var<T> sum(const Var<T>& input) {
    T total{0};
    for (T v : input.value().data()) total += v;
    return Var<T>::op(Tensor<T>::scalar(total), {input}, [](Node<T>& self) {
        Tensor<T>* gin = detail::grad_of(self.parents[0]);
        if (!gin) return;
        for (T& g : gin->data()) g += self.grad[0];
    });
}

/// Arithmetic mean of equally shaped tensors, accumulated in argument order.
template <typename T>
Var<T> mean(const std::vector<Var<T>>& inputs) {
    if (inputs.empty()) throw ContractViolation("mean: no inputs");
    Tensor<T> out(inputs.front().shape());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Var<T>& v = inputs[k];
        if (v.shape() != out.shape()) throw ContractViolation("mean: shape mismatch");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += (v.value()[i] - out[i]) / static_cast<T>(k + 1);
    }
    const T inv = T{1} / static_cast<T>(inputs.size());
    return Var<T>::op(std::move(out), inputs, [inv](Node<T>& self) {
        for (const auto& parent : self.parents) {
            Tensor<T>* g = detail::grad_of(parent);
            if (!g) continue;
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * inv;
        }
    });
}

/// Gathers table rows: out(p, :) = table(ids[p], :).
template <typename T>
Var<T> embedding_lookup(const Var<T>& table, std::span<const std::size_t> ids) {
    const Tensor<T>& tab = table.value();
    if (tab.rank() != 2) throw ContractViolation("embedding_lookup: table must be rank 2");
    const std::size_t dim = tab.dim(1);
    if (ids.empty()) throw ContractViolation("embedding_lookup: no ids");
    Tensor<T> out({ids.size(), dim});
    for (std::size_t p = 0; p < ids.size(); ++p) {
        if (ids[p] >= tab.dim(0)) {
            throw DataError("embedding_lookup: index " + std::to_string(ids[p]) + " at position " +
                            std::to_string(p) + " outside vocabulary of size " + std::to_string(tab.dim(0)));
        }
        std::copy_n(tab.data().begin() + static_cast<std::ptrdiff_t>(ids[p] * dim), dim,
                    out.data().begin() + static_cast<std::ptrdiff_t>(p * dim));
    }
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    return Var<T>::op(std::move(out), {table}, [dim, rows = std::move(rows)](Node<T>& self) {
        Tensor<T>* g = detail::grad_of(self.parents[0]);
        if (!g) return;
        for (std::size_t p = 0; p < rows.size(); ++p) {
            for (std::size_t j = 0; j < dim; ++j) (*g)[rows[p] * dim + j] += self.grad[p * dim + j];
        }
    });
}

/// Concatenates two rank-2 tensors with equal row counts along the columns.
template <typename T>
Var<T> concat_columns(const Var<T>& left, const Var<T>& right) {
    const Tensor<T>& a = left.value();
    const Tensor<T>& b = right.value();
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
        throw ContractViolation("concat_columns: shapes " + shape_string(a.shape()) + " and " +
                                shape_string(b.shape()) + " are incompatible");
    }
    const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    Tensor<T> out({n, ca + cb});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = a.at(i, j);
        for (std::size_t j = 0; j < cb; ++j) out.at(i, ca + j) = b.at(i, j);
    }
    return Var<T>::op(std::move(out), {left, right}, [n, ca, cb](Node<T>& self) {
        Tensor<T>* ga = detail::grad_of(self.parents[0]);
        Tensor<T>* gb = detail::grad_of(self.parents[1]);
        for (std::size_t i = 0; i < n; ++i) {
            if (ga) {
                for (std::size_t j = 0; j < ca; ++j) ga->at(i, j) += self.grad.at(i, j);
            }
            if (gb) {
                for (std::size_t j = 0; j < cb; ++j) gb->at(i, j) += self.grad.at(i, ca + j);
            }
        }
    });
}

/// Pair grid over a sequence: cell (d, h) = [x_d ; x_h].
template <typename T>
Var<T> pair_grid(const Var<T>& tokens) {
    const Tensor<T>& x = tokens.value();
    if (x.rank() != 2) throw ContractViolation("pair_grid: tokens must be rank 2 (N x C)");
    const std::size_t n = x.dim(0), c = x.dim(1);
    Tensor<T> out({n, n, 2 * c});
    for (std::size_t d = 0; d < n; ++d) {
        for (std::size_t h = 0; h < n; ++h) {
            for (std::size_t j = 0; j < c; ++j) {
                out.at(d, h, j) = x.at(d, j);
                out.at(d, h, c + j) = x.at(h, j);
            }
        }
    }
    return Var<T>::op(std::move(out), {tokens}, [n, c](Node<T>& self) {
        Tensor<T>* g = detail::grad_of(self.parents[0]);
        if (!g) return;
        for (std::size_t d = 0; d < n; ++d) {
            for (std::size_t h = 0; h < n; ++h) {
                for (std::size_t j = 0; j < c; ++j) {
                    g->at(d, j) += self.grad.at(d, h, j);
                    g->at(h, j) += self.grad.at(d, h, c + j);
                }
            }
        }
    });
}

}  // namespace digcnn
