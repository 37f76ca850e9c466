// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// A small decoder-only transformer (pre-LayerNorm, multi-head causal attention, GELU
// feed-forward) with an explicit forward pass and hand-written reverse-mode gradients.
// All parameters live in one flat double buffer; tensors are views at fixed offsets in
// declared field order, which is also the checkpoint order.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ulab/corpus.hpp"
#include "ulab/error.hpp"
#include "ulab/math.hpp"
#include "ulab/rng.hpp"

namespace ulab {

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 32;
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t d_ff = 128;
    std::size_t max_len = 16;

    bool operator==(const ModelConfig&) const = default;
};

inline ModelConfig default_model_config(std::size_t vocab_size) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    return c;
}

/// Location of one named tensor inside the flat parameter buffer.
struct TensorView {
    std::string name;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
    std::size_t size() const noexcept { return rows * cols; }
};

struct LayerOffsets {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_ff1, b_ff1, w_ff2, b_ff2;
};

struct ParamLayout {
    std::size_t tok_emb = 0, pos_emb = 0;
    std::vector<LayerOffsets> layers;
    std::size_t lnf_g = 0, lnf_b = 0, w_out = 0, b_out = 0;
    std::size_t total = 0;
    std::vector<TensorView> tensors;

    explicit ParamLayout(const ModelConfig& c) {
        if (c.vocab_size == 0 || c.d_model == 0 || c.n_heads == 0 || c.max_len == 0 || c.d_ff == 0)
            throw ShapeError("model dimensions must be positive");
        if (c.d_model % c.n_heads != 0) throw ShapeError("d_model must be divisible by n_heads");
        const std::size_t d = c.d_model, V = c.vocab_size;
        auto add = [&](const std::string& name, std::size_t rows, std::size_t cols) {
            tensors.push_back({name, total, rows, cols});
            const std::size_t at = total;
            total += rows * cols;
            return at;
        };
        tok_emb = add("tok_emb", V, d);
        pos_emb = add("pos_emb", c.max_len, d);
        for (std::size_t l = 0; l < c.n_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            LayerOffsets o{};
            o.ln1_g = add(p + "ln1_g", 1, d);
            o.ln1_b = add(p + "ln1_b", 1, d);
            o.w_qkv = add(p + "w_qkv", d, 3 * d);
            o.b_qkv = add(p + "b_qkv", 1, 3 * d);
            o.w_o = add(p + "w_o", d, d);
            o.b_o = add(p + "b_o", 1, d);
            o.ln2_g = add(p + "ln2_g", 1, d);
            o.ln2_b = add(p + "ln2_b", 1, d);
            o.w_ff1 = add(p + "w_ff1", d, c.d_ff);
            o.b_ff1 = add(p + "b_ff1", 1, c.d_ff);
            o.w_ff2 = add(p + "w_ff2", c.d_ff, d);
            o.b_ff2 = add(p + "b_ff2", 1, d);
            layers.push_back(o);
        }
        lnf_g = add("lnf_g", 1, d);
        lnf_b = add("lnf_b", 1, d);
        w_out = add("w_out", d, V);
        b_out = add("b_out", 1, V);
    }
};

/// Model weights: configuration plus one flat buffer.
class ModelParams {
public:
    ModelParams() = default;
    explicit ModelParams(const ModelConfig& config)
        : config_(config), layout_(std::make_shared<ParamLayout>(config)), data_(layout_->total, 0.0) {}

    const ModelConfig& config() const noexcept { return config_; }
    const ParamLayout& layout() const { return *layout_; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::size_t size() const noexcept { return data_.size(); }

    bool operator==(const ModelParams& other) const {
        return config_ == other.config_ && data_ == other.data_;
    }

private:
    ModelConfig config_{};
    std::shared_ptr<const ParamLayout> layout_;
    std::vector<double> data_;
};

/// Gaussian(0, sigma) for matrices and embeddings, LayerNorm gains 1, biases 0.
inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed, double sigma = 0.02) {
    ModelParams p(config);
    Rng rng = make_rng(seed, 0x1A17);
    auto data = p.data();
    for (const auto& t : p.layout().tensors) {
        const bool is_gain = t.name.ends_with("_g");
        const bool is_bias = t.name.find(".b_") != std::string::npos || t.name.ends_with("_b") ||
                             t.name == "b_out";
        for (std::size_t i = 0; i < t.size(); ++i) {
            double& w = data[t.offset + i];
            if (is_gain) w = 1.0;
            else if (is_bias) w = 0.0;
            else w = sigma * standard_normal(rng);
        }
    }
    return p;
}

/// Dense row-major matrix used for activations and logits.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    const double& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

namespace detail {

inline constexpr double kLayerNormEps = 1e-5;

// out[T x n] = in[T x m] * W[m x n] + b[n]
inline void affine(const Matrix& in, const double* w, const double* b, std::size_t n, Matrix& out) {
    const std::size_t m = in.cols;
    out = Matrix(in.rows, n);
    for (std::size_t t = 0; t < in.rows; ++t) {
        double* o = out.data.data() + t * n;
        for (std::size_t j = 0; j < n; ++j) o[j] = b[j];
        const double* x = in.data.data() + t * m;
        for (std::size_t i = 0; i < m; ++i) {
            const double xi = x[i];
            const double* wr = w + i * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += xi * wr[j];
        }
    }
}

// Given dout for out = in * W + b: accumulate dW, db and return din.
inline Matrix affine_backward(const Matrix& in, const double* w, const Matrix& dout, double* dw, double* db) {
    const std::size_t m = in.cols, n = dout.cols;
    Matrix din(in.rows, m);
    for (std::size_t t = 0; t < in.rows; ++t) {
        const double* x = in.data.data() + t * m;
        const double* g = dout.data.data() + t * n;
        double* dx = din.data.data() + t * m;
        for (std::size_t j = 0; j < n; ++j) db[j] += g[j];
        for (std::size_t i = 0; i < m; ++i) {
            const double* wr = w + i * n;
            double* dwr = dw + i * n;
            const double xi = x[i];
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dwr[j] += xi * g[j];
                acc += wr[j] * g[j];
            }
            dx[i] = acc;
        }
    }
    return din;
}

struct LayerNormCache {
    Matrix xhat;
    std::vector<double> rstd;
};

inline Matrix layer_norm(const Matrix& x, const double* g, const double* b, LayerNormCache& cache) {
    const std::size_t d = x.cols;
    Matrix out(x.rows, d);
    cache.xhat = Matrix(x.rows, d);
    cache.rstd.assign(x.rows, 0.0);
    for (std::size_t t = 0; t < x.rows; ++t) {
        auto xr = x.row(t);
        double mu = 0.0;
        for (double v : xr) mu += v;
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (double v : xr) var += (v - mu) * (v - mu);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
        cache.rstd[t] = rstd;
        for (std::size_t i = 0; i < d; ++i) {
            const double xh = (xr[i] - mu) * rstd;
            cache.xhat(t, i) = xh;
            out(t, i) = xh * g[i] + b[i];
        }
    }
    return out;
}

inline Matrix layer_norm_backward(const Matrix& dout, const LayerNormCache& cache, const double* g, double* dg,
                                  double* db) {
    const std::size_t d = dout.cols;
    const double inv_d = 1.0 / static_cast<double>(d);
    Matrix dx(dout.rows, d);
    for (std::size_t t = 0; t < dout.rows; ++t) {
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double dy = dout(t, i);
            const double xh = cache.xhat(t, i);
            dg[i] += dy * xh;
            db[i] += dy;
            const double dxh = dy * g[i];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
        }
        for (std::size_t i = 0; i < d; ++i) {
            const double dxh = dout(t, i) * g[i];
            dx(t, i) = cache.rstd[t] * (dxh - inv_d * sum_dxh - cache.xhat(t, i) * inv_d * sum_dxh_xh);
        }
    }
    return dx;
}

inline constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    const double th = std::tanh(u);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

struct LayerCache {
    Matrix x_in;
    LayerNormCache ln1;
    Matrix a;       // ln1 output
    Matrix qkv;     // T x 3d
    std::vector<Matrix> attn; // per head, T x T (upper triangle zero)
    Matrix o;       // concatenated head outputs
    Matrix x_mid;
    LayerNormCache ln2;
    Matrix m;       // ln2 output
    Matrix h;       // ff1 pre-activation
    Matrix f;       // gelu(h)
};

} // namespace detail

/// Activations kept for the backward pass of one sequence.
struct ForwardCache {
    TokenSeq tokens;
    std::vector<detail::LayerCache> layers;
    Matrix x_final;
    detail::LayerNormCache lnf;
    Matrix n;
    Matrix logits; // T x V
};

/// Runs the model on `context`, keeping activations. Row t of the logits scores the token
/// that follows context[t].
inline ForwardCache forward_cached(const ModelParams& params, std::span<const TokenId> context) {
    const auto& c = params.config();
    const auto& L = params.layout();
    const double* w = params.data().data();
    if (context.empty()) throw LengthError("empty context");
    if (context.size() > c.max_len)
        throw LengthError("context of length " + std::to_string(context.size()) + " exceeds max_len " +
                          std::to_string(c.max_len));
    const std::size_t T = context.size(), d = c.d_model, H = c.n_heads, dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    ForwardCache fc;
    fc.tokens.assign(context.begin(), context.end());
    Matrix x(T, d);
    for (std::size_t t = 0; t < T; ++t) {
        if (context[t] >= c.vocab_size) throw ShapeError("token id outside the model vocabulary");
        const double* te = w + L.tok_emb + context[t] * d;
        const double* pe = w + L.pos_emb + t * d;
        for (std::size_t i = 0; i < d; ++i) x(t, i) = te[i] + pe[i];
    }

    fc.layers.resize(c.n_layers);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const auto& o = L.layers[l];
        auto& lc = fc.layers[l];
        lc.x_in = x;
        lc.a = detail::layer_norm(x, w + o.ln1_g, w + o.ln1_b, lc.ln1);
        detail::affine(lc.a, w + o.w_qkv, w + o.b_qkv, 3 * d, lc.qkv);
        lc.o = Matrix(T, d);
        lc.attn.assign(H, Matrix(T, T));
        for (std::size_t h = 0; h < H; ++h) {
            auto& P = lc.attn[h];
            for (std::size_t t = 0; t < T; ++t) {
                const double* q = &lc.qkv(t, h * dh);
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t u = 0; u <= t; ++u) {
                    const double* k = &lc.qkv(u, d + h * dh);
                    double s = 0.0;
                    for (std::size_t i = 0; i < dh; ++i) s += q[i] * k[i];
                    P(t, u) = s * scale;
                    mx = std::max(mx, P(t, u));
                }
                double z = 0.0;
                for (std::size_t u = 0; u <= t; ++u) {
                    P(t, u) = std::exp(P(t, u) - mx);
                    z += P(t, u);
                }
                for (std::size_t u = 0; u <= t; ++u) P(t, u) /= z;
                double* out = &lc.o(t, h * dh);
                for (std::size_t u = 0; u <= t; ++u) {
                    const double* v = &lc.qkv(u, 2 * d + h * dh);
                    for (std::size_t i = 0; i < dh; ++i) out[i] += P(t, u) * v[i];
                }
            }
        }
        Matrix y;
        detail::affine(lc.o, w + o.w_o, w + o.b_o, d, y);
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += y.data[i];
        lc.x_mid = x;
        lc.m = detail::layer_norm(x, w + o.ln2_g, w + o.ln2_b, lc.ln2);
        detail::affine(lc.m, w + o.w_ff1, w + o.b_ff1, c.d_ff, lc.h);
        lc.f = Matrix(T, c.d_ff);
        for (std::size_t i = 0; i < lc.h.data.size(); ++i) lc.f.data[i] = detail::gelu(lc.h.data[i]);
        Matrix z;
        detail::affine(lc.f, w + o.w_ff2, w + o.b_ff2, d, z);
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += z.data[i];
    }
    fc.x_final = x;
    fc.n = detail::layer_norm(x, w + L.lnf_g, w + L.lnf_b, fc.lnf);
    detail::affine(fc.n, w + L.w_out, w + L.b_out, c.vocab_size, fc.logits);
    return fc;
}

/// Logits for every position of `context` (T x |V|).
inline Matrix forward(const ModelParams& params, std::span<const TokenId> context) {
    return forward_cached(params, context).logits;
}

/// Accumulates into `grad` (same layout as the params) the gradient of a scalar whose
/// derivative with respect to the logits is `dlogits`.
inline void backward(const ModelParams& params, const ForwardCache& fc, const Matrix& dlogits, std::span<double> grad) {
    const auto& c = params.config();
    const auto& L = params.layout();
    const double* w = params.data().data();
    double* g = grad.data();
    const std::size_t T = fc.tokens.size(), d = c.d_model, H = c.n_heads, dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix dn = detail::affine_backward(fc.n, w + L.w_out, dlogits, g + L.w_out, g + L.b_out);
    Matrix dx = detail::layer_norm_backward(dn, fc.lnf, w + L.lnf_g, g + L.lnf_g, g + L.lnf_b);

    for (std::size_t li = c.n_layers; li-- > 0;) {
        const auto& o = L.layers[li];
        const auto& lc = fc.layers[li];

        // feed-forward block
        Matrix df = detail::affine_backward(lc.f, w + o.w_ff2, dx, g + o.w_ff2, g + o.b_ff2);
        for (std::size_t i = 0; i < df.data.size(); ++i) df.data[i] *= detail::gelu_grad(lc.h.data[i]);
        Matrix dm = detail::affine_backward(lc.m, w + o.w_ff1, df, g + o.w_ff1, g + o.b_ff1);
        Matrix dln2 = detail::layer_norm_backward(dm, lc.ln2, w + o.ln2_g, g + o.ln2_g, g + o.ln2_b);
        for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dln2.data[i];

        // attention block
        Matrix d_o = detail::affine_backward(lc.o, w + o.w_o, dx, g + o.w_o, g + o.b_o);
        Matrix dqkv(T, 3 * d);
        for (std::size_t h = 0; h < H; ++h) {
            const auto& P = lc.attn[h];
            for (std::size_t t = 0; t < T; ++t) {
                const double* dout = &d_o(t, h * dh);
                std::vector<double> dp(t + 1, 0.0);
                double dot = 0.0;
                for (std::size_t u = 0; u <= t; ++u) {
                    const double* v = &lc.qkv(u, 2 * d + h * dh);
                    double* dv = &dqkv(u, 2 * d + h * dh);
                    double s = 0.0;
                    for (std::size_t i = 0; i < dh; ++i) {
                        s += dout[i] * v[i];
                        dv[i] += P(t, u) * dout[i];
                    }
                    dp[u] = s;
                    dot += P(t, u) * s;
                }
                const double* q = &lc.qkv(t, h * dh);
                double* dq = &dqkv(t, h * dh);
                for (std::size_t u = 0; u <= t; ++u) {
                    const double ds = P(t, u) * (dp[u] - dot) * scale;
                    const double* k = &lc.qkv(u, d + h * dh);
                    double* dk = &dqkv(u, d + h * dh);
                    for (std::size_t i = 0; i < dh; ++i) {
                        dq[i] += ds * k[i];
                        dk[i] += ds * q[i];
                    }
                }
            }
        }
        Matrix da = detail::affine_backward(lc.a, w + o.w_qkv, dqkv, g + o.w_qkv, g + o.b_qkv);
        Matrix dln1 = detail::layer_norm_backward(da, lc.ln1, w + o.ln1_g, g + o.ln1_g, g + o.ln1_b);
        for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dln1.data[i];
    }

    for (std::size_t t = 0; t < T; ++t) {
        double* te = g + L.tok_emb + fc.tokens[t] * d;
        double* pe = g + L.pos_emb + t * d;
        for (std::size_t i = 0; i < d; ++i) {
            te[i] += dx(t, i);
            pe[i] += dx(t, i);
        }
    }
}

/// Per-sequence objective: given the logits of batch item `index`, return its contribution
/// to the total loss and write d(contribution)/d(logits) into `dlogits` (pre-zeroed, same shape).
using SequenceObjective = std::function<double(std::size_t index, const Matrix& logits, Matrix& dlogits)>;

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

/// Sums `objective` over the batch and accumulates the parameter gradient into `grad`.
inline double accumulate_loss_and_grad(const ModelParams& params, std::span<const TokenSeq> batch,
                                       const SequenceObjective& objective, std::span<double> grad) {
    if (grad.size() != params.size()) throw ShapeError("gradient buffer does not match parameter count");
    std::vector<double> losses;
    losses.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        ForwardCache fc = forward_cached(params, batch[b]);
        Matrix dlogits(fc.logits.rows, fc.logits.cols);
        const double l = objective(b, fc.logits, dlogits);
        if (!std::isfinite(l) || !all_finite(dlogits.data)) throw NumericError("non-finite loss", b);
        losses.push_back(l);
        backward(params, fc, dlogits, grad);
    }
    return pairwise_sum(losses);
}

inline LossAndGrad loss_and_grad(const ModelParams& params, std::span<const TokenSeq> batch,
                                 const SequenceObjective& objective) {
    LossAndGrad out;
    out.grad.assign(params.size(), 0.0);
    out.loss = accumulate_loss_and_grad(params, batch, objective, out.grad);
    return out;
}

/// Loss only, no gradient (used by finite-difference oracles and evaluation).
inline double evaluate_loss(const ModelParams& params, std::span<const TokenSeq> batch,
                            const SequenceObjective& objective) {
    std::vector<double> losses;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Matrix logits = forward(params, batch[b]);
        Matrix dlogits(logits.rows, logits.cols);
        losses.push_back(objective(b, logits, dlogits));
    }
    return pairwise_sum(losses);
}

/// Model input for a fact: every token but the last, so row t predicts fact[t + 1].
inline TokenSeq context_of(const TokenSeq& fact) {
    return fact.empty() ? TokenSeq{} : TokenSeq(fact.begin(), fact.end() - 1);
}

/// Logit rows that predict the answer tokens of `fact`, paired with the token each predicts.
inline std::vector<std::pair<std::size_t, TokenId>> answer_positions(const TokenSeq& fact) {
    auto [b, e] = answer_span(fact);
    std::vector<std::pair<std::size_t, TokenId>> out;
    for (std::size_t t = b; t < e; ++t) out.emplace_back(t - 1, fact[t]);
    return out;
}

} // namespace ulab
