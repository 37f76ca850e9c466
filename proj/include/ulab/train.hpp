// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ulab/corpus.hpp"
#include "ulab/error.hpp"
#include "ulab/math.hpp"
#include "ulab/model.hpp"
#include "ulab/rng.hpp"

namespace ulab {

/// Adam with frozen moments (0.9, 0.999), eps 1e-8, bias correction, no weight decay.
class Adam {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
            v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
            params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
        }
    }

    long steps() const noexcept { return t_; }

private:
    std::vector<double> m_, v_;
    long t_ = 0;
};

struct TrainConfig {
    double lr = 3e-3;
    int epochs = 200;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
};

struct TrainResult {
    ModelParams params;
    std::vector<double> epoch_losses; // mean answer-token cross-entropy per epoch
};

/// Loss threshold past which a run is declared divergent.
inline constexpr double kDivergenceThreshold = 1e3;

/// Mean cross-entropy of a fact's answer tokens; writes the logit gradient scaled by `weight`.
inline double answer_cross_entropy(const TokenSeq& fact, const Matrix& logits, Matrix& dlogits, double weight) {
    const auto positions = answer_positions(fact);
    if (positions.empty()) return 0.0;
    const double w = weight / static_cast<double>(positions.size());
    double total = 0.0;
    for (auto [row, target] : positions) {
        const auto z = logits.row(row);
        const double lse = logsumexp(z);
        total += lse - z[target];
        auto dz = dlogits.row(row);
        for (std::size_t i = 0; i < z.size(); ++i) dz[i] += w * std::exp(z[i] - lse);
        dz[target] -= w;
    }
    return total / static_cast<double>(positions.size());
}

/// Mean (over facts) answer-token cross-entropy, in nats.
inline double mean_answer_ce(const ModelParams& params, const std::vector<TokenSeq>& facts) {
    std::vector<double> per_fact;
    for (const auto& f : facts) {
        const Matrix logits = forward(params, context_of(f));
        Matrix scratch(logits.rows, logits.cols);
        per_fact.push_back(answer_cross_entropy(f, logits, scratch, 0.0));
    }
    return mean(per_fact);
}

/// Minibatches of fact indices for one epoch; order drawn from `rng`.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(std::span<std::size_t>(order), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t b = 0; b < n; b += batch_size)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
    return out;
}

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Fits the answer tokens of `facts` with Adam. Deterministic given the seed.
inline TrainResult train(ModelParams params, const std::vector<TokenSeq>& facts, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
    if (facts.empty()) throw ConfigError("train: empty training subset");
    if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (cfg.epochs < 0) throw ConfigError("train: epochs must be non-negative");
    TrainResult result;
    Adam adam(params.size());
    Rng rng = make_rng(cfg.seed, 0x7A1);
    std::vector<double> grad(params.size());
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<double> batch_losses;
        for (const auto& idx : epoch_batches(facts.size(), cfg.batch_size, rng)) {
            std::vector<TokenSeq> contexts;
            for (auto i : idx) contexts.push_back(context_of(facts[i]));
            const double inv = 1.0 / static_cast<double>(idx.size());
            SequenceObjective ce = [&](std::size_t b, const Matrix& logits, Matrix& dlogits) {
                return inv * answer_cross_entropy(facts[idx[b]], logits, dlogits, inv);
            };
            std::fill(grad.begin(), grad.end(), 0.0);
            double loss = 0.0;
            try {
                loss = accumulate_loss_and_grad(params, contexts, ce, grad);
            } catch (const NumericError& e) {
                throw DivergenceError(e.what(), epoch);
            }
            if (!std::isfinite(loss) || loss > kDivergenceThreshold) throw DivergenceError("training diverged", epoch);
            adam.step(params.data(), grad, cfg.lr);
            if (!all_finite(params.data())) throw DivergenceError("non-finite parameters", epoch);
            batch_losses.push_back(loss);
        }
        result.epoch_losses.push_back(mean(batch_losses));
        if (on_epoch) on_epoch(epoch, result.epoch_losses.back());
    }
    result.params = std::move(params);
    return result;
}

} // namespace ulab
