// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Self-distillation targets built by adjusting logits. A target is a label: callers never
// propagate gradients through it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ulab/error.hpp"
#include "ulab/math.hpp"
#include "ulab/model.hpp"
#include "ulab/train.hpp"

namespace ulab {

struct AdjustedTarget {
    LogitVector tilde_logits;
    ProbVector tilde_probs;
    std::vector<double> tilde_log_probs; // log-softmax of tilde_logits
    std::size_t target_index = 0;
};

namespace detail {

inline AdjustedTarget finish_target(std::vector<double> tilde, std::size_t k) {
    AdjustedTarget t;
    t.tilde_log_probs = log_softmax(tilde);
    std::vector<double> probs(tilde.size());
    softmax_into(tilde, probs);
    t.tilde_probs = ProbVector(std::move(probs));
    t.tilde_logits = LogitVector(std::move(tilde));
    t.target_index = k;
    return t;
}

inline void check_index(std::size_t k, std::size_t n) {
    if (k >= n) throw ShapeError("target index " + std::to_string(k) + " outside vocabulary of size " + std::to_string(n));
}

} // namespace detail

/// The logit value that gives token k probability exactly 1/|V| while every other logit
/// is kept: logsumexp_{i != k}(logits) - log(|V| - 1).
inline double uniform_target_logit(std::span<const double> logits, std::size_t k) {
    if (logits.size() < 2) throw DegenerateVocabError("uniform target needs |V| >= 2");
    detail::check_index(k, logits.size());
    return logsumexp(logits, k) - std::log(static_cast<double>(logits.size() - 1));
}

/// Unilogit: only the ground-truth logit moves, to the value that makes its post-softmax
/// probability 1/|V|; the remaining mass keeps the model's own non-target proportions.
inline AdjustedTarget unilogit_target(std::span<const double> logits, std::size_t k) {
    const double tk = uniform_target_logit(logits, k);
    std::vector<double> tilde(logits.begin(), logits.end());
    tilde[k] = tk;
    return detail::finish_target(std::move(tilde), k);
}

inline AdjustedTarget unilogit_target(const LogitVector& logits, std::size_t k) {
    return unilogit_target(logits.span(), k);
}

/// UnDIAL: subtract a fixed gamma from the ground-truth logit.
inline AdjustedTarget undial_target(std::span<const double> logits, std::size_t k, double gamma) {
    if (!(gamma >= 0.0)) throw InvalidHyperparameterError("undial gamma must be >= 0");
    detail::check_index(k, logits.size());
    std::vector<double> tilde(logits.begin(), logits.end());
    tilde[k] -= gamma;
    return detail::finish_target(std::move(tilde), k);
}

inline AdjustedTarget undial_target(const LogitVector& logits, std::size_t k, double gamma) {
    return undial_target(logits.span(), k, gamma);
}

/// RKLD: h_o - alpha * ReLU(h_s - h_o) over the whole vocabulary, where h_s comes from the
/// reinforced model. `k` is kept for bookkeeping only.
inline AdjustedTarget rkld_target(std::span<const double> logits_o, std::span<const double> logits_s, double alpha,
                                  std::size_t k) {
    if (logits_o.size() != logits_s.size()) throw ShapeError("rkld_target: logit vectors differ in length");
    if (!(alpha >= 0.0)) throw InvalidHyperparameterError("rkld alpha must be >= 0");
    detail::check_index(k, logits_o.size());
    std::vector<double> tilde(logits_o.size());
    for (std::size_t i = 0; i < tilde.size(); ++i)
        tilde[i] = logits_o[i] - alpha * std::max(0.0, logits_s[i] - logits_o[i]);
    return detail::finish_target(std::move(tilde), k);
}

inline AdjustedTarget rkld_target(const LogitVector& logits_o, const LogitVector& logits_s, double alpha, std::size_t k) {
    return rkld_target(logits_o.span(), logits_s.span(), alpha, k);
}

/// Reinforced model for RKLD: a copy of the starting model fine-tuned on the forget set
/// only. Ten epochs at lr 3e-4: a fresh Adam at the base lr overshoots a converged model
/// and leaves it fitting D_f worse than before.
inline TrainConfig default_reinforce_config(std::uint64_t seed = 0) {
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.lr = 3e-4;
    cfg.seed = seed;
    return cfg;
}

inline ModelParams reinforce_model(const ModelParams& theta_o, const std::vector<TokenSeq>& forget_facts,
                                   const TrainConfig& cfg) {
    if (forget_facts.empty()) throw ConfigError("reinforce_model: empty forget set");
    return train(theta_o, forget_facts, cfg).params;
}

} // namespace ulab
