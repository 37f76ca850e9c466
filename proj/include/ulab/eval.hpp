// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Measurements: completion recall, forget NLL and KL analyses against the retrained
// model. Every KL here is reference-first, KL(p_retrain || .), averaged over the answer
// positions of the given facts.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ulab/corpus.hpp"
#include "ulab/engine.hpp"
#include "ulab/losses.hpp"
#include "ulab/math.hpp"
#include "ulab/model.hpp"
#include "ulab/targets.hpp"
#include "ulab/train.hpp"

namespace ulab {

inline constexpr std::string_view kKlDirection = "KL(p_retrain || q)";

struct EvalReport {
    double forget_recall = 0.0;
    double retain_recall = 0.0;
    double neighbor_recall = 0.0;
    double forget_nll = 0.0;
    std::optional<double> kl_targets_vs_retrain; // self-distillation methods only
    double kl_outputs_vs_retrain = 0.0;
    double kl_baseline = 0.0;
};

/// Greedy decoding of up to `max_tokens` tokens after `prompt`; stops at <eos>.
inline TokenSeq greedy_decode(const ModelParams& model, const TokenSeq& prompt, std::size_t max_tokens) {
    TokenSeq ctx = prompt;
    TokenSeq out;
    while (out.size() < max_tokens && ctx.size() < model.config().max_len) {
        const Matrix logits = forward(model, ctx);
        const auto next = static_cast<TokenId>(argmax(logits.row(logits.rows - 1)));
        if (next == Vocab::kEos) break;
        out.push_back(next);
        ctx.push_back(next);
    }
    return out;
}

/// Length of the longest common subsequence.
inline std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Reference answer of a fact with padding removed.
inline TokenSeq reference_answer(const TokenSeq& fact) {
    auto [b, e] = answer_span(fact);
    TokenSeq ref;
    for (std::size_t t = b; t < e; ++t)
        if (fact[t] != Vocab::kPad) ref.push_back(fact[t]);
    return ref;
}

/// Fraction of reference answer tokens reproduced in order by greedy decoding from the
/// prompt, averaged over facts.
inline double completion_recall(const ModelParams& model, const std::vector<TokenSeq>& facts) {
    std::vector<double> scores;
    for (const auto& fact : facts) {
        const TokenSeq ref = reference_answer(fact);
        if (ref.empty()) continue;
        const TokenSeq prompt(fact.begin(), fact.begin() + static_cast<std::ptrdiff_t>(std::min(kPromptLength, fact.size())));
        const TokenSeq hyp = greedy_decode(model, prompt, ref.size());
        scores.push_back(static_cast<double>(lcs_length(hyp, ref)) / static_cast<double>(ref.size()));
    }
    return mean(scores);
}

namespace detail {

// sum_i p_i (log p_i - log q_i) from log-probabilities; q floored at kProbFloor.
inline double kl_from_log_probs(std::span<const double> log_p, std::span<const double> log_q) {
    const double floor_log = std::log(kProbFloor);
    double s = 0.0;
    for (std::size_t i = 0; i < log_p.size(); ++i) {
        const double p = std::exp(log_p[i]);
        if (p > 0.0) s += p * (log_p[i] - std::max(log_q[i], floor_log));
    }
    return std::max(s, 0.0);
}

inline void check_same_vocab(const ModelParams& a, const ModelParams& b) {
    if (a.config().vocab_size != b.config().vocab_size) throw ShapeError("models have different vocabularies");
}

} // namespace detail

/// Mean KL(p_retrain || p_model) over answer positions.
inline double kl_outputs_vs_retrain(const ModelParams& model, const ModelParams& theta_r,
                                    const std::vector<TokenSeq>& facts) {
    detail::check_same_vocab(model, theta_r);
    std::vector<double> kls;
    for (const auto& fact : facts) {
        const auto ctx = context_of(fact);
        const Matrix lr = forward(theta_r, ctx);
        const Matrix lm = forward(model, ctx);
        for (auto [row, k] : answer_positions(fact))
            kls.push_back(detail::kl_from_log_probs(log_softmax(lr.row(row)), log_softmax(lm.row(row))));
    }
    return mean(kls);
}

/// Log-probabilities of the self-distillation target of `obj` at one position. `base`
/// supplies the logits the target is adjusted from.
inline std::vector<double> target_log_probs(const UnlearnObjective& obj, std::span<const double> base, std::size_t k,
                                            std::span<const double> reinforced) {
    switch (obj.method) {
        case ForgetMethod::unilogit: return unilogit_target(base, k).tilde_log_probs;
        case ForgetMethod::undial: return undial_target(base, k, obj.gamma).tilde_log_probs;
        case ForgetMethod::rkld:
            if (reinforced.empty()) throw ConfigError("rkld target analysis needs the reinforced model");
            return rkld_target(base, reinforced, obj.alpha, k).tilde_log_probs;
        default: throw ConfigError(std::string(to_string(obj.method)) + " has no self-distillation target");
    }
}

/// Mean KL(p_retrain || p_target) where the targets are built from `base_model`'s logits.
inline double kl_soft_targets_vs_retrain(const ModelParams& base_model, const ModelParams& theta_r,
                                         const UnlearnObjective& obj, const std::vector<TokenSeq>& facts,
                                         const ModelParams* reinforced = nullptr) {
    detail::check_same_vocab(base_model, theta_r);
    std::vector<double> kls;
    for (const auto& fact : facts) {
        const auto ctx = context_of(fact);
        const Matrix lr = forward(theta_r, ctx);
        const Matrix lb = forward(base_model, ctx);
        Matrix ls;
        if (reinforced) ls = forward(*reinforced, ctx);
        for (auto [row, k] : answer_positions(fact)) {
            const auto lq = target_log_probs(obj, lb.row(row), k, reinforced ? ls.row(row) : std::span<const double>{});
            kls.push_back(detail::kl_from_log_probs(log_softmax(lr.row(row)), lq));
        }
    }
    return mean(kls);
}

/// Target KL for one checkpoint of a run: current-model targets come from the checkpoint,
/// original-model targets from theta_o.
inline double run_target_kl(const RunRecord& run, const ModelParams& checkpoint, const ModelParams& theta_o,
                            const ModelParams& theta_r, const std::vector<TokenSeq>& facts,
                            const ModelParams* reinforced = nullptr) {
    const auto& obj = run.config.objective;
    const ModelParams& base =
        obj.effective_target_source() == TargetSource::current_model ? checkpoint : theta_o;
    return kl_soft_targets_vs_retrain(base, theta_r, obj, facts, reinforced);
}

/// Per-epoch target KL over the run's in-memory checkpoints.
inline std::vector<std::pair<int, double>> kl_trajectory(const RunRecord& run, const ModelParams& theta_o,
                                                         const ModelParams& theta_r, const std::vector<TokenSeq>& facts,
                                                         const ModelParams* reinforced = nullptr) {
    std::vector<std::pair<int, double>> out;
    for (const auto& [epoch, params] : run.checkpoints)
        out.emplace_back(epoch, run_target_kl(run, params, theta_o, theta_r, facts, reinforced));
    return out;
}

/// Full metric set for an unlearned model.
inline EvalReport evaluate(const ModelParams& unlearned, const ModelParams& theta_o, const ModelParams& theta_r,
                           const FactCorpus& corpus, const UnlearnObjective& obj,
                           const ModelParams* reinforced = nullptr) {
    const auto forget = corpus.forget_facts();
    EvalReport r;
    r.forget_recall = completion_recall(unlearned, forget);
    r.retain_recall = completion_recall(unlearned, corpus.retain_facts());
    r.neighbor_recall = corpus.neighbor_ids.empty() ? 0.0 : completion_recall(unlearned, corpus.neighbor_facts());
    r.forget_nll = mean_answer_ce(unlearned, forget);
    r.kl_outputs_vs_retrain = kl_outputs_vs_retrain(unlearned, theta_r, forget);
    r.kl_baseline = kl_outputs_vs_retrain(theta_o, theta_r, forget);
    if (obj.is_self_distillation() && (obj.method != ForgetMethod::rkld || reinforced)) {
        const ModelParams& base =
            obj.effective_target_source() == TargetSource::current_model ? unlearned : theta_o;
        r.kl_targets_vs_retrain = kl_soft_targets_vs_retrain(base, theta_r, obj, forget, reinforced);
    }
    return r;
}

/// JSON lines {"fact_id":..,"position":..,"probs":[..]} for every answer position.
inline std::string dump_prob_trace(const ModelParams& model, const FactCorpus& corpus,
                                   const std::vector<std::size_t>& fact_ids) {
    std::ostringstream out;
    out.precision(17);
    for (auto id : fact_ids) {
        const auto& fact = corpus.facts.at(id);
        const Matrix logits = forward(model, context_of(fact));
        for (auto [row, k] : answer_positions(fact)) {
            const ProbVector p = softmax(logits.row(row));
            out << "{\"fact_id\":" << id << ",\"position\":" << row + 1 << ",\"probs\":[";
            for (std::size_t i = 0; i < p.size(); ++i) out << (i ? "," : "") << p[i];
            out << "]}\n";
        }
    }
    return out.str();
}

} // namespace ulab
