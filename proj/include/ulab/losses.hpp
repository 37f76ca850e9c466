// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scalar unlearning objectives over one sequence position. Every kernel returns the loss
// value and, when given a LogitGrad sink, adds weight * d(loss)/d(logits) into it.
// Reference and target distributions are constants: no gradient flows into them.
//
// Divergence naming: reverse_kl means KL(p_model || p_target) (live model first), the
// orientation of the Unilogit forget term; forward_kl swaps the arguments.

#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ulab/error.hpp"
#include "ulab/math.hpp"
#include "ulab/targets.hpp"

namespace ulab {

enum class DivergenceKind { forward_kl, reverse_kl };
enum class ForgetMethod { unilogit, undial, rkld, ga, npo, me };
enum class RetainLoss { kl_distill, gd_ce, none };
enum class TargetSource { current_model, original_model };

inline std::string_view to_string(DivergenceKind d) { return d == DivergenceKind::forward_kl ? "forward_kl" : "reverse_kl"; }

inline std::string_view to_string(ForgetMethod m) {
    switch (m) {
        case ForgetMethod::unilogit: return "unilogit";
        case ForgetMethod::undial: return "undial";
        case ForgetMethod::rkld: return "rkld";
        case ForgetMethod::ga: return "ga";
        case ForgetMethod::npo: return "npo";
        case ForgetMethod::me: return "me";
    }
    return "?";
}

inline std::string_view to_string(RetainLoss r) {
    switch (r) {
        case RetainLoss::kl_distill: return "kl";
        case RetainLoss::gd_ce: return "gd";
        case RetainLoss::none: return "none";
    }
    return "?";
}

inline std::string_view to_string(TargetSource t) {
    return t == TargetSource::current_model ? "current_model" : "original_model";
}

inline ForgetMethod parse_forget_method(std::string_view s) {
    for (auto m : {ForgetMethod::unilogit, ForgetMethod::undial, ForgetMethod::rkld, ForgetMethod::ga,
                   ForgetMethod::npo, ForgetMethod::me})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown method '" + std::string(s) + "'");
}

inline RetainLoss parse_retain_loss(std::string_view s) {
    if (s == "kl" || s == "kl_distill") return RetainLoss::kl_distill;
    if (s == "gd" || s == "gd_ce") return RetainLoss::gd_ce;
    if (s == "none") return RetainLoss::none;
    throw ConfigError("unknown retain_loss '" + std::string(s) + "'");
}

inline DivergenceKind parse_divergence(std::string_view s) {
    if (s == "forward_kl" || s == "fkl") return DivergenceKind::forward_kl;
    if (s == "reverse_kl" || s == "rkl") return DivergenceKind::reverse_kl;
    throw ConfigError("unknown divergence '" + std::string(s) + "'");
}

inline TargetSource parse_target_source(std::string_view s) {
    if (s == "current_model" || s == "current") return TargetSource::current_model;
    if (s == "original_model" || s == "original") return TargetSource::original_model;
    throw ConfigError("unknown target_source '" + std::string(s) + "'");
}

/// Method selection and hyperparameters. Unset divergence/target_source fall back to the
/// method's own convention (see effective_*).
struct UnlearnObjective {
    ForgetMethod method = ForgetMethod::unilogit;
    RetainLoss retain_loss = RetainLoss::kl_distill;
    double lambda = 1.0;
    double gamma = 4.0;
    double alpha = 1.0;
    double beta = 0.1;
    std::optional<DivergenceKind> divergence;
    std::optional<TargetSource> target_source;

    DivergenceKind effective_divergence() const {
        if (divergence) return *divergence;
        return method == ForgetMethod::undial ? DivergenceKind::forward_kl : DivergenceKind::reverse_kl;
    }

    TargetSource effective_target_source() const {
        if (target_source) return *target_source;
        return method == ForgetMethod::unilogit ? TargetSource::current_model : TargetSource::original_model;
    }

    bool is_self_distillation() const {
        return method == ForgetMethod::unilogit || method == ForgetMethod::undial || method == ForgetMethod::rkld;
    }

    void validate(bool retain_available = true) const {
        if (!(lambda >= 0.0)) throw InvalidHyperparameterError("lambda must be >= 0");
        if (method == ForgetMethod::npo && !(beta > 0.0)) throw InvalidHyperparameterError("npo beta must be > 0");
        if (method == ForgetMethod::undial && !(gamma >= 0.0)) throw InvalidHyperparameterError("undial gamma must be >= 0");
        if (method == ForgetMethod::rkld && !(alpha >= 0.0)) throw InvalidHyperparameterError("rkld alpha must be >= 0");
        if (!retain_available && retain_loss != RetainLoss::none)
            throw ConfigError("retain set withheld: retain_loss must be none");
        if (retain_available && retain_loss == RetainLoss::none)
            throw ConfigError("retain_loss none is only allowed when the retain set is withheld");
    }
};

/// Optional gradient destination for a loss kernel.
struct LogitGrad {
    std::span<double> out{};
    double weight = 1.0;
    bool active() const noexcept { return !out.empty(); }
};

/// Divergence between the live distribution softmax(logits) and a fixed target given by
/// its log-probabilities. Target log-probabilities are floored at log(kProbFloor).
inline double distill_loss(std::span<const double> logits, std::span<const double> target_log_probs,
                           DivergenceKind div, LogitGrad g = {}) {
    if (logits.size() != target_log_probs.size()) throw ShapeError("distill_loss: shape mismatch");
    const std::size_t n = logits.size();
    const auto lp = log_softmax(logits);
    const double floor_log = std::log(kProbFloor);
    double loss = 0.0;
    if (div == DivergenceKind::reverse_kl) {
        for (std::size_t i = 0; i < n; ++i) loss += std::exp(lp[i]) * (lp[i] - std::max(target_log_probs[i], floor_log));
        if (g.active()) {
            for (std::size_t i = 0; i < n; ++i)
                g.out[i] += g.weight * std::exp(lp[i]) * (lp[i] - std::max(target_log_probs[i], floor_log) - loss);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double q = std::exp(target_log_probs[i]);
            if (q > 0.0) loss += q * (std::max(target_log_probs[i], floor_log) - lp[i]);
        }
        if (g.active()) {
            for (std::size_t i = 0; i < n; ++i) g.out[i] += g.weight * (std::exp(lp[i]) - std::exp(target_log_probs[i]));
        }
    }
    return loss;
}

/// Unilogit forget term with the target built from `target_base` (the live logits for the
/// current-model variant, cached starting-model logits for the original-model ablation).
inline double unilogit_forget_loss(std::span<const double> logits, std::span<const double> target_base, std::size_t k,
                                   DivergenceKind div = DivergenceKind::reverse_kl, LogitGrad g = {}) {
    const auto target = unilogit_target(target_base, k);
    return distill_loss(logits, target.tilde_log_probs, div, g);
}

inline double unilogit_forget_loss(std::span<const double> logits, std::size_t k,
                                   DivergenceKind div = DivergenceKind::reverse_kl, LogitGrad g = {}) {
    return unilogit_forget_loss(logits, logits, k, div, g);
}

/// UnDIAL distills toward the gamma-reduced starting-model logits; forward KL by default.
inline double undial_forget_loss(std::span<const double> logits, std::span<const double> target_base, std::size_t k,
                                 double gamma, DivergenceKind div = DivergenceKind::forward_kl, LogitGrad g = {}) {
    const auto target = undial_target(target_base, k, gamma);
    return distill_loss(logits, target.tilde_log_probs, div, g);
}

/// RKLD distills toward h_o - alpha * ReLU(h_s - h_o); reverse KL by default.
inline double rkld_forget_loss(std::span<const double> logits, std::span<const double> logits_o,
                               std::span<const double> logits_s, double alpha, std::size_t k,
                               DivergenceKind div = DivergenceKind::reverse_kl, LogitGrad g = {}) {
    const auto target = rkld_target(logits_o, logits_s, alpha, k);
    return distill_loss(logits, target.tilde_log_probs, div, g);
}

/// Gradient ascent written as a minimisation objective: +log p(k). Unbounded below.
inline double ga_forget_loss(std::span<const double> logits, std::size_t k, LogitGrad g = {}) {
    if (k >= logits.size()) throw ShapeError("ga_forget_loss: target index out of range");
    const double lse = logsumexp(logits);
    if (g.active()) {
        for (std::size_t i = 0; i < logits.size(); ++i) g.out[i] -= g.weight * std::exp(logits[i] - lse);
        g.out[k] += g.weight;
    }
    return logits[k] - lse;
}

namespace detail {

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace detail

/// NPO: -(2/beta) log sigmoid(-beta * (log p(k) - log p_o(k))).
inline double npo_forget_loss(std::span<const double> logits, std::span<const double> logits_o, std::size_t k,
                              double beta, LogitGrad g = {}) {
    if (!(beta > 0.0)) throw InvalidHyperparameterError("npo beta must be > 0");
    if (logits.size() != logits_o.size()) throw ShapeError("npo_forget_loss: shape mismatch");
    if (k >= logits.size()) throw ShapeError("npo_forget_loss: target index out of range");
    const double lse = logsumexp(logits);
    const double log_ratio = (logits[k] - lse) - (logits_o[k] - logsumexp(logits_o));
    const double loss = (2.0 / beta) * detail::softplus(beta * log_ratio);
    if (g.active()) {
        const double dr = 2.0 * detail::sigmoid(beta * log_ratio);
        for (std::size_t i = 0; i < logits.size(); ++i) g.out[i] -= g.weight * dr * std::exp(logits[i] - lse);
        g.out[k] += g.weight * dr;
    }
    return loss;
}

/// Maximum entropy: KL(p || uniform) = log|V| - H(p).
inline double me_forget_loss(std::span<const double> logits, LogitGrad g = {}) {
    const auto lp = log_softmax(logits);
    double neg_h = 0.0;
    for (double v : lp) neg_h += std::exp(v) * v;
    if (g.active()) {
        for (std::size_t i = 0; i < lp.size(); ++i) g.out[i] += g.weight * std::exp(lp[i]) * (lp[i] - neg_h);
    }
    return std::max(0.0, std::log(static_cast<double>(logits.size())) + neg_h);
}

/// KL(p_o || p): forward KL from the frozen starting model to the live model.
inline double retain_kl_loss(std::span<const double> logits_o, std::span<const double> logits, LogitGrad g = {}) {
    return distill_loss(logits, log_softmax(logits_o), DivergenceKind::forward_kl, g);
}

/// Token cross-entropy -log p(y).
inline double retain_gd_loss(std::span<const double> logits, std::size_t y, LogitGrad g = {}) {
    if (y >= logits.size()) throw ShapeError("retain_gd_loss: label out of range");
    const double lse = logsumexp(logits);
    if (g.active()) {
        for (std::size_t i = 0; i < logits.size(); ++i) g.out[i] += g.weight * std::exp(logits[i] - lse);
        g.out[y] -= g.weight;
    }
    return lse - logits[y];
}

/// Frozen logits available at one forget position: starting model and, for RKLD, the
/// reinforced model. Empty spans mean "not available".
struct ReferenceLogits {
    std::span<const double> original{};
    std::span<const double> reinforced{};
};

/// The forget term of `obj` at one position with ground-truth token k.
inline double forget_position_loss(const UnlearnObjective& obj, std::span<const double> logits, std::size_t k,
                                   const ReferenceLogits& ref, LogitGrad g = {}) {
    auto need_original = [&] {
        if (ref.original.empty()) throw ConfigError(std::string(to_string(obj.method)) + " needs starting-model logits");
        return ref.original;
    };
    const bool from_current = obj.effective_target_source() == TargetSource::current_model;
    switch (obj.method) {
        case ForgetMethod::unilogit:
            return unilogit_forget_loss(logits, from_current ? logits : need_original(), k, obj.effective_divergence(), g);
        case ForgetMethod::undial:
            return undial_forget_loss(logits, from_current ? logits : need_original(), k, obj.gamma,
                                      obj.effective_divergence(), g);
        case ForgetMethod::rkld:
            if (ref.reinforced.empty()) throw ConfigError("rkld needs reinforced-model logits");
            return rkld_forget_loss(logits, from_current ? logits : need_original(), ref.reinforced, obj.alpha, k,
                                    obj.effective_divergence(), g);
        case ForgetMethod::ga:
            return ga_forget_loss(logits, k, g);
        case ForgetMethod::npo:
            return npo_forget_loss(logits, need_original(), k, obj.beta, g);
        case ForgetMethod::me:
            return me_forget_loss(logits, g);
    }
    throw ConfigError("unhandled forget method");
}

/// The retain term of `obj` at one position with label y.
inline double retain_position_loss(const UnlearnObjective& obj, std::span<const double> logits, std::size_t y,
                                   std::span<const double> original_logits, LogitGrad g = {}) {
    switch (obj.retain_loss) {
        case RetainLoss::kl_distill:
            if (original_logits.empty()) throw ConfigError("kl retain loss needs starting-model logits");
            return retain_kl_loss(original_logits, logits, g);
        case RetainLoss::gd_ce:
            return retain_gd_loss(logits, y, g);
        case RetainLoss::none:
            return 0.0;
    }
    throw ConfigError("unhandled retain loss");
}

/// E_f[L_f] + lambda * E_r[L_r] from per-sequence losses (each already averaged over its
/// positions). The retain term is dropped when retain_loss is none.
inline double compose_objective(const UnlearnObjective& obj, std::span<const double> forget_losses,
                                std::span<const double> retain_losses) {
    const double f = mean(forget_losses);
    if (obj.retain_loss == RetainLoss::none) return f;
    return f + obj.lambda * mean(retain_losses);
}

} // namespace ulab
