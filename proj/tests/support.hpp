// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-side oracles. Nothing here calls the library's gradient code: the finite-difference
// checks evaluate losses through forward() only, and the target oracles rebuild every
// quantity from the textbook formulas.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ulab/ulab.hpp"

namespace ulab::testing {

/// Small model used by every gradient oracle: two layers, d = 8, |V| = 12.
inline ModelConfig tiny_config() {
    ModelConfig c;
    c.vocab_size = 12;
    c.d_model = 8;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ff = 16;
    c.max_len = 8;
    return c;
}

/// Random five-token "facts" over a vocabulary of size v (content ids start at 3).
inline std::vector<TokenSeq> random_facts(std::size_t n, std::size_t v, Rng& rng) {
    std::vector<TokenSeq> out;
    for (std::size_t i = 0; i < n; ++i) {
        TokenSeq f{Vocab::kBos};
        for (int t = 0; t < 3; ++t) f.push_back(static_cast<TokenId>(3 + uniform_index(rng, v - 3)));
        f.push_back(Vocab::kEos);
        out.push_back(f);
    }
    return out;
}

// Independent scalar oracles.
inline double ref_log_softmax_at(std::span<const double> z, std::size_t i) {
    long double m = z[0];
    for (double v : z) m = std::max<long double>(m, v);
    long double s = 0;
    for (double v : z) s += std::exp(static_cast<long double>(v) - m);
    return static_cast<double>(static_cast<long double>(z[i]) - m - std::log(s));
}

inline std::vector<double> ref_probs(std::span<const double> z) {
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::exp(ref_log_softmax_at(z, i));
    return p;
}

/// Loss of one position as a plain function of the live logits. Reference logits are
/// bound by the caller, so this form has no gradient path into any target.
using PositionLoss = std::function<double(std::span<const double> logits, std::size_t row, std::size_t fact,
                                          TokenId token)>;

inline double total_loss(const ModelParams& params, const std::vector<TokenSeq>& facts, const PositionLoss& loss) {
    double s = 0.0;
    for (std::size_t f = 0; f < facts.size(); ++f) {
        const Matrix logits = forward(params, context_of(facts[f]));
        for (auto [row, k] : answer_positions(facts[f])) s += loss(logits.row(row), row, f, k);
    }
    return s;
}

struct GradCheckResult {
    double worst_rel = 0.0;
    std::size_t coords = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor); the floor keeps exactly-zero coordinates
/// (tokens absent from the batch) from dividing by zero.
inline double rel_error(double analytic, double numeric, double floor = 1e-7) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences with `step` at `n_coords` random coordinates, compared with the
/// analytic gradient `grad`.
inline GradCheckResult finite_difference_check(const ModelParams& params, const std::vector<TokenSeq>& facts,
                                               const PositionLoss& loss, std::span<const double> grad,
                                               std::size_t n_coords, Rng& rng, double step = 1e-4) {
    GradCheckResult r;
    ModelParams p = params;
    for (std::size_t c = 0; c < n_coords; ++c) {
        const auto i = static_cast<std::size_t>(uniform_index(rng, p.size()));
        const double orig = p.data()[i];
        p.data()[i] = orig + step;
        const double up = total_loss(p, facts, loss);
        p.data()[i] = orig - step;
        const double down = total_loss(p, facts, loss);
        p.data()[i] = orig;
        const double numeric = (up - down) / (2.0 * step);
        r.worst_rel = std::max(r.worst_rel, rel_error(grad[i], numeric));
        ++r.coords;
    }
    return r;
}

/// One loss configuration exercised by the gradient oracle.
struct LossCase {
    std::string name;
    UnlearnObjective obj;
    bool forget = true; // false: retain term
};

inline std::vector<LossCase> all_loss_cases() {
    std::vector<LossCase> cases;
    auto forget = [&](std::string name, ForgetMethod m, std::optional<DivergenceKind> d = {},
                      std::optional<TargetSource> s = {}) {
        UnlearnObjective o;
        o.method = m;
        o.divergence = d;
        o.target_source = s;
        cases.push_back({std::move(name), o, true});
    };
    forget("unilogit", ForgetMethod::unilogit);
    forget("unilogit-fkl", ForgetMethod::unilogit, DivergenceKind::forward_kl);
    forget("unilogit-orig", ForgetMethod::unilogit, {}, TargetSource::original_model);
    forget("undial", ForgetMethod::undial);
    forget("undial-rkl", ForgetMethod::undial, DivergenceKind::reverse_kl);
    forget("undial-current", ForgetMethod::undial, {}, TargetSource::current_model);
    forget("rkld", ForgetMethod::rkld);
    forget("ga", ForgetMethod::ga);
    forget("npo", ForgetMethod::npo);
    forget("me", ForgetMethod::me);
    UnlearnObjective kl;
    kl.retain_loss = RetainLoss::kl_distill;
    cases.push_back({"retain-kl", kl, false});
    UnlearnObjective gd;
    gd.retain_loss = RetainLoss::gd_ce;
    cases.push_back({"retain-gd", gd, false});
    return cases;
}

/// Runs the gradient oracle for one loss case with the given model seed; returns the worst
/// relative error over `n_coords` coordinates.
inline double gradient_oracle(const LossCase& lc, std::uint64_t seed, std::size_t n_coords = 20) {
    const ModelConfig cfg = tiny_config();
    // sigma 0.5 keeps activations away from the near-linear regime of a 0.02 init
    const ModelParams theta = init_params(cfg, seed, 0.5);
    const ModelParams theta_o = init_params(cfg, seed + 1000, 0.5);
    const ModelParams theta_s = init_params(cfg, seed + 2000, 0.5);
    Rng rng = make_rng(seed, 77);
    const auto facts = random_facts(3, cfg.vocab_size, rng);

    std::vector<Matrix> lo, ls, lt;
    for (const auto& f : facts) {
        lo.push_back(forward(theta_o, context_of(f)));
        ls.push_back(forward(theta_s, context_of(f)));
        lt.push_back(forward(theta, context_of(f))); // live logits at the unperturbed point
    }

    // Analytic gradient through the library.
    SequenceObjective analytic = [&](std::size_t b, const Matrix& logits, Matrix& dlogits) {
        double s = 0.0;
        for (auto [row, k] : answer_positions(facts[b])) {
            LogitGrad g{dlogits.row(row), 1.0};
            if (lc.forget)
                s += forget_position_loss(lc.obj, logits.row(row), k, {lo[b].row(row), ls[b].row(row)}, g);
            else
                s += retain_position_loss(lc.obj, logits.row(row), k, lo[b].row(row), g);
        }
        return s;
    };
    std::vector<TokenSeq> ctx;
    for (const auto& f : facts) ctx.push_back(context_of(f));
    const auto lg = loss_and_grad(theta, ctx, analytic);

    // Oracle loss: same value at theta, but any target is frozen at the unperturbed point.
    PositionLoss oracle = [&](std::span<const double> z, std::size_t row, std::size_t f, TokenId k) -> double {
        const auto& o = lc.obj;
        if (!lc.forget) return retain_position_loss(o, z, k, lo[f].row(row));
        const bool current = o.effective_target_source() == TargetSource::current_model;
        switch (o.method) {
            case ForgetMethod::unilogit:
                return unilogit_forget_loss(z, current ? lt[f].row(row) : lo[f].row(row), k, o.effective_divergence());
            case ForgetMethod::undial:
                return undial_forget_loss(z, current ? lt[f].row(row) : lo[f].row(row), k, o.gamma,
                                          o.effective_divergence());
            case ForgetMethod::rkld:
                return rkld_forget_loss(z, current ? lt[f].row(row) : lo[f].row(row), ls[f].row(row), o.alpha, k,
                                        o.effective_divergence());
            default: return forget_position_loss(o, z, k, {lo[f].row(row), ls[f].row(row)});
        }
    };
    Rng coord_rng = make_rng(seed, 99);
    return finite_difference_check(theta, facts, oracle, lg.grad, n_coords, coord_rng).worst_rel;
}

} // namespace ulab::testing
