// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end helpers: the model roles built from one corpus and seed, the default
// method/learning-rate grid, and evaluation of finished runs.

#pragma once

#include <cstdint>
#include <vector>

#include "ulab/corpus.hpp"
#include "ulab/engine.hpp"
#include "ulab/eval.hpp"
#include "ulab/model.hpp"
#include "ulab/report.hpp"
#include "ulab/targets.hpp"
#include "ulab/train.hpp"

namespace ulab {

/// Every model role for one corpus: untrained init, starting (all facts), retrained
/// (retain facts only) and reinforced (starting model fine-tuned on the forget facts).
/// theta_o and theta_r share the same init and training schedule.
struct LabModels {
    ModelParams theta_init;
    ModelParams theta_o;
    ModelParams theta_r;
    ModelParams theta_s;
};

inline LabModels build_lab(const FactCorpus& corpus, std::uint64_t seed, const TrainConfig& base = {}) {
    LabModels m;
    m.theta_init = init_params(default_model_config(corpus.vocab.size()), seed);
    TrainConfig tc = base;
    tc.seed = seed;
    m.theta_o = train(m.theta_init, corpus.facts, tc).params;
    m.theta_r = train(m.theta_init, corpus.retain_facts(), tc).params;
    m.theta_s = reinforce_model(m.theta_o, corpus.forget_facts(), default_reinforce_config(seed));
    return m;
}

/// Learning rates shared by every method in the default sweep.
inline const std::vector<double>& default_lr_grid() {
    static const std::vector<double> lrs = {3e-4, 1e-3, 3e-3};
    return lrs;
}

/// Six methods crossed with default_lr_grid(), each with its default retain loss.
inline std::vector<UnlearnRunConfig> default_method_grid(std::uint64_t seed) {
    std::vector<UnlearnRunConfig> grid;
    for (auto m : {ForgetMethod::unilogit, ForgetMethod::undial, ForgetMethod::rkld, ForgetMethod::ga,
                   ForgetMethod::npo, ForgetMethod::me}) {
        for (double lr : default_lr_grid()) {
            UnlearnRunConfig c;
            c.objective.method = m;
            c.objective.retain_loss = m == ForgetMethod::me ? RetainLoss::gd_ce : RetainLoss::kl_distill;
            c.lr = lr;
            c.seed = seed;
            grid.push_back(c);
        }
    }
    return grid;
}

/// Unilogit ablation arms over default_lr_grid(): forward KL, and original-model targets.
inline std::vector<UnlearnRunConfig> default_ablation_grid(std::uint64_t seed) {
    std::vector<UnlearnRunConfig> grid;
    for (int arm = 0; arm < 2; ++arm) {
        for (double lr : default_lr_grid()) {
            UnlearnRunConfig c;
            if (arm == 0) c.objective.divergence = DivergenceKind::forward_kl;
            else c.objective.target_source = TargetSource::original_model;
            c.lr = lr;
            c.seed = seed;
            grid.push_back(c);
        }
    }
    return grid;
}

/// Chance-level recall on `facts`: mean over `n_inits` untrained initializations, so a
/// single lucky init on a small set does not set the level.
inline double untrained_chance_recall(const FactCorpus& corpus, const std::vector<TokenSeq>& facts,
                                      int n_inits = 32) {
    const auto cfg = default_model_config(corpus.vocab.size());
    double sum = 0.0;
    for (int s = 0; s < n_inits; ++s) sum += completion_recall(init_params(cfg, static_cast<std::uint64_t>(s)), facts);
    return sum / n_inits;
}

inline EvaluatedRun evaluate_run(const RunRecord& run, const LabModels& lab, const FactCorpus& corpus) {
    EvaluatedRun e;
    e.config = run.config;
    e.status = run.status;
    if (run.status == RunStatus::completed)
        e.eval = evaluate(run.final_params, lab.theta_o, lab.theta_r, corpus, run.config.objective, &lab.theta_s);
    return e;
}

} // namespace ulab
