// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Unlearning loop and hyperparameter sweeps.
//
// One optimisation step:
//   1. forward the live model on a forget batch;
//   2. build detached targets from those logits (current-model source) or from the
//      starting-model logits cached before training (original-model source);
//   3. pair it with the next retain batch and use cached starting-model logits there;
//   4. forget mean + lambda * retain mean, backward, Adam step.

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ulab/checkpoint.hpp"
#include "ulab/corpus.hpp"
#include "ulab/error.hpp"
#include "ulab/losses.hpp"
#include "ulab/model.hpp"
#include "ulab/train.hpp"

namespace ulab {

struct UnlearnRunConfig {
    UnlearnObjective objective;
    double lr = 1e-3;
    int epochs = 10;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    int checkpoint_every = 1;
    bool retain_available = true;

    void validate() const {
        if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite non-negative number");
        if (epochs < 0) throw ConfigError("epochs must be non-negative");
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (checkpoint_every <= 0) throw ConfigError("checkpoint_every must be positive");
        objective.validate(retain_available);
    }
};

/// Curve name used in reports; ablation arms that override a method default get a suffix.
inline std::string run_label(const UnlearnObjective& obj) {
    std::string s(to_string(obj.method));
    UnlearnObjective defaults;
    defaults.method = obj.method;
    if (obj.effective_target_source() != defaults.effective_target_source())
        s += obj.effective_target_source() == TargetSource::original_model ? "(orig)" : "(current)";
    if (obj.effective_divergence() != defaults.effective_divergence())
        s += obj.effective_divergence() == DivergenceKind::forward_kl ? "-fkl" : "-rkl";
    if (obj.retain_loss != RetainLoss::none) s += "+" + std::string(to_string(obj.retain_loss));
    return s;
}

struct EpochRecord {
    int epoch = 0;
    double forget_loss = 0.0;
    double retain_loss = 0.0;
    std::string checkpoint_path; // empty when checkpoints are kept in memory only
};

enum class RunStatus { completed, aborted, failed };

inline std::string_view to_string(RunStatus s) {
    switch (s) {
        case RunStatus::completed: return "completed";
        case RunStatus::aborted: return "aborted";
        case RunStatus::failed: return "failed";
    }
    return "?";
}

struct RunRecord {
    UnlearnRunConfig config;
    std::vector<EpochRecord> epochs;
    std::vector<std::pair<int, ModelParams>> checkpoints; // (epoch, params), in memory
    ModelParams final_params;
    RunStatus status = RunStatus::completed;
    std::optional<int> aborted_epoch;
    std::string error;
};

struct UnlearnOptions {
    const ModelParams* reinforced = nullptr; // required by rkld
    std::string checkpoint_dir;              // when set, per-epoch checkpoints are written here
    bool keep_checkpoints = true;            // keep per-epoch params in the record
    bool require_trained = true;             // enforce CE(theta_o, corpus) < 1
};

namespace detail {

// Starting-model (and reinforced-model) logits per fact, computed once per run.
struct FrozenLogits {
    std::vector<Matrix> original;
    std::vector<Matrix> reinforced;
};

inline FrozenLogits cache_frozen_logits(const ModelParams& theta_o, const ModelParams* theta_s,
                                        const FactCorpus& corpus) {
    FrozenLogits f;
    for (const auto& fact : corpus.facts) {
        f.original.push_back(forward(theta_o, context_of(fact)));
        if (theta_s) f.reinforced.push_back(forward(*theta_s, context_of(fact)));
    }
    return f;
}

} // namespace detail

/// Runs one unlearning job from theta_o. Divergence aborts the run and returns the partial
/// record; configuration problems throw ConfigError.
inline RunRecord unlearn(const ModelParams& theta_o, const FactCorpus& corpus, const UnlearnRunConfig& cfg,
                         const UnlearnOptions& opts = {}) {
    cfg.validate();
    const auto& obj = cfg.objective;
    if (corpus.forget_ids.empty()) throw ConfigError("unlearn: empty forget set");
    if (cfg.retain_available && corpus.retain_ids.empty()) throw ConfigError("unlearn: empty retain set");
    if (obj.method == ForgetMethod::rkld && !opts.reinforced) throw ConfigError("rkld needs a reinforced model");
    if (theta_o.config().vocab_size != corpus.vocab.size()) throw ConfigError("model vocabulary does not match corpus");
    if (opts.require_trained && !(mean_answer_ce(theta_o, corpus.facts) < 1.0))
        throw ConfigError("starting model is not trained on the corpus (CE >= 1)");

    RunRecord rec;
    rec.config = cfg;
    const auto frozen = detail::cache_frozen_logits(theta_o, opts.reinforced, corpus);
    ModelParams theta = theta_o;
    Adam adam(theta.size());
    Rng rng = make_rng(cfg.seed, 0x0F0F);

    std::vector<std::size_t> retain_order = corpus.retain_ids;
    shuffle(std::span<std::size_t>(retain_order), rng);
    std::size_t retain_cursor = 0;
    const bool use_retain = cfg.retain_available && obj.retain_loss != RetainLoss::none;

    if (!opts.checkpoint_dir.empty()) std::filesystem::create_directories(opts.checkpoint_dir);
    std::vector<double> grad(theta.size());

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<double> forget_means, retain_means;
        try {
            for (const auto& local : epoch_batches(corpus.forget_ids.size(), cfg.batch_size, rng)) {
                std::vector<std::size_t> f_ids;
                std::vector<TokenSeq> f_ctx;
                for (auto i : local) {
                    f_ids.push_back(corpus.forget_ids[i]);
                    f_ctx.push_back(context_of(corpus.facts[f_ids.back()]));
                }
                std::fill(grad.begin(), grad.end(), 0.0);
                const double fw = 1.0 / static_cast<double>(f_ids.size());
                SequenceObjective forget_obj = [&](std::size_t b, const Matrix& logits, Matrix& dlogits) {
                    const auto id = f_ids[b];
                    const auto pos = answer_positions(corpus.facts[id]);
                    const double w = fw / static_cast<double>(pos.size());
                    double sum = 0.0;
                    for (auto [row, k] : pos) {
                        ReferenceLogits ref{frozen.original[id].row(row),
                                            frozen.reinforced.empty() ? std::span<const double>{}
                                                                      : frozen.reinforced[id].row(row)};
                        sum += forget_position_loss(obj, logits.row(row), k, ref, {dlogits.row(row), w});
                    }
                    return w * sum;
                };
                const double f_loss = accumulate_loss_and_grad(theta, f_ctx, forget_obj, grad);
                double r_loss = 0.0;
                if (use_retain) {
                    std::vector<std::size_t> r_ids;
                    std::vector<TokenSeq> r_ctx;
                    for (std::size_t n = 0; n < cfg.batch_size && n < retain_order.size(); ++n) {
                        r_ids.push_back(retain_order[retain_cursor]);
                        r_ctx.push_back(context_of(corpus.facts[r_ids.back()]));
                        retain_cursor = (retain_cursor + 1) % retain_order.size();
                    }
                    const double rw = 1.0 / static_cast<double>(r_ids.size());
                    SequenceObjective retain_obj = [&](std::size_t b, const Matrix& logits, Matrix& dlogits) {
                        const auto id = r_ids[b];
                        const auto pos = answer_positions(corpus.facts[id]);
                        const double w = rw / static_cast<double>(pos.size());
                        double sum = 0.0;
                        for (auto [row, y] : pos)
                            sum += retain_position_loss(obj, logits.row(row), y, frozen.original[id].row(row),
                                                        {dlogits.row(row), obj.lambda * w});
                        return w * sum;
                    };
                    r_loss = accumulate_loss_and_grad(theta, r_ctx, retain_obj, grad);
                }
                const double total = f_loss + (use_retain ? obj.lambda * r_loss : 0.0);
                if (!std::isfinite(total) || std::abs(total) > kDivergenceThreshold)
                    throw DivergenceError("unlearning loss left the stable range", epoch);
                adam.step(theta.data(), grad, cfg.lr);
                if (!all_finite(theta.data())) throw DivergenceError("non-finite parameters", epoch);
                forget_means.push_back(f_loss);
                retain_means.push_back(r_loss);
            }
        } catch (const NumericError& e) {
            rec.status = RunStatus::aborted;
            rec.aborted_epoch = epoch;
            rec.error = e.what();
            break;
        } catch (const DivergenceError& e) {
            rec.status = RunStatus::aborted;
            rec.aborted_epoch = epoch;
            rec.error = e.what();
            break;
        }

        EpochRecord er;
        er.epoch = epoch;
        er.forget_loss = mean(forget_means);
        er.retain_loss = mean(retain_means);
        const bool checkpoint_now = epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs;
        if (checkpoint_now) {
            if (!opts.checkpoint_dir.empty()) {
                er.checkpoint_path = (std::filesystem::path(opts.checkpoint_dir) /
                                      ("epoch_" + std::to_string(epoch) + ".ulab")).string();
                save_checkpoint(theta, er.checkpoint_path);
            }
            if (opts.keep_checkpoints) rec.checkpoints.emplace_back(epoch, theta);
        }
        rec.epochs.push_back(std::move(er));
    }
    rec.final_params = std::move(theta);
    return rec;
}

struct SweepOptions {
    const ModelParams* reinforced = nullptr;
    std::string output_dir;  // per-run checkpoint dirs run_<index>/ when set
    bool keep_checkpoints = true;
    unsigned jobs = 1;
    std::function<void(std::size_t index, const RunRecord&)> on_run_done; // serialized across jobs
};

/// Runs every grid entry independently. Results are ordered by grid index whatever the
/// job count; a failing entry is recorded and the sweep continues.
inline std::vector<RunRecord> sweep(const ModelParams& theta_o, const FactCorpus& corpus,
                                    const std::vector<UnlearnRunConfig>& grid, const SweepOptions& opts = {}) {
    if (grid.empty()) throw ConfigError("sweep: empty grid");
    std::vector<RunRecord> out(grid.size());
    std::atomic<std::size_t> next{0};
    std::mutex callback_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < grid.size(); i = next++) {
            UnlearnOptions uo;
            uo.reinforced = opts.reinforced;
            uo.keep_checkpoints = opts.keep_checkpoints;
            if (!opts.output_dir.empty())
                uo.checkpoint_dir = (std::filesystem::path(opts.output_dir) / ("run_" + std::to_string(i))).string();
            try {
                out[i] = unlearn(theta_o, corpus, grid[i], uo);
            } catch (const std::exception& e) {
                out[i] = RunRecord{};
                out[i].config = grid[i];
                out[i].status = RunStatus::failed;
                out[i].error = e.what();
            }
            if (opts.on_run_done) {
                std::lock_guard lock(callback_mutex);
                opts.on_run_done(i, out[i]);
            }
        }
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(opts.jobs, static_cast<unsigned>(grid.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    return out;
}

} // namespace ulab
