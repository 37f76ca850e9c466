// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pareto aggregation over evaluated runs. Axes: retain recall (x) and forgetting,
// 1 - forget recall (y); up and to the right is better on both.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "ulab/engine.hpp"
#include "ulab/eval.hpp"
#include "ulab/io.hpp"

namespace ulab {

struct EvaluatedRun {
    UnlearnRunConfig config;
    RunStatus status = RunStatus::completed;
    EvalReport eval;
};

struct ReportRow {
    std::string method; // run_label()
    UnlearnRunConfig config;
    EvalReport eval;
    bool dominated = false;

    double retain_axis() const { return eval.retain_recall; }
    double forgetting() const { return 1.0 - eval.forget_recall; }
};

struct SweepReport {
    std::vector<ReportRow> rows;                               // completed runs, canonical order
    std::map<std::string, std::vector<std::size_t>> frontier;  // method -> row indices, by retain axis
};

namespace detail {

inline auto row_key(const ReportRow& r) {
    const auto& c = r.config;
    const auto& o = c.objective;
    return std::make_tuple(r.method, r.retain_axis(), r.forgetting(), c.lr, o.gamma, o.alpha, o.beta, o.lambda,
                           c.epochs, c.batch_size, c.seed, r.eval.kl_outputs_vs_retrain);
}

inline bool dominates(const ReportRow& a, const ReportRow& b) {
    return a.retain_axis() >= b.retain_axis() && a.forgetting() >= b.forgetting() &&
           (a.retain_axis() > b.retain_axis() || a.forgetting() > b.forgetting());
}

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace detail

/// Groups completed runs by curve label, orders points along the retain axis, and flags
/// points dominated by another point of the same curve. Independent of input order.
inline SweepReport pareto_report(const std::vector<EvaluatedRun>& runs) {
    SweepReport rep;
    for (const auto& r : runs) {
        if (r.status != RunStatus::completed) continue;
        rep.rows.push_back({run_label(r.config.objective), r.config, r.eval, false});
    }
    std::sort(rep.rows.begin(), rep.rows.end(),
              [](const ReportRow& a, const ReportRow& b) { return detail::row_key(a) < detail::row_key(b); });
    for (auto& row : rep.rows) {
        for (const auto& other : rep.rows)
            if (other.method == row.method && detail::dominates(other, row)) row.dominated = true;
    }
    for (std::size_t i = 0; i < rep.rows.size(); ++i)
        if (!rep.rows[i].dominated) rep.frontier[rep.rows[i].method].push_back(i);
    return rep;
}

inline const char* kReportCsvHeader =
    "method,lr,gamma,alpha,beta,retain_recall,forget_recall,kl_outputs,kl_targets,kl_baseline,"
    "neighbor_recall,forget_nll,lambda,retain_loss,divergence,target_source,epochs,batch_size,seed,dominated";

inline std::string report_csv(const SweepReport& rep) {
    std::string s = std::string(kReportCsvHeader) + "\n";
    for (const auto& r : rep.rows) {
        const auto& c = r.config;
        const auto& o = c.objective;
        const auto& e = r.eval;
        s += r.method + "," + detail::fmt(c.lr) + "," + detail::fmt(o.gamma) + "," + detail::fmt(o.alpha) + "," +
             detail::fmt(o.beta) + "," + detail::fmt(e.retain_recall) + "," + detail::fmt(e.forget_recall) + "," +
             detail::fmt(e.kl_outputs_vs_retrain) + "," +
             (e.kl_targets_vs_retrain ? detail::fmt(*e.kl_targets_vs_retrain) : std::string()) + "," +
             detail::fmt(e.kl_baseline) + "," + detail::fmt(e.neighbor_recall) + "," + detail::fmt(e.forget_nll) +
             "," + detail::fmt(o.lambda) + "," + std::string(to_string(o.retain_loss)) + "," +
             std::string(to_string(o.effective_divergence())) + "," +
             std::string(to_string(o.effective_target_source())) + "," + std::to_string(c.epochs) + "," +
             std::to_string(c.batch_size) + "," + std::to_string(c.seed) + "," + (r.dominated ? "1" : "0") + "\n";
    }
    return s;
}

inline json to_json(const EvalReport& e) {
    return json{{"forget_recall", e.forget_recall},
                {"retain_recall", e.retain_recall},
                {"neighbor_recall", e.neighbor_recall},
                {"forget_nll", e.forget_nll},
                {"kl_targets_vs_retrain", e.kl_targets_vs_retrain ? json(*e.kl_targets_vs_retrain) : json(nullptr)},
                {"kl_outputs_vs_retrain", e.kl_outputs_vs_retrain},
                {"kl_baseline", e.kl_baseline}};
}

inline json report_json(const SweepReport& rep) {
    json methods = json::object();
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const auto& r = rep.rows[i];
        json point{{"row", i},
                   {"retain_recall", r.retain_axis()},
                   {"forgetting", r.forgetting()},
                   {"config", to_json(r.config)},
                   {"metrics", to_json(r.eval)},
                   {"dominated", r.dominated}};
        methods[r.method]["points"].push_back(point);
    }
    for (const auto& [method, idx] : rep.frontier) {
        json f = json::array();
        for (auto i : idx) f.push_back({{"row", i}, {"retain_recall", rep.rows[i].retain_axis()},
                                        {"forgetting", rep.rows[i].forgetting()}});
        methods[method]["frontier"] = f;
    }
    return json{{"kl_direction", kKlDirection}, {"axes", {"retain_recall", "1 - forget_recall"}},
                {"runs", rep.rows.size()}, {"methods", methods}};
}

/// One retain-recall band where both curves have at least one point.
struct BandComparison {
    double lo = 0.0;
    double hi = 0.0;
    double best_a = 0.0; // highest forgetting of curve a inside the band
    double best_b = 0.0;
};

/// Bands of `width` over [0, 1] (a recall of exactly 1 falls in the top band).
inline std::vector<BandComparison> compare_in_bands(const SweepReport& rep, const std::string& a,
                                                    const std::string& b, double width = 0.05) {
    const int n_bands = static_cast<int>(std::ceil(1.0 / width - 1e-9));
    auto band_of = [&](double x) { return std::clamp(static_cast<int>(std::floor(x / width + 1e-9)), 0, n_bands - 1); };
    std::map<int, std::pair<std::optional<double>, std::optional<double>>> bands;
    for (const auto& r : rep.rows) {
        auto& slot = bands[band_of(r.retain_axis())];
        if (r.method == a) slot.first = std::max(slot.first.value_or(-1.0), r.forgetting());
        if (r.method == b) slot.second = std::max(slot.second.value_or(-1.0), r.forgetting());
    }
    std::vector<BandComparison> out;
    for (const auto& [band, v] : bands) {
        if (v.first && v.second) out.push_back({band * width, (band + 1) * width, *v.first, *v.second});
    }
    return out;
}

} // namespace ulab
