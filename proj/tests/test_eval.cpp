// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "support.hpp"

using namespace ulab;
using namespace ulab::testing;

namespace {

const FactCorpus& corpus() {
    static const FactCorpus c = generate_corpus({10, 4, 2, 7});
    return c;
}

const LabModels& lab() {
    static const LabModels m = build_lab(corpus(), 0);
    return m;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

EvaluatedRun synthetic_run(ForgetMethod m, double lr, double retain, double forget, double kl = 1.0) {
    EvaluatedRun r;
    r.config.objective.method = m;
    if (m == ForgetMethod::me) r.config.objective.retain_loss = RetainLoss::gd_ce;
    r.config.lr = lr;
    r.eval.retain_recall = retain;
    r.eval.forget_recall = forget;
    r.eval.kl_outputs_vs_retrain = kl;
    r.eval.kl_baseline = 9.5;
    r.eval.forget_nll = 2.25;
    r.eval.neighbor_recall = retain;
    if (m == ForgetMethod::unilogit || m == ForgetMethod::undial) r.eval.kl_targets_vs_retrain = kl / 2;
    return r;
}

} // namespace

TEST_CASE("lcs and reference answers") {
    CHECK(lcs_length({1, 2, 3, 4}, {2, 4}) == 2);
    CHECK(lcs_length({}, {1}) == 0);
    CHECK(lcs_length({5, 6}, {6, 5}) == 1);
    CHECK(reference_answer(TokenSeq{0, 3, 4, 9, Vocab::kPad, 1}) == TokenSeq{9});
    CHECK(reference_answer(TokenSeq{0, 3, 4, 9, Vocab::kPad, 10, 1}) == TokenSeq{9, 10});
}

TEST_CASE("recall ignores padding in references") {
    const auto facts = corpus().retain_facts();
    std::vector<TokenSeq> padded;
    for (auto f : facts) {
        f.insert(f.end() - 1, Vocab::kPad);
        padded.push_back(f);
    }
    CHECK(completion_recall(lab().theta_o, padded) == completion_recall(lab().theta_o, facts));
}

TEST_CASE("recall baselines for the model roles") {
    CHECK(completion_recall(lab().theta_o, corpus().retain_facts()) > 0.9);
    CHECK(completion_recall(lab().theta_o, corpus().forget_facts()) > 0.9);
    CHECK(completion_recall(lab().theta_r, corpus().retain_facts()) > 0.9);
    const double chance = untrained_chance_recall(corpus(), corpus().forget_facts());
    CHECK(chance < 0.1); // single-token answers over 37 tokens
    CHECK(std::abs(completion_recall(lab().theta_r, corpus().forget_facts()) - chance) <= 0.1);
}

TEST_CASE("kl identities") {
    const auto forget = corpus().forget_facts();
    CHECK(kl_outputs_vs_retrain(lab().theta_r, lab().theta_r, forget) == 0.0);
    const double base = kl_outputs_vs_retrain(lab().theta_o, lab().theta_r, forget);
    CHECK(base > 0.0);

    UnlearnObjective undial0;
    undial0.method = ForgetMethod::undial;
    undial0.gamma = 0.0;
    CHECK(kl_soft_targets_vs_retrain(lab().theta_o, lab().theta_r, undial0, forget) == base);
    CHECK(kl_soft_targets_vs_retrain(lab().theta_r, lab().theta_r, undial0, forget) == 0.0);

    const auto e = evaluate(lab().theta_o, lab().theta_o, lab().theta_r, corpus(), undial0);
    CHECK(e.kl_baseline == base);
    CHECK(e.kl_outputs_vs_retrain == base);
    REQUIRE(e.kl_targets_vs_retrain.has_value());
    CHECK(*e.kl_targets_vs_retrain == base);

    UnlearnObjective ga;
    ga.method = ForgetMethod::ga;
    CHECK_FALSE(evaluate(lab().theta_o, lab().theta_o, lab().theta_r, corpus(), ga).kl_targets_vs_retrain);
    CHECK_THROWS_AS(kl_outputs_vs_retrain(init_params(tiny_config(), 0), lab().theta_r, forget), ShapeError);
}

TEST_CASE("kl agrees with a brute-force recomputation from dumped traces") {
    std::vector<std::size_t> ids(corpus().retain_ids.begin(), corpus().retain_ids.begin() + 10);
    const auto model = unlearn(lab().theta_o, corpus(), [] {
                           UnlearnRunConfig c;
                           c.epochs = 2;
                           return c;
                       }()).final_params;
    const auto parse = [](const std::string& text) {
        std::vector<json> out;
        std::istringstream in(text);
        for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
        return out;
    };
    const auto tr = parse(dump_prob_trace(lab().theta_r, corpus(), ids));
    const auto tm = parse(dump_prob_trace(model, corpus(), ids));
    REQUIRE(tr.size() == 10);
    REQUIRE(tm.size() == 10);
    double sum = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(tr[i]["fact_id"] == ids[i]);
        CHECK(tr[i]["position"] == 3);
        const auto p = tr[i]["probs"].get<std::vector<double>>();
        const auto q = tm[i]["probs"].get<std::vector<double>>();
        double kl = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j)
            if (p[j] > 0) kl += p[j] * std::log(p[j] / std::max(q[j], 1e-12));
        sum += kl;
    }
    CHECK(std::abs(sum / 10 - kl_outputs_vs_retrain(model, lab().theta_r, corpus().subset(ids))) < 1e-9);
}

TEST_CASE("undial trajectory is static, empty runs give empty trajectories") {
    UnlearnRunConfig cfg;
    cfg.objective.method = ForgetMethod::undial;
    cfg.epochs = 4;
    cfg.lr = 3e-3;
    const auto rec = unlearn(lab().theta_o, corpus(), cfg);
    const auto traj = kl_trajectory(rec, lab().theta_o, lab().theta_r, corpus().forget_facts());
    REQUIRE(traj.size() == 4);
    for (const auto& [e, kl] : traj) CHECK(std::abs(kl - traj.front().second) <= 1e-12);

    RunRecord empty;
    CHECK(kl_trajectory(empty, lab().theta_o, lab().theta_r, corpus().forget_facts()).empty());
}

TEST_CASE("unilogit trajectory follows the checkpoints") {
    UnlearnRunConfig cfg;
    cfg.epochs = 3;
    const auto rec = unlearn(lab().theta_o, corpus(), cfg);
    const auto traj = kl_trajectory(rec, lab().theta_o, lab().theta_r, corpus().forget_facts());
    REQUIRE(traj.size() == 3);
    CHECK(traj.back().second ==
          kl_soft_targets_vs_retrain(rec.final_params, lab().theta_r, cfg.objective, corpus().forget_facts()));
    CHECK(traj.front().second != traj.back().second);
}

TEST_CASE("pareto report: single point, dominance and order invariance") {
    const auto one = pareto_report({synthetic_run(ForgetMethod::unilogit, 1e-3, 0.9, 0.2)});
    REQUIRE(one.rows.size() == 1);
    CHECK(one.frontier.at("unilogit+kl") == std::vector<std::size_t>{0});

    std::vector<EvaluatedRun> runs = {
        synthetic_run(ForgetMethod::unilogit, 1e-3, 0.9, 0.1), // dominates the next
        synthetic_run(ForgetMethod::unilogit, 3e-3, 0.8, 0.3),
        synthetic_run(ForgetMethod::unilogit, 1e-2, 0.5, 0.0),
        synthetic_run(ForgetMethod::ga, 1e-3, 0.95, 0.6),
        synthetic_run(ForgetMethod::ga, 3e-3, 0.6, 0.0),
    };
    EvaluatedRun aborted = synthetic_run(ForgetMethod::ga, 1.0, 0.0, 0.0);
    aborted.status = RunStatus::aborted;
    runs.push_back(aborted);

    const auto rep = pareto_report(runs);
    CHECK(rep.rows.size() == 5);
    for (const auto& r : rep.rows) {
        if (r.method == "unilogit+kl" && r.config.lr == 3e-3) CHECK(r.dominated);
        if (r.method == "unilogit+kl" && r.config.lr == 1e-3) CHECK_FALSE(r.dominated);
        if (r.method == "ga+kl") CHECK_FALSE(r.dominated); // different methods never dominate each other
    }
    std::mt19937 shuffler(3);
    for (int trial = 0; trial < 10; ++trial) {
        std::shuffle(runs.begin(), runs.end(), shuffler);
        const auto again = pareto_report(runs);
        CHECK(report_csv(again) == report_csv(rep));
        CHECK(report_json(again).dump() == report_json(rep).dump());
    }
    CHECK(pareto_report({}).rows.empty());
}

TEST_CASE("report csv layout matches the golden file") {
    const std::vector<EvaluatedRun> runs = {
        synthetic_run(ForgetMethod::unilogit, 1e-3, 0.96875, 0.125, 3.5),
        synthetic_run(ForgetMethod::undial, 3e-4, 1.0, 1.0, 9.25),
        synthetic_run(ForgetMethod::me, 3e-3, 0.75, 0.0, 2.0),
    };
    const auto csv = report_csv(pareto_report(runs));
    CHECK(csv.substr(0, csv.find('\n')) == kReportCsvHeader);
    CHECK(csv == read_file(std::string(ULAB_GOLDEN_DIR) + "/report_small.csv"));
    const auto js = report_json(pareto_report(runs));
    CHECK(js["kl_direction"] == std::string(kKlDirection));
    CHECK(js["runs"] == 3);
}

TEST_CASE("band comparison pairs points in shared retain bands") {
    const auto rep = pareto_report({
        synthetic_run(ForgetMethod::unilogit, 1e-3, 0.97, 0.0),
        synthetic_run(ForgetMethod::unilogit, 3e-3, 0.52, 0.0),
        synthetic_run(ForgetMethod::undial, 1e-3, 0.99, 0.5),
        synthetic_run(ForgetMethod::undial, 3e-3, 0.80, 0.0),
        synthetic_run(ForgetMethod::undial, 1e-2, 1.00, 0.75),
    });
    const auto bands = compare_in_bands(rep, "unilogit+kl", "undial+kl");
    REQUIRE(bands.size() == 1);
    CHECK(bands[0].lo == Catch::Approx(0.95));
    CHECK(bands[0].best_a == 1.0);
    CHECK(bands[0].best_b == 0.5);
}
