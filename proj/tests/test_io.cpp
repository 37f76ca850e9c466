// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "ulab/ulab.hpp"

using namespace ulab;

TEST_CASE("run config defaults follow the method") {
    const auto c = run_config_from_json(json{{"method", "undial"}});
    CHECK(c.objective.method == ForgetMethod::undial);
    CHECK(c.objective.retain_loss == RetainLoss::kl_distill);
    CHECK(c.objective.effective_divergence() == DivergenceKind::forward_kl);
    CHECK(run_config_from_json(json{{"method", "me"}}).objective.retain_loss == RetainLoss::gd_ce);
    const auto w = run_config_from_json(json{{"retain_available", false}});
    CHECK(w.objective.retain_loss == RetainLoss::none);
    const auto d = run_config_from_json(json::object());
    CHECK(d.lr == 1e-3);
    CHECK(d.epochs == 10);
    CHECK(d.objective.lambda == 1.0);
}

TEST_CASE("run config round-trips through json") {
    UnlearnRunConfig c;
    c.objective.method = ForgetMethod::npo;
    c.objective.beta = 0.25;
    c.objective.lambda = 0.5;
    c.lr = 2e-3;
    c.epochs = 7;
    c.batch_size = 3;
    c.seed = 42;
    const auto j = to_json(c);
    for (const auto& key : {"method", "retain_loss", "lambda", "gamma", "alpha", "beta", "divergence",
                            "target_source", "lr", "epochs", "batch_size", "seed"})
        CHECK(j.contains(key));
    const auto back = run_config_from_json(j);
    CHECK(to_json(back) == j);
}

TEST_CASE("bad configs are rejected with config errors") {
    CHECK_THROWS_AS(run_config_from_json(json{{"learning_rate", 1e-3}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"method", "sgd"}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"lr", "fast"}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"lr", json::array({1, 2})}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"epochs", -1}}), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json::array()), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json{{"method", "npo"}, {"beta", 0}}), InvalidHyperparameterError);
}

TEST_CASE("grid expansion crosses list-valued keys in fixed key order") {
    const json doc = {{"lr", {1e-4, 1e-3}}, {"method", {"unilogit", "ga"}}, {"epochs", 3}};
    const auto grid = expand_grid(doc);
    REQUIRE(grid.size() == 4);
    // method precedes lr in key order, so lr varies fastest
    CHECK(grid[0].objective.method == ForgetMethod::unilogit);
    CHECK(grid[0].lr == 1e-4);
    CHECK(grid[1].lr == 1e-3);
    CHECK(grid[2].objective.method == ForgetMethod::ga);
    for (const auto& c : grid) CHECK(c.epochs == 3);

    const json list = json::array({json{{"method", "me"}}, json{{"lr", {1e-3, 3e-3, 1e-2}}}});
    CHECK(expand_grid(list).size() == 4);
    CHECK_THROWS_AS(expand_grid(json{{"lr", json::array()}}), ConfigError);
    CHECK_THROWS_AS(expand_grid(json{{"colour", 1}}), ConfigError);
}

TEST_CASE("run records round-trip through json") {
    RunRecord r;
    r.config.objective.method = ForgetMethod::rkld;
    r.config.epochs = 2;
    r.epochs = {{1, 0.5, 0.25, "a/epoch_1.ulab"}, {2, 0.125, 0.0625, ""}};
    r.status = RunStatus::aborted;
    r.aborted_epoch = 3;
    r.error = "boom";
    const auto j = to_json(r, RunInputs{"c.txt", "o.ulab", "s.ulab"});
    CHECK(j["label"] == "rkld+kl");
    CHECK(j["epochs"][1]["ckpt"].is_null());
    RunInputs in;
    const auto back = run_record_from_json(j, &in);
    CHECK(back.status == RunStatus::aborted);
    CHECK(back.aborted_epoch == 3);
    CHECK(back.error == "boom");
    CHECK(back.epochs.size() == 2);
    CHECK(back.epochs[0].checkpoint_path == "a/epoch_1.ulab");
    CHECK(back.epochs[1].forget_loss == 0.125);
    CHECK(in.reinforced == "s.ulab");
    CHECK(to_json(back, in) == j);
    CHECK_THROWS_AS(run_record_from_json(json{{"config", json::object()}}), ConfigError);
}

TEST_CASE("run labels distinguish ablation arms") {
    UnlearnObjective o;
    CHECK(run_label(o) == "unilogit+kl");
    o.divergence = DivergenceKind::forward_kl;
    CHECK(run_label(o) == "unilogit-fkl+kl");
    o.divergence.reset();
    o.target_source = TargetSource::original_model;
    CHECK(run_label(o) == "unilogit(orig)+kl");
    o.target_source = TargetSource::current_model; // explicit default: same curve
    CHECK(run_label(o) == "unilogit+kl");
    UnlearnObjective me;
    me.method = ForgetMethod::me;
    me.retain_loss = RetainLoss::gd_ce;
    CHECK(run_label(me) == "me+gd");
}
