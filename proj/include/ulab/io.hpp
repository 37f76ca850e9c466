// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON forms of run configurations, sweep grids and run records.
//
// Run config keys: method, retain_loss, lambda, gamma, alpha, beta, divergence,
// target_source, lr, epochs, batch_size, seed (plus checkpoint_every and
// retain_available). Record: {config, epochs:[{epoch, forget_loss, retain_loss, ckpt}],
// status, ...}.

#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulab/engine.hpp"
#include "ulab/error.hpp"
#include "ulab/losses.hpp"

namespace ulab {

using json = nlohmann::json;

/// Keys accepted in a run config, in grid-expansion order.
inline const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys = {"method",     "retain_loss", "lambda", "gamma",
                                                  "alpha",      "beta",        "divergence",
                                                  "target_source", "lr",      "epochs", "batch_size",
                                                  "seed",       "checkpoint_every", "retain_available"};
    return keys;
}

inline RetainLoss default_retain_loss(ForgetMethod m) {
    return m == ForgetMethod::me ? RetainLoss::gd_ce : RetainLoss::kl_distill;
}

inline json to_json(const UnlearnRunConfig& c) {
    const auto& o = c.objective;
    return json{{"method", to_string(o.method)},
                {"retain_loss", to_string(o.retain_loss)},
                {"lambda", o.lambda},
                {"gamma", o.gamma},
                {"alpha", o.alpha},
                {"beta", o.beta},
                {"divergence", to_string(o.effective_divergence())},
                {"target_source", to_string(o.effective_target_source())},
                {"lr", c.lr},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"seed", c.seed},
                {"checkpoint_every", c.checkpoint_every},
                {"retain_available", c.retain_available}};
}

namespace detail {

template <class T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

} // namespace detail

/// Parses one run config; keys not listed in run_config_keys() are rejected. Missing keys
/// take their defaults; absent divergence/target_source use the method's own convention.
inline UnlearnRunConfig run_config_from_json(const json& j, const UnlearnRunConfig& base = {}) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    const auto& keys = run_config_keys();
    for (const auto& [k, v] : j.items()) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown config key '" + k + "'");
        if (v.is_array()) throw ConfigError("config key '" + k + "' holds a list; expand the grid first");
    }
    UnlearnRunConfig c = base;
    auto& o = c.objective;
    if (j.contains("method")) {
        o.method = parse_forget_method(detail::get_as<std::string>(j, "method"));
        if (!j.contains("retain_loss")) o.retain_loss = default_retain_loss(o.method);
    }
    if (j.contains("retain_loss")) o.retain_loss = parse_retain_loss(detail::get_as<std::string>(j, "retain_loss"));
    if (j.contains("lambda")) o.lambda = detail::get_as<double>(j, "lambda");
    if (j.contains("gamma")) o.gamma = detail::get_as<double>(j, "gamma");
    if (j.contains("alpha")) o.alpha = detail::get_as<double>(j, "alpha");
    if (j.contains("beta")) o.beta = detail::get_as<double>(j, "beta");
    if (j.contains("divergence") && !j.at("divergence").is_null())
        o.divergence = parse_divergence(detail::get_as<std::string>(j, "divergence"));
    if (j.contains("target_source") && !j.at("target_source").is_null())
        o.target_source = parse_target_source(detail::get_as<std::string>(j, "target_source"));
    if (j.contains("lr")) c.lr = detail::get_as<double>(j, "lr");
    if (j.contains("epochs")) c.epochs = detail::get_as<int>(j, "epochs");
    if (j.contains("batch_size")) c.batch_size = detail::get_as<std::size_t>(j, "batch_size");
    if (j.contains("seed")) c.seed = detail::get_as<std::uint64_t>(j, "seed");
    if (j.contains("checkpoint_every")) c.checkpoint_every = detail::get_as<int>(j, "checkpoint_every");
    if (j.contains("retain_available")) c.retain_available = detail::get_as<bool>(j, "retain_available");
    if (!c.retain_available && !j.contains("retain_loss")) o.retain_loss = RetainLoss::none;
    c.validate();
    return c;
}

/// Expands a grid document into run configs. The document is either one object, whose
/// list-valued keys are crossed in run_config_keys() order (later keys vary fastest), or
/// an array of such objects expanded in turn.
inline std::vector<UnlearnRunConfig> expand_grid(const json& doc, const UnlearnRunConfig& base = {}) {
    std::vector<UnlearnRunConfig> out;
    if (doc.is_array()) {
        for (const auto& item : doc) {
            auto part = expand_grid(item, base);
            out.insert(out.end(), part.begin(), part.end());
        }
        return out;
    }
    if (!doc.is_object()) throw ConfigError("grid must be an object or an array of objects");
    std::vector<json> partial{json::object()};
    for (const auto& key : run_config_keys()) {
        if (!doc.contains(key)) continue;
        const json& v = doc.at(key);
        std::vector<json> values = v.is_array() ? std::vector<json>(v.begin(), v.end()) : std::vector<json>{v};
        if (values.empty()) throw ConfigError("grid key '" + key + "' has an empty list");
        std::vector<json> next;
        for (const auto& p : partial) {
            for (const auto& value : values) {
                json q = p;
                q[key] = value;
                next.push_back(std::move(q));
            }
        }
        partial = std::move(next);
    }
    for (const auto& [k, v] : doc.items()) {
        const auto& keys = run_config_keys();
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown config key '" + k + "'");
    }
    for (const auto& p : partial) out.push_back(run_config_from_json(p, base));
    return out;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

/// Paths of the artifacts a run was produced from, stored alongside the record.
struct RunInputs {
    std::string corpus;
    std::string base;
    std::string reinforced;
};

inline json to_json(const RunRecord& r, const RunInputs& inputs = {}) {
    json epochs = json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"forget_loss", e.forget_loss},
                          {"retain_loss", e.retain_loss},
                          {"ckpt", e.checkpoint_path.empty() ? json(nullptr) : json(e.checkpoint_path)}});
    }
    json j{{"config", to_json(r.config)},
           {"label", run_label(r.config.objective)},
           {"epochs", epochs},
           {"status", to_string(r.status)}};
    if (r.aborted_epoch) j["aborted_epoch"] = *r.aborted_epoch;
    if (!r.error.empty()) j["error"] = r.error;
    if (!inputs.corpus.empty() || !inputs.base.empty())
        j["inputs"] = {{"corpus", inputs.corpus}, {"base", inputs.base}, {"reinforced", inputs.reinforced}};
    return j;
}

inline RunStatus parse_run_status(const std::string& s) {
    if (s == "completed") return RunStatus::completed;
    if (s == "aborted") return RunStatus::aborted;
    if (s == "failed") return RunStatus::failed;
    throw ConfigError("unknown run status '" + s + "'");
}

/// Record without in-memory checkpoints; checkpoint paths are kept in the epoch entries.
inline RunRecord run_record_from_json(const json& j, RunInputs* inputs = nullptr) {
    if (!j.is_object() || !j.contains("config") || !j.contains("epochs") || !j.contains("status"))
        throw ConfigError("run record needs config, epochs and status");
    RunRecord r;
    r.config = run_config_from_json(j.at("config"));
    for (const auto& e : j.at("epochs")) {
        EpochRecord er;
        er.epoch = e.value("epoch", static_cast<int>(r.epochs.size()) + 1);
        er.forget_loss = e.at("forget_loss").is_number() ? e.at("forget_loss").get<double>() : std::nan("");
        er.retain_loss = e.at("retain_loss").is_number() ? e.at("retain_loss").get<double>() : std::nan("");
        if (e.contains("ckpt") && e.at("ckpt").is_string()) er.checkpoint_path = e.at("ckpt").get<std::string>();
        r.epochs.push_back(std::move(er));
    }
    r.status = parse_run_status(j.at("status").get<std::string>());
    if (j.contains("aborted_epoch")) r.aborted_epoch = j.at("aborted_epoch").get<int>();
    if (j.contains("error")) r.error = j.at("error").get<std::string>();
    if (inputs && j.contains("inputs")) {
        const auto& in = j.at("inputs");
        inputs->corpus = in.value("corpus", "");
        inputs->base = in.value("base", "");
        inputs->reinforced = in.value("reinforced", "");
    }
    return r;
}

} // namespace ulab
