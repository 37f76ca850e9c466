// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0
//
// ulab command-line driver. Exit codes: 0 ok, 1 usage or configuration error, 2 runtime error.
// Progress goes to stderr; summaries go to stdout.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "ulab/ulab.hpp"

namespace fs = std::filesystem;
using namespace ulab;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Config-key flags shared by unlearn and sweep. Values are kept as text and converted to
// JSON (number, bool or string) so they go through the same parser as config files.
struct ConfigFlags {
    std::map<std::string, std::vector<std::string>> values;

    void attach(CLI::App* app, bool allow_lists) {
        for (const auto& key : run_config_keys()) {
            std::string flag = "--" + key;
            for (auto& ch : flag)
                if (ch == '_') ch = '-';
            auto* opt = app->add_option(flag, values[key], "config key '" + key + "'");
            if (!allow_lists) opt->expected(1);
            if (key == "seed") opt->envname("ULAB_SEED");
        }
    }

    static json scalar(const std::string& text) {
        if (text == "true") return true;
        if (text == "false") return false;
        try {
            std::size_t used = 0;
            if (text.find_first_of(".eE") == std::string::npos) {
                const long long v = std::stoll(text, &used);
                if (used == text.size()) return v;
            }
            const double d = std::stod(text, &used);
            if (used == text.size()) return d;
        } catch (const std::exception&) {
        }
        return text;
    }

    json overrides() const {
        json j = json::object();
        for (const auto& [key, vs] : values) {
            if (vs.empty()) continue;
            if (vs.size() == 1) {
                j[key] = scalar(vs.front());
            } else {
                json list = json::array();
                for (const auto& v : vs) list.push_back(scalar(v));
                j[key] = list;
            }
        }
        return j;
    }
};

void log(const std::string& msg) { std::cerr << "ulab: " << msg << "\n"; }

void write_text(const std::string& path, const std::string& text) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
}

// Defaults to the corpus the lab was designed around when no corpus path is given.
FactCorpus corpus_from(const std::string& path) { return path.empty() ? generate_corpus({}) : load_corpus(path); }

std::vector<TokenSeq> subset_of(const FactCorpus& c, const std::string& which) {
    if (which == "all") return c.facts;
    if (which == "retain") return c.retain_facts();
    if (which == "forget") return c.forget_facts();
    throw ConfigError("unknown subset '" + which + "' (expected all, retain or forget)");
}

std::string record_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "run_%03zu.json", index);
    return buf;
}

// Final parameters of a recorded run: the checkpoint of its last epoch.
ModelParams final_params_of(const RunRecord& r, const fs::path& record_dir) {
    for (auto it = r.epochs.rbegin(); it != r.epochs.rend(); ++it) {
        if (it->checkpoint_path.empty()) continue;
        fs::path p(it->checkpoint_path);
        if (p.is_relative() && !fs::exists(p)) p = record_dir / p;
        return load_checkpoint(p.string());
    }
    throw ConfigError("run record has no checkpoint");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ulab: desk-scale machine unlearning lab"};
    app.require_subcommand(1);

    // gen-corpus
    CorpusSpec spec;
    std::string corpus_out = "corpus.txt";
    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic fact corpus");
    gen->add_option("--entities", spec.n_entities, "number of entities")->capture_default_str();
    gen->add_option("--attributes", spec.n_attributes, "attributes per entity")->capture_default_str();
    gen->add_option("--forget", spec.n_forget_entities, "entities in the forget set")->capture_default_str();
    gen->add_option("--seed", spec.seed, "corpus seed")->envname("ULAB_SEED")->capture_default_str();
    gen->add_option("-o,--out", corpus_out, "output file")->capture_default_str();

    // train / retrain / reinforce
    std::string corpus_path, base_path, model_out, subset = "all";
    TrainConfig tc;
    auto add_train_flags = [&](CLI::App* sub) {
        sub->add_option("--corpus", corpus_path, "corpus file (default corpus when omitted)");
        sub->add_option("--epochs", tc.epochs)->capture_default_str();
        sub->add_option("--lr", tc.lr)->capture_default_str();
        sub->add_option("--batch-size", tc.batch_size)->capture_default_str();
        sub->add_option("--seed", tc.seed, "initialization and batch-order seed")->envname("ULAB_SEED");
        sub->add_option("-o,--out", model_out, "output checkpoint")->required();
    };
    auto* trn = app.add_subcommand("train", "train a model from initialization");
    add_train_flags(trn);
    trn->add_option("--subset", subset, "all, retain or forget")->capture_default_str();
    auto* retr = app.add_subcommand("retrain", "train the gold-standard model on the retain set only");
    add_train_flags(retr);
    auto* rein = app.add_subcommand("reinforce", "fine-tune a copy of the base model on the forget set");
    add_train_flags(rein);
    rein->add_option("--base", base_path, "base checkpoint")->required();

    // unlearn / sweep
    std::string reinforced_path, run_out = "runs", config_path;
    unsigned jobs = 1;
    bool dry_run = false;
    ConfigFlags unlearn_flags, sweep_flags;
    auto* unl = app.add_subcommand("unlearn", "run one unlearning configuration");
    unl->add_option("--base", base_path, "starting checkpoint")->required();
    unl->add_option("--corpus", corpus_path, "corpus file");
    unl->add_option("--reinforced", reinforced_path, "reinforced checkpoint (rkld)");
    unl->add_option("--out", run_out, "output directory")->capture_default_str();
    unlearn_flags.attach(unl, false);
    auto* swp = app.add_subcommand("sweep", "run a grid of unlearning configurations");
    swp->add_option("--config", config_path, "JSON grid (object with list values, or array of objects)");
    swp->add_option("--base", base_path, "starting checkpoint");
    swp->add_option("--corpus", corpus_path, "corpus file");
    swp->add_option("--reinforced", reinforced_path, "reinforced checkpoint (rkld)");
    swp->add_option("--out", run_out, "output directory")->capture_default_str();
    swp->add_option("--jobs", jobs, "parallel runs")->capture_default_str();
    swp->add_flag("--dry-run", dry_run, "print the expanded grid and exit");
    sweep_flags.attach(swp, true);

    // analyze
    std::string runs_dir, retrain_path, report_out;
    auto* ana = app.add_subcommand("analyze", "evaluate recorded runs and write Pareto reports");
    ana->add_option("--runs", runs_dir, "directory of run records")->required();
    ana->add_option("--retrain", retrain_path, "retrained checkpoint")->required();
    ana->add_option("--base", base_path, "starting checkpoint (default: from the records)");
    ana->add_option("--corpus", corpus_path, "corpus file (default: from the records)");
    ana->add_option("--reinforced", reinforced_path, "reinforced checkpoint (default: from the records)");
    ana->add_option("--out", report_out, "report directory (default: the runs directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*gen) {
            const auto problems = desk_scale_violations(spec);
            for (const auto& p : problems) log("warning: " + p);
            const auto c = generate_corpus(spec);
            save_corpus(c, corpus_out);
            log("wrote " + std::to_string(c.facts.size()) + " facts (" + std::to_string(c.forget_ids.size()) +
                " forget, " + std::to_string(c.neighbor_ids.size()) + " neighbors) to " + corpus_out);
            return 0;
        }

        if (*trn || *retr) {
            const auto c = corpus_from(corpus_path);
            const auto facts = subset_of(c, *retr ? "retain" : subset);
            const auto init = init_params(default_model_config(c.vocab.size()), tc.seed);
            const auto res = train(init, facts, tc, [&](int epoch, double loss) {
                if (epoch % 50 == 0 || epoch == tc.epochs) log("epoch " + std::to_string(epoch) + " ce " + std::to_string(loss));
            });
            save_checkpoint(res.params, model_out);
            std::cout << "recall " << completion_recall(res.params, facts) << " on " << facts.size() << " facts\n";
            return 0;
        }

        if (*rein) {
            const auto c = corpus_from(corpus_path);
            auto cfg = default_reinforce_config(tc.seed);
            if (rein->count("--epochs")) cfg.epochs = tc.epochs;
            if (rein->count("--lr")) cfg.lr = tc.lr;
            if (rein->count("--batch-size")) cfg.batch_size = tc.batch_size;
            save_checkpoint(reinforce_model(load_checkpoint(base_path), c.forget_facts(), cfg), model_out);
            return 0;
        }

        if (*unl || *swp) {
            std::vector<UnlearnRunConfig> grid;
            if (*unl) {
                grid.push_back(run_config_from_json(unlearn_flags.overrides()));
            } else {
                json doc = config_path.empty() ? json::object() : read_json_file(config_path);
                const json over = sweep_flags.overrides();
                if (doc.is_array()) {
                    for (auto& entry : doc) entry.update(over);
                } else {
                    doc.update(over);
                }
                grid = expand_grid(doc);
            }
            if (dry_run) {
                for (std::size_t i = 0; i < grid.size(); ++i)
                    std::cout << i << " " << run_label(grid[i].objective) << " " << to_json(grid[i]).dump() << "\n";
                return 0;
            }
            if (base_path.empty()) throw ConfigError("--base is required");
            const auto c = corpus_from(corpus_path);
            const auto theta_o = load_checkpoint(base_path);
            ModelParams theta_s;
            if (!reinforced_path.empty()) theta_s = load_checkpoint(reinforced_path);
            const RunInputs inputs{corpus_path.empty() ? "" : fs::absolute(corpus_path).string(),
                                   fs::absolute(base_path).string(),
                                   reinforced_path.empty() ? "" : fs::absolute(reinforced_path).string()};
            fs::create_directories(run_out);

            SweepOptions opts;
            opts.reinforced = reinforced_path.empty() ? nullptr : &theta_s;
            opts.output_dir = fs::absolute(run_out).string();
            opts.keep_checkpoints = false;
            opts.jobs = jobs;
            json manifest = json::array();
            opts.on_run_done = [&](std::size_t i, const RunRecord& r) {
                write_text((fs::path(run_out) / record_name(i)).string(), to_json(r, inputs).dump(2) + "\n");
                log("run " + std::to_string(i + 1) + "/" + std::to_string(grid.size()) + " " +
                    run_label(r.config.objective) + " lr " + std::to_string(r.config.lr) + ": " +
                    std::string(to_string(r.status)) + (r.error.empty() ? "" : " (" + r.error + ")"));
            };
            const auto runs = sweep(theta_o, c, grid, opts);
            int not_completed = 0;
            for (std::size_t i = 0; i < runs.size(); ++i) {
                manifest.push_back({{"record", record_name(i)},
                                    {"label", run_label(runs[i].config.objective)},
                                    {"status", to_string(runs[i].status)}});
                not_completed += runs[i].status != RunStatus::completed;
            }
            write_text((fs::path(run_out) / "manifest.json").string(), manifest.dump(2) + "\n");
            std::cout << runs.size() - not_completed << " of " << runs.size() << " runs completed\n";
            return 0;
        }

        if (*ana) {
            const fs::path dir(runs_dir);
            const json manifest = read_json_file((dir / "manifest.json").string());
            const auto theta_r = load_checkpoint(retrain_path);
            std::map<std::string, ModelParams> cache;
            auto model = [&](const std::string& path) -> const ModelParams& {
                auto it = cache.find(path);
                if (it == cache.end()) it = cache.emplace(path, load_checkpoint(path)).first;
                return it->second;
            };
            std::map<std::string, FactCorpus> corpora;
            std::vector<EvaluatedRun> evaluated;
            for (const auto& entry : manifest) {
                RunInputs in;
                const auto rec = run_record_from_json(read_json_file((dir / entry.at("record").get<std::string>()).string()), &in);
                const std::string cpath = corpus_path.empty() ? in.corpus : corpus_path;
                const std::string bpath = base_path.empty() ? in.base : base_path;
                const std::string spath = reinforced_path.empty() ? in.reinforced : reinforced_path;
                if (bpath.empty()) throw ConfigError("no base checkpoint in the record; pass --base");
                if (!corpora.count(cpath)) corpora.emplace(cpath, corpus_from(cpath));
                EvaluatedRun e;
                e.config = rec.config;
                e.status = rec.status;
                if (rec.status == RunStatus::completed)
                    e.eval = evaluate(final_params_of(rec, dir), model(bpath), theta_r, corpora.at(cpath),
                                      rec.config.objective, spath.empty() ? nullptr : &model(spath));
                evaluated.push_back(std::move(e));
            }
            const auto rep = pareto_report(evaluated);
            const fs::path out = report_out.empty() ? dir : fs::path(report_out);
            write_text((out / "report.csv").string(), report_csv(rep));
            write_text((out / "report.json").string(), report_json(rep).dump(2) + "\n");

            std::cout << "runs " << evaluated.size() << ", completed " << rep.rows.size() << ", KL direction "
                      << kKlDirection << "\n";
            for (const auto& [method, idx] : rep.frontier) {
                std::cout << method << ":";
                for (auto i : idx) {
                    char buf[64];
                    std::snprintf(buf, sizeof buf, " (%.3f, %.3f)", rep.rows[i].retain_axis(), rep.rows[i].forgetting());
                    std::cout << buf;
                }
                std::cout << "\n";
            }
            log("wrote " + (out / "report.csv").string() + " and report.json");
            return 0;
        }
    } catch (const ConfigError& e) {
        log("error: " + std::string(e.what()));
        return kExitUsage;
    } catch (const InvalidHyperparameterError& e) {
        log("error: " + std::string(e.what()));
        return kExitUsage;
    } catch (const InvalidSpecError& e) {
        log("error: " + std::string(e.what()));
        return kExitUsage;
    } catch (const std::exception& e) {
        log("error: " + std::string(e.what()));
        return kExitRuntime;
    }
    return 0;
}
