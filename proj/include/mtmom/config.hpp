#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtmom/backtest.hpp"
#include "mtmom/baselines.hpp"
#include "mtmom/errors.hpp"
#include "mtmom/mtl_model.hpp"
#include "mtmom/synthetic.hpp"

namespace mtmom {

using json = nlohmann::json;

struct DataConfig {
    enum class Source { synthetic, csv };
    Source source = Source::synthetic;
    // synthetic
    SyntheticSpec spec;
    uint64_t seed = 0;
    // csv
    std::vector<std::string> csv_paths;
    CsvSchema schema;
    FillPolicy fill = FillPolicy::forward_fill;
};

struct RunConfig {
    DataConfig data;
    std::vector<std::string> strategies{"tsmom", "cta_mom", "mtl_tsmom"};
    VolTargetConfig vol_target;
    ModelConfig model;
    GridSpec grid;
    size_t grid_budget = 64;
    BacktestSettings backtest;
    bool ablation = false;
    std::string index_csv;  // empty = no index
    std::string out_dir = "run";
    int workers = 1;
};

namespace detail {

[[noreturn]] inline void cfg_fail(const std::string& where, const std::string& msg) {
    raise(Errc::config_error, "config." + where + ": " + msg);
}

inline void check_keys(const json& j, const std::string& where,
                       const std::set<std::string>& allowed) {
    if (!j.is_object()) cfg_fail(where, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) cfg_fail(where, "unknown key '" + it.key() + "'");
}

template <typename T>
inline T get_or(const json& j, const std::string& where, const std::string& key, T dflt) {
    if (!j.contains(key)) return dflt;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        cfg_fail(where + "." + key, e.what());
    }
}

template <typename T>
inline T get_req(const json& j, const std::string& where, const std::string& key) {
    if (!j.contains(key)) cfg_fail(where, "missing required key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        cfg_fail(where + "." + key, e.what());
    }
}

}  // namespace detail

inline RunConfig parse_config(const json& root) {
    using detail::check_keys;
    using detail::get_or;
    using detail::get_req;

    RunConfig rc;
    check_keys(root, "(root)",
               {"data", "strategies", "vol_target", "model", "grid", "backtest", "ablation",
                "report", "output"});

    // data
    if (!root.contains("data")) detail::cfg_fail("data", "missing section");
    {
        const json& jd = root.at("data");
        check_keys(jd, "data", {"source", "synthetic", "csv"});
        std::string src = get_req<std::string>(jd, "data", "source");
        if (src == "synthetic") {
            rc.data.source = DataConfig::Source::synthetic;
            if (!jd.contains("synthetic")) detail::cfg_fail("data", "missing 'synthetic' section");
            if (jd.contains("csv")) detail::cfg_fail("data", "exactly one data source allowed");
            const json& js = jd.at("synthetic");
            check_keys(js, "data.synthetic",
                       {"seed", "n_days", "start_date", "assets", "regime_persistence",
                        "overnight_fraction", "intraday_steps", "initial_price"});
            rc.data.seed = get_req<uint64_t>(js, "data.synthetic", "seed");
            rc.data.spec.n_days = get_or<int>(js, "data.synthetic", "n_days", 504);
            std::string sd =
                get_or<std::string>(js, "data.synthetic", "start_date", "2000-01-03");
            rc.data.spec.start = parse_date_or_throw(sd);
            rc.data.spec.overnight_fraction =
                get_or<double>(js, "data.synthetic", "overnight_fraction", 0.0);
            rc.data.spec.intraday_steps = get_or<int>(js, "data.synthetic", "intraday_steps", 78);
            rc.data.spec.initial_price =
                get_or<double>(js, "data.synthetic", "initial_price", 100.0);
            if (js.contains("regime_persistence") && !js.at("regime_persistence").is_null())
                rc.data.spec.regime_persistence =
                    get_req<double>(js, "data.synthetic", "regime_persistence");
            if (!js.contains("assets")) detail::cfg_fail("data.synthetic", "missing 'assets'");
            for (const auto& ja : js.at("assets")) {
                check_keys(ja, "data.synthetic.assets[]", {"id", "drift", "vol"});
                SyntheticAsset a;
                a.id = get_req<std::string>(ja, "data.synthetic.assets[]", "id");
                a.drift = get_req<double>(ja, "data.synthetic.assets[]", "drift");
                a.vol = get_req<double>(ja, "data.synthetic.assets[]", "vol");
                rc.data.spec.assets.push_back(a);
            }
        } else if (src == "csv") {
            rc.data.source = DataConfig::Source::csv;
            if (!jd.contains("csv")) detail::cfg_fail("data", "missing 'csv' section");
            if (jd.contains("synthetic")) detail::cfg_fail("data", "exactly one data source allowed");
            const json& jc = jd.at("csv");
            check_keys(jc, "data.csv", {"paths", "schema", "fill_policy"});
            rc.data.csv_paths = get_req<std::vector<std::string>>(jc, "data.csv", "paths");
            if (rc.data.csv_paths.empty()) detail::cfg_fail("data.csv", "paths is empty");
            if (jc.contains("schema")) {
                const json& jsch = jc.at("schema");
                check_keys(jsch, "data.csv.schema",
                           {"date", "open", "high", "low", "close", "settle"});
                rc.data.schema.date = get_or<std::string>(jsch, "data.csv.schema", "date", "date");
                rc.data.schema.open = get_or<std::string>(jsch, "data.csv.schema", "open", "open");
                rc.data.schema.high = get_or<std::string>(jsch, "data.csv.schema", "high", "high");
                rc.data.schema.low = get_or<std::string>(jsch, "data.csv.schema", "low", "low");
                rc.data.schema.close =
                    get_or<std::string>(jsch, "data.csv.schema", "close", "close");
                if (jsch.contains("settle")) {
                    rc.data.schema.settle =
                        get_req<std::string>(jsch, "data.csv.schema", "settle");
                    rc.data.schema.settle_explicit = true;
                }
            }
            std::string fp = get_or<std::string>(jc, "data.csv", "fill_policy", "forward_fill");
            if (fp == "forward_fill") rc.data.fill = FillPolicy::forward_fill;
            else if (fp == "drop_date") rc.data.fill = FillPolicy::drop_date;
            else detail::cfg_fail("data.csv.fill_policy", "must be forward_fill or drop_date");
        } else {
            detail::cfg_fail("data.source", "must be 'synthetic' or 'csv'");
        }
    }

    // strategies
    if (root.contains("strategies")) {
        rc.strategies = root.at("strategies").get<std::vector<std::string>>();
        for (const auto& s : rc.strategies)
            if (s != "tsmom" && s != "cta_mom" && s != "mtl_tsmom")
                detail::cfg_fail("strategies", "unknown strategy '" + s + "'");
    }

    // vol_target
    if (root.contains("vol_target")) {
        const json& jv = root.at("vol_target");
        check_keys(jv, "vol_target", {"sigma_target", "ewma_span", "min_vol"});
        rc.vol_target.sigma_target = get_or<double>(jv, "vol_target", "sigma_target", 0.10);
        rc.vol_target.ewma_span = get_or<int>(jv, "vol_target", "ewma_span", 60);
        rc.vol_target.min_vol = get_or<double>(jv, "vol_target", "min_vol", 1e-8);
        if (!(rc.vol_target.sigma_target > 0))
            detail::cfg_fail("vol_target.sigma_target", "must be > 0");
    }

    // model (base settings; the eight searched fields come from the grid)
    if (root.contains("model")) {
        const json& jm = root.at("model");
        check_keys(jm, "model",
                   {"lookback", "mu", "lambda", "aux_tasks", "lstm_layers", "lstm_hidden",
                    "lstm_dropout", "mlp_layers", "mlp_hidden", "mlp_dropout", "learning_rate",
                    "max_grad_norm"});
        rc.model.lookback = get_or<int>(jm, "model", "lookback", 63);
        rc.model.mu = get_or<double>(jm, "model", "mu", 0.5);
        rc.model.lambda = get_or<double>(jm, "model", "lambda", 0.5);
        rc.model.lstm_layers = get_or<int>(jm, "model", "lstm_layers", rc.model.lstm_layers);
        rc.model.lstm_hidden = get_or<int>(jm, "model", "lstm_hidden", rc.model.lstm_hidden);
        rc.model.lstm_dropout =
            get_or<double>(jm, "model", "lstm_dropout", rc.model.lstm_dropout);
        rc.model.mlp_layers = get_or<int>(jm, "model", "mlp_layers", rc.model.mlp_layers);
        rc.model.mlp_hidden = get_or<int>(jm, "model", "mlp_hidden", rc.model.mlp_hidden);
        rc.model.mlp_dropout = get_or<double>(jm, "model", "mlp_dropout", rc.model.mlp_dropout);
        rc.model.learning_rate =
            get_or<double>(jm, "model", "learning_rate", rc.model.learning_rate);
        rc.model.max_grad_norm =
            get_or<double>(jm, "model", "max_grad_norm", rc.model.max_grad_norm);
        if (jm.contains("aux_tasks")) {
            rc.model.aux_tasks.clear();
            for (const auto& jt : jm.at("aux_tasks")) {
                std::string name = jt.get<std::string>();
                auto k = parse_vol_kind(name);
                if (!k) detail::cfg_fail("model.aux_tasks", "unknown estimator '" + name + "'");
                rc.model.aux_tasks.push_back(*k);
            }
        }
    }

    // grid
    if (root.contains("grid")) {
        const json& jg = root.at("grid");
        check_keys(jg, "grid",
                   {"lstm_layers", "lstm_hidden", "lstm_dropout", "mlp_layers", "mlp_hidden",
                    "mlp_dropout", "learning_rate", "max_grad_norm", "budget"});
        auto lst = [&](const char* key, auto& field) {
            if (jg.contains(key)) {
                field = jg.at(key)
                            .template get<std::remove_reference_t<decltype(field)>>();
                if (field.empty()) detail::cfg_fail(std::string("grid.") + key, "empty list");
            }
        };
        lst("lstm_layers", rc.grid.lstm_layers);
        lst("lstm_hidden", rc.grid.lstm_hidden);
        lst("lstm_dropout", rc.grid.lstm_dropout);
        lst("mlp_layers", rc.grid.mlp_layers);
        lst("mlp_hidden", rc.grid.mlp_hidden);
        lst("mlp_dropout", rc.grid.mlp_dropout);
        lst("learning_rate", rc.grid.learning_rate);
        lst("max_grad_norm", rc.grid.max_grad_norm);
        rc.grid_budget = get_or<size_t>(jg, "grid", "budget", 64);
    }

    // backtest
    {
        if (!root.contains("backtest")) detail::cfg_fail("backtest", "missing section");
        const json& jb = root.at("backtest");
        check_keys(jb, "backtest",
                   {"train_start_year", "first_test_year", "last_test_year",
                    "validation_fraction", "tau", "master_seed", "max_epochs", "patience",
                    "batch_span", "target_horizon", "workers", "keep_checkpoints"});
        rc.backtest.train_start_year = get_req<int>(jb, "backtest", "train_start_year");
        rc.backtest.first_test_year = get_req<int>(jb, "backtest", "first_test_year");
        rc.backtest.last_test_year = get_req<int>(jb, "backtest", "last_test_year");
        rc.backtest.validation_fraction =
            get_or<double>(jb, "backtest", "validation_fraction", 0.2);
        double tau = get_or<double>(jb, "backtest", "tau", 0.0003);
        if (tau < 0) detail::cfg_fail("backtest.tau", "must be >= 0");
        rc.backtest.master_seed = get_req<uint64_t>(jb, "backtest", "master_seed");
        rc.backtest.train.max_epochs = get_or<int>(jb, "backtest", "max_epochs", 200);
        rc.backtest.train.patience = get_or<int>(jb, "backtest", "patience", 25);
        rc.backtest.train.batch_span = get_or<int>(jb, "backtest", "batch_span", 126);
        rc.backtest.train.target_horizon = get_or<int>(jb, "backtest", "target_horizon", 21);
        rc.workers = get_or<int>(jb, "backtest", "workers", 1);
        rc.backtest.keep_checkpoints = get_or<bool>(jb, "backtest", "keep_checkpoints", true);
        rc.model.tau = tau;
    }

    // ablation
    if (root.contains("ablation")) {
        const json& ja = root.at("ablation");
        check_keys(ja, "ablation", {"enabled"});
        rc.ablation = get_or<bool>(ja, "ablation", "enabled", false);
    }

    // report
    if (root.contains("report")) {
        const json& jr = root.at("report");
        check_keys(jr, "report", {"index_csv"});
        if (jr.contains("index_csv") && !jr.at("index_csv").is_null())
            rc.index_csv = get_req<std::string>(jr, "report", "index_csv");
    }

    // output
    if (root.contains("output")) {
        const json& jo = root.at("output");
        check_keys(jo, "output", {"dir"});
        rc.out_dir = get_or<std::string>(jo, "output", "dir", "run");
    }

    if (rc.strategies.empty() && !rc.ablation)
        detail::cfg_fail("strategies", "nothing to run (empty list and ablation disabled)");

    // cross-field resolution
    rc.model.sigma_target = rc.vol_target.sigma_target;
    rc.model.n_features = FeatureSpec{}.n_features();
    rc.backtest.base_model = rc.model;
    rc.backtest.grid = rc.grid;
    rc.backtest.grid_budget = rc.grid_budget;

    if (rc.data.source == DataConfig::Source::synthetic) {
        validate_spec(rc.data.spec);
        if (rc.data.spec.assets.empty()) detail::cfg_fail("data.synthetic.assets", "empty");
    }
    validate_model_config(rc.model);
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io_error, "cannot open config: " + path);
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        raise(Errc::config_error, path + ": " + e.what());
    }
    return parse_config(root);
}

// Fully materialized config (every default spelled out) for the run
// directory, so a run can be reproduced from its artifacts alone.
inline json resolved_config(const RunConfig& rc) {
    json root;
    json jd;
    if (rc.data.source == DataConfig::Source::synthetic) {
        jd["source"] = "synthetic";
        json js;
        js["seed"] = rc.data.seed;
        js["n_days"] = rc.data.spec.n_days;
        js["start_date"] = to_string(rc.data.spec.start);
        js["overnight_fraction"] = rc.data.spec.overnight_fraction;
        js["intraday_steps"] = rc.data.spec.intraday_steps;
        js["initial_price"] = rc.data.spec.initial_price;
        if (rc.data.spec.regime_persistence)
            js["regime_persistence"] = *rc.data.spec.regime_persistence;
        else
            js["regime_persistence"] = nullptr;
        js["assets"] = json::array();
        for (const auto& a : rc.data.spec.assets)
            js["assets"].push_back({{"id", a.id}, {"drift", a.drift}, {"vol", a.vol}});
        jd["synthetic"] = js;
    } else {
        jd["source"] = "csv";
        json jc;
        jc["paths"] = rc.data.csv_paths;
        json jsch{{"date", rc.data.schema.date}, {"open", rc.data.schema.open},
                  {"high", rc.data.schema.high}, {"low", rc.data.schema.low},
                  {"close", rc.data.schema.close}};
        if (rc.data.schema.settle_explicit) jsch["settle"] = rc.data.schema.settle;
        jc["schema"] = jsch;
        jc["fill_policy"] =
            rc.data.fill == FillPolicy::forward_fill ? "forward_fill" : "drop_date";
        jd["csv"] = jc;
    }
    root["data"] = jd;
    root["strategies"] = rc.strategies;
    root["vol_target"] = {{"sigma_target", rc.vol_target.sigma_target},
                          {"ewma_span", rc.vol_target.ewma_span},
                          {"min_vol", rc.vol_target.min_vol}};
    json aux = json::array();
    for (VolKind k : rc.model.aux_tasks) aux.push_back(vol_kind_name(k));
    root["model"] = {{"lookback", rc.model.lookback}, {"mu", rc.model.mu},
                     {"lambda", rc.model.lambda},     {"aux_tasks", aux},
                     {"lstm_layers", rc.model.lstm_layers},
                     {"lstm_hidden", rc.model.lstm_hidden},
                     {"lstm_dropout", rc.model.lstm_dropout},
                     {"mlp_layers", rc.model.mlp_layers},
                     {"mlp_hidden", rc.model.mlp_hidden},
                     {"mlp_dropout", rc.model.mlp_dropout},
                     {"learning_rate", rc.model.learning_rate},
                     {"max_grad_norm", rc.model.max_grad_norm}};
    root["grid"] = {{"lstm_layers", rc.grid.lstm_layers},
                    {"lstm_hidden", rc.grid.lstm_hidden},
                    {"lstm_dropout", rc.grid.lstm_dropout},
                    {"mlp_layers", rc.grid.mlp_layers},
                    {"mlp_hidden", rc.grid.mlp_hidden},
                    {"mlp_dropout", rc.grid.mlp_dropout},
                    {"learning_rate", rc.grid.learning_rate},
                    {"max_grad_norm", rc.grid.max_grad_norm},
                    {"budget", rc.grid_budget}};
    root["backtest"] = {{"train_start_year", rc.backtest.train_start_year},
                        {"first_test_year", rc.backtest.first_test_year},
                        {"last_test_year", rc.backtest.last_test_year},
                        {"validation_fraction", rc.backtest.validation_fraction},
                        {"tau", rc.model.tau},
                        {"master_seed", rc.backtest.master_seed},
                        {"max_epochs", rc.backtest.train.max_epochs},
                        {"patience", rc.backtest.train.patience},
                        {"batch_span", rc.backtest.train.batch_span},
                        {"target_horizon", rc.backtest.train.target_horizon},
                        {"workers", rc.workers},
                        {"keep_checkpoints", rc.backtest.keep_checkpoints}};
    root["ablation"] = {{"enabled", rc.ablation}};
    root["report"] = {{"index_csv", rc.index_csv.empty() ? json(nullptr) : json(rc.index_csv)}};
    root["output"] = {{"dir", rc.out_dir}};
    return root;
}

// Output root: MTMOM_OUTPUT_ROOT prefixes relative output dirs when set.
inline std::string resolve_out_dir(const std::string& dir) {
    if (!dir.empty() && dir.front() == '/') return dir;
    const char* root = std::getenv("MTMOM_OUTPUT_ROOT");
    if (root && *root) return std::string(root) + "/" + dir;
    return dir;
}

}  // namespace mtmom
