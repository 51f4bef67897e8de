// mtmom: config-driven momentum backtesting with a multi-task LSTM.
// Subcommands: synth, validate, backtest, report.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtmom/analytics.hpp"
#include "mtmom/backtest.hpp"
#include "mtmom/config.hpp"
#include "mtmom/features.hpp"
#include "mtmom/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mtmom;

namespace {

void on_sigint(int) { interrupted().store(true); }

Universe load_universe(const RunConfig& rc) {
    if (rc.data.source == DataConfig::Source::synthetic)
        return generate_synthetic(rc.data.spec, rc.data.seed);
    std::vector<AssetSeries> series;
    for (const auto& p : rc.data.csv_paths) series.push_back(load_csv(p, rc.data.schema));
    return build_universe(std::move(series), rc.data.fill);
}

void write_resolved_config(const RunConfig& rc, const std::string& dir) {
    std::ofstream out(dir + "/resolved_config.json");
    if (!out) raise(Errc::io_error, "cannot write " + dir + "/resolved_config.json");
    out << resolved_config(rc).dump(2) << "\n";
}

std::vector<Date> common_dates(const std::vector<BacktestRun>& runs) {
    if (runs.empty()) return {};
    std::vector<Date> common = runs.front().dates;
    for (size_t i = 1; i < runs.size(); ++i) {
        std::vector<Date> next;
        std::set_intersection(common.begin(), common.end(), runs[i].dates.begin(),
                              runs[i].dates.end(), std::back_inserter(next));
        common.swap(next);
    }
    return common;
}

BacktestRun restrict_run(const BacktestRun& r, const std::vector<Date>& dates) {
    BacktestRun out;
    out.tag = r.tag;
    out.asset_ids = r.asset_ids;
    out.tau = r.tau;
    out.stopped_early = r.stopped_early;
    size_t j = 0;
    for (size_t i = 0; i < r.dates.size(); ++i) {
        while (j < dates.size() && dates[j] < r.dates[i]) ++j;
        if (j == dates.size()) break;
        if (!(r.dates[i] < dates[j])) {
            out.dates.push_back(r.dates[i]);
            out.returns.push_back(r.returns[i]);
            out.gross.push_back(r.gross.empty() ? 0.0 : r.gross[i]);
        }
    }
    return out;
}

void write_returns_csv(const std::string& path, const std::vector<BacktestRun>& runs,
                       bool gross) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) raise(Errc::io_error, "cannot write " + path);
    std::string head = "date";
    for (const auto& r : runs) head += "," + r.tag;
    std::fprintf(f, "%s\n", head.c_str());
    size_t n = runs.empty() ? 0 : runs.front().dates.size();
    for (size_t t = 0; t < n; ++t) {
        std::string line = to_string(runs.front().dates[t]);
        for (const auto& r : runs)
            line += "," + format_double(gross ? r.gross[t] : r.returns[t]);
        std::fprintf(f, "%s\n", line.c_str());
    }
    std::fclose(f);
}

void write_fold_rows(std::FILE* f, const BacktestRun& run) {
    for (const auto& fr : run.folds) {
        std::string leak;
        bool ok = fr.max_train_bar_used < fr.test_start;
        std::fprintf(f, "%s,%d,%d,%zu,%zu,%s,%s,%d,%d,%d,%s,%s,%s,%zu\n", run.tag.c_str(),
                     fr.plan.fold_index, fr.plan.test_year, fr.best_flat, fr.grid_points_tried,
                     format_double(fr.best_val).c_str(), format_double(fr.val_epoch0).c_str(),
                     fr.best_epoch, fr.epochs_run, fr.diverged ? 1 : 0,
                     to_string(fr.max_train_bar_used).c_str(), to_string(fr.test_start).c_str(),
                     ok ? "1" : "0", fr.test_dates.size());
    }
}

void write_weights_csv(const std::string& path, const BacktestRun& run) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) raise(Errc::io_error, "cannot write " + path);
    std::string head = "date";
    for (const auto& id : run.asset_ids) head += "," + id;
    std::fprintf(f, "%s\n", head.c_str());
    for (const auto& fr : run.folds) {
        for (size_t d = 0; d < fr.decision_dates.size(); ++d) {
            std::string line = to_string(fr.decision_dates[d]);
            for (double w : fr.decision_weights[d]) line += "," + format_double(w);
            std::fprintf(f, "%s\n", line.c_str());
        }
    }
    std::fclose(f);
}

void write_checkpoints(const std::string& dir, const BacktestRun& run) {
    fs::create_directories(dir);
    for (const auto& fr : run.folds) {
        if (fr.checkpoint.tensors.empty()) continue;
        char name[64];
        std::snprintf(name, sizeof name, "%s_fold%02d.ckpt", run.tag.c_str(),
                      fr.plan.fold_index);
        nn::save_checkpoint(fr.checkpoint, dir + "/" + name);
    }
}

struct EpochLogFile {
    std::FILE* f = nullptr;
    std::string current_tag;
    explicit EpochLogFile(const std::string& path) {
        f = std::fopen(path.c_str(), "wb");
        if (!f) raise(Errc::io_error, "cannot write " + path);
        std::fprintf(f,
                     "strategy,fold,grid_index,epoch,train_total,train_sharpe,train_aux,"
                     "val_total\n");
    }
    ~EpochLogFile() {
        if (f) std::fclose(f);
    }
    void write(const EpochLine& el) {
        std::fprintf(f, "%s,%d,%ld,%d,%s,%s,%s,%s\n", current_tag.c_str(), el.fold,
                     el.grid_index, el.log.epoch, format_double(el.log.train_total).c_str(),
                     format_double(el.log.train_sharpe).c_str(),
                     format_double(el.log.train_aux).c_str(),
                     format_double(el.log.val_total).c_str());
        std::fflush(f);
    }
};

int cmd_synth(const RunConfig& rc) {
    if (rc.data.source != DataConfig::Source::synthetic)
        raise(Errc::config_error, "synth requires data.source = synthetic");
    Universe u = load_universe(rc);
    std::string dir = resolve_out_dir(rc.out_dir);
    fs::create_directories(dir + "/universe");
    write_resolved_config(rc, dir);
    for (const auto& ua : u.assets)
        write_csv(ua.series, dir + "/universe/" + ua.series.asset_id + ".csv");
    std::printf("wrote %d assets x %d dates to %s/universe\n", u.n_assets(), u.n_dates(),
                dir.c_str());
    return 0;
}

int cmd_validate(const RunConfig& rc) {
    Universe u = load_universe(rc);
    std::printf("universe: %d assets, %d dates [%s .. %s]\n", u.n_assets(), u.n_dates(),
                to_string(u.calendar.front()).c_str(), to_string(u.calendar.back()).c_str());

    auto folds = plan_folds(u, rc.backtest.train_start_year, rc.backtest.first_test_year,
                            rc.backtest.last_test_year, rc.backtest.validation_fraction);
    std::printf("fold  test_year  train_dates  val_dates  test_dates\n");
    for (const auto& f : folds)
        std::printf("%4d  %9d  %11d  %9d  %10d\n", f.fold_index, f.test_year,
                    f.val_begin - f.train_begin, f.train_end - f.val_begin,
                    f.test_end - f.test_begin);

    bool needs_model = rc.ablation;
    for (const auto& s : rc.strategies) needs_model |= (s == "mtl_tsmom");

    size_t grid_points = sample_grid_indices(rc.grid, rc.grid_budget, rc.backtest.master_seed)
                             .size();
    if (rc.grid_budget == 0 || rc.grid_budget >= rc.grid.total())
        log::warn("exhaustive grid search: " + std::to_string(rc.grid.total()) +
                  " runs per fold");
    if (needs_model) {
        FeaturePanel panel = build_panel(u, FeatureSpec{});
        BatchBuilder builder(u, panel, rc.backtest.base_model);
        int v0 = builder.first_usable_decision(folds.front().train_begin,
                                               folds.front().val_begin - 1,
                                               folds.front().val_begin - 1);
        if (v0 < 0)
            log::warn("fold 0 has no usable training samples; extend the train span");
        else
            std::printf("fold 0 first usable decision date: %s\n",
                        to_string(u.calendar[static_cast<size_t>(v0)]).c_str());
        size_t model_runs = (rc.ablation ? ablation_subsets().size() : 0);
        for (const auto& s : rc.strategies) model_runs += (s == "mtl_tsmom") ? 1 : 0;
        std::printf("training runs: %zu strategies x %zu folds x %zu grid points = %zu\n",
                    model_runs, folds.size(), grid_points,
                    model_runs * folds.size() * grid_points);
    }
    std::printf("config OK\n");
    return 0;
}

int cmd_backtest(const RunConfig& rc) {
    std::string dir = resolve_out_dir(rc.out_dir);
    fs::create_directories(dir);
    write_resolved_config(rc, dir);

    Universe u = load_universe(rc);
    auto folds = plan_folds(u, rc.backtest.train_start_year, rc.backtest.first_test_year,
                            rc.backtest.last_test_year, rc.backtest.validation_fraction);

    bool needs_model = rc.ablation;
    for (const auto& s : rc.strategies) needs_model |= (s == "mtl_tsmom");
    std::unique_ptr<FeaturePanel> panel;
    if (needs_model) panel = std::make_unique<FeaturePanel>(build_panel(u, FeatureSpec{}));
    if (rc.workers > 1)
        log::info("workers > 1 requested; runs execute sequentially for determinism");

    std::unique_ptr<EpochLogFile> epoch_log;
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> folds_csv(nullptr, std::fclose);
    if (needs_model) {
        epoch_log = std::make_unique<EpochLogFile>(dir + "/training_log.csv");
        std::FILE* f = std::fopen((dir + "/folds.csv").c_str(), "wb");
        if (!f) raise(Errc::io_error, "cannot write " + dir + "/folds.csv");
        std::fprintf(f,
                     "strategy,fold,test_year,grid_flat,grid_points,best_val,val_epoch0,"
                     "best_epoch,epochs_run,diverged,max_train_bar,test_start,leak_ok,"
                     "test_dates\n");
        folds_csv.reset(f);
    }

    auto run_model = [&](const std::string& tag, const std::vector<VolKind>& aux) {
        BacktestSettings bs = rc.backtest;
        bs.base_model.aux_tasks = aux;
        epoch_log->current_tag = tag;
        bs.train.epoch_sink = [&](const EpochLine& el) { epoch_log->write(el); };
        BacktestRun run = run_mtl_backtest(u, *panel, bs, tag);
        write_fold_rows(folds_csv.get(), run);
        std::fflush(folds_csv.get());
        write_weights_csv(dir + "/weights_" + tag + ".csv", run);
        if (bs.keep_checkpoints) write_checkpoints(dir + "/checkpoints", run);
        std::string leak;
        if (!verify_no_leakage(run, &leak))
            log::warn(tag + ": leakage scan FAILED: " + leak);
        return run;
    };

    std::vector<BacktestRun> runs;
    for (const auto& s : rc.strategies) {
        if (interrupted().load()) break;
        if (s == "tsmom") {
            TsmomConfig tc;
            tc.vt = rc.vol_target;
            tc.tau = rc.model.tau;
            StrategyOutput full = tsmom_portfolio(u, tc);
            runs.push_back(slice_to_test_window(full, u, folds, tc.tau));
        } else if (s == "cta_mom") {
            CtaConfig cc;
            cc.vt = rc.vol_target;
            cc.tau = rc.model.tau;
            StrategyOutput full = cta_mom_portfolio(u, cc);
            runs.push_back(slice_to_test_window(full, u, folds, cc.tau));
        } else if (s == "mtl_tsmom") {
            runs.push_back(run_model("mtl_tsmom", rc.model.aux_tasks));
        }
    }

    std::unique_ptr<IndexSeries> index;
    if (!rc.index_csv.empty())
        index = std::make_unique<IndexSeries>(load_index_csv(rc.index_csv));

    if (!runs.empty()) {
        auto dates = common_dates(runs);
        if (dates.empty()) raise(Errc::no_overlap, "strategies share no realized dates");
        std::vector<BacktestRun> aligned;
        for (auto& r : runs) aligned.push_back(restrict_run(r, dates));
        write_returns_csv(dir + "/returns.csv", aligned, false);
        write_returns_csv(dir + "/returns_gross.csv", aligned, true);
        std::vector<const BacktestRun*> ptrs;
        for (auto& r : aligned) ptrs.push_back(&r);
        emit_report(ptrs, index.get(), dir, rc.vol_target.sigma_target);
        for (auto& r : runs)
            if (!r.folds.empty())
                std::printf("%s: %zu folds, %zu realized dates\n", r.tag.c_str(),
                            r.folds.size(), r.dates.size());
    }

    if (rc.ablation && !interrupted().load()) {
        std::vector<BacktestRun> ab;
        for (const auto& subset : ablation_subsets()) {
            if (interrupted().load()) break;
            ab.push_back(run_model(ablation_tag(subset), subset));
        }
        if (!ab.empty()) {
            auto dates = common_dates(ab);
            if (dates.empty()) raise(Errc::no_overlap, "ablation runs share no realized dates");
            std::vector<BacktestRun> aligned;
            for (auto& r : ab) aligned.push_back(restrict_run(r, dates));
            std::string abdir = dir + "/ablation";
            fs::create_directories(abdir);
            write_returns_csv(abdir + "/returns.csv", aligned, false);
            std::vector<const BacktestRun*> ptrs;
            for (auto& r : aligned) ptrs.push_back(&r);
            emit_report(ptrs, index.get(), abdir, rc.vol_target.sigma_target);
        }
    }

    if (interrupted().load()) {
        log::warn("interrupted; partial results written to " + dir);
        return 130;
    }
    std::printf("run complete: %s\n", dir.c_str());
    return 0;
}

int cmd_report(const std::string& run_dir, const std::string& index_path) {
    std::string returns_path = run_dir + "/returns.csv";
    std::ifstream in(returns_path);
    if (!in) raise(Errc::io_error, "cannot open " + returns_path);

    std::string line;
    if (!std::getline(in, line)) raise(Errc::io_error, returns_path + ": empty");
    std::vector<std::string> tags;
    {
        size_t pos = 0;
        bool first = true;
        while (pos <= line.size()) {
            size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            std::string cell = line.substr(pos, comma - pos);
            if (!first) tags.push_back(cell);
            first = false;
            pos = comma + 1;
        }
    }
    if (tags.empty()) raise(Errc::io_error, returns_path + ": no strategy columns");

    std::vector<BacktestRun> runs(tags.size());
    for (size_t i = 0; i < tags.size(); ++i) runs[i].tag = tags[i];
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        size_t pos = line.find(',');
        if (pos == std::string::npos)
            raise(Errc::io_error, returns_path + ":" + std::to_string(lineno) + ": bad row");
        Date d = parse_date_or_throw(line.substr(0, pos));
        ++pos;
        for (size_t i = 0; i < tags.size(); ++i) {
            size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            std::string cell = line.substr(pos, comma - pos);
            char* end = nullptr;
            double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str())
                raise(Errc::io_error,
                      returns_path + ":" + std::to_string(lineno) + ": bad value '" + cell + "'");
            runs[i].dates.push_back(d);
            runs[i].returns.push_back(v);
            runs[i].gross.push_back(v);
            pos = comma + 1;
        }
    }

    std::string idx = index_path;
    if (idx.empty()) {
        std::ifstream cfg(run_dir + "/resolved_config.json");
        if (cfg) {
            try {
                json root;
                cfg >> root;
                if (root.contains("report") && root["report"].contains("index_csv") &&
                    !root["report"]["index_csv"].is_null())
                    idx = root["report"]["index_csv"].get<std::string>();
            } catch (const json::exception&) {
                // stale or hand-edited config; report proceeds without an index
            }
        }
    }
    std::unique_ptr<IndexSeries> index;
    if (!idx.empty()) index = std::make_unique<IndexSeries>(load_index_csv(idx));

    std::vector<const BacktestRun*> ptrs;
    for (auto& r : runs) ptrs.push_back(&r);
    emit_report(ptrs, index.get(), run_dir);
    std::printf("report rewritten in %s\n", run_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"momentum backtesting with a multi-task LSTM"};
    app.require_subcommand(1);

    int verbosity = 0;
    bool quiet = false;
    app.add_flag("-v,--verbose", verbosity, "increase log verbosity (repeatable)");
    app.add_flag("-q,--quiet", quiet, "errors only");

    std::string cfg_path, run_dir, index_path;
    CLI::App* synth = app.add_subcommand("synth", "generate synthetic universe CSVs");
    synth->add_option("-c,--config", cfg_path, "config file")->required();
    CLI::App* validate = app.add_subcommand("validate", "dry-run config and data checks");
    validate->add_option("-c,--config", cfg_path, "config file")->required();
    CLI::App* backtest = app.add_subcommand("backtest", "run strategies and emit reports");
    backtest->add_option("-c,--config", cfg_path, "config file")->required();
    CLI::App* report = app.add_subcommand("report", "re-emit report files from a run directory");
    report->add_option("-d,--dir", run_dir, "run directory")->required();
    report->add_option("--index", index_path, "index CSV for rolling correlation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    log::set_level(quiet ? 0 : 1 + verbosity);
    std::signal(SIGINT, on_sigint);

    try {
        if (report->parsed()) return cmd_report(run_dir, index_path);
        RunConfig rc = load_run_config(cfg_path);
        if (synth->parsed()) return cmd_synth(rc);
        if (validate->parsed()) return cmd_validate(rc);
        if (backtest->parsed()) return cmd_backtest(rc);
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "[error] %s: %s\n", errc_name(e.code()), e.what());
        return exit_category(e.code());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[error] %s\n", e.what());
        return 1;
    }
}
