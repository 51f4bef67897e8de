#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "mtmom/baselines.hpp"
#include "mtmom/features.hpp"
#include "mtmom/log.hpp"
#include "mtmom/market_data.hpp"
#include "mtmom/mtl_model.hpp"
#include "mtmom/nn/optim.hpp"
#include "mtmom/rng.hpp"

namespace mtmom {

// Cooperative interruption (wired to SIGINT by the CLI): training finishes
// the current epoch, the grid skips untried points, the backtest stops after
// the current fold. Partial results remain valid.
inline std::atomic<bool>& interrupted() {
    static std::atomic<bool> flag{false};
    return flag;
}

// Expanding-window protocol: one fold per test year; the train span is every
// calendar date from train_start_year up to the year before the test year,
// with the chronologically last fraction of those dates held out for
// validation. All bounds are calendar indices, [begin, end).
struct FoldPlan {
    int fold_index = 0;
    int test_year = 0;
    int train_begin = 0, train_end = 0;
    int val_begin = 0;
    int test_begin = 0, test_end = 0;
};

inline std::vector<FoldPlan> plan_folds(const Universe& u, int train_start_year,
                                        int first_test_year, int last_test_year,
                                        double validation_fraction = 0.2) {
    if (!(train_start_year < first_test_year))
        raise(Errc::invalid_span, "plan_folds: first test year must come after the train start");
    if (!(first_test_year <= last_test_year))
        raise(Errc::invalid_span, "plan_folds: last test year before first");
    if (!(validation_fraction > 0 && validation_fraction < 1))
        raise(Errc::invalid_span, "plan_folds: validation fraction must be in (0,1)");

    const int nd = u.n_dates();
    auto year_begin = [&](int year) {
        Date d = make_date(year, 1, 1);
        return static_cast<int>(std::lower_bound(u.calendar.begin(), u.calendar.end(), d) -
                                u.calendar.begin());
    };

    std::vector<FoldPlan> folds;
    int train_begin = year_begin(train_start_year);
    for (int y = first_test_year; y <= last_test_year; ++y) {
        FoldPlan f;
        f.fold_index = static_cast<int>(folds.size());
        f.test_year = y;
        f.train_begin = train_begin;
        f.train_end = year_begin(y);
        f.test_begin = f.train_end;
        f.test_end = y < std::numeric_limits<int>::max() ? year_begin(y + 1) : nd;
        if (f.train_end - f.train_begin < 2)
            raise(Errc::invalid_span, "plan_folds: train span for test year " + std::to_string(y) +
                                          " has " + std::to_string(f.train_end - f.train_begin) +
                                          " dates");
        if (f.test_end - f.test_begin < 1)
            raise(Errc::invalid_span,
                  "plan_folds: no calendar dates in test year " + std::to_string(y));
        int n_train = f.train_end - f.train_begin;
        f.val_begin = f.train_begin +
                      static_cast<int>(std::floor(n_train * (1.0 - validation_fraction)));
        if (f.val_begin <= f.train_begin || f.val_begin >= f.train_end)
            raise(Errc::invalid_span, "plan_folds: degenerate validation split for test year " +
                                          std::to_string(y));
        folds.push_back(f);
    }
    return folds;
}

// Builds model batches from the panel. A (date, asset) sample is active when
// the asset's features are valid across the whole lookback window ending at
// the decision date and the next-day settle return exists within ret_limit.
// Aux targets are kept only when their forward window stays within
// tgt_limit, so samples near a split boundary lose targets rather than leak.
class BatchBuilder {
  public:
    BatchBuilder(const Universe& u, const FeaturePanel& panel, const ModelConfig& cfg)
        : u_(&u), panel_(&panel), cfg_(cfg) {
        if (panel.n_features != cfg.n_features)
            raise(Errc::misaligned_panels, "batch builder: panel has " +
                                               std::to_string(panel.n_features) +
                                               " features, model expects " +
                                               std::to_string(cfg.n_features));
        if (panel.n_dates() != u.n_dates())
            raise(Errc::misaligned_panels, "batch builder: panel and universe calendars differ");
        for (int a = 0; a < u.n_assets(); ++a) {
            int fv = panel.first_valid(a);
            first_decision_.push_back(fv < 0 ? -1 : fv + cfg.lookback - 1);
        }
    }

    bool active_at(int asset, int t, int ret_limit) const {
        if (first_decision_[static_cast<size_t>(asset)] < 0 ||
            t < first_decision_[static_cast<size_t>(asset)])
            return false;
        if (t + 1 > ret_limit) return false;
        const Bar* b0 = u_->bar_at(asset, t);
        const Bar* b1 = u_->bar_at(asset, t + 1);
        return b0 && b1;
    }

    // decisions [d0, d1); leading dates with no active asset are dropped
    Batch build(int d0, int d1, int ret_limit, int tgt_limit,
                const std::vector<double>& prev_w) const {
        const int A = u_->n_assets();
        const int L = cfg_.lookback, F = cfg_.n_features;
        const size_t n_tasks = cfg_.aux_tasks.size();
        const double nan = std::numeric_limits<double>::quiet_NaN();

        while (d0 < d1 && n_active(d0, ret_limit) == 0) ++d0;
        while (d1 > d0 && n_active(d1 - 1, ret_limit) == 0) --d1;
        if (d0 >= d1) raise(Errc::no_valid_data, "batch: no active samples in span");

        Batch b;
        b.n_dates = d1 - d0;
        b.n_assets = A;
        b.lookback = L;
        b.n_features = F;
        const int B = b.rows();
        b.steps.assign(static_cast<size_t>(L),
                       std::vector<double>(static_cast<size_t>(B) * F, 0.0));
        b.next_ret.assign(static_cast<size_t>(B), 0.0);
        b.active.assign(static_cast<size_t>(B), 0.0);
        b.prefactor.assign(static_cast<size_t>(b.n_dates), 0.0);
        b.prev_w = prev_w.empty() ? std::vector<double>(static_cast<size_t>(A), 0.0) : prev_w;
        if (b.prev_w.size() != static_cast<size_t>(A))
            raise(Errc::shape_mismatch, "batch: prev_w size does not match asset count");
        b.aux_target.assign(n_tasks, std::vector<double>(static_cast<size_t>(B), nan));
        b.last_bar_used = u_->calendar[static_cast<size_t>(d0)];

        std::vector<int> task_col(n_tasks, 0);
        for (size_t k = 0; k < n_tasks; ++k) {
            auto it = std::find(kTargetKinds.begin(), kTargetKinds.end(), cfg_.aux_tasks[k]);
            task_col[k] = static_cast<int>(it - kTargetKinds.begin());
        }

        for (int d = d0; d < d1; ++d) {
            int t = d;
            int n_act = 0;
            for (int a = 0; a < A; ++a) {
                int row = (d - d0) * A + a;
                if (!active_at(a, t, ret_limit)) continue;
                ++n_act;
                b.active[static_cast<size_t>(row)] = 1.0;
                for (int s = 0; s < L; ++s) {
                    int ft = t - L + 1 + s;
                    const double* src =
                        &panel_->features[static_cast<size_t>(a)]
                                         [static_cast<size_t>(ft) * F];
                    std::copy(src, src + F,
                              b.steps[static_cast<size_t>(s)].begin() +
                                  static_cast<size_t>(row) * F);
                }
                const Bar* b0p = u_->bar_at(a, t);
                const Bar* b1p = u_->bar_at(a, t + 1);
                b.next_ret[static_cast<size_t>(row)] = std::log(b1p->settle / b0p->settle);
                if (u_->calendar[static_cast<size_t>(t + 1)] > b.last_bar_used)
                    b.last_bar_used = u_->calendar[static_cast<size_t>(t + 1)];
                for (size_t k = 0; k < n_tasks; ++k) {
                    if (t + panel_horizon_ > tgt_limit) continue;
                    double v = panel_->target(a, t, task_col[k]);
                    if (!std::isnan(v)) {
                        b.aux_target[k][static_cast<size_t>(row)] = v;
                        if (u_->calendar[static_cast<size_t>(t + panel_horizon_)] > b.last_bar_used)
                            b.last_bar_used = u_->calendar[static_cast<size_t>(t + panel_horizon_)];
                    }
                }
            }
            if (n_act > 0)
                b.prefactor[static_cast<size_t>(d - d0)] = cfg_.sigma_target / n_act;
        }
        for (int d = d0; d < d1; ++d)
            b.dates.push_back(u_->calendar[static_cast<size_t>(d)]);
        return b;
    }

    int first_usable_decision(int begin, int end, int ret_limit) const {
        for (int d = begin; d < end; ++d)
            if (n_active(d, ret_limit) > 0) return d;
        return -1;
    }

    void set_target_horizon(int h) { panel_horizon_ = h; }

  private:
    int n_active(int d, int ret_limit) const {
        int n = 0;
        for (int a = 0; a < u_->n_assets(); ++a)
            if (active_at(a, d, ret_limit)) ++n;
        return n;
    }

    const Universe* u_;
    const FeaturePanel* panel_;
    ModelConfig cfg_;
    std::vector<int> first_decision_;
    int panel_horizon_ = 21;
};

struct EpochLog {
    int epoch = 0;  // 0 = pre-training evaluation
    double train_total = std::numeric_limits<double>::quiet_NaN();
    double train_sharpe = std::numeric_limits<double>::quiet_NaN();
    double train_aux = std::numeric_limits<double>::quiet_NaN();
    double val_total = std::numeric_limits<double>::quiet_NaN();
};

struct EpochLine {
    int fold = 0;
    long grid_index = 0;
    EpochLog log;
};

struct TrainSettings {
    int max_epochs = 200;
    int patience = 25;
    int batch_span = 126;
    uint64_t master_seed = 1234;
    int target_horizon = 21;
    std::function<void(const EpochLine&)> epoch_sink;  // optional structured logging
};

struct TrainRunResult {
    ModelConfig config;
    bool diverged = false;
    int best_epoch = 0;  // 1-based; 0 means no epoch ever improved
    double best_val = std::numeric_limits<double>::infinity();
    double val_epoch0 = std::numeric_limits<double>::quiet_NaN();
    std::vector<EpochLog> epochs;  // entry 0 is the pre-training evaluation
    int epochs_run = 0;
    Date max_train_bar_used{};  // leakage witness: latest bar touched by any batch
};

// Strict-improvement early stopping: an epoch improves only when its
// validation loss is strictly below the best so far; after `patience`
// consecutive non-improving epochs training halts. A NaN marks divergence
// (best forced to +inf).
struct EarlyStopper {
    int patience = 25;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int stale = 0;
    bool diverged = false;

    // feed one epoch's validation loss; true when training should stop
    bool observe(int epoch, double val) {
        if (std::isnan(val)) {
            diverged = true;
            best_val = std::numeric_limits<double>::infinity();
            return true;
        }
        if (val < best_val) {
            best_val = val;
            best_epoch = epoch;
            stale = 0;
            return false;
        }
        return ++stale >= patience;
    }
    bool improved(int epoch) const { return best_epoch == epoch && !diverged; }
};

namespace detail {

struct SpanBounds {
    int begin = 0, end = 0;
};

// contiguous spans of decision dates, each >= 2 dates (a short tail is
// merged into its predecessor)
inline std::vector<SpanBounds> partition_spans(int begin, int end, int span_len) {
    std::vector<SpanBounds> spans;
    for (int s = begin; s < end; s += span_len) spans.push_back({s, std::min(s + span_len, end)});
    if (spans.size() >= 2 && spans.back().end - spans.back().begin < 2) {
        spans[spans.size() - 2].end = spans.back().end;
        spans.pop_back();
    }
    if (!spans.empty() && spans.back().end - spans.back().begin < 2) spans.clear();
    return spans;
}

}  // namespace detail

// Trains one (fold, config) pair from scratch: Adam on span batches, global
// gradient clipping, early stop after `patience` consecutive epochs without
// a validation improvement, best-epoch weights restored at the end. A NaN
// anywhere marks the run diverged with +inf validation loss.
inline TrainRunResult train_fold(const Universe& u, const FeaturePanel& panel,
                                 const FoldPlan& fold, const ModelConfig& cfg,
                                 const TrainSettings& ts, long grid_index, MtlModel* out_model) {
    TrainRunResult res;
    res.config = cfg;

    BatchBuilder builder(u, panel, cfg);
    builder.set_target_horizon(ts.target_horizon);

    const int train_ret_limit = fold.val_begin - 1;
    const int val_ret_limit = fold.train_end - 1;
    int v0 = builder.first_usable_decision(fold.train_begin, fold.val_begin - 1, train_ret_limit);
    if (v0 < 0)
        raise(Errc::no_valid_data, "fold " + std::to_string(fold.fold_index) +
                                       ": no usable training samples (feature burn-in longer than "
                                       "the train span?)");
    auto spans = detail::partition_spans(v0, fold.val_begin - 1, ts.batch_span);
    if (spans.empty())
        raise(Errc::no_valid_data,
              "fold " + std::to_string(fold.fold_index) + ": train span too short to batch");

    std::vector<Batch> train_batches;
    for (auto sp : spans)
        train_batches.push_back(
            builder.build(sp.begin, sp.end, train_ret_limit, fold.val_begin - 1, {}));
    Batch val_batch = builder.build(fold.val_begin, fold.train_end - 1, val_ret_limit,
                                    fold.train_end - 1, {});
    if (val_batch.n_dates < 2)
        raise(Errc::no_valid_data,
              "fold " + std::to_string(fold.fold_index) + ": validation span too short");

    res.max_train_bar_used = val_batch.last_bar_used;
    for (const auto& b : train_batches)
        if (b.last_bar_used > res.max_train_bar_used) res.max_train_bar_used = b.last_bar_used;

    MtlModel model;
    model.cfg = cfg;
    model.build_and_init(mix_seed(ts.master_seed, static_cast<uint64_t>(fold.fold_index),
                                  static_cast<uint64_t>(grid_index), 0xA11CEull));
    auto params = model.parameters();
    nn::AdamState adam;
    adam.init(params);
    nn::AdamConfig adam_cfg;
    adam_cfg.lr = cfg.learning_rate;

    auto eval_val = [&]() {
        nn::Tape tape;
        GraphOutputs g = build_graph(tape, model, val_batch, GraphMode::train_loss, false, 0);
        return tape.val(g.total).v[0];
    };

    auto emit = [&](const EpochLog& el) {
        res.epochs.push_back(el);
        if (ts.epoch_sink) ts.epoch_sink({fold.fold_index, grid_index, el});
    };

    res.val_epoch0 = eval_val();
    {
        EpochLog el;
        el.epoch = 0;
        el.val_total = res.val_epoch0;
        emit(el);
    }
    if (std::isnan(res.val_epoch0)) {
        res.diverged = true;
        res.best_val = std::numeric_limits<double>::infinity();
        if (out_model) *out_model = std::move(model);
        return res;
    }

    std::vector<std::vector<double>> best_snap;
    EarlyStopper stopper;
    stopper.patience = ts.patience;
    std::vector<int> order(train_batches.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= ts.max_epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(ts.master_seed, static_cast<uint64_t>(fold.fold_index),
                                 static_cast<uint64_t>(grid_index),
                                 0x5EEDull + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double sum_total = 0, sum_sharpe = 0, sum_aux = 0;
        bool nan_hit = false;
        for (int oi : order) {
            const Batch& batch = train_batches[static_cast<size_t>(oi)];
            for (auto* p : params) p->zero_grad();
            nn::Tape tape;
            uint64_t drop_seed =
                mix_seed(mix_seed(ts.master_seed, static_cast<uint64_t>(fold.fold_index),
                                  static_cast<uint64_t>(grid_index), 0xD80Full),
                         static_cast<uint64_t>(epoch), static_cast<uint64_t>(oi));
            GraphOutputs g = build_graph(tape, model, batch, GraphMode::train_loss, true, drop_seed);
            double total = tape.val(g.total).v[0];
            if (std::isnan(total)) {
                nan_hit = true;
                break;
            }
            sum_total += total;
            sum_sharpe += tape.val(g.sharpe).v[0];
            double aux = 0;
            for (size_t k = 0; k < g.corr.size(); ++k)
                if (g.corr[k] >= 0) aux += tape.val(g.corr[k]).v[0];
            sum_aux += aux;

            tape.backward(g.total);
            nn::clip_grad_norm(params, cfg.max_grad_norm);
            adam_step(params, adam, adam_cfg);
        }
        res.epochs_run = epoch;
        if (nan_hit) {
            res.diverged = true;
            res.best_val = std::numeric_limits<double>::infinity();
            break;
        }

        double val = eval_val();
        EpochLog el;
        el.epoch = epoch;
        double nb = static_cast<double>(train_batches.size());
        el.train_total = sum_total / nb;
        el.train_sharpe = sum_sharpe / nb;
        el.train_aux = sum_aux / nb;
        el.val_total = val;
        emit(el);

        bool stop = stopper.observe(epoch, val);
        if (stopper.improved(epoch)) best_snap = model.snapshot();
        res.best_val = stopper.best_val;
        res.best_epoch = stopper.best_epoch;
        res.diverged = stopper.diverged;
        if (stop || interrupted().load()) break;
    }

    if (!best_snap.empty()) model.restore(best_snap);
    if (res.best_epoch == 0 && !res.diverged) {
        // nothing ever improved on +inf (all-NaN guard above handles real
        // divergence); keep the final weights but flag the odd case
        log::warn("fold " + std::to_string(fold.fold_index) + ": no epoch improved validation");
    }
    if (out_model) *out_model = std::move(model);
    return res;
}

// Hyperparameter grid in the published table's shape. Flat indices decode
// mixed-radix with lstm_layers as the outermost digit and max_grad_norm as
// the innermost.
struct GridSpec {
    std::vector<int> lstm_layers{1, 2, 3, 4};
    std::vector<int> lstm_hidden{32, 64, 126, 252};
    std::vector<double> lstm_dropout{0.05, 0.10, 0.15, 0.20};
    std::vector<int> mlp_layers{1, 2, 3, 4};
    std::vector<int> mlp_hidden{32, 64, 126, 252};
    std::vector<double> mlp_dropout{0.05, 0.10, 0.15, 0.20};
    std::vector<double> learning_rate{1e-4, 1e-3, 1e-2, 1e-1};
    std::vector<double> max_grad_norm{0.01, 0.1, 1.0};

    size_t total() const {
        return lstm_layers.size() * lstm_hidden.size() * lstm_dropout.size() * mlp_layers.size() *
               mlp_hidden.size() * mlp_dropout.size() * learning_rate.size() *
               max_grad_norm.size();
    }

    ModelConfig materialize(size_t flat, const ModelConfig& base) const {
        ModelConfig c = base;
        auto take = [&flat](const auto& v) {
            size_t i = flat % v.size();
            flat /= v.size();
            return v[i];
        };
        // innermost digit first
        c.max_grad_norm = take(max_grad_norm);
        c.learning_rate = take(learning_rate);
        c.mlp_dropout = take(mlp_dropout);
        c.mlp_hidden = take(mlp_hidden);
        c.mlp_layers = take(mlp_layers);
        c.lstm_dropout = take(lstm_dropout);
        c.lstm_hidden = take(lstm_hidden);
        c.lstm_layers = take(lstm_layers);
        return c;
    }
};

struct GridPointOutcome {
    size_t flat = 0;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    bool diverged = false;
    long n_params = 0;
    double learning_rate = 0;
};

struct GridSearchResult {
    size_t best_flat = 0;
    ModelConfig best_config;
    TrainRunResult best_run;
    std::vector<GridPointOutcome> tried;
    bool stopped_early = false;  // SIGINT drain
};

// Fixed-seed sample of distinct flat grid indices, shared by every fold of a
// run so fold results stay comparable.
inline std::vector<size_t> sample_grid_indices(const GridSpec& grid, size_t budget,
                                               uint64_t master_seed) {
    size_t total = grid.total();
    std::vector<size_t> idx;
    if (budget == 0 || budget >= total) {
        idx.resize(total);
        for (size_t i = 0; i < total; ++i) idx[i] = i;
        return idx;
    }
    Rng rng(mix_seed(master_seed, 0x6B1Dull));
    std::set<size_t> seen;
    while (seen.size() < budget) seen.insert(static_cast<size_t>(rng.below(total)));
    idx.assign(seen.begin(), seen.end());
    return idx;
}

// Validation-loss selection with deterministic tie-breaking: fewer
// parameters first, then lower learning rate, then grid order.
inline GridSearchResult grid_search(const Universe& u, const FeaturePanel& panel,
                                    const FoldPlan& fold, const ModelConfig& base,
                                    const GridSpec& grid, const std::vector<size_t>& indices,
                                    const TrainSettings& ts, MtlModel* out_model) {
    if (indices.empty()) raise(Errc::invalid_spec, "grid_search: no grid points to try");
    GridSearchResult best;
    MtlModel best_model;
    bool have = false;

    for (size_t pos = 0; pos < indices.size(); ++pos) {
        size_t flat = indices[pos];
        ModelConfig cfg = grid.materialize(flat, base);
        MtlModel model;
        TrainRunResult run =
            train_fold(u, panel, fold, cfg, ts, static_cast<long>(flat), &model);

        GridPointOutcome oc;
        oc.flat = flat;
        oc.best_val = run.best_val;
        oc.best_epoch = run.best_epoch;
        oc.diverged = run.diverged;
        oc.n_params = cfg.n_params();
        oc.learning_rate = cfg.learning_rate;
        best.tried.push_back(oc);

        bool better = false;
        if (!have) {
            better = true;
        } else if (run.best_val < best.best_run.best_val) {
            better = true;
        } else if (run.best_val == best.best_run.best_val) {
            long np = cfg.n_params(), bnp = best.best_config.n_params();
            if (np < bnp) better = true;
            else if (np == bnp && cfg.learning_rate < best.best_config.learning_rate) better = true;
            // equal on all: keep earlier grid order (indices are ascending)
        }
        if (better) {
            best.best_flat = flat;
            best.best_config = cfg;
            best.best_run = std::move(run);
            best_model = std::move(model);
            have = true;
        }
        if (interrupted().load() && pos + 1 < indices.size()) {
            best.stopped_early = true;
            log::warn("grid search interrupted after " + std::to_string(pos + 1) + " of " +
                      std::to_string(indices.size()) + " points");
            break;
        }
    }
    if (out_model) *out_model = std::move(best_model);
    return best;
}

struct FoldResult {
    FoldPlan plan;
    size_t best_flat = 0;
    ModelConfig best_config;
    double best_val = std::numeric_limits<double>::infinity();
    double val_epoch0 = std::numeric_limits<double>::quiet_NaN();
    int best_epoch = 0;
    int epochs_run = 0;
    bool diverged = false;
    size_t grid_points_tried = 0;
    std::vector<EpochLog> best_epochs;
    Date max_train_bar_used{};
    Date test_start{};
    // realized test-year series
    std::vector<Date> test_dates;
    std::vector<double> test_returns;  // net of costs
    std::vector<double> test_gross;
    std::vector<Date> decision_dates;
    std::vector<std::vector<double>> decision_weights;  // [decision][asset]
    nn::Checkpoint checkpoint;
};

struct BacktestRun {
    std::string tag;
    std::vector<std::string> asset_ids;
    double tau = 0;
    std::vector<Date> dates;  // realized dates, stitched across folds
    std::vector<double> returns;
    std::vector<double> gross;
    std::vector<FoldResult> folds;  // empty for baselines
    bool stopped_early = false;
};

struct BacktestSettings {
    int train_start_year = 1990;
    int first_test_year = 2000;
    int last_test_year = 2020;
    double validation_fraction = 0.2;
    uint64_t master_seed = 1234;
    TrainSettings train;
    GridSpec grid;
    size_t grid_budget = 64;  // 0 means exhaustive
    ModelConfig base_model;
    bool keep_checkpoints = true;
};

// Trains one model per fold (grid-searched on that fold's validation span),
// runs it over the test year and stitches the realized daily returns. The
// last decision weights of each fold seed the next fold's turnover charge so
// the stitched series pays real rebalancing costs at fold boundaries.
inline BacktestRun run_mtl_backtest(const Universe& u, const FeaturePanel& panel,
                                    const BacktestSettings& bs, const std::string& tag) {
    auto folds = plan_folds(u, bs.train_start_year, bs.first_test_year, bs.last_test_year,
                            bs.validation_fraction);
    auto grid_idx = sample_grid_indices(bs.grid, bs.grid_budget, bs.master_seed);
    TrainSettings ts = bs.train;
    ts.master_seed = bs.master_seed;  // one seed governs the whole run
    log::info(tag + ": " + std::to_string(folds.size()) + " folds, " +
              std::to_string(grid_idx.size()) + " grid points per fold");

    BacktestRun run;
    run.tag = tag;
    run.tau = bs.base_model.tau;
    for (const auto& ua : u.assets) run.asset_ids.push_back(ua.series.asset_id);

    std::vector<double> carry_w(static_cast<size_t>(u.n_assets()), 0.0);
    for (const auto& fp : folds) {
        MtlModel model;
        GridSearchResult gs =
            grid_search(u, panel, fp, bs.base_model, bs.grid, grid_idx, ts, &model);

        FoldResult fr;
        fr.plan = fp;
        fr.best_flat = gs.best_flat;
        fr.best_config = gs.best_config;
        fr.best_val = gs.best_run.best_val;
        fr.val_epoch0 = gs.best_run.val_epoch0;
        fr.best_epoch = gs.best_run.best_epoch;
        fr.epochs_run = gs.best_run.epochs_run;
        fr.diverged = gs.best_run.diverged;
        fr.grid_points_tried = gs.tried.size();
        fr.best_epochs = gs.best_run.epochs;
        fr.max_train_bar_used = gs.best_run.max_train_bar_used;
        fr.test_start = u.calendar[static_cast<size_t>(fp.test_begin)];

        // decisions from the eve of the test year through its second-to-last
        // date; every realized return lands inside the test year
        BatchBuilder builder(u, panel, gs.best_config);
        builder.set_target_horizon(ts.target_horizon);
        Batch test_batch = builder.build(fp.test_begin - 1, fp.test_end - 1, fp.test_end - 1,
                                         fp.test_end - 1, carry_w);
        nn::Tape tape;
        GraphOutputs g = build_graph(tape, model, test_batch, GraphMode::weights_only, false, 0);
        const nn::Tensor& pr = tape.val(g.port_ret);
        const nn::Tensor& pg = tape.val(g.port_gross);
        const nn::Tensor& w = tape.val(g.w_eff);

        for (int d = 0; d < test_batch.n_dates; ++d) {
            int cal = fp.test_begin - 1 + d;  // decision date index
            // leading inactive dates were dropped by the builder
            while (u.calendar[static_cast<size_t>(cal)] != test_batch.dates[static_cast<size_t>(d)])
                ++cal;
            fr.decision_dates.push_back(test_batch.dates[static_cast<size_t>(d)]);
            std::vector<double> wd(static_cast<size_t>(test_batch.n_assets));
            for (int a = 0; a < test_batch.n_assets; ++a)
                wd[static_cast<size_t>(a)] = w.v[static_cast<size_t>(d) * test_batch.n_assets + a];
            fr.decision_weights.push_back(wd);
            fr.test_dates.push_back(u.calendar[static_cast<size_t>(cal + 1)]);
            fr.test_returns.push_back(pr.v[static_cast<size_t>(d)]);
            fr.test_gross.push_back(pg.v[static_cast<size_t>(d)]);
        }
        if (!fr.decision_weights.empty()) carry_w = fr.decision_weights.back();

        if (bs.keep_checkpoints) {
            fr.checkpoint = model.to_checkpoint();
            fr.checkpoint.meta["fold"] = std::to_string(fp.fold_index);
            fr.checkpoint.meta["test_year"] = std::to_string(fp.test_year);
            fr.checkpoint.meta["grid_flat"] = std::to_string(gs.best_flat);
            fr.checkpoint.meta["best_val"] = format_double(fr.best_val);
            fr.checkpoint.meta["best_epoch"] = std::to_string(fr.best_epoch);
        }

        run.dates.insert(run.dates.end(), fr.test_dates.begin(), fr.test_dates.end());
        run.returns.insert(run.returns.end(), fr.test_returns.begin(), fr.test_returns.end());
        run.gross.insert(run.gross.end(), fr.test_gross.begin(), fr.test_gross.end());
        run.folds.push_back(std::move(fr));

        if (gs.stopped_early || interrupted().load()) {
            run.stopped_early = true;
            log::warn(tag + ": stopping after fold " + std::to_string(fp.fold_index) +
                      " (interrupt)");
            break;
        }
        log::info(tag + ": fold " + std::to_string(fp.fold_index) + " (test " +
                  std::to_string(fp.test_year) + ") best val " + format_double(fr.best_val) +
                  " at epoch " + std::to_string(fr.best_epoch));
    }
    return run;
}

// Restricts a full-history baseline strategy to the stitched test window so
// it is comparable date-for-date with the model run.
inline BacktestRun slice_to_test_window(const StrategyOutput& full, const Universe& u,
                                        const std::vector<FoldPlan>& folds, double tau) {
    BacktestRun run;
    run.tag = full.tag;
    run.asset_ids = full.asset_ids;
    run.tau = tau;
    if (folds.empty()) return run;
    Date lo = u.calendar[static_cast<size_t>(folds.front().test_begin)];
    Date hi = u.calendar[static_cast<size_t>(folds.back().test_end - 1)];
    for (size_t i = 0; i < full.dates.size(); ++i) {
        if (full.dates[i] < lo || hi < full.dates[i]) continue;
        run.dates.push_back(full.dates[i]);
        run.returns.push_back(full.daily_returns[i]);
        run.gross.push_back(full.gross_returns[i]);
    }
    return run;
}

// Ablation: re-run the full protocol with each auxiliary-task subset, same
// folds, same seeds, same sampled grid. Subsets are "none", each single
// estimator, and all five.
inline std::vector<std::vector<VolKind>> ablation_subsets() {
    std::vector<std::vector<VolKind>> subsets;
    subsets.push_back({});
    for (VolKind k : kTargetKinds) subsets.push_back({k});
    subsets.push_back(std::vector<VolKind>(kTargetKinds.begin(), kTargetKinds.end()));
    return subsets;
}

inline std::string ablation_tag(const std::vector<VolKind>& subset) {
    if (subset.empty()) return "mtl_no_aux";
    if (subset.size() == kTargetKinds.size()) return "mtl_all_aux";
    std::string t = "mtl_aux";
    for (VolKind k : subset) t += std::string("_") + vol_kind_name(k);
    return t;
}

inline std::vector<BacktestRun> run_ablation(const Universe& u, const FeaturePanel& panel,
                                             const BacktestSettings& bs) {
    std::vector<BacktestRun> runs;
    for (const auto& subset : ablation_subsets()) {
        BacktestSettings sub = bs;
        sub.base_model.aux_tasks = subset;
        runs.push_back(run_mtl_backtest(u, panel, sub, ablation_tag(subset)));
        if (runs.back().stopped_early) break;
    }
    return runs;
}

// Structural no-peeking check: every bar touched while fitting a fold must
// predate that fold's first test date.
inline bool verify_no_leakage(const BacktestRun& run, std::string* detail = nullptr) {
    for (const auto& fr : run.folds) {
        if (!(fr.max_train_bar_used < fr.test_start)) {
            if (detail)
                *detail = "fold " + std::to_string(fr.plan.fold_index) + ": train touched " +
                          to_string(fr.max_train_bar_used) + ", test starts " +
                          to_string(fr.test_start);
            return false;
        }
    }
    if (detail) *detail = "ok";
    return true;
}

}  // namespace mtmom
