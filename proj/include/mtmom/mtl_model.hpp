#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mtmom/date.hpp"
#include "mtmom/features.hpp"
#include "mtmom/log.hpp"
#include "mtmom/nn/checkpoint.hpp"
#include "mtmom/nn/layers.hpp"
#include "mtmom/nn/tensor.hpp"
#include "mtmom/rng.hpp"

namespace mtmom {

// Architecture and loss weighting for the multi-task momentum model: a
// stacked LSTM trunk shared across assets, a tanh head that emits the
// position weight in (-1,1), and one softplus head per auxiliary
// vol-forecasting task.
struct ModelConfig {
    int lstm_layers = 1;
    int lstm_hidden = 64;
    double lstm_dropout = 0.1;
    int mlp_layers = 1;  // hidden layers per head
    int mlp_hidden = 64;
    double mlp_dropout = 0.1;
    double learning_rate = 1e-4;
    double max_grad_norm = 1.0;
    int lookback = 63;
    int n_features = 15;
    double mu = 0.5;      // weight on the Sharpe term
    double lambda = 0.5;  // weight on the summed correlation terms (not averaged)
    double sigma_target = 0.10;
    double tau = 0.0003;
    std::vector<VolKind> aux_tasks{VolKind::close_to_close, VolKind::parkinson,
                                   VolKind::garman_klass, VolKind::rogers_satchell,
                                   VolKind::yang_zhang};

    long n_params() const {
        long n = 0;
        for (int l = 0; l < lstm_layers; ++l) {
            long in = l == 0 ? n_features : lstm_hidden;
            n += 4L * (in * lstm_hidden + static_cast<long>(lstm_hidden) * lstm_hidden +
                       lstm_hidden);
        }
        auto head = [&]() {
            long h = 0;
            int cur = lstm_hidden;
            for (int l = 0; l < mlp_layers; ++l) {
                h += static_cast<long>(cur) * mlp_hidden + mlp_hidden;
                cur = mlp_hidden;
            }
            h += cur + 1;
            return h;
        };
        n += head() * static_cast<long>(1 + aux_tasks.size());
        return n;
    }

    std::string describe() const {
        std::string s = "lstm " + std::to_string(lstm_layers) + "x" + std::to_string(lstm_hidden) +
                        " do " + std::to_string(lstm_dropout) + ", mlp " +
                        std::to_string(mlp_layers) + "x" + std::to_string(mlp_hidden) + " do " +
                        std::to_string(mlp_dropout) + ", lr " + std::to_string(learning_rate) +
                        ", clip " + std::to_string(max_grad_norm) + ", aux {";
        for (size_t i = 0; i < aux_tasks.size(); ++i)
            s += std::string(i ? "," : "") + vol_kind_name(aux_tasks[i]);
        return s + "}";
    }
};

inline void validate_model_config(const ModelConfig& c) {
    if (c.lstm_layers < 1 || c.lstm_hidden < 1 || c.mlp_layers < 0 || c.mlp_hidden < 1)
        raise(Errc::invalid_spec, "model config: sizes must be positive");
    if (!(c.lstm_dropout >= 0 && c.lstm_dropout < 1 && c.mlp_dropout >= 0 && c.mlp_dropout < 1))
        raise(Errc::invalid_spec, "model config: dropout must be in [0,1)");
    if (!(c.learning_rate > 0)) raise(Errc::invalid_spec, "model config: learning_rate must be > 0");
    if (!(c.max_grad_norm > 0)) raise(Errc::invalid_spec, "model config: max_grad_norm must be > 0");
    if (c.lookback < 1) raise(Errc::invalid_spec, "model config: lookback must be >= 1");
    if (c.n_features < 1) raise(Errc::invalid_spec, "model config: n_features must be >= 1");
    for (VolKind k : c.aux_tasks)
        if (k == VolKind::ewma_ex_ante)
            raise(Errc::invalid_kind, "model config: ewma_ex_ante is not a forecast target");
}

struct MtlModel {
    ModelConfig cfg;
    std::vector<nn::LstmCellParams> lstm;
    nn::FnnParams main_head;
    std::vector<nn::FnnParams> aux_heads;

    // Parameter creation and initialization are a single deterministic pass:
    // (seed, config) pins every weight. Draw order = LSTM layers bottom-up,
    // then the main head, then aux heads in task order.
    void build_and_init(uint64_t seed) {
        validate_model_config(cfg);
        Rng rng(seed);
        lstm.assign(static_cast<size_t>(cfg.lstm_layers), {});
        for (int l = 0; l < cfg.lstm_layers; ++l)
            lstm[static_cast<size_t>(l)].build(l == 0 ? cfg.n_features : cfg.lstm_hidden,
                                               cfg.lstm_hidden);
        main_head.build(cfg.lstm_hidden, cfg.mlp_hidden, cfg.mlp_layers, 1,
                        nn::Activation::tanh_act, nn::Activation::tanh_act);
        aux_heads.clear();
        for (size_t k = 0; k < cfg.aux_tasks.size(); ++k) {
            nn::FnnParams h;
            h.build(cfg.lstm_hidden, cfg.mlp_hidden, cfg.mlp_layers, 1, nn::Activation::tanh_act,
                    nn::Activation::softplus_act);
            aux_heads.push_back(std::move(h));
        }
        for (auto& cell : lstm) cell.init(rng);
        main_head.init(rng);
        for (auto& h : aux_heads) h.init(rng);
    }

    std::vector<nn::Tensor*> parameters() {
        std::vector<nn::Tensor*> out;
        for (auto& cell : lstm)
            for (auto* t : cell.params()) out.push_back(t);
        for (auto* t : main_head.params()) out.push_back(t);
        for (auto& h : aux_heads)
            for (auto* t : h.params()) out.push_back(t);
        return out;
    }

    long n_params() const { return cfg.n_params(); }

    std::vector<std::vector<double>> snapshot() {
        std::vector<std::vector<double>> out;
        for (auto* t : parameters()) out.push_back(t->v);
        return out;
    }

    void restore(const std::vector<std::vector<double>>& snap) {
        auto ps = parameters();
        if (snap.size() != ps.size())
            raise(Errc::shape_mismatch, "model restore: parameter count mismatch");
        for (size_t i = 0; i < ps.size(); ++i) {
            if (snap[i].size() != ps[i]->numel())
                raise(Errc::shape_mismatch, "model restore: tensor size mismatch");
            ps[i]->v = snap[i];
        }
    }

    std::vector<std::pair<std::string, nn::Tensor*>> named_parameters() {
        std::vector<std::pair<std::string, nn::Tensor*>> out;
        static const char* gate[4] = {"i", "f", "g", "o"};
        for (size_t l = 0; l < lstm.size(); ++l)
            for (int k = 0; k < 4; ++k) {
                std::string base = "lstm" + std::to_string(l) + ".";
                out.emplace_back(base + "Wx." + gate[k], &lstm[l].Wx[k]);
                out.emplace_back(base + "Wh." + gate[k], &lstm[l].Wh[k]);
                out.emplace_back(base + "b." + gate[k], &lstm[l].b[k]);
            }
        auto head = [&](const std::string& name, nn::FnnParams& p) {
            for (size_t i = 0; i < p.layers.size(); ++i) {
                out.emplace_back(name + "." + std::to_string(i) + ".W", &p.layers[i].W);
                out.emplace_back(name + "." + std::to_string(i) + ".b", &p.layers[i].b);
            }
        };
        head("main", main_head);
        for (size_t k = 0; k < aux_heads.size(); ++k)
            head(std::string("aux.") + vol_kind_name(cfg.aux_tasks[k]), aux_heads[k]);
        return out;
    }

    nn::Checkpoint to_checkpoint(std::map<std::string, std::string> meta = {}) {
        nn::Checkpoint ck;
        ck.meta = std::move(meta);
        ck.meta["opset"] = "1";
        for (auto& [name, t] : named_parameters()) ck.tensors.emplace_back(name, *t);
        return ck;
    }

    void load_from_checkpoint(const nn::Checkpoint& ck) {
        auto named = named_parameters();
        if (ck.tensors.size() != named.size())
            raise(Errc::shape_mismatch, "checkpoint: tensor count mismatch");
        for (size_t i = 0; i < named.size(); ++i) {
            const auto& [name, t] = ck.tensors[i];
            if (name != named[i].first || t.rows != named[i].second->rows ||
                t.cols != named[i].second->cols)
                raise(Errc::shape_mismatch, "checkpoint: tensor '" + name + "' does not match '" +
                                                named[i].first + "'");
            named[i].second->v = t.v;
        }
    }
};

// One training/evaluation batch: a contiguous span of decision dates times
// all assets, rows date-major (row = d * n_assets + a). Inactive rows carry
// zeroed windows, active = 0, zero next returns, and NaN targets; the graph
// masks them out of both P&L and turnover.
struct Batch {
    int n_dates = 0, n_assets = 0;
    int lookback = 0, n_features = 0;
    std::vector<std::vector<double>> steps;  // lookback matrices, each [B x F] flat
    std::vector<double> next_ret;            // [B] log return over (t, t+1], 0 if inactive
    std::vector<double> active;              // [B] 1.0 / 0.0
    std::vector<double> prefactor;           // [n_dates] sigma_target / S_d (0 if S_d = 0)
    std::vector<double> prev_w;              // [n_assets] effective weights decided before date 0
    std::vector<std::vector<double>> aux_target;  // per task: [B], NaN = absent
    std::vector<Date> dates;                      // decision dates
    Date last_bar_used{};  // latest bar date any input, return, or target touched

    int rows() const { return n_dates * n_assets; }
};

struct GraphOutputs {
    int w_eff = -1;  // [D x A] masked decision weights
    std::vector<int> aux_cols;      // per task [B x 1]
    int port_ret = -1;              // [D x 1] net daily portfolio returns
    int port_gross = -1;            // [D x 1] same without the turnover charge
    int sharpe = -1;                // scalar node: -mean/std
    std::vector<int> corr;          // per task scalar node: -corr, -1 if skipped
    std::vector<uint8_t> corr_skipped;
    int total = -1;                 // scalar loss node
};

enum class GraphMode { train_loss, weights_only };

// Builds the forward graph for one batch. Eager evaluation means every node
// value is final once this returns; call tape.backward(out.total) for grads.
inline GraphOutputs build_graph(nn::Tape& t, MtlModel& model, const Batch& batch, GraphMode mode,
                                bool training, uint64_t dropout_seed) {
    const ModelConfig& cfg = model.cfg;
    if (batch.lookback != cfg.lookback || batch.n_features != cfg.n_features)
        raise(Errc::shape_mismatch, "build_graph: batch window does not match model config");
    if (batch.n_dates < 1 || batch.n_assets < 1)
        raise(Errc::empty_input, "build_graph: empty batch");
    if (mode == GraphMode::train_loss && batch.n_dates < 2)
        raise(Errc::too_few_observations,
              "build_graph: need >= 2 dates in a batch for the Sharpe term");

    const int B = batch.rows();
    const int D = batch.n_dates, A = batch.n_assets;
    Rng drop_rng(dropout_seed);

    std::vector<nn::LstmCellNodes> cells;
    for (auto& cell : model.lstm) cells.push_back(nn::put_on_tape(t, cell));
    nn::FnnNodes main_nodes = nn::put_on_tape(t, model.main_head);
    std::vector<nn::FnnNodes> aux_nodes;
    for (auto& h : model.aux_heads) aux_nodes.push_back(nn::put_on_tape(t, h));

    // trunk: lookback steps through the stack, zero initial state
    std::vector<double> zeros(static_cast<size_t>(B) * cfg.lstm_hidden, 0.0);
    std::vector<nn::LstmState> state(model.lstm.size());
    for (auto& st : state) {
        st.h = t.constant(B, cfg.lstm_hidden, zeros.data());
        st.c = t.constant(B, cfg.lstm_hidden, zeros.data());
    }
    for (int s = 0; s < cfg.lookback; ++s) {
        int x = t.constant(B, cfg.n_features, batch.steps[static_cast<size_t>(s)].data());
        for (size_t l = 0; l < model.lstm.size(); ++l) {
            state[l] = nn::lstm_step(t, cells[l], x, state[l]);
            x = state[l].h;
            if (l + 1 < model.lstm.size())
                x = t.dropout(x, cfg.lstm_dropout, training, drop_rng);
        }
    }
    int trunk = state.back().h;  // [B x H]

    GraphOutputs out;
    int w_col = nn::fnn_forward(t, model.main_head, main_nodes, trunk, cfg.mlp_dropout, training,
                                drop_rng);  // [B x 1], tanh-bounded
    for (size_t k = 0; k < model.aux_heads.size(); ++k)
        out.aux_cols.push_back(nn::fnn_forward(t, model.aux_heads[k], aux_nodes[k], trunk,
                                               cfg.mlp_dropout, training, drop_rng));

    // net-of-cost accounting on the tape:
    // r_p(d) = (sigma_tgt / S_d) * sum_a [ w_{a,d} r_{a,d+1} - tau |w_{a,d} - w_{a,d-1}| ]
    int w_mat = t.reshape(w_col, D, A);
    int mask = t.constant(D, A, batch.active.data());
    out.w_eff = t.mul(w_mat, mask);
    int lag = D > 1 ? t.concat_rows(t.constant(1, A, batch.prev_w.data()),
                                    t.slice_rows(out.w_eff, 0, D - 1))
                    : t.constant(1, A, batch.prev_w.data());
    int rets = t.constant(D, A, batch.next_ret.data());
    int gross = t.mul(out.w_eff, rets);
    int turn = t.abs_(t.sub(out.w_eff, lag));
    int net = t.sub(gross, t.scale(turn, cfg.tau));
    std::vector<double> ones(static_cast<size_t>(A), 1.0);
    int ones_col = t.constant(A, 1, ones.data());
    int net_by_date = t.matmul(net, ones_col);  // [D x 1]
    int pf = t.constant(D, 1, batch.prefactor.data());
    out.port_ret = t.mul(net_by_date, pf);
    out.port_gross = t.mul(t.matmul(gross, ones_col), pf);

    if (mode == GraphMode::weights_only) return out;

    out.sharpe = t.neg_sharpe(t.mean_all(out.port_ret), t.sample_std(out.port_ret));

    // correlation terms on the present (row, target) pairs of each task
    out.corr.assign(model.aux_heads.size(), -1);
    out.corr_skipped.assign(model.aux_heads.size(), 0);
    int corr_sum = -1;
    for (size_t k = 0; k < model.aux_heads.size(); ++k) {
        const auto& tgt = batch.aux_target[k];
        std::vector<int> present;
        for (int i = 0; i < B; ++i)
            if (!std::isnan(tgt[static_cast<size_t>(i)])) present.push_back(i);
        if (present.size() < 2) {
            out.corr_skipped[k] = 1;
            log::warn(std::string("corr task ") + vol_kind_name(cfg.aux_tasks[k]) +
                      ": fewer than 2 paired observations in batch, contributing 0");
            continue;
        }
        const int n = static_cast<int>(present.size());
        double tmean = 0;
        for (int i : present) tmean += tgt[static_cast<size_t>(i)];
        tmean /= n;
        double tss = 0;
        std::vector<double> tc(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            tc[static_cast<size_t>(i)] = tgt[static_cast<size_t>(present[static_cast<size_t>(i)])] - tmean;
            tss += tc[static_cast<size_t>(i)] * tc[static_cast<size_t>(i)];
        }
        double tstd = std::sqrt(tss / (n - 1));
        if (tstd < 1e-12) {
            out.corr_skipped[k] = 1;
            log::warn(std::string("corr task ") + vol_kind_name(cfg.aux_tasks[k]) +
                      ": zero-variance target in batch, contributing 0");
            continue;
        }
        int pred = t.select_rows(out.aux_cols[k], present);       // [n x 1]
        int centered = t.sub_bcast(pred, t.mean_all(pred));
        int cov = t.scale(t.sum_all(t.mul(centered, t.constant(n, 1, tc.data()))),
                          1.0 / (n - 1));
        int denom = t.scale(t.sample_std(pred), tstd);
        if (std::abs(t.val(denom).v[0]) < 1e-12)
            log::warn(std::string("corr task ") + vol_kind_name(cfg.aux_tasks[k]) +
                      ": zero-variance prediction in batch, correlation guarded to 0");
        int corr = t.safe_div(cov, denom);
        out.corr[k] = t.scale(corr, -1.0);
        corr_sum = corr_sum < 0 ? out.corr[k] : t.add(corr_sum, out.corr[k]);
    }

    int total = t.scale(out.sharpe, cfg.mu);
    if (corr_sum >= 0) total = t.add(total, t.scale(corr_sum, cfg.lambda));
    out.total = total;
    return out;
}

// Single-window convenience pass (inference): one asset, one date.
struct SingleOutput {
    double w = 0;
    std::vector<double> aux;  // aligned with cfg.aux_tasks
};

inline SingleOutput forward_window(MtlModel& model, const std::vector<double>& window) {
    const ModelConfig& cfg = model.cfg;
    if (window.size() != static_cast<size_t>(cfg.lookback) * cfg.n_features)
        raise(Errc::shape_mismatch, "forward_window: window must be lookback x n_features");
    Batch b;
    b.n_dates = 1;
    b.n_assets = 1;
    b.lookback = cfg.lookback;
    b.n_features = cfg.n_features;
    for (int s = 0; s < cfg.lookback; ++s)
        b.steps.emplace_back(window.begin() + static_cast<size_t>(s) * cfg.n_features,
                             window.begin() + static_cast<size_t>(s + 1) * cfg.n_features);
    b.next_ret.assign(1, 0.0);
    b.active.assign(1, 1.0);
    b.prefactor.assign(1, cfg.sigma_target);
    b.prev_w.assign(1, 0.0);
    b.aux_target.assign(model.aux_heads.size(), std::vector<double>(1, 0.0));
    nn::Tape tape;
    GraphOutputs g = build_graph(tape, model, b, GraphMode::weights_only, false, 0);
    SingleOutput out;
    out.w = tape.val(g.w_eff).v[0];
    for (int id : g.aux_cols) out.aux.push_back(tape.val(id).v[0]);
    return out;
}

}  // namespace mtmom
