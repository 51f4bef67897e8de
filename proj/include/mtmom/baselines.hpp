#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mtmom/log.hpp"
#include "mtmom/market_data.hpp"
#include "mtmom/vol_estimators.hpp"

namespace mtmom {

inline int sgn(double x) { return (x > 0) - (x < 0); }

struct VolTargetConfig {
    double sigma_target = 0.10;  // annualized target per asset
    int ewma_span = 60;
    double min_vol = 1e-8;  // below this the position is flattened (with a warning)
};

struct TsmomConfig {
    VolTargetConfig vt;
    int lookback = 252;
    double tau = 0.0;  // per-unit-turnover cost; 0 = gross
};

struct CtaConfig {
    VolTargetConfig vt;
    std::array<std::pair<int, int>, 3> half_life_pairs{{{8, 24}, {16, 48}, {32, 96}}};
    int price_std_window = 63;
    int signal_std_window = 252;
    double response_scale = 0.89;  // max of z exp(-z^2/4) over z, so responses land in [-1,1]
    int min_history = 348;         // signal_std_window + longest half life
    double tau = 0.0;
};

// Daily positions and realized portfolio returns on the universe calendar.
// weights[t][a] is the position decided at date t (NaN while the asset is
// inactive); daily_returns[t] is realized ON date t from weights decided at
// t-1. Cost accounting follows the net-return form: the date-t realized
// return is prefactor_t * sum_a (w_a r_a - tau |w_a - w_prev_a|) with
// prefactor = 1/S_t for baselines (sigma_target already inside the weight).
struct StrategyOutput {
    std::string tag;
    std::vector<std::string> asset_ids;
    std::vector<Date> dates;
    std::vector<double> daily_returns;  // net
    std::vector<double> gross_returns;
    std::vector<std::vector<double>> weights;
    int first_traded = -1;  // earliest index with a realized return
};

// One date of net-of-cost accounting. w and w_prev use 0 for inactive slots;
// r_next[a] = log return of asset a over (t, t+1].
inline double portfolio_return_net_step(const std::vector<double>& w,
                                        const std::vector<double>& w_prev,
                                        const std::vector<double>& r_next, double prefactor,
                                        double tau, double* gross_out = nullptr) {
    double gross = 0, cost = 0;
    for (size_t a = 0; a < w.size(); ++a) {
        gross += w[a] * r_next[a];
        cost += std::abs(w[a] - w_prev[a]);
    }
    if (gross_out) *gross_out = prefactor * gross;
    return prefactor * (gross - tau * cost);
}

namespace detail {

// Per-asset daily helper block shared by both baselines.
struct AssetDaily {
    std::vector<double> ret1;  // 1-day settle log return, ret1[i] = r_{i-1,i}
    VolSeries exante;
    int n = 0;
};

inline AssetDaily make_asset_daily(const AssetSeries& s, const VolTargetConfig& vt) {
    AssetDaily d;
    d.n = static_cast<int>(s.bars.size());
    d.ret1.assign(static_cast<size_t>(d.n), std::numeric_limits<double>::quiet_NaN());
    for (int i = 1; i < d.n; ++i) d.ret1[i] = std::log(s.bars[i].settle / s.bars[i - 1].settle);
    d.exante = ewma_ex_ante_vol(s, vt.ewma_span);
    return d;
}

// Assembles portfolio returns from per-asset signal arrays. signal[a][i] is
// the raw signal on the asset's local index (NaN when unavailable); the
// position is signal * sigma_target / exante_vol.
inline StrategyOutput assemble_portfolio(const Universe& u, std::string tag,
                                         const std::vector<std::vector<double>>& signal,
                                         const std::vector<AssetDaily>& daily,
                                         const VolTargetConfig& vt, double tau) {
    const int nd = u.n_dates();
    const int na = u.n_assets();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    StrategyOutput out;
    out.tag = std::move(tag);
    out.dates = u.calendar;
    for (const auto& a : u.assets) out.asset_ids.push_back(a.series.asset_id);
    out.daily_returns.assign(static_cast<size_t>(nd), 0.0);
    out.gross_returns.assign(static_cast<size_t>(nd), 0.0);
    out.weights.assign(static_cast<size_t>(nd), std::vector<double>(static_cast<size_t>(na), nan));

    std::vector<int> flattened(static_cast<size_t>(na), 0);
    std::vector<double> w_prev(static_cast<size_t>(na), 0.0);
    std::vector<double> w(static_cast<size_t>(na), 0.0), r_next(static_cast<size_t>(na), 0.0);

    for (int t = 0; t + 1 < nd; ++t) {
        int active = 0;
        for (int a = 0; a < na; ++a) {
            w[a] = 0.0;
            r_next[a] = 0.0;
            int local = t - u.assets[a].calendar_offset;
            const AssetDaily& d = daily[a];
            if (local < 0 || local + 1 >= d.n) continue;  // needs a bar at t+1
            double sig = signal[a][static_cast<size_t>(local)];
            if (std::isnan(sig)) continue;
            if (!d.exante.valid(local)) continue;
            ++active;
            double vol = d.exante.values[local];
            if (vol < vt.min_vol) {
                ++flattened[a];
                w[a] = 0.0;
            } else {
                w[a] = sig * vt.sigma_target / vol;
            }
            r_next[a] = d.ret1[static_cast<size_t>(local + 1)];
            out.weights[t][a] = w[a];
        }
        if (active == 0) continue;
        double prefactor = 1.0 / active;
        double gross = 0;
        double net = portfolio_return_net_step(w, w_prev, r_next, prefactor, tau, &gross);
        out.daily_returns[t + 1] = net;
        out.gross_returns[t + 1] = gross;
        if (out.first_traded < 0) out.first_traded = t + 1;
        w_prev = w;
    }
    for (int a = 0; a < na; ++a)
        if (flattened[a] > 0)
            log::warn("asset '" + u.assets[a].series.asset_id + "': near-zero ex-ante vol on " +
                      std::to_string(flattened[a]) + " dates, position flattened");
    return out;
}

}  // namespace detail

// Sign of the trailing 252-day settle log return, scaled to the vol target.
// Realized contribution of asset i over (t, t+1]:
//   sgn(ln(S_t/S_{t-252})) * (sigma_tgt / sigma_t) * ln(S_{t+1}/S_t)
inline double tsmom_asset_return(const AssetSeries& s, int t, const TsmomConfig& cfg = {}) {
    const int n = static_cast<int>(s.bars.size());
    if (t < cfg.lookback || t + 1 >= n)
        raise(Errc::insufficient_history,
              "tsmom_asset_return: t=" + std::to_string(t) + " needs [t-" +
                  std::to_string(cfg.lookback) + ", t+1] inside the series (n=" + std::to_string(n) +
                  ")");
    double mom = std::log(s.bars[t].settle / s.bars[t - cfg.lookback].settle);
    VolSeries ex = ewma_ex_ante_vol(s, cfg.vt.ewma_span);
    double vol = ex.values[t];
    if (vol < cfg.vt.min_vol) {
        log::warn("asset '" + s.asset_id + "' " + to_string(s.bars[t].date) +
                  ": near-zero ex-ante vol, position flattened");
        return 0.0;
    }
    double r_next = std::log(s.bars[t + 1].settle / s.bars[t].settle);
    return sgn(mom) * cfg.vt.sigma_target / vol * r_next;
}

inline StrategyOutput tsmom_portfolio(const Universe& u, const TsmomConfig& cfg = {}) {
    std::vector<detail::AssetDaily> daily;
    std::vector<std::vector<double>> signal;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& ua : u.assets) {
        daily.push_back(detail::make_asset_daily(ua.series, cfg.vt));
        const int n = static_cast<int>(ua.series.bars.size());
        std::vector<double> sig(static_cast<size_t>(n), nan);
        for (int i = cfg.lookback; i < n; ++i)
            sig[i] = sgn(std::log(ua.series.bars[i].settle / ua.series.bars[i - cfg.lookback].settle));
        signal.push_back(std::move(sig));
    }
    return detail::assemble_portfolio(u, "tsmom", signal, daily, cfg.vt, cfg.tau);
}

// Trend strength on EWMA crossovers: for each half-life pair (S, L),
//   x = EWMA_S(settle) - EWMA_L(settle)          (decay 1 - 0.5^(1/HL), seeded at p_0)
//   y = x / rolling_std(settle, 63)
//   z = y / rolling_std(y, 252)
//   u = z exp(-z^2/4) / 0.89
// and the signal is the mean of the three u_k. Unlike plain TSMOM the
// response is graded and fades for extreme z.
inline double cta_mom_signal(const AssetSeries& s, int t, const CtaConfig& cfg = {});

namespace detail {

inline std::vector<double> cta_signal_series(const AssetSeries& s, const CtaConfig& cfg) {
    const int n = static_cast<int>(s.bars.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> out(static_cast<size_t>(n), nan);

    std::vector<double> price(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) price[i] = s.bars[i].settle;

    // rolling sample std of the raw price
    const int pw = cfg.price_std_window;
    std::vector<double> price_std(static_cast<size_t>(n), nan);
    {
        double sum = 0, sumsq = 0;
        for (int i = 0; i < n; ++i) {
            sum += price[i];
            sumsq += price[i] * price[i];
            if (i >= pw) {
                sum -= price[i - pw];
                sumsq -= price[i - pw] * price[i - pw];
            }
            if (i >= pw - 1) {
                double var = (sumsq - sum * sum / pw) / (pw - 1);
                price_std[i] = var > 0 ? std::sqrt(var) : 0.0;
            }
        }
    }

    std::vector<std::vector<double>> u_k;
    for (auto [hs, hl] : cfg.half_life_pairs) {
        double ds = 1.0 - std::pow(0.5, 1.0 / hs);
        double dl = 1.0 - std::pow(0.5, 1.0 / hl);
        std::vector<double> y(static_cast<size_t>(n), nan);
        double es = price[0], el = price[0];
        for (int i = 0; i < n; ++i) {
            if (i > 0) {
                es = (1 - ds) * es + ds * price[i];
                el = (1 - dl) * el + dl * price[i];
            }
            if (i >= pw - 1) {
                double x = es - el;
                y[i] = price_std[i] < 1e-12 ? 0.0 : x / price_std[i];
            }
        }
        // rolling sample std of y over the signal window
        const int sw = cfg.signal_std_window;
        std::vector<double> u(static_cast<size_t>(n), nan);
        double sum = 0, sumsq = 0;
        int cnt = 0;
        for (int i = pw - 1; i < n; ++i) {
            sum += y[i];
            sumsq += y[i] * y[i];
            ++cnt;
            if (cnt > sw) {
                sum -= y[i - sw];
                sumsq -= y[i - sw] * y[i - sw];
                --cnt;
            }
            if (cnt == sw) {
                double var = (sumsq - sum * sum / sw) / (sw - 1);
                double sd = var > 0 ? std::sqrt(var) : 0.0;
                double z = sd < 1e-12 ? 0.0 : y[i] / sd;
                u[i] = z * std::exp(-z * z / 4.0) / cfg.response_scale;
            }
        }
        u_k.push_back(std::move(u));
    }

    for (int i = cfg.min_history - 1; i < n; ++i) {
        double acc = 0;
        bool ok = true;
        for (const auto& u : u_k) {
            if (std::isnan(u[i])) {
                ok = false;
                break;
            }
            acc += u[i];
        }
        if (ok) out[i] = acc / static_cast<double>(u_k.size());
    }
    return out;
}

}  // namespace detail

inline double cta_mom_signal(const AssetSeries& s, int t, const CtaConfig& cfg) {
    const int n = static_cast<int>(s.bars.size());
    if (t < cfg.min_history - 1 || t >= n)
        raise(Errc::insufficient_history, "cta_mom_signal: t=" + std::to_string(t) + " needs >= " +
                                              std::to_string(cfg.min_history) +
                                              " bars of history (n=" + std::to_string(n) + ")");
    return detail::cta_signal_series(s, cfg)[static_cast<size_t>(t)];
}

inline StrategyOutput cta_mom_portfolio(const Universe& u, const CtaConfig& cfg = {}) {
    std::vector<detail::AssetDaily> daily;
    std::vector<std::vector<double>> signal;
    for (const auto& ua : u.assets) {
        daily.push_back(detail::make_asset_daily(ua.series, cfg.vt));
        signal.push_back(detail::cta_signal_series(ua.series, cfg));
    }
    return detail::assemble_portfolio(u, "cta_mom", signal, daily, cfg.vt, cfg.tau);
}

}  // namespace mtmom
