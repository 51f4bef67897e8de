#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mtmom/market_data.hpp"
#include "mtmom/rng.hpp"

namespace mtmom {

struct SyntheticAsset {
    std::string id;
    double drift = 0.0;  // annualized log drift magnitude; sign modulated by the regime
    double vol = 0.15;   // annualized diffusion volatility, >= 0
};

struct SyntheticSpec {
    int n_days = 504;
    Date start = make_date(2000, 1, 3);
    std::vector<SyntheticAsset> assets;
    // When set, each asset carries a trend regime s in {+1,-1} (starting +1)
    // that keeps its sign day-over-day with this probability. The effective
    // drift on a day is s * drift.
    std::optional<double> regime_persistence;
    double overnight_fraction = 0.0;  // share of daily variance realized in the open gap
    int intraday_steps = 78;          // fine path resolution for O/H/L/C
    double initial_price = 100.0;
};

inline void validate_spec(const SyntheticSpec& spec) {
    if (spec.n_days < 2) raise(Errc::invalid_spec, "synthetic: n_days must be >= 2");
    if (spec.assets.empty()) raise(Errc::invalid_spec, "synthetic: need at least one asset");
    for (const auto& a : spec.assets) {
        if (a.id.empty()) raise(Errc::invalid_spec, "synthetic: empty asset id");
        if (!(a.vol >= 0.0)) raise(Errc::invalid_spec, "synthetic: vol must be >= 0");
        if (!std::isfinite(a.drift)) raise(Errc::invalid_spec, "synthetic: non-finite drift");
    }
    if (spec.regime_persistence &&
        !(*spec.regime_persistence >= 0.0 && *spec.regime_persistence <= 1.0))
        raise(Errc::invalid_spec, "synthetic: regime_persistence must be in [0,1]");
    if (!(spec.overnight_fraction >= 0.0 && spec.overnight_fraction < 1.0))
        raise(Errc::invalid_spec, "synthetic: overnight_fraction must be in [0,1)");
    if (spec.intraday_steps < 1) raise(Errc::invalid_spec, "synthetic: intraday_steps must be >= 1");
    if (!(spec.initial_price > 0)) raise(Errc::invalid_spec, "synthetic: initial_price must be > 0");
}

inline std::vector<Date> weekday_calendar(Date start, int n_days) {
    std::vector<Date> cal;
    cal.reserve(static_cast<size_t>(n_days));
    Date d = start;
    while (is_weekend(d)) d = d.next();
    while (static_cast<int>(cal.size()) < n_days) {
        cal.push_back(d);
        d = d.next();
        while (is_weekend(d)) d = d.next();
    }
    return cal;
}

// Regime-switching geometric diffusion with a simulated fine intraday path,
// so the daily high/low are consistent with the close-to-close variance (up
// to path-discretization bias). Bit-deterministic in (spec, seed): each
// asset consumes an independent substream, and the per-day draw order is
// fixed (regime, gap, then intraday steps).
inline Universe generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
    validate_spec(spec);
    std::vector<Date> cal = weekday_calendar(spec.start, spec.n_days);

    std::vector<AssetSeries> series;
    series.reserve(spec.assets.size());
    for (size_t ai = 0; ai < spec.assets.size(); ++ai) {
        const SyntheticAsset& a = spec.assets[ai];
        Rng rng(mix_seed(seed, ai));
        AssetSeries s;
        s.asset_id = a.id;
        s.bars.reserve(cal.size());

        const double day_var = a.vol * a.vol / 252.0;
        const double gap_var = spec.overnight_fraction * day_var;
        const double intra_var = (1.0 - spec.overnight_fraction) * day_var;
        const int m = spec.intraday_steps;
        const double step_sigma = std::sqrt(intra_var / m);

        double prev_settle = spec.initial_price;
        int regime = +1;
        for (int t = 0; t < spec.n_days; ++t) {
            if (spec.regime_persistence && t > 0) {
                if (rng.uniform() >= *spec.regime_persistence) regime = -regime;
            }
            const double day_drift = (regime * a.drift - 0.5 * a.vol * a.vol) / 252.0;

            const double gap = std::sqrt(gap_var) * rng.normal();
            const double open = prev_settle * std::exp(gap);

            double x = 0.0, xmin = 0.0, xmax = 0.0;  // log price relative to open
            const double step_drift = day_drift / m;
            for (int k = 0; k < m; ++k) {
                x += step_drift + step_sigma * rng.normal();
                if (x < xmin) xmin = x;
                if (x > xmax) xmax = x;
            }

            Bar b;
            b.date = cal[static_cast<size_t>(t)];
            b.open = open;
            b.high = open * std::exp(xmax);
            b.low = open * std::exp(xmin);
            b.close = open * std::exp(x);
            b.settle = b.close;
            s.bars.push_back(b);
            prev_settle = b.settle;
        }
        validate_series(s);
        series.push_back(std::move(s));
    }
    return build_universe(std::move(series), FillPolicy::forward_fill);
}

}  // namespace mtmom
