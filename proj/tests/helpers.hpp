// Small builders shared by the unit suites.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mtmom/market_data.hpp"
#include "mtmom/rng.hpp"

namespace testutil {

using mtmom::AssetSeries;
using mtmom::Bar;
using mtmom::Date;

inline Bar flat_bar(Date d, double price) {
    Bar b;
    b.date = d;
    b.open = b.high = b.low = b.close = b.settle = price;
    return b;
}

inline Bar ohlc_bar(Date d, double o, double h, double l, double c) {
    Bar b;
    b.date = d;
    b.open = o;
    b.high = h;
    b.low = l;
    b.close = c;
    b.settle = c;
    return b;
}

// Flat bars at the given settles on consecutive calendar days.
inline AssetSeries series_from_settles(const std::string& id, const std::vector<double>& settles,
                                       Date start = mtmom::make_date(2000, 1, 3)) {
    AssetSeries s;
    s.asset_id = id;
    for (size_t i = 0; i < settles.size(); ++i)
        s.bars.push_back(flat_bar(Date{start.days + static_cast<int32_t>(i)}, settles[i]));
    return s;
}

// Settle path with the given per-day log returns, starting at 100.
inline AssetSeries series_from_log_returns(const std::string& id, const std::vector<double>& rets,
                                           Date start = mtmom::make_date(2000, 1, 3)) {
    std::vector<double> settles{100.0};
    for (double r : rets) settles.push_back(settles.back() * std::exp(r));
    return series_from_settles(id, settles, start);
}

// Random-walk OHLC series for property tests. Bars satisfy the price
// invariants by construction.
inline AssetSeries random_series(const std::string& id, int n, uint64_t seed,
                                 double daily_vol = 0.02, double drift = 0.0,
                                 Date start = mtmom::make_date(2000, 1, 3)) {
    mtmom::Rng rng(seed);
    AssetSeries s;
    s.asset_id = id;
    double prev = 100.0;
    for (int i = 0; i < n; ++i) {
        double close = prev * std::exp(drift / 252.0 + daily_vol * rng.normal());
        double open = prev * std::exp(0.3 * daily_vol * rng.normal());
        double hi = std::max(open, close) * std::exp(std::abs(0.5 * daily_vol * rng.normal()));
        double lo = std::min(open, close) * std::exp(-std::abs(0.5 * daily_vol * rng.normal()));
        Bar b = ohlc_bar(Date{start.days + i}, open, hi, lo, close);
        s.bars.push_back(b);
        prev = close;
    }
    return s;
}

}  // namespace testutil
