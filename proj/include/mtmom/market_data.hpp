#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mtmom/date.hpp"
#include "mtmom/errors.hpp"
#include "mtmom/log.hpp"

namespace mtmom {

struct Bar {
    Date date;
    double open = 0, high = 0, low = 0, close = 0, settle = 0;
    bool synthetic_fill = false;  // true for bars fabricated by forward filling
};

inline bool bar_prices_valid(const Bar& b) {
    if (!(b.open > 0 && b.high > 0 && b.low > 0 && b.close > 0 && b.settle > 0)) return false;
    if (!std::isfinite(b.open) || !std::isfinite(b.high) || !std::isfinite(b.low) ||
        !std::isfinite(b.close) || !std::isfinite(b.settle))
        return false;
    return b.low <= std::min(b.open, b.close) && b.high >= std::max(b.open, b.close);
}

struct AssetSeries {
    std::string asset_id;
    std::vector<Bar> bars;  // strictly ascending dates

    size_t size() const { return bars.size(); }
    Date first_date() const { return bars.front().date; }
    Date last_date() const { return bars.back().date; }
};

// Shared validation for every AssetSeries factory.
inline void validate_series(const AssetSeries& s) {
    if (s.bars.empty()) raise(Errc::empty_input, "asset '" + s.asset_id + "' has no bars");
    for (size_t i = 0; i < s.bars.size(); ++i) {
        const Bar& b = s.bars[i];
        if (!bar_prices_valid(b))
            raise(Errc::price_invariant, "asset '" + s.asset_id + "' bar " + to_string(b.date) +
                                             ": prices must be positive with low <= min(open,close)"
                                             " <= max(open,close) <= high");
        if (i > 0 && !(s.bars[i - 1].date < b.date))
            raise(Errc::unsorted_dates, "asset '" + s.asset_id + "' bars not strictly ascending at " +
                                            to_string(b.date));
    }
}

// Maps logical column roles to header names in a delivered CSV.
// If the file has no settle column and none was named explicitly,
// settle falls back to close.
struct CsvSchema {
    std::string date = "date";
    std::string open = "open";
    std::string high = "high";
    std::string low = "low";
    std::string close = "close";
    std::string settle = "settle";
    bool settle_explicit = false;
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_price(const std::string& tok, const std::string& col, size_t row) {
    try {
        size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        raise(Errc::price_invariant,
              "row " + std::to_string(row) + ": cannot parse " + col + " value '" + tok + "'");
    }
}
}  // namespace detail

inline AssetSeries load_csv(const std::string& path, const CsvSchema& schema = {},
                            std::string asset_id = "") {
    std::ifstream in(path);
    if (!in) raise(Errc::io_error, "cannot open '" + path + "'");

    if (asset_id.empty()) {
        // filename stem
        size_t slash = path.find_last_of("/\\");
        std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
        size_t dot = base.find_last_of('.');
        asset_id = dot == std::string::npos ? base : base.substr(0, dot);
    }

    std::string header;
    if (!std::getline(in, header)) raise(Errc::empty_input, "'" + path + "' is empty");
    auto cols = detail::split_csv_line(header);

    auto find_col = [&](const std::string& name) -> int {
        for (size_t i = 0; i < cols.size(); ++i)
            if (cols[i] == name) return static_cast<int>(i);
        return -1;
    };
    int ci_date = find_col(schema.date);
    int ci_open = find_col(schema.open);
    int ci_high = find_col(schema.high);
    int ci_low = find_col(schema.low);
    int ci_close = find_col(schema.close);
    int ci_settle = find_col(schema.settle);
    for (auto [idx, name] : {std::pair{ci_date, schema.date},
                             {ci_open, schema.open},
                             {ci_high, schema.high},
                             {ci_low, schema.low},
                             {ci_close, schema.close}})
        if (idx < 0) raise(Errc::missing_column, "'" + path + "': missing column '" + name + "'");
    if (ci_settle < 0 && schema.settle_explicit)
        raise(Errc::missing_column, "'" + path + "': missing column '" + schema.settle + "'");

    AssetSeries s;
    s.asset_id = std::move(asset_id);
    std::string line;
    size_t row = 1;
    size_t need = static_cast<size_t>(std::max({ci_date, ci_open, ci_high, ci_low, ci_close, ci_settle})) + 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto toks = detail::split_csv_line(line);
        if (toks.size() < need)
            raise(Errc::missing_column,
                  "'" + path + "' row " + std::to_string(row) + ": expected >= " +
                      std::to_string(need) + " fields, got " + std::to_string(toks.size()));
        Bar b;
        b.date = parse_date_or_throw(toks[ci_date], path + " row " + std::to_string(row));
        b.open = detail::parse_price(toks[ci_open], "open", row);
        b.high = detail::parse_price(toks[ci_high], "high", row);
        b.low = detail::parse_price(toks[ci_low], "low", row);
        b.close = detail::parse_price(toks[ci_close], "close", row);
        b.settle = ci_settle >= 0 ? detail::parse_price(toks[ci_settle], "settle", row) : b.close;
        s.bars.push_back(b);
    }
    validate_series(s);
    return s;
}

// Writes date,open,high,low,close,settle with 10-significant-digit reals.
inline void write_csv(const AssetSeries& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::io_error, "cannot write '" + path + "'");
    out << "date,open,high,low,close,settle\n";
    char buf[160];
    for (const Bar& b : s.bars) {
        std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      to_string(b.date).c_str(), b.open, b.high, b.low, b.close, b.settle);
        out << buf;
    }
    if (!out) raise(Errc::io_error, "write failed for '" + path + "'");
}

enum class FillPolicy { forward_fill, drop_date };

// An aligned multi-asset panel. calendar is the merged trading calendar;
// each asset occupies a contiguous run of calendar slots starting at
// calendar_offset, so bar lookup per (asset, calendar index) is O(1).
struct UniverseAsset {
    AssetSeries series;
    int calendar_offset = 0;
};

struct Universe {
    std::vector<Date> calendar;
    std::vector<UniverseAsset> assets;

    int n_assets() const { return static_cast<int>(assets.size()); }
    int n_dates() const { return static_cast<int>(calendar.size()); }

    int index_of(Date d) const {
        auto it = std::lower_bound(calendar.begin(), calendar.end(), d);
        if (it == calendar.end() || *it != d) return -1;
        return static_cast<int>(it - calendar.begin());
    }

    // nullptr when the asset has not started (or has ended) at this date
    const Bar* bar_at(int asset, int cal_idx) const {
        const UniverseAsset& a = assets[asset];
        int local = cal_idx - a.calendar_offset;
        if (local < 0 || local >= static_cast<int>(a.series.bars.size())) return nullptr;
        return &a.series.bars[local];
    }

    int find_asset(const std::string& id) const {
        for (int i = 0; i < n_assets(); ++i)
            if (assets[i].series.asset_id == id) return i;
        return -1;
    }
};

// Merges per-asset series onto a common calendar (union of dates).
// forward_fill: interior gaps in an asset's [first, last] get a copy of the
// previous bar (flagged synthetic_fill, zero return by construction).
// drop_date: any date missed by an asset that has started and not yet ended
// is removed from the calendar for everyone.
inline Universe build_universe(std::vector<AssetSeries> series,
                               FillPolicy policy = FillPolicy::forward_fill) {
    if (series.empty()) raise(Errc::empty_input, "build_universe: no assets");
    std::set<std::string> ids;
    for (const auto& s : series) {
        validate_series(s);
        if (!ids.insert(s.asset_id).second)
            raise(Errc::duplicate_asset_id, "duplicate asset id '" + s.asset_id + "'");
    }

    std::set<Date> all_dates;
    for (const auto& s : series)
        for (const Bar& b : s.bars) all_dates.insert(b.date);
    std::vector<Date> calendar(all_dates.begin(), all_dates.end());

    if (policy == FillPolicy::drop_date) {
        std::vector<Date> kept;
        kept.reserve(calendar.size());
        std::vector<size_t> pos(series.size(), 0);
        for (Date d : calendar) {
            bool ok = true;
            for (size_t a = 0; a < series.size(); ++a) {
                const auto& bars = series[a].bars;
                while (pos[a] < bars.size() && bars[pos[a]].date < d) ++pos[a];
                bool started = d >= series[a].first_date();
                bool ended = d > series[a].last_date();
                bool present = pos[a] < bars.size() && bars[pos[a]].date == d;
                if (started && !ended && !present) {
                    ok = false;
                    break;
                }
            }
            if (ok) kept.push_back(d);
        }
        calendar = std::move(kept);
        if (calendar.empty()) raise(Errc::no_valid_data, "drop_date removed every calendar date");
    }

    Universe u;
    u.calendar = calendar;
    for (auto& s : series) {
        UniverseAsset ua;
        ua.series.asset_id = s.asset_id;
        auto lo = std::lower_bound(calendar.begin(), calendar.end(), s.first_date());
        ua.calendar_offset = static_cast<int>(lo - calendar.begin());
        size_t src = 0;
        int filled = 0;
        for (size_t ci = static_cast<size_t>(ua.calendar_offset); ci < calendar.size(); ++ci) {
            Date d = calendar[ci];
            if (d > s.last_date()) break;
            while (src < s.bars.size() && s.bars[src].date < d) ++src;
            if (src < s.bars.size() && s.bars[src].date == d) {
                ua.series.bars.push_back(s.bars[src]);
            } else {
                // interior gap: repeat previous bar flattened to its settle
                Bar fill = ua.series.bars.back();
                fill.date = d;
                fill.open = fill.high = fill.low = fill.close = fill.settle;
                fill.synthetic_fill = true;
                ua.series.bars.push_back(fill);
                ++filled;
            }
        }
        if (filled > 0)
            log::info("asset '" + s.asset_id + "': forward-filled " + std::to_string(filled) +
                      " missing dates");
        if (ua.series.bars.empty())
            raise(Errc::no_valid_data, "asset '" + s.asset_id + "' has no bars on the kept calendar");
        u.assets.push_back(std::move(ua));
    }
    return u;
}

}  // namespace mtmom
