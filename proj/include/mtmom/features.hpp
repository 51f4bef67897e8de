#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "mtmom/market_data.hpp"
#include "mtmom/vol_estimators.hpp"

namespace mtmom {

// A derived daily series aligned to an asset's bar index, NaN-padded outside
// [first_valid, last_valid].
struct ValueSeries {
    std::vector<double> values;
    int first_valid = 0;
    int last_valid = -1;

    bool valid(int i) const { return i >= first_valid && i <= last_valid; }
    int size() const { return static_cast<int>(values.size()); }

    static ValueSeries nan_filled(size_t n) {
        ValueSeries v;
        v.values.assign(n, std::numeric_limits<double>::quiet_NaN());
        v.first_valid = 0;
        v.last_valid = -1;
        return v;
    }
};

// d-day log return on settle: x_t = ln(settle_t / settle_{t-d}).
inline ValueSeries log_return(const AssetSeries& s, int d) {
    if (d < 1) raise(Errc::invalid_span, "log_return: horizon must be >= 1");
    ValueSeries out = ValueSeries::nan_filled(s.bars.size());
    const int n = static_cast<int>(s.bars.size());
    if (n <= d) {
        return out;  // no valid points
    }
    for (int i = d; i < n; ++i)
        out.values[i] = std::log(s.bars[i].settle / s.bars[i - d].settle);
    out.first_valid = d;
    out.last_valid = n - 1;
    return out;
}

// Realized volatility over the last N daily settle log returns, not demeaned:
// sqrt((252/N) * sum r^2). Defined from index N.
inline ValueSeries realized_vol(const AssetSeries& s, int N) {
    if (N < 1) raise(Errc::invalid_span, "realized_vol: window must be >= 1");
    ValueSeries out = ValueSeries::nan_filled(s.bars.size());
    const int n = static_cast<int>(s.bars.size());
    if (n <= N) return out;
    std::vector<double> r(static_cast<size_t>(n), 0.0);
    for (int i = 1; i < n; ++i) r[i] = std::log(s.bars[i].settle / s.bars[i - 1].settle);
    double sumsq = 0;
    for (int i = 1; i < n; ++i) {
        sumsq += r[i] * r[i];
        if (i > N) sumsq -= r[i - N] * r[i - N];
        if (i >= N) out.values[i] = std::sqrt(252.0 / N * std::max(0.0, sumsq));
    }
    out.first_valid = N;
    out.last_valid = n - 1;
    return out;
}

// Vol of vol: the same realized-vol form applied to day-over-day log changes
// of a volatility series. Inputs are floored at 1e-8 before the log so a
// quiet stretch cannot produce -inf.
inline ValueSeries vol_of_vol(const ValueSeries& vol, int window = 21) {
    if (window < 1) raise(Errc::invalid_span, "vol_of_vol: window must be >= 1");
    ValueSeries out = ValueSeries::nan_filled(vol.values.size());
    if (vol.last_valid - vol.first_valid + 1 < window + 1) return out;

    const int g0 = vol.first_valid + 1;  // first defined log change
    std::vector<double> g(vol.values.size(), 0.0);
    for (int i = g0; i <= vol.last_valid; ++i) {
        double a = std::max(vol.values[i], 1e-8);
        double b = std::max(vol.values[i - 1], 1e-8);
        g[i] = std::log(a / b);
    }
    double sumsq = 0;
    for (int i = g0; i <= vol.last_valid; ++i) {
        sumsq += g[i] * g[i];
        if (i - g0 >= window) sumsq -= g[i - window] * g[i - window];
        if (i - g0 >= window - 1)
            out.values[i] = std::sqrt(252.0 / window * std::max(0.0, sumsq));
    }
    out.first_valid = g0 + window - 1;
    out.last_valid = vol.last_valid;
    return out;
}

// Sliding z-score with the window ending at (and including) the current
// observation; sample standard deviation. A window with std < 1e-12 maps
// to z = 0 rather than a blow-up.
inline ValueSeries sliding_zscore(const ValueSeries& x, int window = 21) {
    if (window < 2) raise(Errc::invalid_span, "sliding_zscore: window must be >= 2");
    ValueSeries out = ValueSeries::nan_filled(x.values.size());
    if (x.last_valid - x.first_valid + 1 < window) return out;

    double sum = 0, sumsq = 0;
    for (int i = x.first_valid; i <= x.last_valid; ++i) {
        double v = x.values[i];
        sum += v;
        sumsq += v * v;
        if (i - x.first_valid >= window) {
            double old = x.values[i - window];
            sum -= old;
            sumsq -= old * old;
        }
        if (i - x.first_valid >= window - 1) {
            double mean = sum / window;
            double var = (sumsq - sum * sum / window) / (window - 1);
            double sd = var > 0 ? std::sqrt(var) : 0.0;
            out.values[i] = sd < 1e-12 ? 0.0 : (v - mean) / sd;
        }
    }
    out.first_valid = x.first_valid + window - 1;
    out.last_valid = x.last_valid;
    return out;
}

struct FeatureSpec {
    std::vector<int> return_horizons{1, 21, 63, 126, 252};
    std::vector<int> rv_horizons{5, 21, 63, 126, 252};
    int volvol_window = 21;
    int zscore_window = 21;
    int target_horizon = 21;

    int n_features() const {
        return static_cast<int>(return_horizons.size() + 2 * rv_horizons.size());
    }
};

inline constexpr std::array<VolKind, 5> kTargetKinds = {
    VolKind::close_to_close, VolKind::parkinson, VolKind::garman_klass,
    VolKind::rogers_satchell, VolKind::yang_zhang};

// Model input panel on the universe calendar. Features are z-scored; targets
// (forward vols per estimator) are raw. feat_valid marks dates where every
// feature is defined; target cells are independently NaN when the forward
// window runs off the end of the series.
struct FeaturePanel {
    std::vector<std::string> asset_ids;
    std::vector<Date> dates;
    std::vector<std::string> feature_names;
    int n_features = 0;
    static constexpr int n_targets = 5;

    // per asset, flat row-major [date][feature] / [date][target]
    std::vector<std::vector<double>> features;
    std::vector<std::vector<double>> targets;
    std::vector<std::vector<uint8_t>> feat_valid;

    int n_assets() const { return static_cast<int>(asset_ids.size()); }
    int n_dates() const { return static_cast<int>(dates.size()); }

    double feature(int asset, int date, int f) const {
        return features[asset][static_cast<size_t>(date) * n_features + f];
    }
    double target(int asset, int date, int k) const {
        return targets[asset][static_cast<size_t>(date) * n_targets + k];
    }
    bool valid(int asset, int date) const { return feat_valid[asset][date] != 0; }

    // first calendar index with valid features for the asset, or -1
    int first_valid(int asset) const {
        for (int t = 0; t < n_dates(); ++t)
            if (feat_valid[asset][t]) return t;
        return -1;
    }
};

inline void validate_feature_spec(const FeatureSpec& spec) {
    auto check = [](const std::vector<int>& v, const char* what) {
        if (v.empty()) raise(Errc::invalid_spec, std::string("feature spec: empty ") + what);
        for (size_t i = 0; i < v.size(); ++i) {
            if (v[i] < 1) raise(Errc::invalid_spec, std::string("feature spec: ") + what + " must be >= 1");
            if (i > 0 && v[i] <= v[i - 1])
                raise(Errc::invalid_spec, std::string("feature spec: ") + what + " must be ascending");
        }
    };
    check(spec.return_horizons, "return horizons");
    check(spec.rv_horizons, "rv horizons");
    if (spec.volvol_window < 1) raise(Errc::invalid_spec, "feature spec: volvol_window must be >= 1");
    if (spec.zscore_window < 2) raise(Errc::invalid_spec, "feature spec: zscore_window must be >= 2");
    if (spec.target_horizon < 2) raise(Errc::invalid_spec, "feature spec: target_horizon must be >= 2");
}

inline FeaturePanel build_panel(const Universe& u, const FeatureSpec& spec = {}) {
    validate_feature_spec(spec);
    FeaturePanel p;
    p.dates = u.calendar;
    p.n_features = spec.n_features();
    for (int h : spec.return_horizons) p.feature_names.push_back("zret_" + std::to_string(h));
    for (int h : spec.rv_horizons) p.feature_names.push_back("zrv_" + std::to_string(h));
    for (int h : spec.rv_horizons) p.feature_names.push_back("zvv_" + std::to_string(h));

    const int nd = u.n_dates();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (int ai = 0; ai < u.n_assets(); ++ai) {
        const UniverseAsset& ua = u.assets[ai];
        const AssetSeries& s = ua.series;
        p.asset_ids.push_back(s.asset_id);

        std::vector<ValueSeries> cols;
        cols.reserve(static_cast<size_t>(p.n_features));
        bool enough = true;
        const size_t nb = s.bars.size();
        // cheapest sufficiency check: the z-scored vol-of-vol of the widest RV
        // window needs rv_max + volvol + zscore - 1 returns
        size_t need = static_cast<size_t>(spec.rv_horizons.back() + spec.volvol_window +
                                          spec.zscore_window);
        if (nb < need) enough = false;
        for (int h : spec.return_horizons)
            if (nb < static_cast<size_t>(h + spec.zscore_window)) enough = false;

        if (enough) {
            for (int h : spec.return_horizons)
                cols.push_back(sliding_zscore(log_return(s, h), spec.zscore_window));
            std::vector<ValueSeries> rvs;
            for (int h : spec.rv_horizons) rvs.push_back(realized_vol(s, h));
            for (const auto& rv : rvs) cols.push_back(sliding_zscore(rv, spec.zscore_window));
            for (const auto& rv : rvs)
                cols.push_back(sliding_zscore(vol_of_vol(rv, spec.volvol_window), spec.zscore_window));
        } else {
            log::warn("asset '" + s.asset_id + "': " + std::to_string(nb) +
                      " bars are too few for the feature set, marking all dates invalid");
        }

        std::vector<double> feats(static_cast<size_t>(nd) * p.n_features, nan);
        std::vector<uint8_t> valid(static_cast<size_t>(nd), 0);
        if (enough) {
            int fv = 0;
            for (const auto& c : cols) fv = std::max(fv, c.first_valid);
            for (int i = fv; i < static_cast<int>(nb); ++i) {
                int ci = ua.calendar_offset + i;
                for (int f = 0; f < p.n_features; ++f)
                    feats[static_cast<size_t>(ci) * p.n_features + f] = cols[f].values[i];
                valid[ci] = 1;
            }
        }

        std::vector<double> tgts(static_cast<size_t>(nd) * FeaturePanel::n_targets, nan);
        if (nb > static_cast<size_t>(spec.target_horizon)) {
            for (int k = 0; k < FeaturePanel::n_targets; ++k) {
                VolSeries fw = forward_vol(s, kTargetKinds[k], spec.target_horizon);
                for (int i = fw.first_valid; i <= fw.last_valid; ++i) {
                    int ci = ua.calendar_offset + i;
                    tgts[static_cast<size_t>(ci) * FeaturePanel::n_targets + k] = fw.values[i];
                }
            }
        }
        p.features.push_back(std::move(feats));
        p.targets.push_back(std::move(tgts));
        p.feat_valid.push_back(std::move(valid));
    }
    bool any = false;
    for (int a = 0; a < p.n_assets() && !any; ++a) any = p.first_valid(a) >= 0;
    if (!any) raise(Errc::no_valid_data, "build_panel: no asset has a single valid feature date");
    return p;
}

// Long-format export: one row per (date, asset) with valid features.
inline void write_panel_csv(const FeaturePanel& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::io_error, "cannot write '" + path + "'");
    out << "date,asset";
    for (const auto& n : p.feature_names) out << ',' << n;
    for (auto k : kTargetKinds) out << ",fwd_" << vol_kind_name(k);
    out << '\n';
    char buf[32];
    for (int t = 0; t < p.n_dates(); ++t)
        for (int a = 0; a < p.n_assets(); ++a) {
            if (!p.valid(a, t)) continue;
            out << to_string(p.dates[t]) << ',' << p.asset_ids[a];
            for (int f = 0; f < p.n_features; ++f) {
                std::snprintf(buf, sizeof buf, ",%.10g", p.feature(a, t, f));
                out << buf;
            }
            for (int k = 0; k < FeaturePanel::n_targets; ++k) {
                double v = p.target(a, t, k);
                if (std::isnan(v))
                    out << ',';
                else {
                    std::snprintf(buf, sizeof buf, ",%.10g", v);
                    out << buf;
                }
            }
            out << '\n';
        }
    if (!out) raise(Errc::io_error, "write failed for '" + path + "'");
}

}  // namespace mtmom
