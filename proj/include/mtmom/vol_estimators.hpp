#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mtmom/market_data.hpp"

namespace mtmom {

enum class VolKind {
    close_to_close,
    parkinson,
    garman_klass,
    rogers_satchell,
    yang_zhang,
    ewma_ex_ante,
};

inline const char* vol_kind_name(VolKind k) {
    switch (k) {
        case VolKind::close_to_close: return "close_to_close";
        case VolKind::parkinson: return "parkinson";
        case VolKind::garman_klass: return "garman_klass";
        case VolKind::rogers_satchell: return "rogers_satchell";
        case VolKind::yang_zhang: return "yang_zhang";
        case VolKind::ewma_ex_ante: return "ewma_ex_ante";
    }
    return "?";
}

inline std::optional<VolKind> parse_vol_kind(const std::string& s) {
    if (s == "close_to_close" || s == "ctc") return VolKind::close_to_close;
    if (s == "parkinson" || s == "pk") return VolKind::parkinson;
    if (s == "garman_klass" || s == "gk") return VolKind::garman_klass;
    if (s == "rogers_satchell" || s == "rs") return VolKind::rogers_satchell;
    if (s == "yang_zhang" || s == "yz") return VolKind::yang_zhang;
    if (s == "ewma_ex_ante" || s == "ewma") return VolKind::ewma_ex_ante;
    return std::nullopt;
}

// Annualized volatility aligned to an asset's bar index. values[i] is NaN
// outside [first_valid, last_valid].
struct VolSeries {
    std::string asset_id;
    std::vector<Date> dates;
    std::vector<double> values;
    int first_valid = 0;
    int last_valid = -1;
    VolKind kind{};
    int window = 0;
    bool forward = false;

    bool valid(int i) const { return i >= first_valid && i <= last_valid; }
    int size() const { return static_cast<int>(values.size()); }
};

namespace detail {

constexpr double kTradingDays = 252.0;

inline VolSeries make_vol_series(const AssetSeries& s, VolKind kind, int window) {
    VolSeries out;
    out.asset_id = s.asset_id;
    out.dates.reserve(s.bars.size());
    for (const Bar& b : s.bars) out.dates.push_back(b.date);
    out.values.assign(s.bars.size(), std::numeric_limits<double>::quiet_NaN());
    out.kind = kind;
    out.window = window;
    return out;
}

inline double annualize_var(double daily_var) {
    if (daily_var < 0) daily_var = 0;  // rolling-sum noise or clamped estimator
    return std::sqrt(kTradingDays * daily_var);
}

inline void require_window(int window, int min_window, size_t need, size_t have, VolKind kind) {
    if (window < min_window)
        raise(Errc::invalid_span, std::string(vol_kind_name(kind)) + ": window must be >= " +
                                      std::to_string(min_window));
    if (have < need)
        raise(Errc::window_too_large, std::string(vol_kind_name(kind)) + ": window " +
                                          std::to_string(window) + " needs " + std::to_string(need) +
                                          " bars, series has " + std::to_string(have));
}

}  // namespace detail

// Sample variance (N-1 denominator) of the last N demeaned log close returns.
// Defined from index N (needs N+1 bars).
inline VolSeries close_to_close_vol(const AssetSeries& s, int window) {
    detail::require_window(window, 2, static_cast<size_t>(window) + 1, s.bars.size(),
                           VolKind::close_to_close);
    VolSeries out = detail::make_vol_series(s, VolKind::close_to_close, window);
    const int n = static_cast<int>(s.bars.size());
    std::vector<double> r(static_cast<size_t>(n), 0.0);
    for (int i = 1; i < n; ++i) r[i] = std::log(s.bars[i].close / s.bars[i - 1].close);

    double sum = 0, sumsq = 0;
    const int N = window;
    for (int i = 1; i < n; ++i) {
        sum += r[i];
        sumsq += r[i] * r[i];
        if (i > N) {
            sum -= r[i - N];
            sumsq -= r[i - N] * r[i - N];
        }
        if (i >= N) {
            double var = (sumsq - sum * sum / N) / (N - 1);
            out.values[i] = detail::annualize_var(var);
        }
    }
    out.first_valid = N;
    out.last_valid = n - 1;
    return out;
}

// (1 / (4 N ln 2)) * sum of squared log ranges. Defined from index N-1.
inline VolSeries parkinson_vol(const AssetSeries& s, int window) {
    detail::require_window(window, 1, static_cast<size_t>(window), s.bars.size(), VolKind::parkinson);
    VolSeries out = detail::make_vol_series(s, VolKind::parkinson, window);
    const int n = static_cast<int>(s.bars.size());
    const int N = window;
    const double scale = 1.0 / (4.0 * N * M_LN2);
    double sum = 0;
    std::vector<double> term(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double hl = std::log(s.bars[i].high / s.bars[i].low);
        term[i] = hl * hl;
        sum += term[i];
        if (i >= N) sum -= term[i - N];
        if (i >= N - 1) out.values[i] = detail::annualize_var(scale * sum);
    }
    out.first_valid = N - 1;
    out.last_valid = n - 1;
    return out;
}

// (1/N) * sum of [0.5 ln(H/L)^2 - (2 ln 2 - 1) ln(C/O)^2], clamped at zero.
inline VolSeries garman_klass_vol(const AssetSeries& s, int window) {
    detail::require_window(window, 1, static_cast<size_t>(window), s.bars.size(),
                           VolKind::garman_klass);
    VolSeries out = detail::make_vol_series(s, VolKind::garman_klass, window);
    const int n = static_cast<int>(s.bars.size());
    const int N = window;
    double sum = 0;
    std::vector<double> term(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double hl = std::log(s.bars[i].high / s.bars[i].low);
        double co = std::log(s.bars[i].close / s.bars[i].open);
        term[i] = 0.5 * hl * hl - (2.0 * M_LN2 - 1.0) * co * co;
        sum += term[i];
        if (i >= N) sum -= term[i - N];
        if (i >= N - 1) out.values[i] = detail::annualize_var(sum / N);
    }
    out.first_valid = N - 1;
    out.last_valid = n - 1;
    return out;
}

// (1/N) * sum of [u(u-c) + d(d-c)] with u = ln(H/O), d = ln(L/O), c = ln(C/O).
// Drift-independent; clamped at zero.
inline VolSeries rogers_satchell_vol(const AssetSeries& s, int window) {
    detail::require_window(window, 1, static_cast<size_t>(window), s.bars.size(),
                           VolKind::rogers_satchell);
    VolSeries out = detail::make_vol_series(s, VolKind::rogers_satchell, window);
    const int n = static_cast<int>(s.bars.size());
    const int N = window;
    double sum = 0;
    std::vector<double> term(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double u = std::log(s.bars[i].high / s.bars[i].open);
        double d = std::log(s.bars[i].low / s.bars[i].open);
        double c = std::log(s.bars[i].close / s.bars[i].open);
        term[i] = u * (u - c) + d * (d - c);
        sum += term[i];
        if (i >= N) sum -= term[i - N];
        if (i >= N - 1) out.values[i] = detail::annualize_var(sum / N);
    }
    out.first_valid = N - 1;
    out.last_valid = n - 1;
    return out;
}

// sigma_o^2 + k sigma_c^2 + (1-k) sigma_rs^2 over the window, with
// k = 0.34 / (1.34 + (N+1)/(N-1)). Overnight and open-to-close variances are
// demeaned sample variances. Defined from index N (needs the prior close).
inline VolSeries yang_zhang_vol(const AssetSeries& s, int window) {
    detail::require_window(window, 2, static_cast<size_t>(window) + 1, s.bars.size(),
                           VolKind::yang_zhang);
    VolSeries out = detail::make_vol_series(s, VolKind::yang_zhang, window);
    const int n = static_cast<int>(s.bars.size());
    const int N = window;
    const double k = 0.34 / (1.34 + static_cast<double>(N + 1) / (N - 1));

    std::vector<double> o(static_cast<size_t>(n), 0.0), c(static_cast<size_t>(n), 0.0),
        rs(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double u = std::log(s.bars[i].high / s.bars[i].open);
        double d = std::log(s.bars[i].low / s.bars[i].open);
        c[i] = std::log(s.bars[i].close / s.bars[i].open);
        rs[i] = u * (u - c[i]) + d * (d - c[i]);
        if (i > 0) o[i] = std::log(s.bars[i].open / s.bars[i - 1].close);
    }

    double so = 0, soq = 0, sc = 0, scq = 0, srs = 0;
    for (int i = 1; i < n; ++i) {
        so += o[i];
        soq += o[i] * o[i];
        sc += c[i];
        scq += c[i] * c[i];
        srs += rs[i];
        if (i > N) {
            so -= o[i - N];
            soq -= o[i - N] * o[i - N];
            sc -= c[i - N];
            scq -= c[i - N] * c[i - N];
            srs -= rs[i - N];
        }
        if (i >= N) {
            double var_o = (soq - so * so / N) / (N - 1);
            double var_c = (scq - sc * sc / N) / (N - 1);
            double var_rs = srs / N;
            if (var_o < 0) var_o = 0;
            if (var_c < 0) var_c = 0;
            if (var_rs < 0) var_rs = 0;
            out.values[i] = detail::annualize_var(var_o + k * var_c + (1 - k) * var_rs);
        }
    }
    out.first_valid = N;
    out.last_valid = n - 1;
    return out;
}

// Exponentially weighted ex-ante volatility on settle log returns,
// alpha = 2/(span+1), pandas-style adjust=False recursion:
//   m_t = (1-a) m_{t-1} + a r_t
//   v_t = (1-a) (v_{t-1} + a (r_t - m_{t-1})^2)
// seeded at the first return with m = r_1, v = 0. Defined from index 1.
inline VolSeries ewma_ex_ante_vol(const AssetSeries& s, int span = 60) {
    if (span < 2) raise(Errc::invalid_span, "ewma_ex_ante: span must be >= 2");
    if (s.bars.size() < 2)
        raise(Errc::window_too_large, "ewma_ex_ante: needs at least 2 bars, series has " +
                                          std::to_string(s.bars.size()));
    VolSeries out = detail::make_vol_series(s, VolKind::ewma_ex_ante, span);
    const int n = static_cast<int>(s.bars.size());
    const double a = 2.0 / (span + 1.0);

    double m = 0, v = 0;
    for (int i = 1; i < n; ++i) {
        double r = std::log(s.bars[i].settle / s.bars[i - 1].settle);
        if (i == 1) {
            m = r;
            v = 0;
        } else {
            double dev = r - m;
            v = (1 - a) * (v + a * dev * dev);
            m = (1 - a) * m + a * r;
        }
        out.values[i] = detail::annualize_var(v);
    }
    out.first_valid = 1;
    out.last_valid = n - 1;
    return out;
}

inline VolSeries estimate_vol(const AssetSeries& s, VolKind kind, int window) {
    switch (kind) {
        case VolKind::close_to_close: return close_to_close_vol(s, window);
        case VolKind::parkinson: return parkinson_vol(s, window);
        case VolKind::garman_klass: return garman_klass_vol(s, window);
        case VolKind::rogers_satchell: return rogers_satchell_vol(s, window);
        case VolKind::yang_zhang: return yang_zhang_vol(s, window);
        case VolKind::ewma_ex_ante: return ewma_ex_ante_vol(s, window);
    }
    raise(Errc::invalid_kind, "estimate_vol: unknown kind");
}

// Forward-looking target: forward(t) equals the backward estimate at t+horizon
// computed with window = horizon, i.e. the vol realized over (t, t+horizon].
// The ex-ante EWMA kind has no forward analogue.
inline VolSeries forward_vol(const AssetSeries& s, VolKind kind, int horizon = 21) {
    if (kind == VolKind::ewma_ex_ante)
        raise(Errc::invalid_kind, "forward_vol: ewma_ex_ante has no forward form");
    if (horizon < 1) raise(Errc::invalid_span, "forward_vol: horizon must be >= 1");
    VolSeries back = estimate_vol(s, kind, horizon);
    VolSeries out = detail::make_vol_series(s, kind, horizon);
    out.forward = true;
    const int n = static_cast<int>(s.bars.size());
    int first = std::max(0, back.first_valid - horizon);
    int last = std::min(n - 1, back.last_valid - horizon);
    for (int t = first; t <= last; ++t) out.values[t] = back.values[t + horizon];
    out.first_valid = first;
    out.last_valid = last;
    return out;
}

}  // namespace mtmom
