#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "mtmom/backtest.hpp"
#include "mtmom/errors.hpp"
#include "mtmom/log.hpp"
#include "mtmom/market_data.hpp"

namespace mtmom {

constexpr double kTradingDays = 252.0;

namespace detail {

inline void require_n(const std::vector<double>& r, size_t n, const char* what) {
    if (r.size() < n)
        raise(Errc::too_few_observations,
              std::string(what) + ": need at least " + std::to_string(n) + " returns, have " +
                  std::to_string(r.size()));
}

inline double mean_of(const std::vector<double>& r) {
    double s = 0;
    for (double x : r) s += x;
    return s / static_cast<double>(r.size());
}

inline double sample_std_of(const std::vector<double>& r) {
    double m = mean_of(r);
    double ss = 0;
    for (double x : r) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(r.size() - 1));
}

}  // namespace detail

// Ex-post scaling so the realized annualized vol of the output equals
// sigma_target. Applied to every strategy before reporting, matching the
// "all portfolios rescaled to 10%" convention.
inline std::vector<double> rescale_to_target_vol(const std::vector<double>& r,
                                                 double sigma_target = 0.10) {
    detail::require_n(r, 2, "rescale_to_target_vol");
    double sd = detail::sample_std_of(r);
    if (!(sd > 0))
        raise(Errc::zero_volatility, "rescale_to_target_vol: realized volatility is zero");
    double scale = sigma_target / (sd * std::sqrt(kTradingDays));
    std::vector<double> out(r.size());
    for (size_t i = 0; i < r.size(); ++i) out[i] = r[i] * scale;
    return out;
}

// geometric: (prod(1+r))^(252/T) - 1
inline double annualized_return(const std::vector<double>& r) {
    detail::require_n(r, 1, "annualized_return");
    double prod = 1.0;
    for (double x : r) {
        if (x <= -1.0)
            raise(Errc::total_loss, "annualized_return: a daily return of " + format_double(x) +
                                        " wipes out the portfolio");
        prod *= 1.0 + x;
    }
    return std::pow(prod, kTradingDays / static_cast<double>(r.size())) - 1.0;
}

inline double sharpe_ratio(const std::vector<double>& r) {
    detail::require_n(r, 2, "sharpe_ratio");
    double sd = detail::sample_std_of(r);
    if (!(sd > 0)) raise(Errc::zero_volatility, "sharpe_ratio: zero volatility");
    return detail::mean_of(r) / sd * std::sqrt(kTradingDays);
}

// downside deviation is the root mean square of the negative returns over
// all observations; +inf when no return is negative
inline double sortino_ratio(const std::vector<double>& r) {
    detail::require_n(r, 2, "sortino_ratio");
    double ss = 0;
    size_t n_neg = 0;
    for (double x : r) {
        if (x < 0) {
            ss += x * x;
            ++n_neg;
        }
    }
    if (n_neg == 0) return std::numeric_limits<double>::infinity();
    double dd = std::sqrt(ss / static_cast<double>(r.size()));
    return detail::mean_of(r) / dd * std::sqrt(kTradingDays);
}

struct DrawdownStats {
    double max_drawdown = 0;  // <= 0, as a fraction
    int mdd_period = 0;       // trading days, peak to trough
    int recovery_period = 0;  // trading days, trough to first full recovery
    bool recovered = true;
    int peak_index = 0, trough_index = 0, recovery_index = 0;
};

// Drawdown of the compounded equity curve E_t = prod(1+r). Ties resolve to
// the earliest trough and the earliest peak attaining the running maximum.
inline DrawdownStats drawdown_stats(const std::vector<double>& r) {
    detail::require_n(r, 1, "drawdown_stats");
    const size_t n = r.size();
    std::vector<double> equity(n);
    double e = 1.0;
    for (size_t i = 0; i < n; ++i) {
        e *= 1.0 + r[i];
        equity[i] = e;
    }

    DrawdownStats st;
    double peak = equity[0];
    size_t peak_idx = 0;
    double min_dd = 0;
    size_t trough = 0, trough_peak = 0;
    bool found = false;
    for (size_t t = 0; t < n; ++t) {
        if (equity[t] > peak) {
            peak = equity[t];
            peak_idx = t;
        }
        double dd = equity[t] / peak - 1.0;
        if (dd < min_dd) {
            min_dd = dd;
            trough = t;
            trough_peak = peak_idx;
            found = true;
        }
    }
    if (!found) return st;  // monotone curve, all three zero

    st.max_drawdown = min_dd;
    st.trough_index = static_cast<int>(trough);
    st.peak_index = static_cast<int>(trough_peak);
    st.mdd_period = static_cast<int>(trough - trough_peak);
    double target = equity[trough_peak];
    st.recovered = false;
    st.recovery_index = -1;
    st.recovery_period = 0;
    for (size_t t = trough + 1; t < n; ++t) {
        if (equity[t] >= target) {
            st.recovered = true;
            st.recovery_index = static_cast<int>(t);
            st.recovery_period = static_cast<int>(t - trough);
            break;
        }
    }
    return st;
}

inline double proportion_positive(const std::vector<double>& r) {
    detail::require_n(r, 1, "proportion_positive");
    size_t n = 0;
    for (double x : r)
        if (x > 0) ++n;
    return static_cast<double>(n) / static_cast<double>(r.size());
}

// Trailing-window Pearson correlation at each index; NaN while the window
// is incomplete or either side has zero variance.
inline std::vector<double> rolling_correlation(const std::vector<double>& a,
                                               const std::vector<double>& b, int window = 252) {
    if (a.size() != b.size())
        raise(Errc::shape_mismatch, "rolling_correlation: series lengths differ");
    if (window < 2) raise(Errc::invalid_span, "rolling_correlation: window must be >= 2");
    const size_t n = a.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> out(n, nan);
    const size_t w = static_cast<size_t>(window);
    if (n < w) return out;
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (size_t i = 0; i < n; ++i) {
        sa += a[i];
        sb += b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
        if (i >= w) {
            size_t j = i - w;
            sa -= a[j];
            sb -= b[j];
            saa -= a[j] * a[j];
            sbb -= b[j] * b[j];
            sab -= a[j] * b[j];
        }
        if (i + 1 < w) continue;
        double wd = static_cast<double>(w);
        double va = saa - sa * sa / wd;
        double vb = sbb - sb * sb / wd;
        if (va <= 1e-24 || vb <= 1e-24) continue;
        out[i] = (sab - sa * sb / wd) / std::sqrt(va * vb);
    }
    return out;
}

struct MetricReport {
    double annualized_return = 0;
    double sharpe = 0;
    double sortino = 0;
    double return_over_max_drawdown = 0;
    double max_drawdown = 0;
    int max_drawdown_period = 0;
    int max_drawdown_recovery_period = 0;
    bool recovered = true;
    double proportion_positive = 0;
};

inline MetricReport compute_metrics(const std::vector<double>& r) {
    MetricReport m;
    m.annualized_return = annualized_return(r);
    m.sharpe = sharpe_ratio(r);
    m.sortino = sortino_ratio(r);
    DrawdownStats dd = drawdown_stats(r);
    m.max_drawdown = dd.max_drawdown;
    m.max_drawdown_period = dd.mdd_period;
    m.max_drawdown_recovery_period = dd.recovery_period;
    m.recovered = dd.recovered;
    m.return_over_max_drawdown = std::abs(m.max_drawdown) > 0
                                     ? m.annualized_return / std::abs(m.max_drawdown)
                                     : std::numeric_limits<double>::infinity();
    m.proportion_positive = proportion_positive(r);
    return m;
}

// External total-return index: CSV of (date, level); daily returns are the
// simple returns implied by the level's log-changes.
struct IndexSeries {
    std::vector<Date> dates;
    std::vector<double> returns;
};

inline IndexSeries load_index_csv(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) raise(Errc::io_error, "cannot open index csv: " + path);
    std::string content;
    {
        char buf[1 << 14];
        size_t got;
        while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) content.append(buf, got);
        std::fclose(f);
    }
    std::vector<Date> dates;
    std::vector<double> levels;
    size_t pos = 0;
    bool header = true;
    int lineno = 0;
    while (pos < content.size()) {
        size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        std::string line = content.substr(pos, eol - pos);
        pos = eol + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        size_t comma = line.find(',');
        if (comma == std::string::npos)
            raise(Errc::io_error, path + ":" + std::to_string(lineno) + ": expected date,level");
        Date d = parse_date_or_throw(line.substr(0, comma));
        char* end = nullptr;
        std::string lv = line.substr(comma + 1);
        double level = std::strtod(lv.c_str(), &end);
        if (end == lv.c_str() || !(level > 0) || !std::isfinite(level))
            raise(Errc::io_error,
                  path + ":" + std::to_string(lineno) + ": bad index level '" + lv + "'");
        if (!dates.empty() && !(dates.back() < d))
            raise(Errc::unsorted_dates, path + ": index dates must ascend");
        dates.push_back(d);
        levels.push_back(level);
    }
    if (dates.size() < 2) raise(Errc::empty_input, path + ": index needs at least 2 rows");
    IndexSeries s;
    for (size_t i = 1; i < dates.size(); ++i) {
        s.dates.push_back(dates[i]);
        s.returns.push_back(std::expm1(std::log(levels[i] / levels[i - 1])));
    }
    return s;
}

namespace detail {

struct FileWriter {
    std::FILE* f = nullptr;
    std::string path;
    explicit FileWriter(const std::string& p) : path(p) {
        f = std::fopen(p.c_str(), "wb");
        if (!f) raise(Errc::io_error, "cannot write " + p);
    }
    ~FileWriter() {
        if (f) std::fclose(f);
    }
    void put(const std::string& s) {
        if (std::fwrite(s.data(), 1, s.size(), f) != s.size())
            raise(Errc::io_error, "short write on " + path);
    }
};

inline std::string metric_cell(double v) { return format_double(v); }

}  // namespace detail

// Writes the report files for a set of runs sharing one realized-date span:
//   metrics.csv / metrics.txt  per-strategy metric suite (on rescaled nets)
//   equity.csv                 $100-at-inception cumulative equity
//   drawdown.csv               per-date drawdown of each equity curve
//   rolling_corr.csv           252-day correlation vs the index, if given
// All reals use 10 significant digits, so reruns are byte-identical.
inline void emit_report(const std::vector<const BacktestRun*>& runs, const IndexSeries* index,
                        const std::string& outdir, double sigma_target = 0.10,
                        int corr_window = 252) {
    if (runs.empty()) raise(Errc::empty_input, "emit_report: no runs");
    const auto& dates = runs.front()->dates;
    for (const auto* r : runs) {
        if (r->dates != dates)
            raise(Errc::misaligned_panels,
                  "emit_report: run '" + r->tag + "' does not share the common date span");
        if (r->returns.size() != dates.size())
            raise(Errc::misaligned_panels, "emit_report: run '" + r->tag + "' length mismatch");
    }
    std::filesystem::create_directories(outdir);

    std::vector<std::vector<double>> rescaled;
    std::vector<MetricReport> reports;
    for (const auto* r : runs) {
        rescaled.push_back(rescale_to_target_vol(r->returns, sigma_target));
        reports.push_back(compute_metrics(rescaled.back()));
    }

    {
        detail::FileWriter w(outdir + "/metrics.csv");
        w.put(
            "strategy,annualized_return,sharpe,sortino,return_over_max_drawdown,max_drawdown,"
            "max_drawdown_period,max_drawdown_recovery_period,proportion_positive\n");
        for (size_t i = 0; i < runs.size(); ++i) {
            const MetricReport& m = reports[i];
            w.put(runs[i]->tag + "," + detail::metric_cell(m.annualized_return) + "," +
                  detail::metric_cell(m.sharpe) + "," + detail::metric_cell(m.sortino) + "," +
                  detail::metric_cell(m.return_over_max_drawdown) + "," +
                  detail::metric_cell(m.max_drawdown) + "," +
                  std::to_string(m.max_drawdown_period) + "," +
                  (m.recovered ? std::to_string(m.max_drawdown_recovery_period)
                               : std::string("NA")) +
                  "," + detail::metric_cell(m.proportion_positive) + "\n");
        }
    }

    {
        detail::FileWriter w(outdir + "/metrics.txt");
        char buf[256];
        auto row = [&](const std::string& name, auto fmt) {
            std::string line = name;
            line.resize(36, ' ');
            for (size_t i = 0; i < runs.size(); ++i) {
                std::string cell = fmt(i);
                std::snprintf(buf, sizeof buf, "%16s", cell.c_str());
                line += buf;
            }
            w.put(line + "\n");
        };
        row("", [&](size_t i) { return runs[i]->tag; });
        row("Annualized Return (%)", [&](size_t i) {
            std::snprintf(buf, sizeof buf, "%.2f", reports[i].annualized_return * 100.0);
            return std::string(buf);
        });
        row("Annualized Sharpe Ratio", [&](size_t i) {
            std::snprintf(buf, sizeof buf, "%.3f", reports[i].sharpe);
            return std::string(buf);
        });
        row("Annualized Sortino Ratio", [&](size_t i) {
            std::snprintf(buf, sizeof buf, "%.3f", reports[i].sortino);
            return std::string(buf);
        });
        row("Return Over Max Drawdown", [&](size_t i) {
            std::snprintf(buf, sizeof buf, "%.3f", reports[i].return_over_max_drawdown);
            return std::string(buf);
        });
        row("Max Drawdown (%)", [&](size_t i) {
            std::snprintf(buf, sizeof buf, "%.2f", reports[i].max_drawdown * 100.0);
            return std::string(buf);
        });
        row("Max Drawdown Period (days)",
            [&](size_t i) { return std::to_string(reports[i].max_drawdown_period); });
        row("Max Drawdown Recovery (days)", [&](size_t i) {
            return reports[i].recovered ? std::to_string(reports[i].max_drawdown_recovery_period)
                                        : std::string("NA");
        });
        row("Proportion of Positive Returns (%)", [&](size_t i) {
            std::snprintf(buf, sizeof buf, "%.2f", reports[i].proportion_positive * 100.0);
            return std::string(buf);
        });
    }

    // equity curves: $100 at inception (the day before the first realized
    // return), then compounded on the rescaled series
    std::vector<std::vector<double>> equity(runs.size(),
                                            std::vector<double>(dates.size() + 1, 100.0));
    for (size_t i = 0; i < runs.size(); ++i)
        for (size_t t = 0; t < dates.size(); ++t)
            equity[i][t + 1] = equity[i][t] * (1.0 + rescaled[i][t]);

    {
        detail::FileWriter w(outdir + "/equity.csv");
        std::string head = "date";
        for (const auto* r : runs) head += "," + r->tag;
        w.put(head + "\n");
        std::string row0 = to_string(Date{dates.front().days - 1});
        for (size_t i = 0; i < runs.size(); ++i) row0 += ",100";
        w.put(row0 + "\n");
        for (size_t t = 0; t < dates.size(); ++t) {
            std::string line = to_string(dates[t]);
            for (size_t i = 0; i < runs.size(); ++i)
                line += "," + format_double(equity[i][t + 1]);
            w.put(line + "\n");
        }
    }

    {
        detail::FileWriter w(outdir + "/drawdown.csv");
        std::string head = "date";
        for (const auto* r : runs) head += "," + r->tag;
        w.put(head + "\n");
        std::vector<double> peak(runs.size(), 100.0);
        for (size_t t = 0; t < dates.size(); ++t) {
            std::string line = to_string(dates[t]);
            for (size_t i = 0; i < runs.size(); ++i) {
                if (equity[i][t + 1] > peak[i]) peak[i] = equity[i][t + 1];
                line += "," + format_double(equity[i][t + 1] / peak[i] - 1.0);
            }
            w.put(line + "\n");
        }
    }

    if (index) {
        // align each run with the index on common dates
        std::vector<Date> common;
        std::vector<size_t> run_pos, idx_pos;
        {
            size_t i = 0, j = 0;
            while (i < dates.size() && j < index->dates.size()) {
                if (dates[i] < index->dates[j]) ++i;
                else if (index->dates[j] < dates[i]) ++j;
                else {
                    common.push_back(dates[i]);
                    run_pos.push_back(i);
                    idx_pos.push_back(j);
                    ++i;
                    ++j;
                }
            }
        }
        if (common.empty())
            raise(Errc::no_overlap, "emit_report: index shares no dates with the runs");
        std::vector<double> ib(common.size());
        for (size_t k = 0; k < common.size(); ++k) ib[k] = index->returns[idx_pos[k]];

        detail::FileWriter w(outdir + "/rolling_corr.csv");
        std::string head = "date";
        for (const auto* r : runs) head += "," + r->tag;
        w.put(head + "\n");
        std::vector<std::vector<double>> corr;
        for (size_t i = 0; i < runs.size(); ++i) {
            std::vector<double> ra(common.size());
            for (size_t k = 0; k < common.size(); ++k) ra[k] = rescaled[i][run_pos[k]];
            corr.push_back(rolling_correlation(ra, ib, corr_window));
        }
        for (size_t k = 0; k < common.size(); ++k) {
            std::string line = to_string(common[k]);
            for (size_t i = 0; i < runs.size(); ++i) {
                line += ",";
                if (!std::isnan(corr[i][k])) line += format_double(corr[i][k]);
            }
            w.put(line + "\n");
        }
    }
}

}  // namespace mtmom
