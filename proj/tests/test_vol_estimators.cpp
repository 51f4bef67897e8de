// Volatility estimators against hand-computed values frozen from an
// independent reference implementation, plus invariance and error-path
// properties.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "mtmom/vol_estimators.hpp"

using namespace mtmom;
using namespace testutil;

TEST_CASE("close-to-close: alternating +-1% returns", "[vol]") {
    std::vector<double> rets;
    for (int i = 0; i < 40; ++i) rets.push_back(i % 2 == 0 ? 0.01 : -0.01);
    AssetSeries s = series_from_log_returns("a", rets);

    VolSeries v = close_to_close_vol(s, 2);
    REQUIRE(v.first_valid == 2);
    REQUIRE(v.last_valid == 40);
    // window of {+0.01, -0.01}: mean 0, sample var 2e-4
    for (int i = v.first_valid; i <= v.last_valid; ++i)
        REQUIRE(v.values[i] == Catch::Approx(0.22449944320643647).margin(1e-12));
    REQUIRE(std::isnan(v.values[0]));
    REQUIRE(std::isnan(v.values[1]));
}

TEST_CASE("close-to-close: four-settle hand case", "[vol]") {
    AssetSeries s = series_from_settles("a", {100.0, 101.0, 99.0, 100.5});
    VolSeries v = close_to_close_vol(s, 3);
    REQUIRE(v.first_valid == 3);
    REQUIRE(v.values[3] == Catch::Approx(0.30054465243708145).margin(1e-12));
}

TEST_CASE("parkinson: constant log range", "[vol]") {
    AssetSeries s;
    s.asset_id = "a";
    for (int i = 0; i < 10; ++i) {
        double lo = 100.0, hi = 100.0 * std::exp(0.02);
        Bar b = ohlc_bar(make_date(2000, 1, 3 + i), lo, hi, lo, lo);
        s.bars.push_back(b);
    }
    VolSeries v = parkinson_vol(s, 1);
    REQUIRE(v.first_valid == 0);
    for (int i = 0; i < 10; ++i)
        REQUIRE(v.values[i] == Catch::Approx(0.19067227126774852).margin(1e-12));

    // window 3 over identical bars gives the same value
    VolSeries v3 = parkinson_vol(s, 3);
    REQUIRE(v3.first_valid == 2);
    REQUIRE(v3.values[5] == Catch::Approx(0.19067227126774852).margin(1e-12));
}

TEST_CASE("parkinson: single asymmetric bar", "[vol]") {
    AssetSeries s;
    s.asset_id = "a";
    s.bars.push_back(ohlc_bar(make_date(2000, 1, 3), 100, 103, 98, 101));
    VolSeries v = parkinson_vol(s, 1);
    REQUIRE(v.values[0] == Catch::Approx(0.4744070024669237).margin(1e-12));
}

TEST_CASE("garman-klass: open equals close kills the correction term", "[vol]") {
    AssetSeries s;
    s.asset_id = "a";
    double lo = 100.0, hi = 100.0 * std::exp(0.02);
    s.bars.push_back(ohlc_bar(make_date(2000, 1, 3), lo, hi, lo, lo));
    VolSeries v = garman_klass_vol(s, 1);
    // 0.5 * 0.02^2 daily variance
    REQUIRE(v.values[0] == Catch::Approx(0.22449944320643647).margin(1e-12));
}

TEST_CASE("garman-klass: single asymmetric bar", "[vol]") {
    AssetSeries s;
    s.asset_id = "a";
    s.bars.push_back(ohlc_bar(make_date(2000, 1, 3), 100, 103, 98, 101));
    VolSeries v = garman_klass_vol(s, 1);
    REQUIRE(v.values[0] == Catch::Approx(0.5498763779348671).margin(1e-12));
}

TEST_CASE("rogers-satchell: symmetric bar with open == close", "[vol]") {
    AssetSeries s;
    s.asset_id = "a";
    double o = 100.0;
    s.bars.push_back(
        ohlc_bar(make_date(2000, 1, 3), o, o * std::exp(0.02), o * std::exp(-0.02), o));
    VolSeries v = rogers_satchell_vol(s, 1);
    // u(u-c) + d(d-c) with u=0.02, d=-0.02, c=0 -> 8e-4 daily variance
    REQUIRE(v.values[0] == Catch::Approx(0.44899888641287294).margin(1e-12));
}

TEST_CASE("rogers-satchell: single asymmetric bar", "[vol]") {
    AssetSeries s;
    s.asset_id = "a";
    s.bars.push_back(ohlc_bar(make_date(2000, 1, 3), 100, 103, 98, 101));
    VolSeries v = rogers_satchell_vol(s, 1);
    REQUIRE(v.values[0] == Catch::Approx(0.5473312845954876).margin(1e-12));
}

TEST_CASE("yang-zhang: four-bar hand case", "[vol]") {
    AssetSeries s;
    s.asset_id = "a";
    s.bars.push_back(ohlc_bar(make_date(2000, 1, 3), 100, 102, 99, 101));
    s.bars.push_back(ohlc_bar(make_date(2000, 1, 4), 101.5, 103, 100, 100.5));
    s.bars.push_back(ohlc_bar(make_date(2000, 1, 5), 100, 101, 98.5, 99));
    s.bars.push_back(ohlc_bar(make_date(2000, 1, 6), 99.5, 101, 99, 100.5));
    VolSeries v = yang_zhang_vol(s, 3);
    REQUIRE(v.first_valid == 3);
    REQUIRE(std::isnan(v.values[2]));
    REQUIRE(v.values[3] == Catch::Approx(0.2769096101773285).margin(1e-12));
}

TEST_CASE("ewma ex-ante: recursion path", "[vol]") {
    AssetSeries s = series_from_settles("a", {100.0, 101.0, 99.0, 100.5, 100.5, 100.0});
    VolSeries v = ewma_ex_ante_vol(s, 60);
    REQUIRE(v.first_valid == 1);
    REQUIRE(std::isnan(v.values[0]));
    const double want[] = {0.0, 0.08466866863186313, 0.08501846685189342, 0.0875371273418006,
                           0.09458009633542948};
    for (int i = 1; i <= 5; ++i)
        REQUIRE(v.values[i] == Catch::Approx(want[i - 1]).margin(1e-12));
}

TEST_CASE("ewma ex-ante: steady state under alternating returns", "[vol]") {
    std::vector<double> rets;
    for (int i = 0; i < 2000; ++i) rets.push_back(i % 2 == 0 ? 0.01 : -0.01);
    AssetSeries s = series_from_log_returns("a", rets);
    VolSeries v = ewma_ex_ante_vol(s, 60);
    REQUIRE(v.values[2000] == Catch::Approx(0.15872302920496448).margin(1e-12));
    // close to the naive sqrt(252 * 1e-4) level
    REQUIRE(v.values[2000] == Catch::Approx(0.15874507866387544).margin(3e-4));
}

TEST_CASE("flat price series: every estimator reads zero", "[vol]") {
    AssetSeries s = series_from_settles("a", std::vector<double>(30, 100.0));
    for (VolKind k : {VolKind::close_to_close, VolKind::parkinson, VolKind::garman_klass,
                      VolKind::rogers_satchell, VolKind::yang_zhang}) {
        VolSeries v = estimate_vol(s, k, 5);
        for (int i = v.first_valid; i <= v.last_valid; ++i) {
            INFO(vol_kind_name(k) << " at " << i);
            REQUIRE(v.values[i] == 0.0);
        }
    }
    VolSeries e = ewma_ex_ante_vol(s, 60);
    for (int i = e.first_valid; i <= e.last_valid; ++i) REQUIRE(e.values[i] == 0.0);
}

TEST_CASE("price scale invariance", "[vol]") {
    AssetSeries a = random_series("a", 120, 42);
    AssetSeries b = a;
    for (Bar& bar : b.bars) {
        bar.open *= 7.0;
        bar.high *= 7.0;
        bar.low *= 7.0;
        bar.close *= 7.0;
        bar.settle *= 7.0;
    }
    for (VolKind k : {VolKind::close_to_close, VolKind::parkinson, VolKind::garman_klass,
                      VolKind::rogers_satchell, VolKind::yang_zhang, VolKind::ewma_ex_ante}) {
        int w = (k == VolKind::ewma_ex_ante) ? 60 : 21;
        VolSeries va = estimate_vol(a, k, w);
        VolSeries vb = estimate_vol(b, k, w);
        REQUIRE(va.first_valid == vb.first_valid);
        for (int i = va.first_valid; i <= va.last_valid; ++i) {
            INFO(vol_kind_name(k) << " at " << i);
            REQUIRE(va.values[i] == Catch::Approx(vb.values[i]).margin(1e-12));
        }
    }
}

TEST_CASE("forward target equals the backward estimate shifted by the horizon", "[vol]") {
    AssetSeries s = random_series("a", 200, 9);
    const int h = 21;
    for (VolKind k : {VolKind::close_to_close, VolKind::parkinson, VolKind::garman_klass,
                      VolKind::rogers_satchell, VolKind::yang_zhang}) {
        VolSeries back = estimate_vol(s, k, h);
        VolSeries fwd = forward_vol(s, k, h);
        REQUIRE(fwd.forward);
        REQUIRE(fwd.first_valid == std::max(0, back.first_valid - h));
        REQUIRE(fwd.last_valid == back.last_valid - h);
        for (int t = fwd.first_valid; t <= fwd.last_valid; ++t)
            REQUIRE(fwd.values[t] == back.values[t + h]);
    }
}

TEST_CASE("forward target rejects the ex-ante kind", "[vol]") {
    AssetSeries s = random_series("a", 60, 3);
    REQUIRE_THROWS_AS(forward_vol(s, VolKind::ewma_ex_ante, 21), Error);
    try {
        forward_vol(s, VolKind::ewma_ex_ante, 21);
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::invalid_kind);
    }
    REQUIRE_THROWS_AS(forward_vol(s, VolKind::parkinson, 0), Error);
}

TEST_CASE("window validation", "[vol]") {
    AssetSeries s = random_series("a", 10, 5);
    REQUIRE_THROWS_AS(close_to_close_vol(s, 1), Error);     // below minimum
    REQUIRE_THROWS_AS(close_to_close_vol(s, 10), Error);    // needs 11 bars
    REQUIRE_THROWS_AS(parkinson_vol(s, 11), Error);
    REQUIRE_THROWS_AS(yang_zhang_vol(s, 10), Error);
    REQUIRE_THROWS_AS(ewma_ex_ante_vol(s, 1), Error);
    try {
        close_to_close_vol(s, 10);
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::window_too_large);
    }
    REQUIRE_NOTHROW(close_to_close_vol(s, 9));
    REQUIRE_NOTHROW(parkinson_vol(s, 10));
}

TEST_CASE("vol kind names round-trip through the parser", "[vol]") {
    for (VolKind k : {VolKind::close_to_close, VolKind::parkinson, VolKind::garman_klass,
                      VolKind::rogers_satchell, VolKind::yang_zhang, VolKind::ewma_ex_ante})
        REQUIRE(parse_vol_kind(vol_kind_name(k)) == k);
    REQUIRE(parse_vol_kind("gk") == VolKind::garman_klass);
    REQUIRE_FALSE(parse_vol_kind("nope").has_value());
}
