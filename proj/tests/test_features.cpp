#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sarnet/dataset.hpp"
#include "sarnet/error.hpp"
#include "sarnet/features.hpp"
#include "sarnet/rng.hpp"

#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

using namespace sarnet;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Independent O(n^2) DFT oracle over the zero-padded signal, mirroring the
// documented band conventions.
std::vector<double> direct_dft_magnitudes(const std::vector<double>& x) {
    std::size_t n = 1;
    while (n < std::max<std::size_t>(x.size(), 2)) n <<= 1;
    std::vector<double> mags(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double angle = -2.0 * kPi * static_cast<double>(k * i) / static_cast<double>(n);
            acc += x[i] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        mags[k] = std::abs(acc);
    }
    return mags;
}

struct OracleBands {
    double low = 0.0, mid = 0.0, high = 0.0, total = 0.0;
};

OracleBands oracle_band_powers(const std::vector<double>& x) {
    const auto mags = direct_dft_magnitudes(x);
    OracleBands out;
    const double nyq = static_cast<double>(mags.size() - 1);
    for (std::size_t k = 0; k < mags.size(); ++k) {
        const double frac = static_cast<double>(k) / nyq;
        const double p = mags[k] * mags[k];
        out.total += p;
        if (frac < 1.0 / 3.0)
            out.low += p;
        else if (frac < 2.0 / 3.0)
            out.mid += p;
        else
            out.high += p;
    }
    return out;
}

VibrationWindow make_window(std::vector<double> samples, char tag = 'H') {
    VibrationWindow win;
    win.samples = std::move(samples);
    win.channel_tag = tag;
    return win;
}

// Brute-force Spearman oracle: explicit average ranks, then textbook Pearson.
double brute_spearman_abs(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rank_of = [](const std::vector<double>& v) {
        std::vector<double> ranks(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::size_t below = 0, equal = 0;
            for (std::size_t j = 0; j < v.size(); ++j) {
                if (v[j] < v[i]) ++below;
                if (v[j] == v[i]) ++equal;
            }
            ranks[i] = static_cast<double>(below) + (static_cast<double>(equal) + 1.0) / 2.0;
        }
        return ranks;
    };
    const auto rx = rank_of(x);
    const auto ry = rank_of(y);
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
        sxy += (rx[i] - mx) * (ry[i] - my);
    }
    return std::abs(sxy / std::sqrt(sxx * syy));
}

} // namespace

TEST_CASE("constant window features") {
    const FeatureVector fv = extract_features(make_window(std::vector<double>(64, 3.0)));
    CHECK(fv.at("RMS_H") == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(fv.at("CrestFactor_H") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fv.at("Skewness_H") == 0.0);
    CHECK(fv.at("Kurtosis_H") == 0.0);

    // All spectral energy sits in the DC bin.
    const double bin0 = fv.at("FFT_bin_0_H");
    for (int b = 1; b < 8; ++b) CHECK(fv.at("FFT_bin_" + std::to_string(b) + "_H") < 1e-9 * bin0);
    CHECK(fv.at("BandPower_Low_H") > 0.0);
    CHECK(fv.at("BandPower_Mid_H") == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("sine at half Nyquist lands in the mid band") {
    std::vector<double> x(64);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = std::sin(2.0 * kPi * 16.0 * static_cast<double>(i) / 64.0); // bin 16 of 32

    const FeatureVector fv = extract_features(make_window(x));
    CHECK(fv.at("BandPower_Mid_H") > fv.at("BandPower_Low_H"));
    CHECK(fv.at("BandPower_Mid_H") > fv.at("BandPower_High_H"));

    const OracleBands oracle = oracle_band_powers(x);
    CHECK(fv.at("BandPower_Low_H") == doctest::Approx(oracle.low).epsilon(1e-6));
    CHECK(fv.at("BandPower_Mid_H") == doctest::Approx(oracle.mid).epsilon(1e-6));
    CHECK(fv.at("BandPower_High_H") == doctest::Approx(oracle.high).epsilon(1e-6));
}

TEST_CASE("all-zero window is rejected") {
    try {
        extract_features(make_window(std::vector<double>(32, 0.0)));
        FAIL("expected AllZeroWindow");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::AllZeroWindow);
    }
}

TEST_CASE("window shorter than 16 samples is invalid") {
    CHECK_THROWS_AS(extract_features(make_window(std::vector<double>(8, 1.0))), Error);
}

TEST_CASE("positive scaling moves RMS and fixes the shape statistics") {
    Rng rng(3);
    std::vector<double> x(100);
    for (auto& v : x) v = rng.normal(0.5, 2.0);
    std::vector<double> scaled(x.size());
    const double c = 3.7;
    for (std::size_t i = 0; i < x.size(); ++i) scaled[i] = c * x[i];

    const FeatureVector a = extract_features(make_window(x));
    const FeatureVector b = extract_features(make_window(scaled));
    CHECK(b.at("RMS_H") == doctest::Approx(c * a.at("RMS_H")).epsilon(1e-9));
    CHECK(b.at("CrestFactor_H") == doctest::Approx(a.at("CrestFactor_H")).epsilon(1e-9));
    CHECK(b.at("Skewness_H") == doctest::Approx(a.at("Skewness_H")).epsilon(1e-9));
    CHECK(b.at("Kurtosis_H") == doctest::Approx(a.at("Kurtosis_H")).epsilon(1e-9));
}

TEST_CASE("band powers partition total spectral power") {
    Rng rng(14);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> x(50 + trial * 13);
        for (auto& v : x) v = rng.normal(0.0, 1.0);
        const FeatureVector fv = extract_features(make_window(x));
        const OracleBands oracle = oracle_band_powers(x);
        const double sum =
            fv.at("BandPower_Low_H") + fv.at("BandPower_Mid_H") + fv.at("BandPower_High_H");
        CHECK(sum == doctest::Approx(oracle.total).epsilon(1e-6));
    }
}

TEST_CASE("channel tag suffixes the schema") {
    const FeatureVector fv = extract_features(make_window(std::vector<double>(32, 1.5), 'V'));
    CHECK(fv.contains("RMS_V"));
    CHECK_FALSE(fv.contains("RMS_H"));
}

TEST_CASE("spearman on monotone series") {
    const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0};
    const std::vector<double> up{2.0, 4.0, 8.0, 16.0, 32.0};
    const std::vector<double> down{5.0, 4.0, 3.0, 2.0, 1.0};
    CHECK(spearman_abs(x, up).abs_rho == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman_abs(x, down).abs_rho == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spearman tie handling matches the brute-force oracle") {
    const std::vector<double> x{1.0, 2.0, 2.0, 3.0};
    const std::vector<double> y{1.0, 3.0, 2.0, 4.0};
    CHECK(spearman_abs(x, y).abs_rho ==
          doctest::Approx(brute_spearman_abs(x, y)).epsilon(1e-12));

    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(12), b(12);
        for (auto& v : a) v = static_cast<double>(rng.below(5)); // plenty of ties
        for (auto& v : b) v = static_cast<double>(rng.below(5));
        const SpearmanResult result = spearman_abs(a, b);
        if (!result.constant_series)
            CHECK(result.abs_rho == doctest::Approx(brute_spearman_abs(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("spearman is invariant under strictly monotone transforms") {
    Rng rng(21);
    std::vector<double> x(30), y(30);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform(0.1, 4.0);
        y[i] = rng.uniform(0.1, 4.0);
    }
    std::vector<double> ex(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        ex[i] = std::exp(x[i]);
        ly[i] = std::log(y[i]);
    }
    CHECK(spearman_abs(x, y).abs_rho ==
          doctest::Approx(spearman_abs(ex, ly).abs_rho).epsilon(1e-12));
}

TEST_CASE("constant series flagged as zero") {
    const SpearmanResult result =
        spearman_abs(std::vector<double>{2.0, 2.0, 2.0}, std::vector<double>{1.0, 2.0, 3.0});
    CHECK(result.constant_series);
    CHECK(result.abs_rho == 0.0);
}

namespace {

RunSeries run_with_features(int length, std::uint64_t seed) {
    Rng rng(seed);
    RunSeries run;
    run.run_id = "r";
    for (int t = 0; t < length; ++t) {
        FeatureVector fv;
        const double rul = static_cast<double>(length - t);
        fv.set("informative", rul + rng.normal(0.0, 1e-3));
        fv.set("noise", rng.normal(0.0, 1.0));
        run.t.push_back(t);
        run.rows.push_back(std::move(fv));
    }
    run.failure_index = length - 1;
    return run;
}

} // namespace

TEST_CASE("ranking puts the informative feature on top") {
    const RunSeries run = run_with_features(400, 17);
    const RulLabels labels = build_rul_labels(run.failure_index, 0);
    const RankingReport report = rank_features({run}, {labels});
    CHECK(report.top_feature() == "informative");
    CHECK(report.entries.front().abs_spearman > 0.99);
    CHECK(report.entries.back().abs_spearman < 0.2);
}

TEST_CASE("pure-noise features stay below the null band") {
    // Null distribution check: at 1000 points, |spearman| of independent
    // noise against the labels stays under 0.2 in at least 95% of seeds.
    int below = 0;
    const RulLabels labels = build_rul_labels(999, 0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(4000 + seed);
        std::vector<double> noise(1000), y(1000);
        for (std::size_t i = 0; i < 1000; ++i) {
            noise[i] = rng.normal();
            y[i] = labels.at(static_cast<int>(i));
        }
        if (spearman_abs(noise, y).abs_rho < 0.2) ++below;
    }
    CHECK(below >= 19);
}

TEST_CASE("identical features tie lexicographically") {
    RunSeries run;
    run.run_id = "tie";
    for (int t = 0; t < 50; ++t) {
        FeatureVector fv;
        fv.set("zeta", static_cast<double>(t));
        fv.set("alpha", static_cast<double>(t));
        run.t.push_back(t);
        run.rows.push_back(std::move(fv));
    }
    run.failure_index = 49;
    const RulLabels labels = build_rul_labels(49, 0);
    const RankingReport report = rank_features({run}, {labels});
    CHECK(report.entries[0].abs_spearman == doctest::Approx(report.entries[1].abs_spearman));
    CHECK(report.entries[0].name == "alpha");
    CHECK(report.entries[1].name == "zeta");
}

TEST_CASE("rolling slope recovers an affine trend") {
    const double m = 0.37;
    std::vector<double> pred(60), raw(60);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred[i] = 1.0 + m * static_cast<double>(i);
        raw[i] = pred[i];
    }
    const auto rows = post_onset_features(pred, raw, 0, 20, 10, 1e9);
    REQUIRE_FALSE(rows.empty());
    for (const auto& row : rows) {
        CHECK(row.rolling_slope == doctest::Approx(m).epsilon(1e-9));
        CHECK(row.exceed_count == 0.0);
    }
    CHECK(rows.front().t == 20);
    CHECK(rows.back().t == 59);
}

TEST_CASE("constant input zeroes slope and variance") {
    const std::vector<double> pred(30, 2.5);
    const auto rows = post_onset_features(pred, pred, 0, 5, 8, 2.0);
    for (const auto& row : rows) {
        CHECK(row.rolling_slope == doctest::Approx(0.0));
        CHECK(row.rolling_variance == doctest::Approx(0.0));
        CHECK(row.rolling_energy == doctest::Approx(2.5 * 2.5));
        CHECK(row.peak_magnitude == doctest::Approx(2.5));
        CHECK(row.exceed_count == doctest::Approx(static_cast<double>(
                                      std::min(8, row.t - 0 + 1))));
        CHECK(row.exceed_margin == doctest::Approx(0.5));
    }
}

TEST_CASE("onset at the last index yields exactly one row") {
    const std::vector<double> pred(25, 1.0);
    const auto rows = post_onset_features(pred, pred, 0, 24, 10, 0.5);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].t == 24);
}

TEST_CASE("offset series emit run-space indices") {
    std::vector<double> pred(20, 1.0);
    const auto rows = post_onset_features(pred, pred, 100, 110, 5, 0.0);
    REQUIRE(rows.size() == 10);
    CHECK(rows.front().t == 110);
    CHECK(rows.back().t == 119);
    CHECK(rows.front().indicator_pred == 1.0);
}
