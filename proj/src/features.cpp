#include "sarnet/features.hpp"

#include "sarnet/error.hpp"
#include "sarnet/fft.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sarnet {

void VibrationWindow::validate() const {
    if (samples.size() < 16) raise(Errc::InvalidWindow, "window needs >= 16 samples");
    if (sample_rate_hz <= 0) raise(Errc::InvalidWindow, "sample rate must be positive");
    if (channel_tag != 'H' && channel_tag != 'V') raise(Errc::InvalidWindow, "channel must be H or V");
}

FeatureVector extract_features(const VibrationWindow& window, int fft_bins) {
    window.validate();
    if (fft_bins < 4) raise(Errc::InvalidConfig, "fft_bins must be >= 4");

    const auto& x = window.samples;
    const double n = static_cast<double>(x.size());

    double sum_sq = 0.0;
    double sum = 0.0;
    double peak = 0.0;
    for (double v : x) {
        sum += v;
        sum_sq += v * v;
        peak = std::max(peak, std::abs(v));
    }
    const double rms = std::sqrt(sum_sq / n);
    if (rms == 0.0) raise(Errc::AllZeroWindow, "RMS is zero; crest factor undefined");

    const double mean = sum / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    // Constant windows have zero central moments; define both shape
    // statistics as 0 there instead of dividing by zero.
    const double skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    const double kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;

    const std::vector<double> mags = one_sided_magnitudes(x);
    const std::size_t n_bins = mags.size(); // N/2 + 1

    // Mean magnitude per equal-width band over the one-sided spectrum.
    std::vector<double> band_sum(static_cast<std::size_t>(fft_bins), 0.0);
    std::vector<int> band_count(static_cast<std::size_t>(fft_bins), 0);
    for (std::size_t k = 0; k < n_bins; ++k) {
        std::size_t b = k * static_cast<std::size_t>(fft_bins) / n_bins;
        band_sum[b] += mags[k];
        band_count[b] += 1;
    }

    // Band powers over [0,1/3), [1/3,2/3), [2/3,1] fractions of Nyquist.
    const double nyq_bin = static_cast<double>(n_bins - 1);
    double low = 0.0, mid = 0.0, high = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
        const double frac = nyq_bin == 0.0 ? 0.0 : static_cast<double>(k) / nyq_bin;
        const double p = mags[k] * mags[k];
        if (frac < 1.0 / 3.0)
            low += p;
        else if (frac < 2.0 / 3.0)
            mid += p;
        else
            high += p;
    }

    const std::string c(1, window.channel_tag);
    FeatureVector fv;
    for (int b = 0; b < fft_bins; ++b) {
        const auto bi = static_cast<std::size_t>(b);
        const double v = band_count[bi] > 0 ? band_sum[bi] / band_count[bi] : 0.0;
        fv.set("FFT_bin_" + std::to_string(b) + "_" + c, v);
    }
    fv.set("RMS_" + c, rms);
    fv.set("Kurtosis_" + c, kurtosis);
    fv.set("Skewness_" + c, skewness);
    fv.set("CrestFactor_" + c, peak / rms);
    fv.set("BandPower_Low_" + c, low);
    fv.set("BandPower_Mid_" + c, mid);
    fv.set("BandPower_High_" + c, high);
    return fv;
}

namespace {

// Mid-ranks (1-based, average rank for ties).
std::vector<double> midranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b, bool& degenerate) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        degenerate = true;
        return 0.0;
    }
    degenerate = false;
    return sab / std::sqrt(saa * sbb);
}

} // namespace

SpearmanResult spearman_abs(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) raise(Errc::LengthMismatch, "series lengths differ");
    if (x.size() < 3) raise(Errc::LengthMismatch, "spearman needs >= 3 points");

    const std::vector<double> rx = midranks(x);
    const std::vector<double> ry = midranks(y);
    SpearmanResult result;
    result.abs_rho = std::abs(pearson(rx, ry, result.constant_series));
    if (result.constant_series) result.abs_rho = 0.0;
    return result;
}

const std::string& RankingReport::top_feature() const {
    if (entries.empty()) raise(Errc::TooFewRows, "empty ranking");
    return entries.front().name;
}

RankingReport rank_features(const std::vector<RunSeries>& runs,
                            const std::vector<RulLabels>& labels) {
    if (runs.empty()) raise(Errc::TooFewRows, "rank_features needs >= 1 run");
    if (runs.size() != labels.size()) raise(Errc::LengthMismatch, "runs/labels count mismatch");

    const auto& names = runs.front().rows.front().names();

    RankingReport report;
    for (const auto& name : names) {
        std::vector<double> xs;
        std::vector<double> ys;
        for (std::size_t r = 0; r < runs.size(); ++r) {
            for (std::size_t i = 0; i < runs[r].size(); ++i) {
                xs.push_back(runs[r].rows[i].at(name));
                ys.push_back(labels[r].at(runs[r].t[i]));
            }
        }
        report.entries.push_back({name, spearman_abs(xs, ys).abs_rho});
    }

    std::sort(report.entries.begin(), report.entries.end(), [](const auto& a, const auto& b) {
        if (a.abs_spearman != b.abs_spearman) return a.abs_spearman > b.abs_spearman;
        return a.name < b.name;
    });
    return report;
}

const std::array<std::string, 9>& PostOnsetFeatureRow::feature_names() {
    static const std::array<std::string, 9> names = {
        "indicator_pred", "indicator_raw",  "rolling_slope",
        "rolling_variance", "rolling_energy", "spectral_slope",
        "peak_magnitude", "exceed_count",   "exceed_margin",
    };
    return names;
}

std::array<double, 9> PostOnsetFeatureRow::feature_values() const {
    return {indicator_pred, indicator_raw,  rolling_slope, rolling_variance, rolling_energy,
            spectral_slope, peak_magnitude, exceed_count,  exceed_margin};
}

namespace {

// Least-squares slope of values against 0..n-1; 0 when n < 2.
double ls_slope(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) return 0.0;
    const double mean_t = (static_cast<double>(n) - 1.0) / 2.0;
    double mean_v = 0.0;
    for (double v : values) mean_v += v;
    mean_v /= static_cast<double>(n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = static_cast<double>(i) - mean_t;
        num += dt * (values[i] - mean_v);
        den += dt * dt;
    }
    return num / den;
}

} // namespace

std::vector<PostOnsetFeatureRow> post_onset_features(std::span<const double> pred,
                                                     std::span<const double> raw,
                                                     int first_index, int onset_index,
                                                     int window, double threshold) {
    if (pred.size() != raw.size()) raise(Errc::LengthMismatch, "pred/raw lengths differ");
    if (pred.empty()) raise(Errc::LengthMismatch, "empty series");
    if (window < 2) raise(Errc::InvalidConfig, "window must be >= 2");
    const int n = static_cast<int>(pred.size());
    const int start_local = onset_index - first_index;
    if (start_local < 0 || start_local >= n)
        raise(Errc::LengthMismatch, "onset index outside series");

    std::vector<PostOnsetFeatureRow> rows;
    rows.reserve(static_cast<std::size_t>(n - start_local));

    for (int i = start_local; i < n; ++i) {
        // Causal window, shrunk to the available history near the start.
        const int w = std::min(window, i + 1);
        const auto win = pred.subspan(static_cast<std::size_t>(i - w + 1), static_cast<std::size_t>(w));

        PostOnsetFeatureRow row;
        row.t = first_index + i;
        row.indicator_pred = pred[static_cast<std::size_t>(i)];
        row.indicator_raw = raw[static_cast<std::size_t>(i)];
        row.rolling_slope = ls_slope(win);

        double mean = 0.0, energy = 0.0, peak = -std::numeric_limits<double>::infinity();
        int exceed = 0;
        double margin = 0.0;
        for (double v : win) {
            mean += v;
            energy += v * v;
            peak = std::max(peak, v);
            if (v > threshold) {
                ++exceed;
                margin = std::max(margin, v - threshold);
            }
        }
        mean /= static_cast<double>(win.size());
        energy /= static_cast<double>(win.size());
        double var = 0.0;
        for (double v : win) var += (v - mean) * (v - mean);
        var /= static_cast<double>(win.size());

        row.rolling_variance = var;
        row.rolling_energy = energy;
        row.peak_magnitude = peak;
        row.exceed_count = static_cast<double>(exceed);
        row.exceed_margin = margin;

        // Slope of log-magnitude against bin index over the window spectrum,
        // DC excluded; a floor keeps exact zeros out of the log.
        const std::vector<double> mags = one_sided_magnitudes(win);
        std::vector<double> log_mags;
        log_mags.reserve(mags.size() > 1 ? mags.size() - 1 : 0);
        for (std::size_t k = 1; k < mags.size(); ++k)
            log_mags.push_back(std::log(std::max(mags[k], 1e-12)));
        row.spectral_slope = ls_slope(log_mags);

        rows.push_back(row);
    }
    return rows;
}

} // namespace sarnet
