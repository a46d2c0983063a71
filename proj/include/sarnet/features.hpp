#pragma once

#include "sarnet/dataset.hpp"
#include "sarnet/feature_vector.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace sarnet {

// One vibration snapshot from a single accelerometer channel.
struct VibrationWindow {
    std::vector<double> samples; // length >= 16; zero-padded to pow2 for FFT
    double sample_rate_hz = 25600.0;
    char channel_tag = 'H'; // 'H' or 'V'

    void validate() const;
};

// Window-level features: FFT_bin_b_C (mean magnitude over B equal-width
// one-sided bands), RMS_C, Kurtosis_C (raw m4/m2^2), Skewness_C,
// CrestFactor_C, and BandPower_{Low,Mid,High}_C (sum of squared magnitudes
// over the low/mid/high thirds of Nyquist).
FeatureVector extract_features(const VibrationWindow& window, int fft_bins = 8);

struct SpearmanResult {
    double abs_rho = 0.0;
    bool constant_series = false; // zero rank variance in x or y
};

// |Pearson correlation of mid-ranks| (average ranks on ties).
SpearmanResult spearman_abs(std::span<const double> x, std::span<const double> y);

struct RankingEntry {
    std::string name;
    double abs_spearman = 0.0;
};

struct RankingReport {
    std::vector<RankingEntry> entries; // descending |rho|, ties lexicographic
    std::string target = "RUL";

    const std::string& top_feature() const;
};

// Ranks every feature by |Spearman| against run RUL labels, concatenated
// across runs. labels[i] belongs to runs[i].
RankingReport rank_features(const std::vector<RunSeries>& runs,
                            const std::vector<RulLabels>& labels);

// The engineered regression features for one post-onset time step. All
// rolling statistics are causal over the trailing `window` points of the
// forecast series, shrinking near the start of the available history.
struct PostOnsetFeatureRow {
    int t = 0; // run-space index
    double indicator_pred = 0.0;
    double indicator_raw = 0.0;
    double rolling_slope = 0.0;
    double rolling_variance = 0.0;
    double rolling_energy = 0.0;
    double spectral_slope = 0.0;
    double peak_magnitude = 0.0;
    double exceed_count = 0.0;  // window points strictly above the threshold
    double exceed_margin = 0.0; // max(value - threshold) over window, >= 0

    static const std::array<std::string, 9>& feature_names();
    std::array<double, 9> feature_values() const;
};

// pred[i] and raw[i] refer to run index first_index + i. Rows are emitted
// for run indices >= onset_index only.
std::vector<PostOnsetFeatureRow> post_onset_features(std::span<const double> pred,
                                                     std::span<const double> raw,
                                                     int first_index, int onset_index,
                                                     int window, double threshold);

} // namespace sarnet
