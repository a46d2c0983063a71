#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sarnet {

struct SpikeConfig {
    double k_sigma = 2.0;   // threshold sensitivity (2 default, 3 for comparison)
    int d_min = 5;          // minimum consecutive exceedances for a validated run
    int n_min = 5;          // minimum validated spike count before fallback
    // Healthy reference segment [start, end); defaults to the first
    // max(30, 20% of length) points when unset.
    std::optional<std::pair<int, int>> ref_window;
    double hysteresis_fraction = 0.0; // exit threshold = theta - fraction * sigma_ref

    void validate() const;
};

enum class RegressionMode { Segment, Full };

const char* to_string(RegressionMode mode);

struct OnsetResult {
    double threshold = 0.0;
    double sigma_ref = 0.0;
    std::vector<int> validated_spikes; // S_v, ascending
    int n_spike = 0;                   // |S_v|
    std::optional<int> onset_index;    // t_s: first index of earliest validated run
    bool used_fallback = false;
    RegressionMode mode = RegressionMode::Full;
};

// theta = mean(ref) + k * population-std(ref).
double adaptive_threshold(std::span<const double> ref, double k);

// Maximal runs of consecutive strict exceedances; a run is validated iff its
// length >= d_min. Fills threshold, S_v, n_spike, t_s.
OnsetResult validate_spikes(std::span<const double> pred, double threshold, int d_min);

// Applies the weak-evidence fallback: segment mode iff n_spike >= n_min.
OnsetResult apply_fallback(OnsetResult result, std::span<const double> pred, int n_min);

// Full detector: threshold from the reference window, optional hysteresis on
// run continuation, then fallback. With hysteresis enabled, a run stays open
// while values exceed the exit threshold, but S_v only collects indices that
// strictly exceed theta itself.
OnsetResult detect(std::span<const double> pred, const SpikeConfig& cfg);

std::pair<int, int> default_ref_window(std::size_t series_len);

// Structured text record; index_offset shifts reported indices into run
// coordinates when the series was offset (e.g. forecast alignment).
std::string format_onset_record(const OnsetResult& result, const SpikeConfig& cfg,
                                int index_offset = 0);

} // namespace sarnet
