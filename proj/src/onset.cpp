#include "sarnet/onset.hpp"

#include "sarnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sarnet {

void SpikeConfig::validate() const {
    if (k_sigma <= 0.0) raise(Errc::InvalidConfig, "k_sigma must be positive");
    if (d_min < 1) raise(Errc::InvalidConfig, "d_min must be >= 1");
    if (n_min < 1) raise(Errc::InvalidConfig, "n_min must be >= 1");
    if (hysteresis_fraction < 0.0) raise(Errc::InvalidConfig, "hysteresis_fraction must be >= 0");
    if (ref_window && ref_window->first >= ref_window->second)
        raise(Errc::InvalidConfig, "empty reference window");
}

const char* to_string(RegressionMode mode) {
    return mode == RegressionMode::Segment ? "segment" : "full";
}

double adaptive_threshold(std::span<const double> ref, double k) {
    if (ref.size() < 2) raise(Errc::RefTooShort, "reference window needs >= 2 points");
    double mean = 0.0;
    for (double v : ref) mean += v;
    mean /= static_cast<double>(ref.size());
    double var = 0.0;
    for (double v : ref) var += (v - mean) * (v - mean);
    var /= static_cast<double>(ref.size()); // population variance
    return mean + k * std::sqrt(var);
}

namespace {

struct Run {
    int start;
    int length;
};

// Scans maximal exceedance runs. Entry requires value > theta; once open, a
// run continues while value > exit_threshold. S_v collects only indices with
// value > theta inside validated runs.
OnsetResult scan_runs(std::span<const double> pred, double theta, double exit_threshold,
                      int d_min) {
    OnsetResult result;
    result.threshold = theta;

    std::vector<Run> runs;
    int open_start = -1;
    for (int i = 0; i < static_cast<int>(pred.size()); ++i) {
        if (open_start < 0) {
            if (pred[static_cast<std::size_t>(i)] > theta) open_start = i;
        } else if (!(pred[static_cast<std::size_t>(i)] > exit_threshold)) {
            runs.push_back({open_start, i - open_start});
            open_start = -1;
        }
    }
    if (open_start >= 0) runs.push_back({open_start, static_cast<int>(pred.size()) - open_start});

    for (const Run& run : runs) {
        if (run.length < d_min) continue;
        if (!result.onset_index) result.onset_index = run.start;
        for (int i = run.start; i < run.start + run.length; ++i)
            if (pred[static_cast<std::size_t>(i)] > theta) result.validated_spikes.push_back(i);
    }
    result.n_spike = static_cast<int>(result.validated_spikes.size());
    return result;
}

} // namespace

OnsetResult validate_spikes(std::span<const double> pred, double threshold, int d_min) {
    if (pred.empty()) raise(Errc::LengthMismatch, "empty prediction series");
    if (d_min < 1) raise(Errc::InvalidConfig, "d_min must be >= 1");
    return scan_runs(pred, threshold, threshold, d_min);
}

OnsetResult apply_fallback(OnsetResult result, std::span<const double> pred, int n_min) {
    if (pred.empty()) raise(Errc::LengthMismatch, "empty prediction series");
    result.used_fallback = result.n_spike < n_min;
    result.mode = result.used_fallback ? RegressionMode::Full : RegressionMode::Segment;
    return result;
}

std::pair<int, int> default_ref_window(std::size_t series_len) {
    const int len = static_cast<int>(series_len);
    int ref = std::max(30, (len + 4) / 5); // 20%, rounded up
    ref = std::min(ref, len);
    return {0, ref};
}

OnsetResult detect(std::span<const double> pred, const SpikeConfig& cfg) {
    cfg.validate();
    if (pred.empty()) raise(Errc::LengthMismatch, "empty prediction series");

    auto [ref_begin, ref_end] = cfg.ref_window ? *cfg.ref_window : default_ref_window(pred.size());
    if (ref_begin < 0 || ref_end > static_cast<int>(pred.size()) || ref_begin >= ref_end)
        raise(Errc::InvalidConfig, "reference window outside series");

    const std::span<const double> ref = pred.subspan(static_cast<std::size_t>(ref_begin),
                                                     static_cast<std::size_t>(ref_end - ref_begin));
    const double theta = adaptive_threshold(ref, cfg.k_sigma);

    double mean = 0.0;
    for (double v : ref) mean += v;
    mean /= static_cast<double>(ref.size());
    double var = 0.0;
    for (double v : ref) var += (v - mean) * (v - mean);
    const double sigma_ref = std::sqrt(var / static_cast<double>(ref.size()));

    const double exit_threshold = theta - cfg.hysteresis_fraction * sigma_ref;
    OnsetResult result = scan_runs(pred, theta, exit_threshold, cfg.d_min);
    result.sigma_ref = sigma_ref;
    return apply_fallback(std::move(result), pred, cfg.n_min);
}

std::string format_onset_record(const OnsetResult& result, const SpikeConfig& cfg,
                                int index_offset) {
    std::ostringstream out;
    out << "threshold = " << result.threshold << '\n'
        << "k_sigma = " << cfg.k_sigma << '\n'
        << "d_min = " << cfg.d_min << '\n'
        << "n_min = " << cfg.n_min << '\n'
        << "n_spike = " << result.n_spike << '\n'
        << "t_s = " << (result.onset_index ? std::to_string(*result.onset_index + index_offset)
                                           : std::string("none"))
        << '\n'
        << "used_fallback = " << (result.used_fallback ? "true" : "false") << '\n'
        << "mode = " << to_string(result.mode) << '\n';

    out << "spike_ranges =";
    const auto& s = result.validated_spikes;
    for (std::size_t i = 0; i < s.size();) {
        std::size_t j = i;
        while (j + 1 < s.size() && s[j + 1] == s[j] + 1) ++j;
        out << ' ' << s[i] + index_offset << '-' << s[j] + index_offset;
        i = j + 1;
    }
    out << '\n';
    return out.str();
}

} // namespace sarnet
