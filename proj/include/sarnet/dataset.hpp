#pragma once

#include "sarnet/feature_vector.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sarnet {

// One run-to-failure record: an ordered feature stream sampled every
// dt_seconds, ending at the failure index.
struct RunSeries {
    std::string run_id;
    double dt_seconds = 60.0;
    std::vector<int> t;                // strictly increasing step indices
    std::vector<FeatureVector> rows;   // parallel to t, shared schema
    int failure_index = 0;             // == t.back()
    std::string condition_tag;

    std::size_t size() const { return t.size(); }
    std::vector<double> feature_series(std::string_view name) const;
    void validate() const;
};

struct CsvSchema {
    std::string time_column = "t";
    std::vector<std::string> feature_columns; // empty = all non-time columns
};

struct LoadedRun {
    RunSeries run;
    std::size_t dropped_rows = 0; // rows removed because of missing values
};

LoadedRun load_csv(const std::filesystem::path& path, const CsvSchema& schema);
void write_run_csv(const RunSeries& run, const std::filesystem::path& path,
                   const std::string& time_column = "t");

// Ground-truth RUL over t = 0..total_length: flat at total_length until the
// first-prediction time, then affine down to 0 at t = total_length.
struct RulLabels {
    std::vector<double> y; // indexed by t, size total_length + 1
    int fpt = 0;
    int total_length = 0;

    double at(int t) const { return y.at(static_cast<std::size_t>(t)); }
};

RulLabels build_rul_labels(int total_length, int fpt);

// Per-feature min/max, fitted on training rows only.
struct ScalerParams {
    std::vector<std::string> names;
    std::vector<double> mins;
    std::vector<double> maxs;
    std::vector<std::uint8_t> degenerate; // max == min

    std::size_t index_of(std::string_view name) const; // throws SchemaMismatch
    bool any_degenerate() const;
};

ScalerParams fit_scaler(const std::vector<FeatureVector>& train_rows);
ScalerParams fit_scaler(const std::vector<RunSeries>& train_runs);

FeatureVector transform_row(const FeatureVector& row, const ScalerParams& params);
std::vector<FeatureVector> transform(const std::vector<FeatureVector>& rows, const ScalerParams& params);
RunSeries transform_run(const RunSeries& run, const ScalerParams& params);
FeatureVector inverse_transform_row(const FeatureVector& row, const ScalerParams& params);

struct SplitResult {
    std::vector<RunSeries> train;
    std::vector<RunSeries> test;
};

// Run-level split: a run is entirely train or entirely test.
SplitResult split_temporal(const std::vector<RunSeries>& runs,
                           const std::vector<std::string>& test_run_ids);

// Synthetic run-to-failure generator used as the end-to-end oracle.
// Indicator model, with e ~ N(0, baseline_std) drawn from noise_seed:
//   t <  onset: baseline_mean + e
//   t >= onset: baseline_mean + e
//               + baseline_mean * (exp(growth_rate * (t - onset)) - 1)
//               + spike_amplitude during bursts of spike_burst_len steps
//                 (first burst starts at the onset, duty cycle 1/2)
struct SynthConfig {
    int length = 400;
    int onset_index = 200;
    double baseline_mean = 1.0;
    double baseline_std = 0.05;
    double growth_rate = 0.02;
    double spike_amplitude = 0.3;
    int spike_burst_len = 8;
    std::uint64_t noise_seed = 1;

    void validate() const;
};

struct SyntheticRun {
    RunSeries run;
    int true_onset = 0;
};

SyntheticRun generate_synthetic(const SynthConfig& cfg,
                                const std::string& run_id = "synthetic",
                                const std::string& indicator_name = "indicator");

// Appends seeded pure-noise feature columns (noise_0, noise_1, ...).
void add_noise_features(RunSeries& run, int count, std::uint64_t seed);

// Sidecar: key-value text carrying the generator config and ground truth.
void write_synth_sidecar(const std::filesystem::path& path, const SynthConfig& cfg, int true_onset);

struct SidecarInfo {
    SynthConfig cfg;
    int true_onset = 0;
};

SidecarInfo read_synth_sidecar(const std::filesystem::path& path);

} // namespace sarnet
