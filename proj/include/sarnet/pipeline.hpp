#pragma once

#include "sarnet/dataset.hpp"
#include "sarnet/ensemble.hpp"
#include "sarnet/features.hpp"
#include "sarnet/forecaster.hpp"
#include "sarnet/metrics.hpp"
#include "sarnet/onset.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sarnet {

inline constexpr const char* kSarnetVersion = "0.1.0";

struct PipelineConfig {
    std::string input_dir;  // default run source for the CLI
    std::string output_dir; // default output root for the CLI
    std::vector<std::string> test_run_ids;
    ForecasterConfig forecaster;
    SpikeConfig spike;
    ForestConfig forest;
    GbmConfig gbm;
    BlendMethod blend_method = BlendMethod::Grid;
    bool clip_predictions = true;
    double validation_fraction = 0.2; // per-run temporal tail reserved for the blend
    double forecaster_val_fraction = 0.1;
    int post_onset_window = 10;
    double mape_epsilon = 1e-8;
    std::string mode = "both"; // segment | full | both
    std::map<std::string, double> alpha_overrides; // per-run blend override
    std::uint64_t seed = 0;

    void validate() const;
};

PipelineConfig pipeline_config_from_json_text(const std::string& text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_to_json_text(const PipelineConfig& cfg);

// Stage 1: feature ranking, scaler, and the trained indicator forecaster.
struct ForecastStage {
    RankingReport ranking;
    std::string indicator;
    ScalerParams scaler;
    Forecaster model;
    TrainReport report;
};

ForecastStage fit_forecast_stage(const std::vector<RunSeries>& train_runs,
                                 const PipelineConfig& cfg);

// Persists / restores a trained stage (forecaster.bin + stage.json).
void write_forecast_stage(const ForecastStage& stage, const std::filesystem::path& dir);
ForecastStage load_forecast_stage(const std::filesystem::path& dir);

struct PredictionRow {
    int t = 0;
    double y_true = 0.0;
    double y_pred = 0.0;
};

struct RunEvaluation {
    std::string run_id;
    OnsetResult onset;        // indices local to the forecast series
    int pred_first_index = 0; // run index of the first forecast
    int onset_run_index = -1; // t_s in run coordinates, -1 when fallback
    MetricsReport segment_metrics; // mode tag is "full" when the run fell back
    MetricsReport full_metrics;
    std::vector<PredictionRow> segment_predictions;
    std::vector<PredictionRow> full_predictions;
};

struct ExperimentReport {
    std::string indicator;
    RankingReport ranking;
    TrainReport forecaster_report;
    BlendModel blend_segment;
    BlendModel blend_full;
    std::vector<RunEvaluation> runs;
    double wall_seconds = 0.0;
};

struct ExperimentResult {
    ExperimentReport report;
    ScalerParams scaler;
    Forecaster forecaster;
    EnsembleModel ensemble_segment;
    EnsembleModel ensemble_full;
};

ExperimentResult run_experiment(const std::vector<RunSeries>& train_runs,
                                const std::vector<RunSeries>& test_runs,
                                const PipelineConfig& cfg);

// Same pipeline, reusing an already-trained forecast stage (the stage only
// depends on the training runs and the forecaster config, not on k_sigma or
// the regression heads).
ExperimentResult run_experiment_with_stage(const ForecastStage& stage,
                                           const std::vector<RunSeries>& train_runs,
                                           const std::vector<RunSeries>& test_runs,
                                           const PipelineConfig& cfg);

// Fits the segment-mode and full-mode regression heads on the training
// runs (honoring cfg.mode) without touching any test data.
struct FittedEnsembles {
    EnsembleModel segment;
    EnsembleModel full;
};

FittedEnsembles fit_ensembles(const ForecastStage& stage,
                              const std::vector<RunSeries>& train_runs,
                              const PipelineConfig& cfg);

// Scores test runs against already-trained models. Pass nullptr to skip a
// mode; the matching metrics stay empty.
std::vector<RunEvaluation> evaluate_test_runs(const ForecastStage& stage,
                                              const EnsembleModel* segment_model,
                                              const EnsembleModel* full_model,
                                              const std::vector<RunSeries>& test_runs,
                                              const PipelineConfig& cfg);

void write_experiment_outputs(const ExperimentResult& result, const PipelineConfig& cfg,
                              const std::filesystem::path& out_dir);

enum class HeadKind { Ensemble, ForestOnly, GbmOnly, Linear };

const char* to_string(HeadKind head);

struct AblationRow {
    bool spike_aware = false;
    HeadKind head = HeadKind::Ensemble;
    int n_features = 9;
    int coverage = 0; // test rows entering the regression head
    double validation_mse = 0.0;
    MetricsReport metrics; // pooled over test runs
};

// The {spike-aware on/off} x {ENS, RF, GBM, linear} grid on one dataset and
// one seed, sharing a single trained forecaster.
std::vector<AblationRow> run_ablation(const std::vector<RunSeries>& train_runs,
                                      const std::vector<RunSeries>& test_runs,
                                      const PipelineConfig& cfg);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path);

// Seeded synthetic run-to-failure suite for end-to-end checks.
struct SyntheticSuiteConfig {
    int n_train = 5;
    int n_test = 2;
    int length = 400;
    int onset_min = 190;
    int onset_max = 210;
    double baseline_mean = 1.0;
    double baseline_std = 0.05;
    double growth_rate = 0.02;
    double spike_amplitude = 0.3;
    int spike_burst_len = 8;
    int noise_features = 2;
    std::uint64_t seed = 42;
};

struct SyntheticSuite {
    std::vector<RunSeries> train;
    std::vector<RunSeries> test;
    std::map<std::string, int> true_onsets;
};

SyntheticSuite make_synthetic_suite(const SyntheticSuiteConfig& cfg);

} // namespace sarnet
