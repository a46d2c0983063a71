#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sarnet/csv.hpp"
#include "sarnet/error.hpp"
#include "sarnet/metrics.hpp"
#include "sarnet/pipeline.hpp"
#include "sarnet/rng.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace sarnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        const auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
        path = fs::temp_directory_path() / ("sarnet_" + tag + "_" + std::to_string(tick));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

// Small configs keep the unit-level integration fast; the acceptance suite
// exercises the full-size defaults.
PipelineConfig fast_config(std::uint64_t seed) {
    PipelineConfig cfg;
    cfg.seed = seed;
    cfg.forecaster.epochs = 4;
    cfg.forecaster.channels = {8, 8};
    cfg.forest.n_trees = 25;
    cfg.gbm.n_rounds = 60;
    return cfg;
}

SyntheticSuiteConfig small_suite(std::uint64_t seed) {
    SyntheticSuiteConfig cfg;
    cfg.n_train = 3;
    cfg.n_test = 1;
    cfg.length = 260;
    cfg.onset_min = 120;
    cfg.onset_max = 160;
    cfg.seed = seed;
    return cfg;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("synthetic suite generation is deterministic") {
    const SyntheticSuite a = make_synthetic_suite(small_suite(5));
    const SyntheticSuite b = make_synthetic_suite(small_suite(5));
    REQUIRE(a.train.size() == 3);
    REQUIRE(a.test.size() == 1);
    CHECK(a.true_onsets == b.true_onsets);
    for (std::size_t r = 0; r < a.train.size(); ++r)
        for (std::size_t i = 0; i < a.train[r].size(); ++i)
            CHECK(a.train[r].rows[i].values() == b.train[r].rows[i].values());
}

TEST_CASE("end-to-end experiment on a small synthetic suite") {
    const SyntheticSuite suite = make_synthetic_suite(small_suite(7));
    const PipelineConfig cfg = fast_config(7);

    const ExperimentResult result = run_experiment(suite.train, suite.test, cfg);
    REQUIRE(result.report.runs.size() == 1);
    const RunEvaluation& eval = result.report.runs.front();

    CHECK(result.report.indicator == "indicator");
    CHECK(eval.segment_metrics.n_points >= 2);
    CHECK(eval.full_metrics.n_points > eval.segment_metrics.n_points);
    CHECK(eval.segment_metrics.mode == "segment");
    CHECK(eval.onset_run_index >= 0);

    // The detected onset should sit near the injected one.
    const int true_onset = suite.true_onsets.at(eval.run_id);
    CHECK(eval.onset_run_index >= true_onset - 5);
    CHECK(eval.onset_run_index <= true_onset + 40);
}

TEST_CASE("healthy test run falls back to the full sequence and is still scored") {
    SyntheticSuite suite = make_synthetic_suite(small_suite(11));

    // Replace the test run with a healthy one: no growth, no bursts.
    SynthConfig healthy;
    healthy.length = 260;
    healthy.onset_index = 258;
    healthy.growth_rate = 0.0;
    healthy.spike_amplitude = 0.0;
    healthy.baseline_std = 0.05;
    healthy.noise_seed = 314;
    RunSeries run = generate_synthetic(healthy, suite.test.front().run_id).run;
    add_noise_features(run, 2, 99);
    suite.test.front() = std::move(run);

    const ExperimentResult result = run_experiment(suite.train, suite.test, fast_config(11));
    const RunEvaluation& eval = result.report.runs.front();
    CHECK(eval.onset.used_fallback);
    CHECK(eval.segment_metrics.mode == "full");
    CHECK(eval.segment_metrics.n_points >= 2);
    CHECK(std::isfinite(eval.segment_metrics.rmse));
}

TEST_CASE("experiment outputs are reproducible and recomputable") {
    const SyntheticSuite suite = make_synthetic_suite(small_suite(13));
    const PipelineConfig cfg = fast_config(13);

    TempDir dir_a("out_a");
    TempDir dir_b("out_b");
    write_experiment_outputs(run_experiment(suite.train, suite.test, cfg), cfg, dir_a.path);
    write_experiment_outputs(run_experiment(suite.train, suite.test, cfg), cfg, dir_b.path);

    CHECK_FALSE(fs::exists(dir_a.path / "_INCOMPLETE"));

    const std::string run_id = suite.test.front().run_id;
    const std::vector<std::string> names{
        "metrics.csv", "ranking.csv", "predictions_" + run_id + "_segment.csv",
        "predictions_" + run_id + "_full.csv", "onset_" + run_id + ".txt"};
    for (const std::string& name : names) {
        CAPTURE(name);
        const std::string a = slurp(dir_a.path / name);
        CHECK_FALSE(a.empty());
        CHECK(a == slurp(dir_b.path / name)); // byte-identical
    }

    // Metrics rows must be recomputable from the persisted predictions.
    const ExperimentResult result = run_experiment(suite.train, suite.test, cfg);
    const CsvTable preds = read_csv(dir_a.path / ("predictions_" + run_id + "_segment.csv"));
    std::vector<double> y, y_hat;
    for (const auto& row : preds.rows) {
        y.push_back(*row[1]);
        y_hat.push_back(*row[2]);
    }
    const MetricsReport recomputed = compute_metrics(y, y_hat, "segment", cfg.mape_epsilon);
    CHECK(recomputed.rmse ==
          doctest::Approx(result.report.runs.front().segment_metrics.rmse).epsilon(1e-12));
    CHECK(recomputed.r2 ==
          doctest::Approx(result.report.runs.front().segment_metrics.r2).epsilon(1e-12));
}

TEST_CASE("stage round-trips through its files") {
    const SyntheticSuite suite = make_synthetic_suite(small_suite(17));
    const PipelineConfig cfg = fast_config(17);
    const ForecastStage stage = fit_forecast_stage(suite.train, cfg);

    TempDir dir("stage");
    write_forecast_stage(stage, dir.path);
    const ForecastStage loaded = load_forecast_stage(dir.path);

    CHECK(loaded.indicator == stage.indicator);
    CHECK(loaded.scaler.mins == stage.scaler.mins);
    CHECK(loaded.scaler.maxs == stage.scaler.maxs);
    CHECK(loaded.model.parameters() == stage.model.parameters());
    CHECK(loaded.ranking.entries.size() == stage.ranking.entries.size());

    // Evaluating with the restored stage matches the in-memory one.
    const ExperimentResult a = run_experiment_with_stage(stage, suite.train, suite.test, cfg);
    const ExperimentResult b = run_experiment_with_stage(loaded, suite.train, suite.test, cfg);
    CHECK(a.report.runs.front().segment_metrics.rmse ==
          b.report.runs.front().segment_metrics.rmse);
}

TEST_CASE("ablation grid shape and coverage ordering") {
    const SyntheticSuite suite = make_synthetic_suite(small_suite(19));
    const PipelineConfig cfg = fast_config(19);
    const std::vector<AblationRow> table = run_ablation(suite.train, suite.test, cfg);

    REQUIRE(table.size() == 8);
    int spike_rows = 0;
    for (const auto& row : table) spike_rows += row.spike_aware ? 1 : 0;
    CHECK(spike_rows == 4);

    // Spike-aware rows use strictly fewer windows than full-length rows.
    int spike_cov = -1, full_cov = -1;
    for (const auto& row : table)
        (row.spike_aware ? spike_cov : full_cov) = row.coverage;
    CHECK(spike_cov < full_cov);

    for (const auto& row : table) {
        if (row.head == HeadKind::Linear) CHECK(row.n_features == 1);
        else CHECK(row.n_features == 9);
    }

    // Blend optimality: the ensemble row never loses to the worse expert
    // on validation MSE.
    for (const bool spike : {true, false}) {
        double ens = 0.0, rf = 0.0, gbm = 0.0;
        for (const auto& row : table) {
            if (row.spike_aware != spike) continue;
            if (row.head == HeadKind::Ensemble) ens = row.validation_mse;
            if (row.head == HeadKind::ForestOnly) rf = row.validation_mse;
            if (row.head == HeadKind::GbmOnly) gbm = row.validation_mse;
        }
        CHECK(ens <= std::max(rf, gbm) + 1e-12);
        CHECK(ens <= std::min(rf, gbm) + 1e-12);
    }

    TempDir dir("ablation");
    write_ablation_csv(table, dir.path / "ablation.csv");
    const std::string text = slurp(dir.path / "ablation.csv");
    CHECK(text.find("ENS") != std::string::npos);
    CHECK(text.find("Linear") != std::string::npos);
}

TEST_CASE("config json round trip and validation") {
    PipelineConfig cfg;
    cfg.seed = 99;
    cfg.spike.k_sigma = 3.0;
    cfg.forecaster.channels = {8, 4};
    cfg.alpha_overrides["test_1"] = 0.25;
    cfg.blend_method = BlendMethod::Ridge;

    const std::string text = pipeline_config_to_json_text(cfg);
    const PipelineConfig parsed = pipeline_config_from_json_text(text);
    CHECK(parsed.seed == 99);
    CHECK(parsed.spike.k_sigma == 3.0);
    CHECK(parsed.forecaster.channels == std::vector<int>{8, 4});
    CHECK(parsed.alpha_overrides.at("test_1") == 0.25);
    CHECK(parsed.blend_method == BlendMethod::Ridge);

    try {
        pipeline_config_from_json_text(R"({"sneaky_key": 1})");
        FAIL("expected InvalidConfig");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidConfig);
        CHECK(e.exit_code() == 2);
    }

    try {
        pipeline_config_from_json_text(R"({"mode": "sideways"})");
        FAIL("expected InvalidConfig");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidConfig);
    }
}

TEST_CASE("alpha override changes only the chosen run") {
    const SyntheticSuiteConfig suite_cfg = [] {
        SyntheticSuiteConfig c = small_suite(23);
        c.n_test = 2;
        return c;
    }();
    const SyntheticSuite suite = make_synthetic_suite(suite_cfg);

    PipelineConfig cfg = fast_config(23);
    const ForecastStage stage = fit_forecast_stage(suite.train, cfg);
    const ExperimentResult base = run_experiment_with_stage(stage, suite.train, suite.test, cfg);

    cfg.alpha_overrides[suite.test[0].run_id] = 0.0;
    const ExperimentResult forced = run_experiment_with_stage(stage, suite.train, suite.test, cfg);

    CHECK(forced.report.runs[1].segment_metrics.rmse ==
          base.report.runs[1].segment_metrics.rmse);
}
