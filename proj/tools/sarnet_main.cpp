// sarnet CLI: synthetic data generation, feature extraction, ranking, staged
// training, onset detection, evaluation, the end-to-end run, and the
// spike-aware/head ablation grid.

#include "sarnet/csv.hpp"
#include "sarnet/dataset.hpp"
#include "sarnet/error.hpp"
#include "sarnet/features.hpp"
#include "sarnet/pipeline.hpp"
#include "sarnet/rng.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace sarnet;

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> k_sigma;
    std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "Pipeline config file (JSON)");
    cmd->add_option("--seed", opts.seed, "Global seed (overrides config)");
    cmd->add_option("--k-sigma", opts.k_sigma, "Threshold sensitivity (overrides config)");
    cmd->add_option("--mode", opts.mode, "Evaluation mode: segment, full or both")
        ->check(CLI::IsMember({"segment", "full", "both"}));
}

PipelineConfig resolve_config(const CommonOptions& opts) {
    PipelineConfig cfg;
    if (!opts.config_path.empty()) cfg = load_pipeline_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.k_sigma) cfg.spike.k_sigma = *opts.k_sigma;
    if (opts.mode) cfg.mode = *opts.mode;
    cfg.validate();
    return cfg;
}

std::vector<RunSeries> load_runs(const std::vector<std::string>& inputs,
                                 const std::string& input_dir) {
    std::vector<fs::path> paths;
    for (const auto& p : inputs) paths.emplace_back(p);
    if (!input_dir.empty()) {
        if (!fs::is_directory(input_dir)) raise(Errc::IoFailure, "not a directory: " + input_dir);
        for (const auto& entry : fs::directory_iterator(input_dir))
            if (entry.path().extension() == ".csv") paths.push_back(entry.path());
        std::sort(paths.begin(), paths.end());
    }
    if (paths.empty()) raise(Errc::InvalidConfig, "no input runs given");

    std::vector<RunSeries> runs;
    for (const auto& path : paths) {
        LoadedRun loaded = load_csv(path, CsvSchema{});
        if (loaded.dropped_rows > 0)
            std::cerr << loaded.run.run_id << ": dropped " << loaded.dropped_rows
                      << " incomplete rows\n";
        runs.push_back(std::move(loaded.run));
    }
    return runs;
}

int cmd_synth(const CommonOptions& common, const std::string& out_dir, int count,
              const SynthConfig& base, int onset_min, int onset_max, int noise_features) {
    const PipelineConfig cfg = resolve_config(common);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) raise(Errc::IoFailure, "cannot create " + out_dir);

    Rng rng(derive_seed(cfg.seed, 7));
    for (int i = 0; i < count; ++i) {
        SynthConfig synth = base;
        if (onset_max > onset_min)
            synth.onset_index = onset_min + static_cast<int>(rng.below(
                                                static_cast<std::uint64_t>(onset_max - onset_min + 1)));
        synth.noise_seed = derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(i));

        const std::string id = "synth_" + std::to_string(i + 1);
        SyntheticRun made = generate_synthetic(synth, id);
        if (noise_features > 0)
            add_noise_features(made.run, noise_features,
                               derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(i)));

        write_run_csv(made.run, fs::path(out_dir) / (id + ".csv"));
        write_synth_sidecar(fs::path(out_dir) / (id + ".meta"), synth, made.true_onset);
    }
    std::cout << "wrote " << count << " synthetic runs to " << out_dir << "\n";
    return 0;
}

int cmd_features(const std::string& input, const std::string& out, int window, int bins) {
    const CsvTable table = read_csv(input);

    std::vector<std::pair<std::string, std::size_t>> channels;
    for (const auto& name : {"H", "V"}) {
        const std::size_t idx = table.column_index(name);
        if (idx != CsvTable::npos) channels.emplace_back(name, idx);
    }
    if (channels.empty()) raise(Errc::MissingColumn, "need an H and/or V column");

    std::vector<std::string> columns{"t"};
    std::vector<std::vector<double>> rows;
    const std::size_t n_windows = table.rows.size() / static_cast<std::size_t>(window);
    if (n_windows == 0) raise(Errc::TooFewRows, "fewer samples than one window");

    for (std::size_t w = 0; w < n_windows; ++w) {
        FeatureVector merged;
        for (const auto& [tag, col] : channels) {
            VibrationWindow win;
            win.channel_tag = tag[0];
            win.samples.reserve(static_cast<std::size_t>(window));
            for (int i = 0; i < window; ++i) {
                const auto& cell = table.rows[w * static_cast<std::size_t>(window) +
                                              static_cast<std::size_t>(i)][col];
                if (!cell) raise(Errc::EmptyAfterCleaning, "missing sample in window");
                win.samples.push_back(*cell);
            }
            const FeatureVector fv = extract_features(win, bins);
            for (std::size_t i = 0; i < fv.size(); ++i) merged.set(fv.names()[i], fv.value(i));
        }
        if (w == 0)
            for (const auto& name : merged.names()) columns.push_back(name);
        std::vector<double> row{static_cast<double>(w)};
        for (double v : merged.values()) row.push_back(v);
        rows.push_back(std::move(row));
    }
    write_csv(out, columns, rows);
    std::cout << "wrote " << rows.size() << " feature rows to " << out << "\n";
    return 0;
}

int cmd_rank(const std::vector<std::string>& inputs, const std::string& input_dir,
             const std::string& out) {
    const std::vector<RunSeries> runs = load_runs(inputs, input_dir);
    std::vector<RulLabels> labels;
    for (const auto& run : runs) labels.push_back(build_rul_labels(run.failure_index, 0));

    const RankingReport report = rank_features(runs, labels);

    std::ostringstream text;
    text << "feature,abs_spearman\n";
    for (const auto& entry : report.entries)
        text << entry.name << ',' << format_double(entry.abs_spearman) << '\n';
    if (!out.empty()) write_text_file(out, text.str());

    std::cout << "rank  feature                        |spearman|\n";
    int rank = 1;
    for (const auto& entry : report.entries) {
        std::printf("%4d  %-30s %.4f\n", rank++, entry.name.c_str(), entry.abs_spearman);
    }
    return 0;
}

int cmd_train_forecaster(const CommonOptions& common, const std::vector<std::string>& inputs,
                         const std::string& input_dir, const std::string& out_dir) {
    const PipelineConfig cfg = resolve_config(common);
    const std::vector<RunSeries> runs = load_runs(inputs, input_dir);

    const ForecastStage stage = fit_forecast_stage(runs, cfg);
    write_forecast_stage(stage, out_dir);

    for (std::size_t epoch = 0; epoch < stage.report.epoch_loss.size(); ++epoch)
        std::cout << "epoch " << epoch + 1 << " loss " << stage.report.epoch_loss[epoch] << "\n";
    if (stage.report.validation_loss)
        std::cout << "validation loss " << *stage.report.validation_loss << "\n";
    std::cout << "indicator " << stage.indicator << "\nstage written to " << out_dir << "\n";
    return 0;
}

int cmd_detect(const CommonOptions& common, const std::string& input, const std::string& column,
               const std::string& out) {
    const PipelineConfig cfg = resolve_config(common);

    const CsvTable table = read_csv(input);
    const std::size_t col = table.column_index(column);
    if (col == CsvTable::npos) raise(Errc::MissingColumn, column + " in " + input);

    std::vector<double> series;
    for (const auto& row : table.rows)
        if (row[col]) series.push_back(*row[col]);
    if (series.empty()) raise(Errc::EmptyAfterCleaning, input);

    const OnsetResult result = detect(series, cfg.spike);
    const std::string record = format_onset_record(result, cfg.spike);
    if (!out.empty()) write_text_file(out, record);
    std::cout << record;
    return 0;
}

int cmd_train_ensemble(const CommonOptions& common, const std::vector<std::string>& inputs,
                       const std::string& input_dir, const std::string& stage_dir,
                       const std::string& out_dir) {
    const PipelineConfig cfg = resolve_config(common);
    const std::vector<RunSeries> runs = load_runs(inputs, input_dir);
    const ForecastStage stage = load_forecast_stage(stage_dir);

    const FittedEnsembles models = fit_ensembles(stage, runs, cfg);
    fs::create_directories(out_dir);
    if (cfg.mode != "full") models.segment.save(fs::path(out_dir) / "ensemble_segment.bin");
    if (cfg.mode != "segment") models.full.save(fs::path(out_dir) / "ensemble_full.bin");
    std::cout << "ensemble models written to " << out_dir << "\n";
    return 0;
}

int cmd_evaluate(const CommonOptions& common, const std::vector<std::string>& inputs,
                 const std::string& input_dir, const std::string& stage_dir,
                 const std::string& out_dir) {
    const PipelineConfig cfg = resolve_config(common);
    const std::vector<RunSeries> runs = load_runs(inputs, input_dir);
    const ForecastStage stage = load_forecast_stage(stage_dir);

    EnsembleModel segment_model;
    EnsembleModel full_model;
    const bool want_segment = cfg.mode != "full";
    const bool want_full = cfg.mode != "segment";
    if (want_segment)
        segment_model = EnsembleModel::load(fs::path(stage_dir) / "ensemble_segment.bin");
    if (want_full) full_model = EnsembleModel::load(fs::path(stage_dir) / "ensemble_full.bin");

    ExperimentResult result{ExperimentReport{}, stage.scaler, stage.model, segment_model,
                            full_model};
    result.report.indicator = stage.indicator;
    result.report.ranking = stage.ranking;
    result.report.blend_segment = segment_model.blend;
    result.report.blend_full = full_model.blend;
    result.report.runs = evaluate_test_runs(stage, want_segment ? &segment_model : nullptr,
                                            want_full ? &full_model : nullptr, runs, cfg);
    write_experiment_outputs(result, cfg, out_dir);

    for (const auto& eval : result.report.runs) {
        if (want_segment)
            std::printf("%s segment rmse %.6f r2 %.4f\n", eval.run_id.c_str(),
                        eval.segment_metrics.rmse, eval.segment_metrics.r2);
        if (want_full)
            std::printf("%s full    rmse %.6f r2 %.4f\n", eval.run_id.c_str(),
                        eval.full_metrics.rmse, eval.full_metrics.r2);
    }
    return 0;
}

void print_run_summary(const ExperimentResult& result, const PipelineConfig& cfg) {
    for (const auto& eval : result.report.runs) {
        if (cfg.mode != "full")
            std::printf("%-10s segment rmse %.6f mae %.6f r2 %.4f (%s%s)\n", eval.run_id.c_str(),
                        eval.segment_metrics.rmse, eval.segment_metrics.mae,
                        eval.segment_metrics.r2, eval.segment_metrics.mode.c_str(),
                        eval.segment_metrics.mode == "full" ? ", fallback" : "");
        if (cfg.mode != "segment")
            std::printf("%-10s full    rmse %.6f mae %.6f r2 %.4f\n", eval.run_id.c_str(),
                        eval.full_metrics.rmse, eval.full_metrics.mae, eval.full_metrics.r2);
    }
}

int cmd_run(const CommonOptions& common, const std::vector<std::string>& inputs,
            std::string input_dir, bool synthetic,
            const std::vector<std::string>& test_ids_flag, std::string out_dir) {
    PipelineConfig cfg = resolve_config(common);
    if (!test_ids_flag.empty()) cfg.test_run_ids = test_ids_flag;
    if (input_dir.empty() && inputs.empty()) input_dir = cfg.input_dir;
    if (out_dir.empty()) out_dir = cfg.output_dir.empty() ? "out" : cfg.output_dir;

    std::vector<RunSeries> train_runs;
    std::vector<RunSeries> test_runs;
    if (synthetic) {
        SyntheticSuiteConfig suite_cfg;
        suite_cfg.seed = cfg.seed;
        SyntheticSuite suite = make_synthetic_suite(suite_cfg);
        train_runs = std::move(suite.train);
        test_runs = std::move(suite.test);
    } else {
        const std::vector<RunSeries> runs = load_runs(inputs, input_dir);
        if (cfg.test_run_ids.empty())
            raise(Errc::InvalidConfig, "test_run_ids required (config or --test-runs)");
        SplitResult split = split_temporal(runs, cfg.test_run_ids);
        train_runs = std::move(split.train);
        test_runs = std::move(split.test);
    }

    const ExperimentResult result = run_experiment(train_runs, test_runs, cfg);
    write_experiment_outputs(result, cfg, out_dir);
    print_run_summary(result, cfg);
    std::cout << "outputs written to " << out_dir << "\n";
    return 0;
}

int cmd_ablate(const CommonOptions& common, const std::vector<std::string>& inputs,
               std::string input_dir, bool synthetic,
               const std::vector<std::string>& test_ids_flag, const std::string& out) {
    PipelineConfig cfg = resolve_config(common);
    if (!test_ids_flag.empty()) cfg.test_run_ids = test_ids_flag;
    if (input_dir.empty() && inputs.empty()) input_dir = cfg.input_dir;

    std::vector<RunSeries> train_runs;
    std::vector<RunSeries> test_runs;
    if (synthetic) {
        SyntheticSuiteConfig suite_cfg;
        suite_cfg.seed = cfg.seed;
        SyntheticSuite suite = make_synthetic_suite(suite_cfg);
        train_runs = std::move(suite.train);
        test_runs = std::move(suite.test);
    } else {
        const std::vector<RunSeries> runs = load_runs(inputs, input_dir);
        if (cfg.test_run_ids.empty())
            raise(Errc::InvalidConfig, "test_run_ids required (config or --test-runs)");
        SplitResult split = split_temporal(runs, cfg.test_run_ids);
        train_runs = std::move(split.train);
        test_runs = std::move(split.test);
    }

    const std::vector<AblationRow> table = run_ablation(train_runs, test_runs, cfg);
    if (!out.empty()) write_ablation_csv(table, out);

    std::printf("%-6s %-7s %9s %9s %9s %9s %9s\n", "spike", "learner", "rmse", "mae", "r2",
                "coverage", "nfeat");
    for (const auto& row : table)
        std::printf("%-6s %-7s %9.6f %9.6f %9.4f %9d %9d\n", row.spike_aware ? "on" : "off",
                    to_string(row.head), row.metrics.rmse, row.metrics.mae, row.metrics.r2,
                    row.coverage, row.n_features);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spike-aware remaining-useful-life pipeline"};
    app.require_subcommand(1);

    CommonOptions common;

    // synth
    auto* synth = app.add_subcommand("synth", "Generate synthetic run-to-failure CSVs");
    add_common(synth, common);
    std::string synth_out = "runs";
    int synth_count = 3;
    SynthConfig synth_base;
    int onset_min = 160, onset_max = 240, synth_noise = 2;
    synth->add_option("--out-dir", synth_out, "Output directory");
    synth->add_option("--count", synth_count, "Number of runs");
    synth->add_option("--length", synth_base.length, "Run length");
    synth->add_option("--onset-min", onset_min, "Earliest onset index");
    synth->add_option("--onset-max", onset_max, "Latest onset index");
    synth->add_option("--baseline-mean", synth_base.baseline_mean, "Healthy mean");
    synth->add_option("--baseline-std", synth_base.baseline_std, "Healthy noise std");
    synth->add_option("--growth-rate", synth_base.growth_rate, "Post-onset growth rate");
    synth->add_option("--spike-amplitude", synth_base.spike_amplitude, "Burst amplitude");
    synth->add_option("--burst-len", synth_base.spike_burst_len, "Burst length");
    synth->add_option("--noise-features", synth_noise, "Extra pure-noise feature columns");

    // features
    auto* features = app.add_subcommand("features", "Extract window features from waveform CSV");
    std::string feat_in, feat_out = "features.csv";
    int feat_window = 4096, feat_bins = 8;
    features->add_option("--input", feat_in, "Waveform CSV with H and/or V columns")->required();
    features->add_option("--out", feat_out, "Output feature CSV");
    features->add_option("--window", feat_window, "Samples per window");
    features->add_option("--bins", feat_bins, "FFT band count");

    // rank
    auto* rank = app.add_subcommand("rank", "Rank features by |Spearman| against RUL");
    std::vector<std::string> rank_inputs;
    std::string rank_dir, rank_out;
    rank->add_option("--inputs", rank_inputs, "Run CSV files");
    rank->add_option("--input-dir", rank_dir, "Directory of run CSVs");
    rank->add_option("--out", rank_out, "Ranking CSV output");

    // train-forecaster
    auto* trainf = app.add_subcommand("train-forecaster", "Train the indicator forecaster");
    add_common(trainf, common);
    std::vector<std::string> trainf_inputs;
    std::string trainf_dir, trainf_out = "stage";
    trainf->add_option("--inputs", trainf_inputs, "Training run CSVs");
    trainf->add_option("--input-dir", trainf_dir, "Directory of training run CSVs");
    trainf->add_option("--out-dir", trainf_out, "Stage output directory");

    // detect
    auto* det = app.add_subcommand("detect", "Detect degradation onset in a series CSV");
    add_common(det, common);
    std::string det_in, det_col = "value", det_out;
    det->add_option("--input", det_in, "CSV holding the series")->required();
    det->add_option("--column", det_col, "Series column name");
    det->add_option("--out", det_out, "Write the onset record here");

    // train-ensemble
    auto* traine = app.add_subcommand("train-ensemble", "Fit the RUL regression heads");
    add_common(traine, common);
    std::vector<std::string> traine_inputs;
    std::string traine_dir, traine_stage = "stage", traine_out = "stage";
    traine->add_option("--inputs", traine_inputs, "Training run CSVs");
    traine->add_option("--input-dir", traine_dir, "Directory of training run CSVs");
    traine->add_option("--stage-dir", traine_stage, "Trained forecaster stage directory");
    traine->add_option("--out-dir", traine_out, "Model output directory");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score test runs with trained models");
    add_common(evaluate, common);
    std::vector<std::string> eval_inputs;
    std::string eval_dir, eval_stage = "stage", eval_out = "eval";
    evaluate->add_option("--inputs", eval_inputs, "Test run CSVs");
    evaluate->add_option("--input-dir", eval_dir, "Directory of test run CSVs");
    evaluate->add_option("--stage-dir", eval_stage, "Directory with stage + ensemble models");
    evaluate->add_option("--out-dir", eval_out, "Output directory");

    // run
    auto* run = app.add_subcommand("run", "End-to-end experiment");
    add_common(run, common);
    std::vector<std::string> run_inputs, run_test_ids;
    std::string run_dir, run_out;
    bool run_synth = false;
    run->add_option("--inputs", run_inputs, "Run CSVs (train + test)");
    run->add_option("--input-dir", run_dir, "Directory of run CSVs");
    run->add_flag("--synthetic", run_synth, "Use the built-in synthetic suite");
    run->add_option("--test-runs", run_test_ids, "Run ids for the test partition");
    run->add_option("--out-dir", run_out, "Output directory");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Spike-aware x regression-head ablation grid");
    add_common(ablate, common);
    std::vector<std::string> abl_inputs, abl_test_ids;
    std::string abl_dir, abl_out = "ablation.csv";
    bool abl_synth = false;
    ablate->add_option("--inputs", abl_inputs, "Run CSVs (train + test)");
    ablate->add_option("--input-dir", abl_dir, "Directory of run CSVs");
    ablate->add_flag("--synthetic", abl_synth, "Use the built-in synthetic suite");
    ablate->add_option("--test-runs", abl_test_ids, "Run ids for the test partition");
    ablate->add_option("--out", abl_out, "Ablation CSV output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return cmd_synth(common, synth_out, synth_count, synth_base, onset_min, onset_max,
                             synth_noise);
        if (features->parsed()) return cmd_features(feat_in, feat_out, feat_window, feat_bins);
        if (rank->parsed()) return cmd_rank(rank_inputs, rank_dir, rank_out);
        if (trainf->parsed())
            return cmd_train_forecaster(common, trainf_inputs, trainf_dir, trainf_out);
        if (det->parsed()) return cmd_detect(common, det_in, det_col, det_out);
        if (traine->parsed())
            return cmd_train_ensemble(common, traine_inputs, traine_dir, traine_stage, traine_out);
        if (evaluate->parsed())
            return cmd_evaluate(common, eval_inputs, eval_dir, eval_stage, eval_out);
        if (run->parsed())
            return cmd_run(common, run_inputs, run_dir, run_synth, run_test_ids, run_out);
        if (ablate->parsed())
            return cmd_ablate(common, abl_inputs, abl_dir, abl_synth, abl_test_ids, abl_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
