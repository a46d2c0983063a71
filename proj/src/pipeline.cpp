#include "sarnet/pipeline.hpp"

#include "sarnet/csv.hpp"
#include "sarnet/error.hpp"
#include "sarnet/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace sarnet {

using nlohmann::json;

void PipelineConfig::validate() const {
    forecaster.validate();
    spike.validate();
    if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
        raise(Errc::InvalidConfig, "validation_fraction must be in (0, 1)");
    if (forecaster_val_fraction < 0.0 || forecaster_val_fraction >= 1.0)
        raise(Errc::InvalidConfig, "forecaster_val_fraction must be in [0, 1)");
    if (post_onset_window < 2) raise(Errc::InvalidConfig, "post_onset_window must be >= 2");
    if (mape_epsilon <= 0.0) raise(Errc::InvalidConfig, "mape_epsilon must be positive");
    if (mode != "segment" && mode != "full" && mode != "both")
        raise(Errc::InvalidConfig, "mode must be segment, full or both");
}

namespace {

// All stage seeds are derived from the single global seed.
struct ResolvedSeeds {
    std::uint64_t forecaster;
    std::uint64_t forest;
    std::uint64_t gbm;
};

ResolvedSeeds resolve_seeds(std::uint64_t seed) {
    return {derive_seed(seed, 11), derive_seed(seed, 12), derive_seed(seed, 13)};
}

std::vector<double> normalized_indicator(const RunSeries& run, const ScalerParams& scaler,
                                         const std::string& indicator) {
    const std::size_t p = scaler.index_of(indicator);
    const double span = scaler.maxs[p] - scaler.mins[p];
    std::vector<double> out;
    out.reserve(run.size());
    for (const auto& row : run.rows) {
        const double v = row.at(indicator);
        out.push_back(scaler.degenerate[p] ? 0.0 : (v - scaler.mins[p]) / span);
    }
    return out;
}

SpikeConfig resolve_spike_config(const SpikeConfig& spike, std::size_t run_len,
                                 std::size_t pred_len) {
    SpikeConfig cfg = spike;
    if (!cfg.ref_window) {
        // First max(30, 20% of run length) forecast steps, clamped.
        int ref = std::max(30, (static_cast<int>(run_len) + 4) / 5);
        ref = std::min(ref, static_cast<int>(pred_len));
        cfg.ref_window = {0, ref};
    }
    return cfg;
}

// One run's regression rows: engineered features plus normalized RUL labels,
// following the per-run fallback rule when spike_aware is on.
struct RunRows {
    std::vector<int> t; // run-space time values
    Matrix x;
    std::vector<double> y;
    OnsetResult onset;
    int pred_first_index = 0; // run-space time of the first forecast
    int onset_run_index = -1; // run-space onset, -1 if none/fallback
    bool segment_input = false;
};

RunRows build_run_rows(const RunSeries& run, const ForecastStage& stage,
                       const PipelineConfig& cfg, bool spike_aware) {
    const std::vector<double> z = normalized_indicator(run, stage.scaler, stage.indicator);
    const PredictedSeries pred = stage.model.predict_sequence(z);
    const int first_pos = pred.first_index;
    const int n_pos = static_cast<int>(run.size());

    RunRows out;
    out.pred_first_index = run.t[static_cast<std::size_t>(first_pos)];

    const SpikeConfig spike = resolve_spike_config(cfg.spike, run.size(), pred.values.size());
    out.onset = detect(pred.values, spike);

    int start_pos = first_pos;
    if (out.onset.mode == RegressionMode::Segment) {
        const int onset_pos = first_pos + *out.onset.onset_index;
        const int onset_t = run.t[static_cast<std::size_t>(onset_pos)];
        if (onset_t < run.failure_index) {
            out.onset_run_index = onset_t;
            if (spike_aware) {
                start_pos = onset_pos;
                out.segment_input = true;
            }
        }
    }

    const int label_origin = run.t[static_cast<std::size_t>(start_pos)];
    const std::span<const double> raw(z.data() + first_pos,
                                      static_cast<std::size_t>(n_pos - first_pos));
    const auto rows = post_onset_features(pred.values, raw, first_pos, start_pos,
                                          cfg.post_onset_window, out.onset.threshold);

    for (const auto& row : rows) {
        const int t_val = run.t[static_cast<std::size_t>(row.t)];
        out.t.push_back(t_val);
        out.x.push_row(row.feature_values());
        out.y.push_back(segment_label_at(t_val, label_origin, run.failure_index));
    }
    return out;
}

struct Assembled {
    Matrix x_fit;
    std::vector<double> y_fit;
    Matrix x_val;
    std::vector<double> y_val;
    int total_rows = 0;
};

// Temporal split inside each run: the last validation_fraction of rows feed
// the blend, the rest fit the experts.
void append_with_split(Assembled& data, const RunRows& rows, double val_fraction) {
    const int n = static_cast<int>(rows.y.size());
    data.total_rows += n;
    int n_val = n >= 2 ? std::max(1, static_cast<int>(std::floor(n * val_fraction))) : 0;
    n_val = std::min(n_val, n - 1);
    const int n_fit = n - n_val;
    for (int i = 0; i < n; ++i) {
        if (i < n_fit) {
            data.x_fit.push_row(rows.x.row(static_cast<std::size_t>(i)));
            data.y_fit.push_back(rows.y[static_cast<std::size_t>(i)]);
        } else {
            data.x_val.push_row(rows.x.row(static_cast<std::size_t>(i)));
            data.y_val.push_back(rows.y[static_cast<std::size_t>(i)]);
        }
    }
}

double mse_of(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

EnsembleModel fit_ensemble_on(const Assembled& data, const PipelineConfig& cfg,
                              const ResolvedSeeds& seeds) {
    if (data.y_val.size() < 2) raise(Errc::TooFewRows, "not enough validation rows for the blend");

    ForestConfig forest_cfg = cfg.forest;
    forest_cfg.seed = seeds.forest;
    GbmConfig gbm_cfg = cfg.gbm;
    gbm_cfg.seed = seeds.gbm;

    EnsembleModel model;
    model.forest = fit_forest(data.x_fit, data.y_fit, forest_cfg);
    model.gbm = fit_gbm(data.x_fit, data.y_fit, gbm_cfg);

    const std::vector<double> rf_val = model.forest.predict(data.x_val);
    const std::vector<double> gbm_val = model.gbm.predict(data.x_val);
    model.blend = fit_blend(rf_val, gbm_val, data.y_val, cfg.blend_method);

    const auto& names = PostOnsetFeatureRow::feature_names();
    model.feature_schema.assign(names.begin(), names.end());
    model.clip_to_unit = cfg.clip_predictions;
    return model;
}

std::vector<double> predict_with(const EnsembleModel& model, const Matrix& x,
                                 std::optional<double> alpha_override) {
    std::vector<double> out;
    out.reserve(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double rf = model.forest.predict_row(x.row(r));
        const double gbm = model.gbm.predict_row(x.row(r));
        double v = alpha_override ? *alpha_override * rf + (1.0 - *alpha_override) * gbm
                                  : model.blend.combine(rf, gbm);
        if (model.clip_to_unit) v = std::clamp(v, 0.0, 1.0);
        out.push_back(v);
    }
    return out;
}

} // namespace

ForecastStage fit_forecast_stage(const std::vector<RunSeries>& train_runs,
                                 const PipelineConfig& cfg) {
    cfg.validate();
    if (train_runs.empty()) raise(Errc::TooFewRows, "no training runs");
    for (const auto& run : train_runs) run.validate();

    std::vector<RulLabels> labels;
    labels.reserve(train_runs.size());
    for (const auto& run : train_runs) labels.push_back(build_rul_labels(run.failure_index, 0));

    RankingReport ranking = rank_features(train_runs, labels);
    const std::string indicator = ranking.top_feature();
    ScalerParams scaler = fit_scaler(train_runs);

    ForecasterConfig fc_cfg = cfg.forecaster;
    fc_cfg.seed = resolve_seeds(cfg.seed).forecaster;

    std::vector<TrainPair> fit_pairs;
    std::vector<TrainPair> val_pairs;
    for (const auto& run : train_runs) {
        const std::vector<double> z = normalized_indicator(run, scaler, indicator);
        std::vector<TrainPair> pairs = make_training_pairs(z, fc_cfg.seq_len, fc_cfg.horizon);
        // The final fraction of each run's windows is reserved for
        // validation reporting only (no early stopping).
        const auto n_val = static_cast<std::size_t>(
            std::floor(static_cast<double>(pairs.size()) * cfg.forecaster_val_fraction));
        const std::size_t n_fit = pairs.size() - n_val;
        for (std::size_t i = 0; i < pairs.size(); ++i)
            (i < n_fit ? fit_pairs : val_pairs).push_back(std::move(pairs[i]));
    }
    if (fit_pairs.empty()) raise(Errc::TooFewRows, "training runs yield no forecaster windows");

    Forecaster model = Forecaster::init(fc_cfg);
    TrainReport report = model.train(fit_pairs, val_pairs);

    return ForecastStage{std::move(ranking), indicator, std::move(scaler), std::move(model),
                         std::move(report)};
}

namespace {

// Rethrows stage failures with the pipeline stage named in the message.
template <typename Fn>
auto with_stage_tag(const char* stage_name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), std::string("[stage ") + stage_name + "] " + e.what());
    }
}

} // namespace

FittedEnsembles fit_ensembles(const ForecastStage& stage,
                              const std::vector<RunSeries>& train_runs,
                              const PipelineConfig& cfg) {
    cfg.validate();
    if (train_runs.empty()) raise(Errc::TooFewRows, "no training runs");
    const ResolvedSeeds seeds = resolve_seeds(cfg.seed);
    const bool want_segment = cfg.mode != "full";
    const bool want_full = cfg.mode != "segment";

    Assembled segment_data;
    Assembled full_data;
    for (const auto& run : train_runs) {
        if (want_segment)
            append_with_split(segment_data, build_run_rows(run, stage, cfg, true),
                              cfg.validation_fraction);
        if (want_full)
            append_with_split(full_data, build_run_rows(run, stage, cfg, false),
                              cfg.validation_fraction);
    }

    FittedEnsembles models;
    if (want_segment) models.segment = fit_ensemble_on(segment_data, cfg, seeds);
    if (want_full) models.full = fit_ensemble_on(full_data, cfg, seeds);
    return models;
}

ExperimentResult run_experiment_with_stage(const ForecastStage& stage,
                                           const std::vector<RunSeries>& train_runs,
                                           const std::vector<RunSeries>& test_runs,
                                           const PipelineConfig& cfg) {
    cfg.validate();
    if (test_runs.empty()) raise(Errc::TooFewRows, "no test runs");
    const auto start = std::chrono::steady_clock::now();

    const bool want_segment = cfg.mode != "full";
    const bool want_full = cfg.mode != "segment";

    ExperimentResult result{ExperimentReport{},
                            stage.scaler,
                            stage.model,
                            EnsembleModel{},
                            EnsembleModel{}};
    result.report.indicator = stage.indicator;
    result.report.ranking = stage.ranking;
    result.report.forecaster_report = stage.report;

    FittedEnsembles models =
        with_stage_tag("train-ensemble", [&] { return fit_ensembles(stage, train_runs, cfg); });
    result.ensemble_segment = std::move(models.segment);
    result.ensemble_full = std::move(models.full);
    if (want_segment) result.report.blend_segment = result.ensemble_segment.blend;
    if (want_full) result.report.blend_full = result.ensemble_full.blend;

    result.report.runs = with_stage_tag("evaluate", [&] {
        return evaluate_test_runs(stage, want_segment ? &result.ensemble_segment : nullptr,
                                  want_full ? &result.ensemble_full : nullptr, test_runs, cfg);
    });

    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

ExperimentResult run_experiment(const std::vector<RunSeries>& train_runs,
                                const std::vector<RunSeries>& test_runs,
                                const PipelineConfig& cfg) {
    const ForecastStage stage =
        with_stage_tag("train-forecaster", [&] { return fit_forecast_stage(train_runs, cfg); });
    return run_experiment_with_stage(stage, train_runs, test_runs, cfg);
}

std::vector<RunEvaluation> evaluate_test_runs(const ForecastStage& stage,
                                              const EnsembleModel* segment_model,
                                              const EnsembleModel* full_model,
                                              const std::vector<RunSeries>& test_runs,
                                              const PipelineConfig& cfg) {
    std::vector<RunEvaluation> evals;
    for (const auto& run : test_runs) {
        run.validate();
        RunEvaluation eval;
        eval.run_id = run.run_id;

        std::optional<double> alpha_override;
        if (auto it = cfg.alpha_overrides.find(run.run_id); it != cfg.alpha_overrides.end())
            alpha_override = it->second;

        if (segment_model != nullptr) {
            RunRows rows = build_run_rows(run, stage, cfg, true);
            if (rows.y.size() < 2) raise(Errc::TooFewRows, "run " + run.run_id);
            eval.onset = rows.onset;
            eval.pred_first_index = rows.pred_first_index;
            eval.onset_run_index = rows.onset_run_index;
            const std::vector<double> pred = predict_with(*segment_model, rows.x, alpha_override);
            eval.segment_metrics = compute_metrics(
                rows.y, pred, rows.segment_input ? "segment" : "full", cfg.mape_epsilon);
            for (std::size_t i = 0; i < rows.y.size(); ++i)
                eval.segment_predictions.push_back({rows.t[i], rows.y[i], pred[i]});
        }
        if (full_model != nullptr) {
            RunRows rows = build_run_rows(run, stage, cfg, false);
            if (rows.y.size() < 2) raise(Errc::TooFewRows, "run " + run.run_id);
            if (segment_model == nullptr) {
                eval.onset = rows.onset;
                eval.pred_first_index = rows.pred_first_index;
                eval.onset_run_index = rows.onset_run_index;
            }
            const std::vector<double> pred = predict_with(*full_model, rows.x, alpha_override);
            eval.full_metrics = compute_metrics(rows.y, pred, "full", cfg.mape_epsilon);
            for (std::size_t i = 0; i < rows.y.size(); ++i)
                eval.full_predictions.push_back({rows.t[i], rows.y[i], pred[i]});
        }
        evals.push_back(std::move(eval));
    }
    return evals;
}

void write_forecast_stage(const ForecastStage& stage, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) raise(Errc::IoFailure, "cannot create " + dir.string());

    stage.model.save(dir / "forecaster.bin");

    json doc;
    doc["indicator"] = stage.indicator;
    doc["scaler"] = {{"features", stage.scaler.names},
                     {"min", stage.scaler.mins},
                     {"max", stage.scaler.maxs},
                     {"degenerate", std::vector<bool>(stage.scaler.degenerate.begin(),
                                                      stage.scaler.degenerate.end())}};
    json ranking = json::array();
    for (const auto& entry : stage.ranking.entries)
        ranking.push_back({{"feature", entry.name}, {"abs_spearman", entry.abs_spearman}});
    doc["ranking"] = std::move(ranking);
    write_text_file(dir / "stage.json", doc.dump(2) + "\n");
}

ForecastStage load_forecast_stage(const std::filesystem::path& dir) {
    Forecaster model = Forecaster::load(dir / "forecaster.bin");

    json doc;
    try {
        doc = json::parse(read_text_file(dir / "stage.json"));
        ScalerParams scaler;
        scaler.names = doc["scaler"]["features"].get<std::vector<std::string>>();
        scaler.mins = doc["scaler"]["min"].get<std::vector<double>>();
        scaler.maxs = doc["scaler"]["max"].get<std::vector<double>>();
        for (bool d : doc["scaler"]["degenerate"].get<std::vector<bool>>())
            scaler.degenerate.push_back(d ? 1 : 0);

        RankingReport ranking;
        for (const auto& entry : doc["ranking"])
            ranking.entries.push_back({entry["feature"].get<std::string>(),
                                       entry["abs_spearman"].get<double>()});

        return ForecastStage{std::move(ranking), doc["indicator"].get<std::string>(),
                             std::move(scaler), std::move(model), TrainReport{}};
    } catch (const json::exception& e) {
        raise(Errc::IoFailure, "bad stage.json: " + std::string(e.what()));
    }
}

const char* to_string(HeadKind head) {
    switch (head) {
    case HeadKind::Ensemble: return "ENS";
    case HeadKind::ForestOnly: return "RF";
    case HeadKind::GbmOnly: return "GBM";
    case HeadKind::Linear: return "Linear";
    }
    return "?";
}

namespace {

// Ordinary least squares y = a * x + b on the single indicator feature.
struct LinearHead {
    double slope = 0.0;
    double intercept = 0.0;

    static LinearHead fit(const Matrix& x, std::span<const double> y, std::size_t feature) {
        const std::size_t n = x.rows();
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += x.at(i, feature);
            my += y[i];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dx = x.at(i, feature) - mx;
            sxx += dx * dx;
            sxy += dx * (y[i] - my);
        }
        LinearHead head;
        head.slope = sxx == 0.0 ? 0.0 : sxy / sxx;
        head.intercept = my - head.slope * mx;
        return head;
    }

    std::vector<double> predict(const Matrix& x, std::size_t feature, bool clip) const {
        std::vector<double> out;
        out.reserve(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double v = slope * x.at(i, feature) + intercept;
            if (clip) v = std::clamp(v, 0.0, 1.0);
            out.push_back(v);
        }
        return out;
    }
};

} // namespace

std::vector<AblationRow> run_ablation(const std::vector<RunSeries>& train_runs,
                                      const std::vector<RunSeries>& test_runs,
                                      const PipelineConfig& cfg) {
    cfg.validate();
    const ForecastStage stage = fit_forecast_stage(train_runs, cfg);
    const ResolvedSeeds seeds = resolve_seeds(cfg.seed);
    constexpr std::size_t kIndicatorFeature = 0; // indicator_pred column

    std::vector<AblationRow> table;
    for (const bool spike_aware : {true, false}) {
        Assembled data;
        for (const auto& run : train_runs)
            append_with_split(data, build_run_rows(run, stage, cfg, spike_aware),
                              cfg.validation_fraction);

        Matrix x_test;
        std::vector<double> y_test;
        for (const auto& run : test_runs) {
            const RunRows rows = build_run_rows(run, stage, cfg, spike_aware);
            for (std::size_t i = 0; i < rows.y.size(); ++i) {
                x_test.push_row(rows.x.row(i));
                y_test.push_back(rows.y[i]);
            }
        }

        ForestConfig forest_cfg = cfg.forest;
        forest_cfg.seed = seeds.forest;
        GbmConfig gbm_cfg = cfg.gbm;
        gbm_cfg.seed = seeds.gbm;

        const ForestModel forest = fit_forest(data.x_fit, data.y_fit, forest_cfg);
        const GbmModel gbm = fit_gbm(data.x_fit, data.y_fit, gbm_cfg);
        const std::vector<double> rf_val = forest.predict(data.x_val);
        const std::vector<double> gbm_val = gbm.predict(data.x_val);
        const BlendModel blend = fit_blend(rf_val, gbm_val, data.y_val, cfg.blend_method);
        const LinearHead linear = LinearHead::fit(data.x_fit, data.y_fit, kIndicatorFeature);

        const std::vector<double> rf_test = forest.predict(x_test);
        const std::vector<double> gbm_test = gbm.predict(x_test);

        for (const HeadKind head :
             {HeadKind::Ensemble, HeadKind::ForestOnly, HeadKind::GbmOnly, HeadKind::Linear}) {
            AblationRow row;
            row.spike_aware = spike_aware;
            row.head = head;
            row.coverage = static_cast<int>(y_test.size());

            std::vector<double> pred;
            switch (head) {
            case HeadKind::Ensemble: {
                pred.reserve(y_test.size());
                for (std::size_t i = 0; i < y_test.size(); ++i)
                    pred.push_back(blend.combine(rf_test[i], gbm_test[i]));
                row.validation_mse = blend.validation_mse;
                row.n_features = static_cast<int>(PostOnsetFeatureRow::feature_names().size());
                break;
            }
            case HeadKind::ForestOnly:
                pred = rf_test;
                row.validation_mse = mse_of(rf_val, data.y_val);
                row.n_features = static_cast<int>(PostOnsetFeatureRow::feature_names().size());
                break;
            case HeadKind::GbmOnly:
                pred = gbm_test;
                row.validation_mse = mse_of(gbm_val, data.y_val);
                row.n_features = static_cast<int>(PostOnsetFeatureRow::feature_names().size());
                break;
            case HeadKind::Linear: {
                pred = linear.predict(x_test, kIndicatorFeature, false);
                const std::vector<double> lin_val =
                    linear.predict(data.x_val, kIndicatorFeature, false);
                row.validation_mse = mse_of(lin_val, data.y_val);
                row.n_features = 1;
                break;
            }
            }
            if (cfg.clip_predictions)
                for (double& v : pred) v = std::clamp(v, 0.0, 1.0);

            row.metrics = compute_metrics(y_test, pred,
                                          spike_aware ? "segment" : "full", cfg.mape_epsilon);
            table.push_back(std::move(row));
        }
    }
    return table;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "spike_aware,learner,n_features,coverage,validation_mse,rmse,mae,r2,mape_percent,"
           "phm_score\n";
    for (const auto& row : rows) {
        out << (row.spike_aware ? 1 : 0) << ',' << to_string(row.head) << ',' << row.n_features
            << ',' << row.coverage << ',' << format_double(row.validation_mse) << ','
            << format_double(row.metrics.rmse) << ',' << format_double(row.metrics.mae) << ','
            << format_double(row.metrics.r2) << ',' << format_double(row.metrics.mape_percent)
            << ',' << format_double(row.metrics.phm_score) << '\n';
    }
    write_text_file(path, out.str());
}

SyntheticSuite make_synthetic_suite(const SyntheticSuiteConfig& cfg) {
    if (cfg.n_train < 1 || cfg.n_test < 0) raise(Errc::InvalidConfig, "bad suite sizes");
    if (cfg.onset_min <= 0 || cfg.onset_max >= cfg.length || cfg.onset_min > cfg.onset_max)
        raise(Errc::InvalidConfig, "onset range outside (0, length)");

    Rng rng(derive_seed(cfg.seed, 0));
    SyntheticSuite suite;
    const int total = cfg.n_train + cfg.n_test;
    for (int i = 0; i < total; ++i) {
        SynthConfig synth;
        synth.length = cfg.length;
        synth.onset_index =
            cfg.onset_min + static_cast<int>(rng.below(
                                static_cast<std::uint64_t>(cfg.onset_max - cfg.onset_min + 1)));
        synth.baseline_mean = cfg.baseline_mean;
        synth.baseline_std = cfg.baseline_std;
        synth.growth_rate = cfg.growth_rate;
        synth.spike_amplitude = cfg.spike_amplitude;
        synth.spike_burst_len = cfg.spike_burst_len;
        synth.noise_seed = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(i));

        const bool is_test = i >= cfg.n_train;
        const std::string id = (is_test ? "test_" : "train_") +
                               std::to_string(is_test ? i - cfg.n_train + 1 : i + 1);
        SyntheticRun made = generate_synthetic(synth, id);
        add_noise_features(made.run, cfg.noise_features,
                           derive_seed(cfg.seed, 200 + static_cast<std::uint64_t>(i)));
        suite.true_onsets[id] = made.true_onset;
        (is_test ? suite.test : suite.train).push_back(std::move(made.run));
    }
    return suite;
}

// ---------------------------------------------------------------- config io

namespace {

void check_known_keys(const json& obj, std::initializer_list<const char*> known,
                      const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            raise(Errc::InvalidConfig, "unknown key '" + key + "' in " + where);
    }
}

} // namespace

PipelineConfig pipeline_config_from_json_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        raise(Errc::InvalidConfig, std::string("config parse error: ") + e.what());
    }

    PipelineConfig cfg;
    try {
        check_known_keys(root,
                         {"seed", "mode", "paths", "test_run_ids", "forecaster", "spike", "forest",
                          "gbm", "blend", "clip_predictions", "validation_fraction",
                          "forecaster_val_fraction", "post_onset_window", "mape_epsilon"},
                         "config");

        cfg.seed = root.value("seed", cfg.seed);
        if (root.contains("paths")) {
            const json& p = root["paths"];
            check_known_keys(p, {"input_dir", "output_dir"}, "paths");
            cfg.input_dir = p.value("input_dir", cfg.input_dir);
            cfg.output_dir = p.value("output_dir", cfg.output_dir);
        }
        cfg.mode = root.value("mode", cfg.mode);
        if (root.contains("test_run_ids"))
            cfg.test_run_ids = root["test_run_ids"].get<std::vector<std::string>>();
        cfg.clip_predictions = root.value("clip_predictions", cfg.clip_predictions);
        cfg.validation_fraction = root.value("validation_fraction", cfg.validation_fraction);
        cfg.forecaster_val_fraction =
            root.value("forecaster_val_fraction", cfg.forecaster_val_fraction);
        cfg.post_onset_window = root.value("post_onset_window", cfg.post_onset_window);
        cfg.mape_epsilon = root.value("mape_epsilon", cfg.mape_epsilon);

        if (root.contains("forecaster")) {
            const json& f = root["forecaster"];
            check_known_keys(f,
                             {"seq_len", "horizon", "channels", "kernel_size", "learning_rate",
                              "epochs", "batch_size"},
                             "forecaster");
            cfg.forecaster.seq_len = f.value("seq_len", cfg.forecaster.seq_len);
            cfg.forecaster.horizon = f.value("horizon", cfg.forecaster.horizon);
            if (f.contains("channels"))
                cfg.forecaster.channels = f["channels"].get<std::vector<int>>();
            cfg.forecaster.kernel_size = f.value("kernel_size", cfg.forecaster.kernel_size);
            cfg.forecaster.learning_rate = f.value("learning_rate", cfg.forecaster.learning_rate);
            cfg.forecaster.epochs = f.value("epochs", cfg.forecaster.epochs);
            cfg.forecaster.batch_size = f.value("batch_size", cfg.forecaster.batch_size);
        }
        if (root.contains("spike")) {
            const json& s = root["spike"];
            check_known_keys(s, {"k_sigma", "d_min", "n_min", "ref_window", "hysteresis_fraction"},
                             "spike");
            cfg.spike.k_sigma = s.value("k_sigma", cfg.spike.k_sigma);
            cfg.spike.d_min = s.value("d_min", cfg.spike.d_min);
            cfg.spike.n_min = s.value("n_min", cfg.spike.n_min);
            cfg.spike.hysteresis_fraction =
                s.value("hysteresis_fraction", cfg.spike.hysteresis_fraction);
            if (s.contains("ref_window")) {
                const auto w = s["ref_window"].get<std::vector<int>>();
                if (w.size() != 2) raise(Errc::InvalidConfig, "ref_window must be [start, end)");
                cfg.spike.ref_window = {w[0], w[1]};
            }
        }
        if (root.contains("forest")) {
            const json& f = root["forest"];
            check_known_keys(
                f, {"n_trees", "max_depth", "min_leaf", "features_per_split", "bootstrap"},
                "forest");
            cfg.forest.n_trees = f.value("n_trees", cfg.forest.n_trees);
            cfg.forest.max_depth = f.value("max_depth", cfg.forest.max_depth);
            cfg.forest.min_leaf = f.value("min_leaf", cfg.forest.min_leaf);
            cfg.forest.features_per_split =
                f.value("features_per_split", cfg.forest.features_per_split);
            cfg.forest.bootstrap = f.value("bootstrap", cfg.forest.bootstrap);
        }
        if (root.contains("gbm")) {
            const json& g = root["gbm"];
            check_known_keys(g, {"n_rounds", "learning_rate", "max_depth", "min_leaf"}, "gbm");
            cfg.gbm.n_rounds = g.value("n_rounds", cfg.gbm.n_rounds);
            cfg.gbm.learning_rate = g.value("learning_rate", cfg.gbm.learning_rate);
            cfg.gbm.max_depth = g.value("max_depth", cfg.gbm.max_depth);
            cfg.gbm.min_leaf = g.value("min_leaf", cfg.gbm.min_leaf);
        }
        if (root.contains("blend")) {
            const json& b = root["blend"];
            check_known_keys(b, {"method", "alpha_overrides"}, "blend");
            const std::string method = b.value("method", std::string("grid"));
            if (method == "grid")
                cfg.blend_method = BlendMethod::Grid;
            else if (method == "ridge")
                cfg.blend_method = BlendMethod::Ridge;
            else
                raise(Errc::InvalidConfig, "blend method must be grid or ridge");
            if (b.contains("alpha_overrides"))
                cfg.alpha_overrides =
                    b["alpha_overrides"].get<std::map<std::string, double>>();
        }
    } catch (const json::exception& e) {
        raise(Errc::InvalidConfig, std::string("config type error: ") + e.what());
    }

    cfg.validate();
    return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    return pipeline_config_from_json_text(read_text_file(path));
}

std::string pipeline_config_to_json_text(const PipelineConfig& cfg) {
    json root;
    root["seed"] = cfg.seed;
    root["mode"] = cfg.mode;
    root["paths"] = {{"input_dir", cfg.input_dir}, {"output_dir", cfg.output_dir}};
    root["test_run_ids"] = cfg.test_run_ids;
    root["clip_predictions"] = cfg.clip_predictions;
    root["validation_fraction"] = cfg.validation_fraction;
    root["forecaster_val_fraction"] = cfg.forecaster_val_fraction;
    root["post_onset_window"] = cfg.post_onset_window;
    root["mape_epsilon"] = cfg.mape_epsilon;
    root["forecaster"] = {{"seq_len", cfg.forecaster.seq_len},
                          {"horizon", cfg.forecaster.horizon},
                          {"channels", cfg.forecaster.channels},
                          {"kernel_size", cfg.forecaster.kernel_size},
                          {"learning_rate", cfg.forecaster.learning_rate},
                          {"epochs", cfg.forecaster.epochs},
                          {"batch_size", cfg.forecaster.batch_size}};
    root["spike"] = {{"k_sigma", cfg.spike.k_sigma},
                     {"d_min", cfg.spike.d_min},
                     {"n_min", cfg.spike.n_min},
                     {"hysteresis_fraction", cfg.spike.hysteresis_fraction}};
    if (cfg.spike.ref_window)
        root["spike"]["ref_window"] = {cfg.spike.ref_window->first, cfg.spike.ref_window->second};
    root["forest"] = {{"n_trees", cfg.forest.n_trees},
                      {"max_depth", cfg.forest.max_depth},
                      {"min_leaf", cfg.forest.min_leaf},
                      {"features_per_split", cfg.forest.features_per_split},
                      {"bootstrap", cfg.forest.bootstrap}};
    root["gbm"] = {{"n_rounds", cfg.gbm.n_rounds},
                   {"learning_rate", cfg.gbm.learning_rate},
                   {"max_depth", cfg.gbm.max_depth},
                   {"min_leaf", cfg.gbm.min_leaf}};
    root["blend"] = {{"method", cfg.blend_method == BlendMethod::Grid ? "grid" : "ridge"},
                     {"alpha_overrides", cfg.alpha_overrides}};
    return root.dump(2) + "\n";
}

// ------------------------------------------------------------- file outputs

namespace {

void write_metrics_row(std::ostringstream& out, const std::string& run_id, double k_sigma,
                       const std::string& slot, const MetricsReport& m, bool used_fallback) {
    out << run_id << ',' << format_double(k_sigma) << ',' << slot << ','
        << format_double(m.rmse) << ',' << format_double(m.mae) << ',' << format_double(m.r2)
        << ',' << format_double(m.mape_percent) << ',' << format_double(m.phm_score) << ','
        << m.n_points << ',' << format_double(m.epsilon_used) << ','
        << (used_fallback ? 1 : 0) << '\n';
}

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictionRow>& rows) {
    std::vector<std::vector<double>> data;
    data.reserve(rows.size());
    for (const auto& row : rows)
        data.push_back({static_cast<double>(row.t), row.y_true, row.y_pred});
    write_csv(path, {"t", "y_true", "y_pred"}, data);
}

} // namespace

void write_experiment_outputs(const ExperimentResult& result, const PipelineConfig& cfg,
                              const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) raise(Errc::IoFailure, "cannot create " + out_dir.string());

    // Marker removed only after every artifact landed; a leftover marker
    // flags an incomplete output directory.
    const fs::path marker = out_dir / "_INCOMPLETE";
    write_text_file(marker, "outputs in progress\n");

    const bool want_segment = cfg.mode != "full";
    const bool want_full = cfg.mode != "segment";

    {
        std::ostringstream out;
        out << "feature,abs_spearman\n";
        for (const auto& entry : result.report.ranking.entries)
            out << entry.name << ',' << format_double(entry.abs_spearman) << '\n';
        write_text_file(out_dir / "ranking.csv", out.str());
    }

    {
        std::ostringstream out;
        out << "run,k_sigma,mode,rmse,mae,r2,mape_percent,phm_score,n_points,epsilon_used,"
               "used_fallback\n";
        for (const auto& eval : result.report.runs) {
            if (want_segment)
                write_metrics_row(out, eval.run_id, cfg.spike.k_sigma, "segment",
                                  eval.segment_metrics, eval.segment_metrics.mode == "full");
            if (want_full)
                write_metrics_row(out, eval.run_id, cfg.spike.k_sigma, "full", eval.full_metrics,
                                  false);
        }
        write_text_file(out_dir / "metrics.csv", out.str());
    }

    {
        std::ostringstream out;
        for (const auto& eval : result.report.runs) {
            if (want_segment)
                out << "run = " << eval.run_id << "\nslot = segment\n"
                    << to_key_value_text(eval.segment_metrics) << '\n';
            if (want_full)
                out << "run = " << eval.run_id << "\nslot = full\n"
                    << to_key_value_text(eval.full_metrics) << '\n';
        }
        write_text_file(out_dir / "metrics.txt", out.str());
    }

    for (const auto& eval : result.report.runs) {
        if (want_segment)
            write_predictions_csv(out_dir / ("predictions_" + eval.run_id + "_segment.csv"),
                                  eval.segment_predictions);
        if (want_full)
            write_predictions_csv(out_dir / ("predictions_" + eval.run_id + "_full.csv"),
                                  eval.full_predictions);
        write_text_file(out_dir / ("onset_" + eval.run_id + ".txt"),
                        format_onset_record(eval.onset, cfg.spike, eval.pred_first_index));
    }

    result.forecaster.save(out_dir / "forecaster.bin");
    if (want_segment) result.ensemble_segment.save(out_dir / "ensemble_segment.bin");
    if (want_full) result.ensemble_full.save(out_dir / "ensemble_full.bin");

    {
        json scaler;
        scaler["features"] = result.scaler.names;
        scaler["min"] = result.scaler.mins;
        scaler["max"] = result.scaler.maxs;
        std::vector<bool> degenerate(result.scaler.degenerate.begin(),
                                     result.scaler.degenerate.end());
        scaler["degenerate"] = degenerate;
        write_text_file(out_dir / "scaler.json", scaler.dump(2) + "\n");
    }

    {
        json report;
        report["version"] = kSarnetVersion;
        report["config"] = json::parse(pipeline_config_to_json_text(cfg));
        report["indicator"] = result.report.indicator;
        report["forecaster"] = {
            {"epoch_loss", result.report.forecaster_report.epoch_loss},
            {"validation_loss", result.report.forecaster_report.validation_loss
                                    ? json(*result.report.forecaster_report.validation_loss)
                                    : json(nullptr)},
            {"wall_seconds", result.report.forecaster_report.wall_seconds}};
        if (want_segment)
            report["alpha_segment"] = result.report.blend_segment.alpha;
        if (want_full) report["alpha_full"] = result.report.blend_full.alpha;
        json runs = json::array();
        for (const auto& eval : result.report.runs) {
            json r;
            r["run_id"] = eval.run_id;
            r["onset_run_index"] = eval.onset_run_index;
            r["n_spike"] = eval.onset.n_spike;
            r["threshold"] = eval.onset.threshold;
            r["used_fallback"] = eval.onset.used_fallback;
            if (want_segment)
                r["segment"] = {{"rmse", eval.segment_metrics.rmse},
                                {"mae", eval.segment_metrics.mae},
                                {"r2", eval.segment_metrics.r2},
                                {"mape_percent", eval.segment_metrics.mape_percent},
                                {"phm_score", eval.segment_metrics.phm_score},
                                {"n_points", eval.segment_metrics.n_points},
                                {"input_mode", eval.segment_metrics.mode}};
            if (want_full)
                r["full"] = {{"rmse", eval.full_metrics.rmse},
                             {"mae", eval.full_metrics.mae},
                             {"r2", eval.full_metrics.r2},
                             {"mape_percent", eval.full_metrics.mape_percent},
                             {"phm_score", eval.full_metrics.phm_score},
                             {"n_points", eval.full_metrics.n_points},
                             {"input_mode", eval.full_metrics.mode}};
            runs.push_back(std::move(r));
        }
        report["runs"] = std::move(runs);
        report["wall_seconds"] = result.report.wall_seconds;
        write_text_file(out_dir / "report.json", report.dump(2) + "\n");
    }

    fs::remove(marker, ec);
}

} // namespace sarnet
