#include "sarnet/dataset.hpp"

#include "sarnet/csv.hpp"
#include "sarnet/error.hpp"
#include "sarnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace sarnet {

std::vector<double> RunSeries::feature_series(std::string_view name) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row.at(name));
    return out;
}

void RunSeries::validate() const {
    if (t.size() != rows.size()) raise(Errc::SchemaMismatch, "t/rows size mismatch in run " + run_id);
    if (t.empty()) raise(Errc::EmptyAfterCleaning, "run " + run_id + " has no rows");
    for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i] <= t[i - 1]) raise(Errc::NonMonotonicTime, "run " + run_id);
    if (failure_index != t.back()) raise(Errc::SchemaMismatch, "failure_index != last t in run " + run_id);
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (!rows[i].same_schema(rows[0])) raise(Errc::SchemaMismatch, "row schema drift in run " + run_id);
}

LoadedRun load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    const CsvTable table = read_csv(path);

    const std::size_t t_col = table.column_index(schema.time_column);
    if (t_col == CsvTable::npos)
        raise(Errc::MissingColumn, "time column '" + schema.time_column + "' in " + path.string());

    std::vector<std::string> feature_names = schema.feature_columns;
    if (feature_names.empty()) {
        for (const auto& c : table.columns)
            if (c != schema.time_column) feature_names.push_back(c);
    }
    if (feature_names.empty()) raise(Errc::MissingColumn, "no feature columns in " + path.string());

    std::vector<std::size_t> feature_cols;
    for (const auto& name : feature_names) {
        const std::size_t idx = table.column_index(name);
        if (idx == CsvTable::npos)
            raise(Errc::MissingColumn, "feature column '" + name + "' in " + path.string());
        feature_cols.push_back(idx);
    }

    LoadedRun out;
    out.run.run_id = path.stem().string();

    std::vector<std::pair<int, FeatureVector>> kept;
    for (const auto& row : table.rows) {
        bool complete = row[t_col].has_value();
        for (std::size_t c : feature_cols) complete = complete && row[c].has_value();
        if (!complete) {
            ++out.dropped_rows;
            continue;
        }
        FeatureVector fv;
        for (std::size_t i = 0; i < feature_names.size(); ++i)
            fv.set(feature_names[i], *row[feature_cols[i]]);
        kept.emplace_back(static_cast<int>(std::llround(*row[t_col])), std::move(fv));
    }

    if (kept.empty()) raise(Errc::EmptyAfterCleaning, path.string());

    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 1; i < kept.size(); ++i)
        if (kept[i].first == kept[i - 1].first)
            raise(Errc::NonMonotonicTime, "duplicate t index " + std::to_string(kept[i].first) +
                                              " in " + path.string());

    for (auto& [ti, fv] : kept) {
        out.run.t.push_back(ti);
        out.run.rows.push_back(std::move(fv));
    }
    out.run.failure_index = out.run.t.back();
    out.run.validate();
    return out;
}

void write_run_csv(const RunSeries& run, const std::filesystem::path& path,
                   const std::string& time_column) {
    std::vector<std::string> columns{time_column};
    if (!run.rows.empty())
        for (const auto& n : run.rows.front().names()) columns.push_back(n);

    std::vector<std::vector<double>> rows;
    rows.reserve(run.size());
    for (std::size_t i = 0; i < run.size(); ++i) {
        std::vector<double> row{static_cast<double>(run.t[i])};
        for (double v : run.rows[i].values()) row.push_back(v);
        rows.push_back(std::move(row));
    }
    write_csv(path, columns, rows);
}

RulLabels build_rul_labels(int total_length, int fpt) {
    if (total_length <= 0) raise(Errc::InvalidFpt, "total length must be positive");
    if (fpt < 0 || fpt >= total_length)
        raise(Errc::InvalidFpt, "fpt=" + std::to_string(fpt) + " with T=" + std::to_string(total_length));

    RulLabels labels;
    labels.fpt = fpt;
    labels.total_length = total_length;
    labels.y.resize(static_cast<std::size_t>(total_length) + 1);

    const double T = static_cast<double>(total_length);
    for (int t = 0; t <= total_length; ++t) {
        if (t <= fpt)
            labels.y[static_cast<std::size_t>(t)] = T;
        else
            labels.y[static_cast<std::size_t>(t)] =
                T - T * (static_cast<double>(t - fpt) / static_cast<double>(total_length - fpt));
    }
    labels.y.back() = 0.0; // exact endpoint
    return labels;
}

std::size_t ScalerParams::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    raise(Errc::SchemaMismatch, "scaler has no feature '" + std::string(name) + "'");
}

bool ScalerParams::any_degenerate() const {
    return std::any_of(degenerate.begin(), degenerate.end(), [](std::uint8_t d) { return d != 0; });
}

ScalerParams fit_scaler(const std::vector<FeatureVector>& train_rows) {
    if (train_rows.size() < 2) raise(Errc::TooFewRows, "fit_scaler needs >= 2 rows");

    ScalerParams params;
    params.names = train_rows.front().names();
    const std::size_t m = params.names.size();
    params.mins.assign(m, std::numeric_limits<double>::infinity());
    params.maxs.assign(m, -std::numeric_limits<double>::infinity());

    for (const auto& row : train_rows) {
        if (!row.same_schema(train_rows.front())) raise(Errc::SchemaMismatch, "row schema drift");
        for (std::size_t i = 0; i < m; ++i) {
            params.mins[i] = std::min(params.mins[i], row.value(i));
            params.maxs[i] = std::max(params.maxs[i], row.value(i));
        }
    }

    params.degenerate.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        params.degenerate[i] = params.maxs[i] == params.mins[i] ? 1 : 0;
    return params;
}

ScalerParams fit_scaler(const std::vector<RunSeries>& train_runs) {
    std::vector<FeatureVector> rows;
    for (const auto& run : train_runs) rows.insert(rows.end(), run.rows.begin(), run.rows.end());
    return fit_scaler(rows);
}

FeatureVector transform_row(const FeatureVector& row, const ScalerParams& params) {
    FeatureVector out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        const std::size_t p = params.index_of(row.names()[i]);
        const double span = params.maxs[p] - params.mins[p];
        // Degenerate features map to 0; test-time values are not clipped.
        const double v = params.degenerate[p] ? 0.0 : (row.value(i) - params.mins[p]) / span;
        out.set(row.names()[i], v);
    }
    return out;
}

std::vector<FeatureVector> transform(const std::vector<FeatureVector>& rows, const ScalerParams& params) {
    std::vector<FeatureVector> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(transform_row(row, params));
    return out;
}

RunSeries transform_run(const RunSeries& run, const ScalerParams& params) {
    RunSeries out = run;
    for (auto& row : out.rows) row = transform_row(row, params);
    return out;
}

FeatureVector inverse_transform_row(const FeatureVector& row, const ScalerParams& params) {
    FeatureVector out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        const std::size_t p = params.index_of(row.names()[i]);
        const double span = params.maxs[p] - params.mins[p];
        const double v = params.degenerate[p] ? params.mins[p] : row.value(i) * span + params.mins[p];
        out.set(row.names()[i], v);
    }
    return out;
}

SplitResult split_temporal(const std::vector<RunSeries>& runs,
                           const std::vector<std::string>& test_run_ids) {
    for (const auto& id : test_run_ids) {
        const bool known = std::any_of(runs.begin(), runs.end(),
                                       [&](const RunSeries& r) { return r.run_id == id; });
        if (!known) raise(Errc::UnknownRunId, id);
    }

    SplitResult split;
    for (const auto& run : runs) {
        const bool is_test = std::find(test_run_ids.begin(), test_run_ids.end(), run.run_id) !=
                             test_run_ids.end();
        (is_test ? split.test : split.train).push_back(run);
    }
    return split;
}

void SynthConfig::validate() const {
    if (length < 2) raise(Errc::InvalidConfig, "synthetic length must be >= 2");
    if (onset_index <= 0 || onset_index >= length)
        raise(Errc::InvalidConfig, "onset_index must lie strictly inside (0, length)");
    if (baseline_std < 0 || growth_rate < 0 || spike_amplitude < 0)
        raise(Errc::InvalidConfig, "negative synthetic parameter");
    if (spike_burst_len < 1) raise(Errc::InvalidConfig, "spike_burst_len must be >= 1");
}

SyntheticRun generate_synthetic(const SynthConfig& cfg, const std::string& run_id,
                                const std::string& indicator_name) {
    cfg.validate();
    Rng rng(cfg.noise_seed);

    SyntheticRun out;
    out.true_onset = cfg.onset_index;
    out.run.run_id = run_id;
    out.run.condition_tag = "synthetic";
    out.run.t.reserve(static_cast<std::size_t>(cfg.length));
    out.run.rows.reserve(static_cast<std::size_t>(cfg.length));

    for (int t = 0; t < cfg.length; ++t) {
        double v = cfg.baseline_mean + rng.normal(0.0, cfg.baseline_std);
        if (t >= cfg.onset_index) {
            const int dt = t - cfg.onset_index;
            v += cfg.baseline_mean * (std::exp(cfg.growth_rate * dt) - 1.0);
            // Burst square wave: on for spike_burst_len, off for spike_burst_len.
            if ((dt / cfg.spike_burst_len) % 2 == 0) v += cfg.spike_amplitude;
        }
        FeatureVector fv;
        fv.set(indicator_name, v);
        out.run.t.push_back(t);
        out.run.rows.push_back(std::move(fv));
    }
    out.run.failure_index = cfg.length - 1;
    return out;
}

void add_noise_features(RunSeries& run, int count, std::uint64_t seed) {
    for (int j = 0; j < count; ++j) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
        const std::string name = "noise_" + std::to_string(j);
        for (auto& row : run.rows) row.set(name, rng.normal());
    }
}

void write_synth_sidecar(const std::filesystem::path& path, const SynthConfig& cfg, int true_onset) {
    std::ostringstream out;
    out << "true_onset = " << true_onset << '\n'
        << "length = " << cfg.length << '\n'
        << "onset_index = " << cfg.onset_index << '\n'
        << "baseline_mean = " << format_double(cfg.baseline_mean) << '\n'
        << "baseline_std = " << format_double(cfg.baseline_std) << '\n'
        << "growth_rate = " << format_double(cfg.growth_rate) << '\n'
        << "spike_amplitude = " << format_double(cfg.spike_amplitude) << '\n'
        << "spike_burst_len = " << cfg.spike_burst_len << '\n'
        << "noise_seed = " << cfg.noise_seed << '\n';
    write_text_file(path, out.str());
}

SidecarInfo read_synth_sidecar(const std::filesystem::path& path) {
    SidecarInfo info;
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        const auto strip = [](std::string& s) {
            const std::size_t b = s.find_first_not_of(" \t");
            const std::size_t e = s.find_last_not_of(" \t\r");
            s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
        };
        strip(key);
        strip(value);
        if (key == "true_onset") info.true_onset = std::stoi(value);
        else if (key == "length") info.cfg.length = std::stoi(value);
        else if (key == "onset_index") info.cfg.onset_index = std::stoi(value);
        else if (key == "baseline_mean") info.cfg.baseline_mean = std::stod(value);
        else if (key == "baseline_std") info.cfg.baseline_std = std::stod(value);
        else if (key == "growth_rate") info.cfg.growth_rate = std::stod(value);
        else if (key == "spike_amplitude") info.cfg.spike_amplitude = std::stod(value);
        else if (key == "spike_burst_len") info.cfg.spike_burst_len = std::stoi(value);
        else if (key == "noise_seed") info.cfg.noise_seed = std::stoull(value);
    }
    return info;
}

} // namespace sarnet
