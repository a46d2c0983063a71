#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sarnet/csv.hpp"
#include "sarnet/dataset.hpp"
#include "sarnet/error.hpp"
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
    TempDir() {
        const auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
        path = fs::temp_directory_path() / ("sarnet_dataset_" + std::to_string(tick));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

fs::path write_file(const TempDir& dir, const std::string& name, const std::string& content) {
    const fs::path p = dir.path / name;
    std::ofstream out(p);
    out << content;
    return p;
}

// Independent piecewise evaluation of the ground-truth label rule.
double label_oracle(int total, int fpt, int t) {
    if (t <= fpt) return static_cast<double>(total);
    const double frac = static_cast<double>(t - fpt) / static_cast<double>(total - fpt);
    return static_cast<double>(total) - static_cast<double>(total) * frac;
}

} // namespace

TEST_CASE("rul labels with fpt 0 reduce to backward count") {
    const RulLabels labels = build_rul_labels(100, 0);
    REQUIRE(labels.y.size() == 101);
    for (int t = 0; t <= 100; ++t)
        CHECK(labels.at(t) == doctest::Approx(100.0 - t).epsilon(1e-12));
}

TEST_CASE("rul labels piecewise values") {
    const RulLabels labels = build_rul_labels(10, 5);
    CHECK(labels.at(5) == doctest::Approx(10.0));
    CHECK(labels.at(7) == doctest::Approx(6.0)); // 10 - 10 * (2/5)
    CHECK(labels.at(10) == 0.0);
    CHECK(labels.at(0) == doctest::Approx(10.0));
}

TEST_CASE("rul labels rejected when fpt >= T") {
    CHECK_THROWS_AS(build_rul_labels(10, 10), Error);
    CHECK_THROWS_AS(build_rul_labels(10, 15), Error);
    CHECK_THROWS_AS(build_rul_labels(10, -1), Error);
}

TEST_CASE("rul label endpoints and oracle agreement on random shapes") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        const int total = 2 + static_cast<int>(rng.below(500));
        const int fpt = static_cast<int>(rng.below(static_cast<std::uint64_t>(total)));
        const RulLabels labels = build_rul_labels(total, fpt);
        CHECK(labels.at(0) == static_cast<double>(total));
        CHECK(labels.at(total) == 0.0);
        for (int t = 0; t <= total; ++t)
            CHECK(labels.at(t) == doctest::Approx(label_oracle(total, fpt, t)).epsilon(1e-12));
    }
}

namespace {

std::vector<FeatureVector> rows_of(const std::vector<double>& values, const std::string& name) {
    std::vector<FeatureVector> rows;
    for (double v : values) {
        FeatureVector fv;
        fv.set(name, v);
        rows.push_back(fv);
    }
    return rows;
}

} // namespace

TEST_CASE("scaler fit and transform") {
    const auto rows = rows_of({2.0, 4.0, 6.0}, "f");
    const ScalerParams params = fit_scaler(rows);
    CHECK(params.mins[0] == 2.0);
    CHECK(params.maxs[0] == 6.0);
    CHECK_FALSE(params.any_degenerate());

    const auto scaled = transform(rows, params);
    CHECK(scaled[0].at("f") == doctest::Approx(0.0));
    CHECK(scaled[1].at("f") == doctest::Approx(0.5));
    CHECK(scaled[2].at("f") == doctest::Approx(1.0));

    // Values above the training maximum are not clipped.
    FeatureVector outside;
    outside.set("f", 8.0);
    CHECK(transform_row(outside, params).at("f") == doctest::Approx(1.5));

    FeatureVector at_min;
    at_min.set("f", 2.0);
    CHECK(transform_row(at_min, params).at("f") == 0.0);
}

TEST_CASE("degenerate feature maps to zero and is flagged") {
    const auto rows = rows_of({5.0, 5.0, 5.0}, "f");
    const ScalerParams params = fit_scaler(rows);
    CHECK(params.any_degenerate());
    CHECK(transform(rows, params)[1].at("f") == 0.0);
}

TEST_CASE("features are fitted independently") {
    std::vector<FeatureVector> rows;
    for (int i = 0; i < 3; ++i) {
        FeatureVector fv;
        fv.set("a", static_cast<double>(i));
        fv.set("b", 100.0 * i);
        rows.push_back(fv);
    }
    const ScalerParams params = fit_scaler(rows);
    CHECK(params.mins[params.index_of("a")] == 0.0);
    CHECK(params.maxs[params.index_of("a")] == 2.0);
    CHECK(params.mins[params.index_of("b")] == 0.0);
    CHECK(params.maxs[params.index_of("b")] == 200.0);
}

TEST_CASE("transform round-trips through inverse_transform") {
    Rng rng(9);
    std::vector<FeatureVector> rows;
    for (int i = 0; i < 40; ++i) {
        FeatureVector fv;
        fv.set("a", rng.uniform(-3.0, 7.0));
        fv.set("b", rng.uniform(100.0, 400.0));
        rows.push_back(fv);
    }
    const ScalerParams params = fit_scaler(rows);
    for (const auto& row : rows) {
        const FeatureVector back = inverse_transform_row(transform_row(row, params), params);
        for (std::size_t i = 0; i < row.size(); ++i) {
            const double rel = std::abs(back.value(i) - row.value(i)) /
                               std::max(1.0, std::abs(row.value(i)));
            CHECK(rel < 1e-12);
        }
        // Other composition order, same identity.
        const FeatureVector there = transform_row(inverse_transform_row(row, params), params);
        for (std::size_t i = 0; i < row.size(); ++i) {
            const double rel = std::abs(there.value(i) - row.value(i)) /
                               std::max(1.0, std::abs(row.value(i)));
            CHECK(rel < 1e-12);
        }
    }
}

TEST_CASE("scaler is a pure function of the training partition") {
    const auto train = rows_of({1.0, 2.0, 3.0}, "f");
    const ScalerParams a = fit_scaler(train);
    const ScalerParams b = fit_scaler(train);
    CHECK(a.mins == b.mins);
    CHECK(a.maxs == b.maxs);

    // Refitting with test rows appended must be able to move the params
    // (the leakage guard is testable).
    auto leaky = train;
    for (const auto& row : rows_of({50.0}, "f")) leaky.push_back(row);
    const ScalerParams c = fit_scaler(leaky);
    CHECK(c.maxs[0] != a.maxs[0]);
}

TEST_CASE("csv loading drops incomplete rows and reports the count") {
    TempDir dir;
    const auto path = write_file(dir, "run.csv", "t,FFT_bin_2_H\n0,1.5\n1,\n2,2.5\n");
    const LoadedRun loaded = load_csv(path, CsvSchema{});
    CHECK(loaded.dropped_rows == 1);
    REQUIRE(loaded.run.size() == 2);
    CHECK(loaded.run.t == std::vector<int>{0, 2});
    CHECK(loaded.run.failure_index == 2);
    CHECK(loaded.run.rows[1].at("FFT_bin_2_H") == doctest::Approx(2.5));
}

TEST_CASE("csv rows are sorted by time index") {
    TempDir dir;
    const auto path = write_file(dir, "run.csv", "t,x\n2,30\n0,10\n1,20\n");
    const LoadedRun loaded = load_csv(path, CsvSchema{});
    CHECK(loaded.run.t == std::vector<int>{0, 1, 2});
    CHECK(loaded.run.rows[0].at("x") == 10.0);
    CHECK(loaded.run.rows[2].at("x") == 30.0);
}

TEST_CASE("csv schema and time errors") {
    TempDir dir;
    const auto missing = write_file(dir, "m.csv", "t,x\n0,1\n");
    CsvSchema schema;
    schema.feature_columns = {"FFT_bin_2_H"};
    try {
        load_csv(missing, schema);
        FAIL("expected MissingColumn");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::MissingColumn);
    }

    const auto dup = write_file(dir, "d.csv", "t,x\n0,1\n0,2\n");
    try {
        load_csv(dup, CsvSchema{});
        FAIL("expected NonMonotonicTime");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::NonMonotonicTime);
    }

    const auto blank = write_file(dir, "b.csv", "t,x\n0,\n1,\n");
    try {
        load_csv(blank, CsvSchema{});
        FAIL("expected EmptyAfterCleaning");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::EmptyAfterCleaning);
    }
}

TEST_CASE("run csv round trip") {
    TempDir dir;
    SynthConfig cfg;
    cfg.length = 50;
    cfg.onset_index = 25;
    const SyntheticRun made = generate_synthetic(cfg, "rt");
    const fs::path path = dir.path / "rt.csv";
    write_run_csv(made.run, path);
    const LoadedRun loaded = load_csv(path, CsvSchema{});
    REQUIRE(loaded.run.size() == made.run.size());
    for (std::size_t i = 0; i < made.run.size(); ++i)
        CHECK(loaded.run.rows[i].at("indicator") == made.run.rows[i].at("indicator"));
}

TEST_CASE("temporal split is a run-level partition") {
    std::vector<RunSeries> runs;
    for (const char* id : {"r1", "r2", "r3"}) {
        SynthConfig cfg;
        cfg.length = 30;
        cfg.onset_index = 15;
        runs.push_back(generate_synthetic(cfg, id).run);
    }

    const SplitResult split = split_temporal(runs, {"r3"});
    REQUIRE(split.train.size() == 2);
    REQUIRE(split.test.size() == 1);
    CHECK(split.test[0].run_id == "r3");

    const SplitResult all_train = split_temporal(runs, {});
    CHECK(all_train.train.size() == 3);
    CHECK(all_train.test.empty());

    try {
        split_temporal(runs, {"r9"});
        FAIL("expected UnknownRunId");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnknownRunId);
    }
}

TEST_CASE("degenerate synthetic config yields a constant series") {
    SynthConfig cfg;
    cfg.length = 64;
    cfg.onset_index = 32;
    cfg.baseline_std = 0.0;
    cfg.spike_amplitude = 0.0;
    cfg.growth_rate = 0.0;
    const SyntheticRun made = generate_synthetic(cfg);
    for (const auto& row : made.run.rows)
        CHECK(row.at("indicator") == doctest::Approx(cfg.baseline_mean).epsilon(1e-15));
}

TEST_CASE("synthetic generation is deterministic") {
    SynthConfig cfg;
    cfg.noise_seed = 777;
    const SyntheticRun a = generate_synthetic(cfg);
    const SyntheticRun b = generate_synthetic(cfg);
    REQUIRE(a.run.size() == b.run.size());
    for (std::size_t i = 0; i < a.run.size(); ++i)
        CHECK(a.run.rows[i].at("indicator") == b.run.rows[i].at("indicator")); // bitwise
}

TEST_CASE("growth lifts the post-onset mean") {
    SynthConfig cfg;
    cfg.length = 200;
    cfg.onset_index = 100;
    cfg.growth_rate = 0.02;
    cfg.spike_amplitude = 0.0;
    const SyntheticRun made = generate_synthetic(cfg);
    const auto series = made.run.feature_series("indicator");
    double first = 0.0, second = 0.0;
    for (int i = 0; i < 100; ++i) first += series[static_cast<std::size_t>(i)];
    for (int i = 100; i < 200; ++i) second += series[static_cast<std::size_t>(i)];
    CHECK(second / 100.0 > first / 100.0);
}

TEST_CASE("sidecar round trip") {
    TempDir dir;
    SynthConfig cfg;
    cfg.length = 123;
    cfg.onset_index = 61;
    cfg.growth_rate = 0.015;
    cfg.noise_seed = 99;
    const fs::path path = dir.path / "run.meta";
    write_synth_sidecar(path, cfg, 61);
    const SidecarInfo info = read_synth_sidecar(path);
    CHECK(info.true_onset == 61);
    CHECK(info.cfg.length == 123);
    CHECK(info.cfg.onset_index == 61);
    CHECK(info.cfg.growth_rate == doctest::Approx(0.015));
    CHECK(info.cfg.noise_seed == 99);
}

TEST_CASE("noise features extend the schema deterministically") {
    SynthConfig cfg;
    cfg.length = 40;
    cfg.onset_index = 20;
    RunSeries a = generate_synthetic(cfg).run;
    RunSeries b = generate_synthetic(cfg).run;
    add_noise_features(a, 2, 5);
    add_noise_features(b, 2, 5);
    CHECK(a.rows[0].size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.rows[i].at("noise_0") == b.rows[i].at("noise_0"));
        CHECK(a.rows[i].at("noise_1") == b.rows[i].at("noise_1"));
    }
}
