#include "sarnet/metrics.hpp"

#include "sarnet/error.hpp"

#include <cmath>
#include <sstream>

namespace sarnet {

namespace {

void check_lengths(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size())
        raise(Errc::LengthMismatch,
              std::to_string(y.size()) + " vs " + std::to_string(y_hat.size()));
    if (y.empty()) raise(Errc::LengthMismatch, "empty series");
}

} // namespace

double mae(std::span<const double> y, std::span<const double> y_hat) {
    check_lengths(y, y_hat);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(y[i] - y_hat[i]);
    return sum / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> y_hat) {
    check_lengths(y, y_hat);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - y_hat[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(y.size()));
}

double r2(std::span<const double> y, std::span<const double> y_hat) {
    check_lengths(y, y_hat);
    if (y.size() < 2) raise(Errc::LengthMismatch, "r2 needs >= 2 points");

    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());

    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y_hat[i] - y[i];
        const double d = mean - y[i];
        ss_res += r * r;
        ss_tot += d * d;
    }
    if (ss_tot == 0.0) raise(Errc::ConstantTarget, "r2 undefined for constant target");
    return 1.0 - ss_res / ss_tot;
}

double mape(std::span<const double> y, std::span<const double> y_hat, double epsilon) {
    check_lengths(y, y_hat);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        sum += std::abs(y[i] - y_hat[i]) / std::max(std::abs(y[i]), epsilon);
    return 100.0 * sum / static_cast<double>(y.size());
}

double phm_score(std::span<const double> y, std::span<const double> y_hat) {
    check_lengths(y, y_hat);
    const double ln_half = std::log(0.5);

    double sum = 0.0;
    int scored = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) continue; // percentage error undefined at failure
        const double er = (y[i] - y_hat[i]) / y[i] * 100.0;
        const double a = er <= 0.0 ? std::exp(-ln_half * er / 5.0) : std::exp(ln_half * er / 20.0);
        sum += a;
        ++scored;
    }
    if (scored == 0) raise(Errc::NoScorablePoints, "all targets are zero");
    return sum / static_cast<double>(scored);
}

MetricsReport compute_metrics(std::span<const double> y, std::span<const double> y_hat,
                              const std::string& mode, double epsilon) {
    MetricsReport report;
    report.mae = mae(y, y_hat);
    report.rmse = rmse(y, y_hat);
    report.r2 = r2(y, y_hat);
    report.mape_percent = mape(y, y_hat, epsilon);
    report.phm_score = phm_score(y, y_hat);
    report.n_points = static_cast<int>(y.size());
    report.mode = mode;
    report.epsilon_used = epsilon;
    return report;
}

std::string to_key_value_text(const MetricsReport& report) {
    std::ostringstream out;
    out << "mode = " << report.mode << '\n'
        << "n_points = " << report.n_points << '\n'
        << "mae = " << report.mae << '\n'
        << "rmse = " << report.rmse << '\n'
        << "r2 = " << report.r2 << '\n'
        << "mape_percent = " << report.mape_percent << '\n'
        << "phm_score = " << report.phm_score << '\n'
        << "epsilon_used = " << report.epsilon_used << '\n';
    return out.str();
}

} // namespace sarnet
