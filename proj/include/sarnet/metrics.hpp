#pragma once

#include <span>
#include <string>

namespace sarnet {

struct MetricsReport {
    double mae = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
    double mape_percent = 0.0;
    double phm_score = 0.0;
    int n_points = 0;
    std::string mode; // "segment" or "full"
    double epsilon_used = 1e-8;
};

double mae(std::span<const double> y, std::span<const double> y_hat);
double rmse(std::span<const double> y, std::span<const double> y_hat);
double r2(std::span<const double> y, std::span<const double> y_hat);

// 100 * mean(|y - y_hat| / max(|y|, epsilon)); epsilon guards the y -> 0 tail.
double mape(std::span<const double> y, std::span<const double> y_hat, double epsilon = 1e-8);

// Asymmetric accuracy score in (0, 1]: per-point A = exp(-ln(0.5) * Er / 5)
// for Er <= 0 (late) and exp(ln(0.5) * Er / 20) for Er > 0 (early), with
// Er = (y - y_hat) / y * 100. Points with y == 0 are excluded from the mean.
double phm_score(std::span<const double> y, std::span<const double> y_hat);

MetricsReport compute_metrics(std::span<const double> y, std::span<const double> y_hat,
                              const std::string& mode, double epsilon = 1e-8);

// Key-value text record, one field per line.
std::string to_key_value_text(const MetricsReport& report);

} // namespace sarnet
