#pragma once

#include "sarnet/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sarnet {

// Normalized segment RUL, Eq-style: (T_f - t) / (T_f - t_s) for t in
// [t_s, T_f]; 1 at onset, 0 at failure.
double segment_label_at(int t, int onset_index, int failure_index);
std::vector<double> segment_labels(int onset_index, int failure_index);

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0; // leaf mean
};

struct RegressionTree {
    std::vector<TreeNode> nodes; // node 0 is the root

    double predict_row(std::span<const double> row) const;
};

struct ForestConfig {
    int n_trees = 100;
    int max_depth = 12; // <= 0 means unlimited
    int min_leaf = 2;
    int features_per_split = 0; // 0 means ceil(m / 3)
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

struct ForestModel {
    ForestConfig config;
    std::vector<RegressionTree> trees;

    double predict_row(std::span<const double> row) const; // exact mean of trees
    std::vector<double> predict(const Matrix& x) const;
};

ForestModel fit_forest(const Matrix& x, std::span<const double> y, const ForestConfig& cfg);

struct GbmConfig {
    int n_rounds = 200;
    double learning_rate = 0.05;
    int max_depth = 3; // <= 0 means unlimited
    int min_leaf = 5;
    std::uint64_t seed = 0;
};

// Stagewise least-squares boosting: F_0 = mean(y), each round fits a tree to
// the residuals and adds it with shrinkage.
struct GbmModel {
    GbmConfig config;
    double f0 = 0.0;
    std::vector<RegressionTree> trees;
    std::vector<double> train_loss; // MSE after each round

    double predict_row(std::span<const double> row) const;
    std::vector<double> predict(const Matrix& x) const;
    std::vector<double> staged_predict(const Matrix& x, int rounds) const;
};

GbmModel fit_gbm(const Matrix& x, std::span<const double> y, const GbmConfig& cfg);

enum class BlendMethod { Grid, Ridge };

struct BlendModel {
    BlendMethod method = BlendMethod::Grid;
    double alpha = 0.5;      // convex weight on the forest (grid mode)
    double ridge_rf = 0.0;   // ridge mode coefficients, reported verbatim
    double ridge_gbm = 0.0;
    double validation_mse = 0.0;

    double combine(double rf, double gbm) const;
};

// Grid: alpha over {0, 0.01, ..., 1} minimizing validation MSE (lowest alpha
// wins ties). Ridge: two-coefficient ridge, lambda = 1e-3, no intercept.
BlendModel fit_blend(std::span<const double> pred_rf, std::span<const double> pred_gbm,
                     std::span<const double> y_val, BlendMethod method = BlendMethod::Grid);

struct EnsembleModel {
    ForestModel forest;
    GbmModel gbm;
    BlendModel blend;
    std::vector<std::string> feature_schema;
    bool clip_to_unit = true;

    void save(const std::filesystem::path& path) const;
    static EnsembleModel load(const std::filesystem::path& path);
};

std::vector<double> predict_rul(const EnsembleModel& model, const Matrix& x);

} // namespace sarnet
