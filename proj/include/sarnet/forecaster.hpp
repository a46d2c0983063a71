#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace sarnet {

struct ForecasterConfig {
    int seq_len = 20;                    // input window length L
    int horizon = 5;                     // predict the indicator h steps ahead
    std::vector<int> channels = {32, 32, 16};
    int kernel_size = 3;
    double learning_rate = 1e-3;
    int epochs = 10;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
    int receptive_field() const; // 1 + (kernel_size - 1) * sum(2^i)
};

struct TrainPair {
    std::vector<double> window; // length seq_len
    double target = 0.0;        // indicator value horizon steps after the window
};

struct TrainReport {
    std::vector<double> epoch_loss;        // mean squared error per epoch
    std::optional<double> validation_loss; // final MSE on the held-out pairs
    double wall_seconds = 0.0;
};

// Forecast values aligned to run indices: values[i] is the forecast for index
// first_index + i, produced from the window ending at first_index + i - horizon.
struct PredictedSeries {
    int first_index = 0;
    std::vector<double> values;
};

// Dilated causal residual conv net: per block, a causal convolution
// (left zero-padding, dilation 2^i), bias, rectifier, and a residual add
// through an identity or pointwise projection; a linear head reads the last
// timestep of the final block. Trained with Adam on squared error.
class Forecaster {
public:
    static Forecaster init(const ForecasterConfig& cfg);

    double forward(std::span<const double> window) const; // BadWindowLength on size != L

    // Head output at every position of the final block; position p depends
    // only on inputs at indices <= p.
    std::vector<double> position_outputs(std::span<const double> window) const;

    TrainReport train(const std::vector<TrainPair>& train_pairs,
                      const std::vector<TrainPair>& val_pairs = {});

    PredictedSeries predict_sequence(std::span<const double> series) const;

    // Analytic gradient of the squared error on one sample, in parameter
    // layout order.
    std::vector<double> loss_gradient(const TrainPair& sample) const;

    // Max relative error between analytic and central finite-difference
    // gradients on one sample. Only sensible for small models (<= 500
    // parameters, enforced).
    double gradient_check(const TrainPair& sample) const;

    std::size_t parameter_count() const { return params_.size(); }
    const std::vector<double>& parameters() const { return params_; }
    void set_parameters(std::vector<double> params);
    const ForecasterConfig& config() const { return cfg_; }

    void save(const std::filesystem::path& path) const;
    static Forecaster load(const std::filesystem::path& path);

private:
    struct BlockLayout {
        int in_ch = 0;
        int out_ch = 0;
        int dilation = 1;
        std::size_t w_off = 0; // [out][in][k]
        std::size_t b_off = 0; // [out]
        std::size_t p_off = 0; // [out][in]; valid iff has_projection
        bool has_projection = false;
    };

    struct Activations {
        std::vector<std::vector<double>> inputs;  // x_i per block, flat [ch * L]
        std::vector<std::vector<double>> preacts; // s_i per block, flat [out * L]
        std::vector<double> final_output;         // x_B, flat [ch_last * L]
    };

    Forecaster() = default;
    void build_layout();
    double forward_full(std::span<const double> window, Activations& acts) const;
    void backward(const Activations& acts, double output_grad,
                  std::vector<double>& grad) const;
    double sample_loss(const TrainPair& sample) const;
    void adam_step();

    ForecasterConfig cfg_;
    std::vector<BlockLayout> blocks_;
    std::size_t head_w_off_ = 0;
    std::size_t head_b_off_ = 0;
    std::vector<double> params_;

    // Adam state
    std::vector<double> adam_m_;
    std::vector<double> adam_v_;
    std::vector<double> grad_;
    long adam_step_count_ = 0;
};

// Sliding windows with stride 1 paired with the target h steps after each
// window's end.
std::vector<TrainPair> make_training_pairs(std::span<const double> series, int seq_len, int horizon);

} // namespace sarnet
