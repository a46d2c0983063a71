#include "sarnet/forecaster.hpp"

#include "sarnet/binio.hpp"
#include "sarnet/error.hpp"
#include "sarnet/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace sarnet {

namespace {
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
} // namespace

void ForecasterConfig::validate() const {
    if (seq_len < 1) raise(Errc::InvalidConfig, "seq_len must be >= 1");
    if (horizon < 1) raise(Errc::InvalidConfig, "horizon must be >= 1");
    if (channels.empty()) raise(Errc::InvalidConfig, "channels must be non-empty");
    for (int c : channels)
        if (c < 1) raise(Errc::InvalidConfig, "channel counts must be positive");
    if (kernel_size < 1) raise(Errc::InvalidConfig, "kernel_size must be >= 1");
    if (learning_rate < 0.0) raise(Errc::InvalidConfig, "learning_rate must be >= 0");
    if (epochs < 1) raise(Errc::InvalidConfig, "epochs must be >= 1");
    if (batch_size < 1) raise(Errc::InvalidConfig, "batch_size must be >= 1");
}

int ForecasterConfig::receptive_field() const {
    int sum = 0;
    for (std::size_t i = 0; i < channels.size(); ++i) sum += 1 << i;
    return 1 + (kernel_size - 1) * sum;
}

void Forecaster::build_layout() {
    blocks_.clear();
    std::size_t offset = 0;
    int in_ch = 1;
    for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
        BlockLayout block;
        block.in_ch = in_ch;
        block.out_ch = cfg_.channels[i];
        block.dilation = 1 << i;
        block.w_off = offset;
        offset += static_cast<std::size_t>(block.out_ch) * static_cast<std::size_t>(block.in_ch) *
                  static_cast<std::size_t>(cfg_.kernel_size);
        block.b_off = offset;
        offset += static_cast<std::size_t>(block.out_ch);
        block.has_projection = block.in_ch != block.out_ch;
        if (block.has_projection) {
            block.p_off = offset;
            offset += static_cast<std::size_t>(block.out_ch) * static_cast<std::size_t>(block.in_ch);
        }
        blocks_.push_back(block);
        in_ch = block.out_ch;
    }
    head_w_off_ = offset;
    offset += static_cast<std::size_t>(in_ch);
    head_b_off_ = offset;
    offset += 1;
    params_.assign(offset, 0.0);
    adam_m_.assign(offset, 0.0);
    adam_v_.assign(offset, 0.0);
    grad_.assign(offset, 0.0);
    adam_step_count_ = 0;
}

Forecaster Forecaster::init(const ForecasterConfig& cfg) {
    cfg.validate();
    Forecaster model;
    model.cfg_ = cfg;
    model.build_layout();

    // Symmetric uniform init scaled by fan-in; biases stay zero. Draw order
    // is fixed: per block conv weights then projection, finally the head.
    Rng rng(cfg.seed);
    for (const auto& block : model.blocks_) {
        const double w_scale = std::sqrt(1.0 / (block.in_ch * cfg.kernel_size));
        const std::size_t w_count = static_cast<std::size_t>(block.out_ch) *
                                    static_cast<std::size_t>(block.in_ch) *
                                    static_cast<std::size_t>(cfg.kernel_size);
        for (std::size_t i = 0; i < w_count; ++i)
            model.params_[block.w_off + i] = rng.uniform(-w_scale, w_scale);
        if (block.has_projection) {
            const double p_scale = std::sqrt(1.0 / block.in_ch);
            const std::size_t p_count =
                static_cast<std::size_t>(block.out_ch) * static_cast<std::size_t>(block.in_ch);
            for (std::size_t i = 0; i < p_count; ++i)
                model.params_[block.p_off + i] = rng.uniform(-p_scale, p_scale);
        }
    }
    const double h_scale = std::sqrt(1.0 / model.blocks_.back().out_ch);
    const auto head_n = static_cast<std::size_t>(model.blocks_.back().out_ch);
    for (std::size_t i = 0; i < head_n; ++i)
        model.params_[model.head_w_off_ + i] = rng.uniform(-h_scale, h_scale);
    return model;
}

void Forecaster::set_parameters(std::vector<double> params) {
    if (params.size() != params_.size())
        raise(Errc::InvalidConfig, "parameter count mismatch");
    params_ = std::move(params);
}

double Forecaster::forward_full(std::span<const double> window, Activations& acts) const {
    const int L = cfg_.seq_len;
    const int k = cfg_.kernel_size;

    acts.inputs.assign(blocks_.size(), {});
    acts.preacts.assign(blocks_.size(), {});

    std::vector<double> x(window.begin(), window.end()); // [1][L]
    for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
        const BlockLayout& block = blocks_[bi];
        acts.inputs[bi] = x;

        std::vector<double> s(static_cast<std::size_t>(block.out_ch) * static_cast<std::size_t>(L));
        std::vector<double> out(s.size());
        for (int o = 0; o < block.out_ch; ++o) {
            const double bias = params_[block.b_off + static_cast<std::size_t>(o)];
            for (int t = 0; t < L; ++t) {
                double acc = bias;
                for (int c = 0; c < block.in_ch; ++c) {
                    const std::size_t w_base =
                        block.w_off + (static_cast<std::size_t>(o) * block.in_ch + c) * k;
                    const double* xc = x.data() + static_cast<std::size_t>(c) * L;
                    for (int j = 0; j < k; ++j) {
                        const int tau = t - (k - 1 - j) * block.dilation;
                        if (tau >= 0) acc += params_[w_base + static_cast<std::size_t>(j)] * xc[tau];
                    }
                }
                s[static_cast<std::size_t>(o) * L + t] = acc;
            }
        }

        for (int o = 0; o < block.out_ch; ++o) {
            for (int t = 0; t < L; ++t) {
                const std::size_t idx = static_cast<std::size_t>(o) * L + t;
                double residual;
                if (block.has_projection) {
                    double acc = 0.0;
                    for (int c = 0; c < block.in_ch; ++c)
                        acc += params_[block.p_off + static_cast<std::size_t>(o) * block.in_ch + c] *
                               x[static_cast<std::size_t>(c) * L + t];
                    residual = acc;
                } else {
                    residual = x[static_cast<std::size_t>(o) * L + t];
                }
                out[idx] = std::max(s[idx], 0.0) + residual;
            }
        }

        acts.preacts[bi] = std::move(s);
        x = std::move(out);
    }
    acts.final_output = x;

    const int c_last = blocks_.back().out_ch;
    double z = params_[head_b_off_];
    for (int c = 0; c < c_last; ++c)
        z += params_[head_w_off_ + static_cast<std::size_t>(c)] *
             acts.final_output[static_cast<std::size_t>(c) * L + (L - 1)];
    return z;
}

double Forecaster::forward(std::span<const double> window) const {
    if (static_cast<int>(window.size()) != cfg_.seq_len)
        raise(Errc::BadWindowLength, "expected " + std::to_string(cfg_.seq_len) + " values, got " +
                                         std::to_string(window.size()));
    for (double v : window)
        if (!std::isfinite(v)) raise(Errc::NonFiniteLoss, "non-finite input value");
    Activations acts;
    return forward_full(window, acts);
}

std::vector<double> Forecaster::position_outputs(std::span<const double> window) const {
    if (static_cast<int>(window.size()) != cfg_.seq_len)
        raise(Errc::BadWindowLength, "expected " + std::to_string(cfg_.seq_len) + " values");
    Activations acts;
    forward_full(window, acts);

    const int L = cfg_.seq_len;
    const int c_last = blocks_.back().out_ch;
    std::vector<double> out(static_cast<std::size_t>(L));
    for (int t = 0; t < L; ++t) {
        double z = params_[head_b_off_];
        for (int c = 0; c < c_last; ++c)
            z += params_[head_w_off_ + static_cast<std::size_t>(c)] *
                 acts.final_output[static_cast<std::size_t>(c) * L + t];
        out[static_cast<std::size_t>(t)] = z;
    }
    return out;
}

void Forecaster::backward(const Activations& acts, double output_grad,
                          std::vector<double>& grad) const {
    const int L = cfg_.seq_len;
    const int k = cfg_.kernel_size;
    const int c_last = blocks_.back().out_ch;

    // Head.
    std::vector<double> g_out(static_cast<std::size_t>(c_last) * L, 0.0);
    for (int c = 0; c < c_last; ++c) {
        const std::size_t idx = static_cast<std::size_t>(c) * L + (L - 1);
        grad[head_w_off_ + static_cast<std::size_t>(c)] += output_grad * acts.final_output[idx];
        g_out[idx] = output_grad * params_[head_w_off_ + static_cast<std::size_t>(c)];
    }
    grad[head_b_off_] += output_grad;

    // Blocks, last to first.
    for (std::size_t bi = blocks_.size(); bi-- > 0;) {
        const BlockLayout& block = blocks_[bi];
        const std::vector<double>& x = acts.inputs[bi];
        const std::vector<double>& s = acts.preacts[bi];

        std::vector<double> g_x(static_cast<std::size_t>(block.in_ch) * L, 0.0);

        // Residual path.
        if (block.has_projection) {
            for (int o = 0; o < block.out_ch; ++o) {
                for (int c = 0; c < block.in_ch; ++c) {
                    const std::size_t p_idx =
                        block.p_off + static_cast<std::size_t>(o) * block.in_ch + c;
                    double acc = 0.0;
                    for (int t = 0; t < L; ++t) {
                        const double go = g_out[static_cast<std::size_t>(o) * L + t];
                        acc += go * x[static_cast<std::size_t>(c) * L + t];
                        g_x[static_cast<std::size_t>(c) * L + t] += params_[p_idx] * go;
                    }
                    grad[p_idx] += acc;
                }
            }
        } else {
            for (std::size_t i = 0; i < g_out.size(); ++i) g_x[i] += g_out[i];
        }

        // Convolution path through the rectifier.
        for (int o = 0; o < block.out_ch; ++o) {
            double g_bias = 0.0;
            for (int t = 0; t < L; ++t) {
                const std::size_t idx = static_cast<std::size_t>(o) * L + t;
                if (s[idx] <= 0.0) continue;
                const double gs = g_out[idx];
                if (gs == 0.0) continue;
                g_bias += gs;
                for (int c = 0; c < block.in_ch; ++c) {
                    const std::size_t w_base =
                        block.w_off + (static_cast<std::size_t>(o) * block.in_ch + c) * k;
                    for (int j = 0; j < k; ++j) {
                        const int tau = t - (k - 1 - j) * block.dilation;
                        if (tau < 0) continue;
                        grad[w_base + static_cast<std::size_t>(j)] +=
                            gs * x[static_cast<std::size_t>(c) * L + tau];
                        g_x[static_cast<std::size_t>(c) * L + tau] +=
                            gs * params_[w_base + static_cast<std::size_t>(j)];
                    }
                }
            }
            grad[block.b_off + static_cast<std::size_t>(o)] += g_bias;
        }

        g_out = std::move(g_x);
    }
}

void Forecaster::adam_step() {
    ++adam_step_count_;
    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam_step_count_));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam_step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        adam_m_[i] = kAdamBeta1 * adam_m_[i] + (1.0 - kAdamBeta1) * grad_[i];
        adam_v_[i] = kAdamBeta2 * adam_v_[i] + (1.0 - kAdamBeta2) * grad_[i] * grad_[i];
        const double m_hat = adam_m_[i] / bias1;
        const double v_hat = adam_v_[i] / bias2;
        params_[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
}

double Forecaster::sample_loss(const TrainPair& sample) const {
    Activations acts;
    const double z = forward_full(sample.window, acts);
    const double e = z - sample.target;
    return e * e;
}

TrainReport Forecaster::train(const std::vector<TrainPair>& train_pairs,
                              const std::vector<TrainPair>& val_pairs) {
    if (train_pairs.empty()) raise(Errc::TooFewRows, "no training pairs");
    for (const auto& pair : train_pairs)
        if (static_cast<int>(pair.window.size()) != cfg_.seq_len)
            raise(Errc::BadWindowLength, "training window length mismatch");
    for (const auto& pair : val_pairs)
        if (static_cast<int>(pair.window.size()) != cfg_.seq_len)
            raise(Errc::BadWindowLength, "validation window length mismatch");

    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    Rng rng(derive_seed(cfg_.seed, 1));

    std::vector<std::size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    Activations acts;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        rng.shuffle(order);

        double loss_sum = 0.0;
        const auto batch_size = static_cast<std::size_t>(cfg_.batch_size);
        for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
            const std::size_t end = std::min(order.size(), begin + batch_size);
            const double batch_n = static_cast<double>(end - begin);

            std::fill(grad_.begin(), grad_.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const TrainPair& pair = train_pairs[order[i]];
                const double z = forward_full(pair.window, acts);
                const double e = z - pair.target;
                batch_loss += e * e;
                backward(acts, 2.0 * e / batch_n, grad_);
            }
            if (!std::isfinite(batch_loss))
                raise(Errc::NonFiniteLoss, "epoch " + std::to_string(epoch) + ", batch at index " +
                                               std::to_string(begin));
            loss_sum += batch_loss;
            adam_step();
        }
        report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    }

    if (!val_pairs.empty()) {
        double loss = 0.0;
        for (const auto& pair : val_pairs) loss += sample_loss(pair);
        report.validation_loss = loss / static_cast<double>(val_pairs.size());
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

PredictedSeries Forecaster::predict_sequence(std::span<const double> series) const {
    const int L = cfg_.seq_len;
    const int h = cfg_.horizon;
    const int n = static_cast<int>(series.size());
    if (n < L + h)
        raise(Errc::RunTooShort, "need >= " + std::to_string(L + h) + " points, got " +
                                     std::to_string(n));

    PredictedSeries out;
    out.first_index = L + h - 1;
    out.values.reserve(static_cast<std::size_t>(n - out.first_index));
    Activations acts;
    for (int t = out.first_index; t < n; ++t) {
        const auto window = series.subspan(static_cast<std::size_t>(t - h - L + 1),
                                           static_cast<std::size_t>(L));
        out.values.push_back(forward_full(window, acts));
    }
    return out;
}

std::vector<double> Forecaster::loss_gradient(const TrainPair& sample) const {
    if (static_cast<int>(sample.window.size()) != cfg_.seq_len)
        raise(Errc::BadWindowLength, "sample window length mismatch");
    Activations acts;
    const double z = forward_full(sample.window, acts);
    std::vector<double> grad(params_.size(), 0.0);
    backward(acts, 2.0 * (z - sample.target), grad);
    return grad;
}

double Forecaster::gradient_check(const TrainPair& sample) const {
    if (parameter_count() > 500)
        raise(Errc::InvalidConfig, "gradient check is for small models (<= 500 parameters)");

    Forecaster probe = *this;
    const std::vector<double> analytic = loss_gradient(sample);

    const double step = 1e-5;
    double max_rel = 0.0;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const double saved = probe.params_[i];
        probe.params_[i] = saved + step;
        const double loss_plus = probe.sample_loss(sample);
        probe.params_[i] = saved - step;
        const double loss_minus = probe.sample_loss(sample);
        probe.params_[i] = saved;

        const double numeric = (loss_plus - loss_minus) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
        max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
    return max_rel;
}

std::vector<TrainPair> make_training_pairs(std::span<const double> series, int seq_len, int horizon) {
    std::vector<TrainPair> pairs;
    const int n = static_cast<int>(series.size());
    for (int end = seq_len - 1; end + horizon < n; ++end) {
        TrainPair pair;
        pair.window.assign(series.begin() + (end - seq_len + 1), series.begin() + end + 1);
        pair.target = series[static_cast<std::size_t>(end + horizon)];
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

namespace {
constexpr char kForecasterMagic[9] = "SRNFCS01";
} // namespace

void Forecaster::save(const std::filesystem::path& path) const {
    BinWriter out(path);
    out.magic(kForecasterMagic);
    out.i32(cfg_.seq_len);
    out.i32(cfg_.horizon);
    out.u64(cfg_.channels.size());
    for (int c : cfg_.channels) out.i32(c);
    out.i32(cfg_.kernel_size);
    out.f64(cfg_.learning_rate);
    out.i32(cfg_.epochs);
    out.i32(cfg_.batch_size);
    out.u64(cfg_.seed);
    out.f64_array(params_);
    out.finish(path);
}

Forecaster Forecaster::load(const std::filesystem::path& path) {
    BinReader in(path);
    in.expect_magic(kForecasterMagic);

    ForecasterConfig cfg;
    cfg.seq_len = in.i32();
    cfg.horizon = in.i32();
    cfg.channels.resize(in.u64());
    for (auto& c : cfg.channels) c = in.i32();
    cfg.kernel_size = in.i32();
    cfg.learning_rate = in.f64();
    cfg.epochs = in.i32();
    cfg.batch_size = in.i32();
    cfg.seed = in.u64();
    cfg.validate();

    Forecaster model;
    model.cfg_ = cfg;
    model.build_layout();
    model.set_parameters(in.f64_array());
    return model;
}

} // namespace sarnet
