#include "sarnet/ensemble.hpp"

#include "sarnet/binio.hpp"
#include "sarnet/error.hpp"
#include "sarnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sarnet {

double segment_label_at(int t, int onset_index, int failure_index) {
    if (onset_index >= failure_index) raise(Errc::EmptySegment, "onset at or after failure");
    return static_cast<double>(failure_index - t) / static_cast<double>(failure_index - onset_index);
}

std::vector<double> segment_labels(int onset_index, int failure_index) {
    if (onset_index >= failure_index) raise(Errc::EmptySegment, "onset at or after failure");
    std::vector<double> labels;
    labels.reserve(static_cast<std::size_t>(failure_index - onset_index) + 1);
    for (int t = onset_index; t <= failure_index; ++t)
        labels.push_back(segment_label_at(t, onset_index, failure_index));
    return labels;
}

double RegressionTree::predict_row(std::span<const double> row) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const TreeNode& node = nodes[static_cast<std::size_t>(i)];
        i = row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
}

namespace {

// Mean over a canonical (sorted) order so the result is invariant to the
// caller's row ordering.
double sorted_mean(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double children_sse = 0.0;
};

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> y, int max_depth, int min_leaf,
                int features_per_split, Rng* rng)
        : x_(x), y_(y), max_depth_(max_depth), min_leaf_(min_leaf),
          features_per_split_(features_per_split), rng_(rng) {}

    RegressionTree build(std::vector<int> rows) {
        RegressionTree tree;
        grow(tree, std::move(rows), 0);
        return tree;
    }

private:
    int grow(RegressionTree& tree, std::vector<int> rows, int depth) {
        const int node_index = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();

        std::vector<double> labels;
        labels.reserve(rows.size());
        for (int r : rows) labels.push_back(y_[static_cast<std::size_t>(r)]);
        const double mean = sorted_mean(labels);

        const bool depth_reached = max_depth_ > 0 && depth >= max_depth_;
        const bool too_small = static_cast<int>(rows.size()) < 2 * min_leaf_;
        const bool pure =
            std::all_of(labels.begin(), labels.end(), [&](double v) { return v == labels[0]; });

        SplitChoice split;
        if (!depth_reached && !too_small && !pure) split = best_split(rows);

        if (!split.found) {
            tree.nodes[static_cast<std::size_t>(node_index)].value = mean;
            return node_index;
        }

        std::vector<int> left_rows, right_rows;
        left_rows.reserve(rows.size());
        right_rows.reserve(rows.size());
        for (int r : rows) {
            if (x_.at(static_cast<std::size_t>(r), static_cast<std::size_t>(split.feature)) <=
                split.threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }

        rows.clear();
        rows.shrink_to_fit();

        const int left = grow(tree, std::move(left_rows), depth + 1);
        const int right = grow(tree, std::move(right_rows), depth + 1);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(node_index)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        return node_index;
    }

    std::vector<int> candidate_features() {
        const int m = static_cast<int>(x_.cols());
        std::vector<int> features(static_cast<std::size_t>(m));
        std::iota(features.begin(), features.end(), 0);
        if (rng_ == nullptr || features_per_split_ >= m) return features;

        // Partial Fisher-Yates, then ascending order so ties keep breaking
        // toward the lowest feature index.
        for (int i = 0; i < features_per_split_; ++i) {
            const int j = i + static_cast<int>(rng_->below(static_cast<std::uint64_t>(m - i)));
            std::swap(features[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(j)]);
        }
        features.resize(static_cast<std::size_t>(features_per_split_));
        std::sort(features.begin(), features.end());
        return features;
    }

    SplitChoice best_split(const std::vector<int>& rows) {
        SplitChoice best;
        const std::size_t n = rows.size();

        for (int feature : candidate_features()) {
            // Canonical (value, label) order makes the scan independent of
            // the incoming row order.
            std::vector<std::pair<double, double>> sorted;
            sorted.reserve(n);
            for (int r : rows)
                sorted.emplace_back(
                    x_.at(static_cast<std::size_t>(r), static_cast<std::size_t>(feature)),
                    y_[static_cast<std::size_t>(r)]);
            std::sort(sorted.begin(), sorted.end());

            // Prefix sums of labels and squared labels.
            double left_sum = 0.0, left_sq = 0.0;
            double total_sum = 0.0, total_sq = 0.0;
            for (const auto& [v, label] : sorted) {
                total_sum += label;
                total_sq += label * label;
            }

            for (std::size_t i = 0; i + 1 < n; ++i) {
                left_sum += sorted[i].second;
                left_sq += sorted[i].second * sorted[i].second;

                if (sorted[i].first == sorted[i + 1].first) continue; // no boundary here
                const std::size_t left_n = i + 1;
                const std::size_t right_n = n - left_n;
                if (static_cast<int>(left_n) < min_leaf_ || static_cast<int>(right_n) < min_leaf_)
                    continue;

                const double right_sum = total_sum - left_sum;
                const double right_sq = total_sq - left_sq;
                const double sse = (left_sq - left_sum * left_sum / static_cast<double>(left_n)) +
                                   (right_sq - right_sum * right_sum / static_cast<double>(right_n));

                double threshold = (sorted[i].first + sorted[i + 1].first) / 2.0;
                if (!(threshold < sorted[i + 1].first)) threshold = sorted[i].first;

                if (!best.found || sse < best.children_sse) {
                    best.found = true;
                    best.feature = feature;
                    best.threshold = threshold;
                    best.children_sse = sse;
                }
            }
        }
        return best;
    }

    const Matrix& x_;
    std::span<const double> y_;
    int max_depth_;
    int min_leaf_;
    int features_per_split_;
    Rng* rng_; // nullptr disables feature subsampling
};

void check_training_data(const Matrix& x, std::span<const double> y, int min_leaf) {
    if (x.rows() != y.size()) raise(Errc::LengthMismatch, "rows/labels mismatch");
    if (static_cast<int>(x.rows()) < 2 * min_leaf)
        raise(Errc::TooFewRows, "need >= 2 * min_leaf rows");
    for (double v : x.data())
        if (!std::isfinite(v)) raise(Errc::NonFiniteLoss, "non-finite feature value");
    for (double v : y)
        if (!std::isfinite(v)) raise(Errc::NonFiniteLoss, "non-finite label");
}

} // namespace

double ForestModel::predict_row(std::span<const double> row) const {
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.predict_row(row);
    return sum / static_cast<double>(trees.size());
}

std::vector<double> ForestModel::predict(const Matrix& x) const {
    std::vector<double> out;
    out.reserve(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) out.push_back(predict_row(x.row(r)));
    return out;
}

ForestModel fit_forest(const Matrix& x, std::span<const double> y, const ForestConfig& cfg) {
    if (cfg.n_trees < 1) raise(Errc::InvalidConfig, "n_trees must be >= 1");
    if (cfg.min_leaf < 1) raise(Errc::InvalidConfig, "min_leaf must be >= 1");
    check_training_data(x, y, cfg.min_leaf);

    const int m = static_cast<int>(x.cols());
    const int per_split = cfg.features_per_split > 0
                              ? std::min(cfg.features_per_split, m)
                              : (m + 2) / 3; // ceil(m / 3)

    ForestModel model;
    model.config = cfg;
    model.config.features_per_split = per_split;
    model.trees.reserve(static_cast<std::size_t>(cfg.n_trees));

    const int n = static_cast<int>(x.rows());
    for (int tree_index = 0; tree_index < cfg.n_trees; ++tree_index) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(tree_index)));

        std::vector<int> rows(static_cast<std::size_t>(n));
        if (cfg.bootstrap) {
            for (auto& r : rows) r = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }

        Rng* split_rng = per_split < m ? &rng : nullptr;
        TreeBuilder builder(x, y, cfg.max_depth, cfg.min_leaf, per_split, split_rng);
        model.trees.push_back(builder.build(std::move(rows)));
    }
    return model;
}

double GbmModel::predict_row(std::span<const double> row) const {
    double value = f0;
    for (const auto& tree : trees) value += config.learning_rate * tree.predict_row(row);
    return value;
}

std::vector<double> GbmModel::predict(const Matrix& x) const {
    return staged_predict(x, static_cast<int>(trees.size()));
}

std::vector<double> GbmModel::staged_predict(const Matrix& x, int rounds) const {
    rounds = std::min(rounds, static_cast<int>(trees.size()));
    std::vector<double> out(x.rows(), f0);
    for (int k = 0; k < rounds; ++k)
        for (std::size_t r = 0; r < x.rows(); ++r)
            out[r] += config.learning_rate * trees[static_cast<std::size_t>(k)].predict_row(x.row(r));
    return out;
}

GbmModel fit_gbm(const Matrix& x, std::span<const double> y, const GbmConfig& cfg) {
    if (cfg.n_rounds < 0) raise(Errc::InvalidConfig, "n_rounds must be >= 0");
    if (cfg.learning_rate <= 0.0) raise(Errc::InvalidConfig, "learning_rate must be positive");
    if (cfg.min_leaf < 1) raise(Errc::InvalidConfig, "min_leaf must be >= 1");
    check_training_data(x, y, cfg.min_leaf);

    GbmModel model;
    model.config = cfg;

    const std::size_t n = x.rows();
    model.f0 = sorted_mean(std::vector<double>(y.begin(), y.end()));

    std::vector<double> current(n, model.f0);
    std::vector<double> residuals(n);
    std::vector<int> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0);

    for (int round = 0; round < cfg.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) residuals[i] = y[i] - current[i];

        TreeBuilder builder(x, residuals, cfg.max_depth, cfg.min_leaf,
                            static_cast<int>(x.cols()), nullptr);
        RegressionTree tree = builder.build(all_rows);

        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            current[i] += cfg.learning_rate * tree.predict_row(x.row(i));
            const double d = y[i] - current[i];
            loss += d * d;
        }
        model.trees.push_back(std::move(tree));
        model.train_loss.push_back(loss / static_cast<double>(n));
    }
    return model;
}

double BlendModel::combine(double rf, double gbm) const {
    if (method == BlendMethod::Ridge) return ridge_rf * rf + ridge_gbm * gbm;
    return alpha * rf + (1.0 - alpha) * gbm;
}

BlendModel fit_blend(std::span<const double> pred_rf, std::span<const double> pred_gbm,
                     std::span<const double> y_val, BlendMethod method) {
    if (pred_rf.size() != pred_gbm.size() || pred_rf.size() != y_val.size())
        raise(Errc::LengthMismatch, "blend inputs must have equal lengths");
    if (y_val.size() < 2) raise(Errc::TooFewRows, "blend needs >= 2 validation points");

    const std::size_t n = y_val.size();
    BlendModel model;
    model.method = method;

    if (method == BlendMethod::Grid) {
        double best_mse = std::numeric_limits<double>::infinity();
        double best_alpha = 0.0;
        for (int step = 0; step <= 100; ++step) {
            const double alpha = static_cast<double>(step) / 100.0;
            double mse = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = alpha * pred_rf[i] + (1.0 - alpha) * pred_gbm[i] - y_val[i];
                mse += d * d;
            }
            mse /= static_cast<double>(n);
            if (mse < best_mse) {
                best_mse = mse;
                best_alpha = alpha;
            }
        }
        model.alpha = best_alpha;
        model.validation_mse = best_mse;
        return model;
    }

    // Ridge: minimize ||y - a*rf - b*gbm||^2 + lambda (a^2 + b^2).
    const double lambda = 1e-3;
    double saa = lambda, sbb = lambda, sab = 0.0, say = 0.0, sby = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        saa += pred_rf[i] * pred_rf[i];
        sbb += pred_gbm[i] * pred_gbm[i];
        sab += pred_rf[i] * pred_gbm[i];
        say += pred_rf[i] * y_val[i];
        sby += pred_gbm[i] * y_val[i];
    }
    const double det = saa * sbb - sab * sab;
    if (det == 0.0) raise(Errc::NonFiniteLoss, "singular ridge system");
    model.ridge_rf = (sbb * say - sab * sby) / det;
    model.ridge_gbm = (saa * sby - sab * say) / det;

    double mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = model.ridge_rf * pred_rf[i] + model.ridge_gbm * pred_gbm[i] - y_val[i];
        mse += d * d;
    }
    model.validation_mse = mse / static_cast<double>(n);
    return model;
}

std::vector<double> predict_rul(const EnsembleModel& model, const Matrix& x) {
    if (x.cols() != model.feature_schema.size())
        raise(Errc::SchemaMismatch, "expected " + std::to_string(model.feature_schema.size()) +
                                        " features, got " + std::to_string(x.cols()));

    std::vector<double> out;
    out.reserve(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double rf = model.forest.predict_row(x.row(r));
        const double gbm = model.gbm.predict_row(x.row(r));
        double v = model.blend.combine(rf, gbm);
        if (model.clip_to_unit) v = std::clamp(v, 0.0, 1.0);
        out.push_back(v);
    }
    return out;
}

namespace {

constexpr char kEnsembleMagic[9] = "SRNENS01";

void write_tree(BinWriter& out, const RegressionTree& tree) {
    out.u64(tree.nodes.size());
    for (const auto& node : tree.nodes) {
        out.i32(node.feature);
        out.f64(node.threshold);
        out.i32(node.left);
        out.i32(node.right);
        out.f64(node.value);
    }
}

RegressionTree read_tree(BinReader& in) {
    RegressionTree tree;
    const std::uint64_t n = in.u64();
    tree.nodes.resize(n);
    for (auto& node : tree.nodes) {
        node.feature = in.i32();
        node.threshold = in.f64();
        node.left = in.i32();
        node.right = in.i32();
        node.value = in.f64();
    }
    return tree;
}

} // namespace

void EnsembleModel::save(const std::filesystem::path& path) const {
    BinWriter out(path);
    out.magic(kEnsembleMagic);

    out.i32(forest.config.n_trees);
    out.i32(forest.config.max_depth);
    out.i32(forest.config.min_leaf);
    out.i32(forest.config.features_per_split);
    out.u32(forest.config.bootstrap ? 1 : 0);
    out.u64(forest.config.seed);
    out.u64(forest.trees.size());
    for (const auto& tree : forest.trees) write_tree(out, tree);

    out.i32(gbm.config.n_rounds);
    out.f64(gbm.config.learning_rate);
    out.i32(gbm.config.max_depth);
    out.i32(gbm.config.min_leaf);
    out.u64(gbm.config.seed);
    out.f64(gbm.f0);
    out.u64(gbm.trees.size());
    for (const auto& tree : gbm.trees) write_tree(out, tree);
    out.f64_array(gbm.train_loss);

    out.u32(blend.method == BlendMethod::Grid ? 0 : 1);
    out.f64(blend.alpha);
    out.f64(blend.ridge_rf);
    out.f64(blend.ridge_gbm);
    out.f64(blend.validation_mse);

    out.u32(clip_to_unit ? 1 : 0);
    out.u64(feature_schema.size());
    for (const auto& name : feature_schema) out.str(name);

    out.finish(path);
}

EnsembleModel EnsembleModel::load(const std::filesystem::path& path) {
    BinReader in(path);
    in.expect_magic(kEnsembleMagic);

    EnsembleModel model;
    model.forest.config.n_trees = in.i32();
    model.forest.config.max_depth = in.i32();
    model.forest.config.min_leaf = in.i32();
    model.forest.config.features_per_split = in.i32();
    model.forest.config.bootstrap = in.u32() != 0;
    model.forest.config.seed = in.u64();
    model.forest.trees.resize(in.u64());
    for (auto& tree : model.forest.trees) tree = read_tree(in);

    model.gbm.config.n_rounds = in.i32();
    model.gbm.config.learning_rate = in.f64();
    model.gbm.config.max_depth = in.i32();
    model.gbm.config.min_leaf = in.i32();
    model.gbm.config.seed = in.u64();
    model.gbm.f0 = in.f64();
    model.gbm.trees.resize(in.u64());
    for (auto& tree : model.gbm.trees) tree = read_tree(in);
    model.gbm.train_loss = in.f64_array();

    model.blend.method = in.u32() == 0 ? BlendMethod::Grid : BlendMethod::Ridge;
    model.blend.alpha = in.f64();
    model.blend.ridge_rf = in.f64();
    model.blend.ridge_gbm = in.f64();
    model.blend.validation_mse = in.f64();

    model.clip_to_unit = in.u32() != 0;
    model.feature_schema.resize(in.u64());
    for (auto& name : model.feature_schema) name = in.str();
    return model;
}

} // namespace sarnet
