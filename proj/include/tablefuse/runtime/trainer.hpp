#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tablefuse/detail/rng.hpp"
#include "tablefuse/runtime/fusion_model.hpp"
#include "tablefuse/runtime/metrics.hpp"
#include "tablefuse/runtime/processors.hpp"
#include "tablefuse/task.hpp"

namespace tablefuse {

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t batch_size = 32;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    TaskKind task = TaskKind::binary;
    double val_fraction = 0.2;
    // [w_f, w_1, ..., w_n]; empty keeps the spec's weights.
    std::vector<double> loss_weights;
    // Scalar override applied uniformly to every branch weight (the flat
    // "loss_weight" hyperparameter); the fusion head keeps its weight.
    std::optional<double> branch_loss_weight;
    // Replaces the spec's hidden widths with {w, w} when nonzero.
    std::size_t hidden_width = 0;

    void validate() const {
        if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be > 0");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (val_fraction < 0 || val_fraction >= 1)
            throw std::invalid_argument("val_fraction must be in [0,1)");
    }

    // The flat view shown to HPO; overlay() parses values back.
    nlohmann::json flat() const {
        double branch_weight = 1.0;
        if (loss_weights.size() > 1) branch_weight = loss_weights[1];
        if (branch_loss_weight) branch_weight = *branch_loss_weight;
        return {{"learning_rate", learning_rate},
                {"batch_size", batch_size},
                {"epochs", epochs},
                {"hidden_width", hidden_width},
                {"loss_weight", branch_weight}};
    }

    // Applies one hyperparameter assignment; names follow flat().
    void overlay(const std::string& name, const nlohmann::json& value) {
        auto as_double = [&value, &name]() -> double {
            if (value.is_number()) return value.get<double>();
            if (value.is_string()) {
                const auto v = detail::parse_number(value.get<std::string>());
                if (v) return *v;
            }
            throw std::invalid_argument("hyperparameter '" + name + "' is not numeric");
        };
        if (name == "learning_rate") {
            learning_rate = as_double();
        } else if (name == "batch_size") {
            batch_size = static_cast<std::size_t>(as_double());
        } else if (name == "epochs") {
            epochs = static_cast<std::size_t>(as_double());
        } else if (name == "hidden_width") {
            hidden_width = static_cast<std::size_t>(as_double());
        } else if (name == "loss_weight") {
            branch_loss_weight = as_double();
        } else {
            throw std::invalid_argument("unknown hyperparameter: " + name);
        }
    }
};

struct SplitIndices {
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
};

// Deterministic seeded shuffle split.
inline SplitIndices make_split(std::size_t n_rows, double val_fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) order[i] = i;
    detail::Rng rng(seed ^ 0x51B1CE57ULL);
    rng.shuffle(order);
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n_rows)));
    SplitIndices split;
    split.val_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    split.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(split.train_rows.begin(), split.train_rows.end());
    std::sort(split.val_rows.begin(), split.val_rows.end());
    return split;
}

// Applies the config's architectural and loss-weight overrides to the spec.
inline FusionSpec spec_for_training(FusionSpec spec, const TrainConfig& config) {
    if (config.hidden_width > 0)
        spec.hidden_widths = {config.hidden_width, config.hidden_width};
    if (!config.loss_weights.empty()) {
        if (config.loss_weights.size() != spec.branches.size() + 1)
            throw std::invalid_argument("loss_weights must hold w_f plus one weight per branch");
        spec.fusion_weight = config.loss_weights[0];
        spec.branch_weights.assign(config.loss_weights.begin() + 1, config.loss_weights.end());
    }
    if (config.branch_loss_weight)
        spec.branch_weights.assign(spec.branches.size(), *config.branch_loss_weight);
    spec.validate();
    return spec;
}

// Scores fused predictions against the task metric.
inline double evaluate(const FusionParams& params, const ModalityBatch& batch,
                       const FusionSpec& spec, TaskKind task) {
    const ForwardOutput out = forward(batch, spec, params);
    const Eigen::VectorXd& y = batch.labels;
    const auto B = static_cast<std::size_t>(y.size());

    switch (task) {
        case TaskKind::multiclass: {
            std::vector<int> pred(B), truth(B);
            for (std::size_t r = 0; r < B; ++r) {
                Eigen::Index arg = 0;
                out.fused_logits.row(static_cast<Eigen::Index>(r)).maxCoeff(&arg);
                pred[r] = static_cast<int>(arg);
                truth[r] = static_cast<int>(y[static_cast<Eigen::Index>(r)]);
            }
            return accuracy(pred, truth);
        }
        case TaskKind::binary: {
            if (spec.output_dim != 2) throw std::invalid_argument("binary task needs output_dim 2");
            std::vector<double> scores(B);
            std::vector<int> labels(B);
            for (std::size_t r = 0; r < B; ++r) {
                const auto i = static_cast<Eigen::Index>(r);
                scores[r] = out.fused_logits(i, 1) - out.fused_logits(i, 0);
                labels[r] = static_cast<int>(y[i]);
            }
            return auc_rank(scores, labels);
        }
        case TaskKind::regression: {
            std::vector<double> pred(B), truth(B);
            for (std::size_t r = 0; r < B; ++r) {
                pred[r] = out.fused_logits(static_cast<Eigen::Index>(r), 0);
                truth[r] = y[static_cast<Eigen::Index>(r)];
            }
            return rmse(pred, truth);
        }
        case TaskKind::retrieval_pairs: {
            // Pair rows hold two symmetric item halves; score by cosine of the
            // two halves of the fused feature vector.
            if (spec.branches.size() % 2 != 0)
                throw std::invalid_argument("retrieval pairs need an even branch count");
            const auto half = static_cast<Eigen::Index>(spec.concat_dim() / 2);
            std::vector<double> scores(B);
            std::vector<int> labels(B);
            for (std::size_t r = 0; r < B; ++r) {
                const auto i = static_cast<Eigen::Index>(r);
                const Eigen::RowVectorXd a = out.fused_features.row(i).head(half);
                const Eigen::RowVectorXd b = out.fused_features.row(i).tail(half);
                const double denom = a.norm() * b.norm();
                scores[r] = denom > 0 ? a.dot(b) / denom : 0.0;
                labels[r] = static_cast<int>(y[i]);
            }
            return auc_rank(scores, labels);
        }
    }
    throw std::logic_error("unknown task kind");
}

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double metric = 0.0;
};

struct TrainOutcome {
    FusionParams params;
    FusionSpec spec;  // after config overrides
    std::vector<EpochStats> history;
    double final_metric = 0.0;
};

// Plain seeded minibatch gradient descent; fully deterministic for a fixed
// (dataset, spec, config).
inline TrainOutcome train(const ModalityBatch& all_rows, const SplitIndices& split,
                          const FusionSpec& base_spec, const TrainConfig& config) {
    config.validate();
    const FusionSpec spec = spec_for_training(base_spec, config);

    const ModalityBatch train_batch = all_rows.rows(split.train_rows);
    const ModalityBatch val_batch = all_rows.rows(split.val_rows);
    if (train_batch.batch_size() == 0) throw std::invalid_argument("empty training split");

    TrainOutcome outcome;
    outcome.spec = spec;
    outcome.params = FusionParams::init(spec, config.seed);

    detail::Rng rng(config.seed + 1);
    std::vector<std::size_t> order(train_batch.batch_size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(end));
            const ModalityBatch mini = train_batch.rows(idx);
            const ForwardOutput out = forward(mini, spec, outcome.params);
            double loss = 0.0;
            try {
                loss = total_loss(out, mini.labels, spec, config.task);
            } catch (const std::exception& e) {
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                         ": " + e.what());
            }
            const FusionParams grad =
                backward(mini, out, mini.labels, spec, outcome.params, config.task);
            outcome.params.axpy(-config.learning_rate, grad);
            loss_sum += loss;
            ++batches;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(batches);
        if (val_batch.batch_size() > 0) {
            stats.val_loss = total_loss(forward(val_batch, spec, outcome.params), val_batch.labels,
                                        spec, config.task);
            stats.metric = evaluate(outcome.params, val_batch, spec, config.task);
        }
        outcome.history.push_back(stats);
    }

    const ModalityBatch& metric_batch = val_batch.batch_size() > 0 ? val_batch : train_batch;
    outcome.final_metric = evaluate(outcome.params, metric_batch, spec, config.task);
    return outcome;
}

inline void write_history_csv(const std::vector<EpochStats>& history,
                              const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write history: " + path.string());
    out << "epoch,train_loss,val_loss,metric\n";
    out.precision(12);
    for (const auto& e : history)
        out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.metric << '\n';
}

}  // namespace tablefuse
