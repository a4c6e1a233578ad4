#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tablefuse/assembly.hpp"
#include "tablefuse/detail/rng.hpp"
#include "tablefuse/runtime/processors.hpp"
#include "tablefuse/task.hpp"

namespace tablefuse {

struct LinearLayer {
    Eigen::MatrixXd W;  // (out, in)
    Eigen::VectorXd b;  // (out)

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return (x * W.transpose()).rowwise() + b.transpose();
    }
};

// All learnable state of the assembled pipeline. Blocks follow the spec's
// branch order; flatten()/load() expose them as one vector for updates and
// finite-difference checks.
struct FusionParams {
    std::vector<LinearLayer> adapters;      // d_i -> D, one per branch
    std::vector<LinearLayer> branch_heads;  // D -> C, for the weighted loss
    std::vector<LinearLayer> body;          // n*D -> h1 -> ... (tanh between)
    LinearLayer head;                       // h_last -> C

    static FusionParams init(const FusionSpec& spec, std::uint64_t seed) {
        detail::Rng rng(seed);
        auto make = [&rng](std::size_t out, std::size_t in) {
            LinearLayer layer;
            const double s = 1.0 / std::sqrt(static_cast<double>(in));
            layer.W.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
            for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
                for (Eigen::Index j = 0; j < layer.W.cols(); ++j) layer.W(i, j) = rng.real(-s, s);
            layer.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
            return layer;
        };

        const std::size_t D = spec.max_dim();
        const std::size_t C = spec.output_dim;
        FusionParams p;
        for (const auto& branch : spec.branches) p.adapters.push_back(make(D, branch.feature_dim));
        for (std::size_t i = 0; i < spec.branches.size(); ++i)
            p.branch_heads.push_back(make(C, D));
        std::size_t width = spec.concat_dim();
        for (std::size_t h : spec.hidden_widths) {
            p.body.push_back(make(h, width));
            width = h;
        }
        p.head = make(C, width);
        return p;
    }

    static FusionParams zeros_like(const FusionParams& other) {
        FusionParams p = other;
        auto clear = [](LinearLayer& l) {
            l.W.setZero();
            l.b.setZero();
        };
        for (auto& l : p.adapters) clear(l);
        for (auto& l : p.branch_heads) clear(l);
        for (auto& l : p.body) clear(l);
        clear(p.head);
        return p;
    }

    template <typename Fn>
    void for_each_layer(Fn&& fn) {
        for (auto& l : adapters) fn(l);
        for (auto& l : branch_heads) fn(l);
        for (auto& l : body) fn(l);
        fn(head);
    }
    template <typename Fn>
    void for_each_layer(Fn&& fn) const {
        for (const auto& l : adapters) fn(l);
        for (const auto& l : branch_heads) fn(l);
        for (const auto& l : body) fn(l);
        fn(head);
    }

    Eigen::VectorXd flatten() const {
        std::size_t total = 0;
        for_each_layer([&](const LinearLayer& l) { total += l.W.size() + l.b.size(); });
        Eigen::VectorXd out(static_cast<Eigen::Index>(total));
        Eigen::Index at = 0;
        for_each_layer([&](const LinearLayer& l) {
            out.segment(at, l.W.size()) = Eigen::Map<const Eigen::VectorXd>(l.W.data(), l.W.size());
            at += l.W.size();
            out.segment(at, l.b.size()) = l.b;
            at += l.b.size();
        });
        return out;
    }

    void load(const Eigen::VectorXd& flat) {
        Eigen::Index at = 0;
        for_each_layer([&](LinearLayer& l) {
            Eigen::Map<Eigen::VectorXd>(l.W.data(), l.W.size()) = flat.segment(at, l.W.size());
            at += l.W.size();
            l.b = flat.segment(at, l.b.size());
            at += l.b.size();
        });
        if (at != flat.size()) throw std::invalid_argument("flat parameter size mismatch");
    }

    void axpy(double alpha, const FusionParams& grad) {
        auto walk = [alpha](LinearLayer& l, const LinearLayer& g) {
            l.W += alpha * g.W;
            l.b += alpha * g.b;
        };
        for (std::size_t i = 0; i < adapters.size(); ++i) walk(adapters[i], grad.adapters[i]);
        for (std::size_t i = 0; i < branch_heads.size(); ++i)
            walk(branch_heads[i], grad.branch_heads[i]);
        for (std::size_t i = 0; i < body.size(); ++i) walk(body[i], grad.body[i]);
        walk(head, grad.head);
    }
};

struct ForwardOutput {
    std::vector<Eigen::MatrixXd> branch_features;  // F_i, (batch, D)
    std::vector<Eigen::MatrixXd> branch_logits;    // (batch, C)
    Eigen::MatrixXd fused_features;                // F_cat, (batch, n*D)
    Eigen::MatrixXd fused_logits;                  // (batch, C)
    std::vector<Eigen::MatrixXd> body_activations;  // tanh outputs, for backward

    void validate(const FusionSpec& spec, std::size_t batch) const {
        const auto D = static_cast<Eigen::Index>(spec.max_dim());
        const auto B = static_cast<Eigen::Index>(batch);
        for (const auto& f : branch_features)
            if (f.rows() != B || f.cols() != D) throw std::logic_error("branch feature shape");
        if (fused_features.rows() != B ||
            fused_features.cols() != static_cast<Eigen::Index>(spec.concat_dim()))
            throw std::logic_error("fused feature shape");
        if (fused_logits.rows() != B ||
            fused_logits.cols() != static_cast<Eigen::Index>(spec.output_dim))
            throw std::logic_error("fused logit shape");
        if (!fused_logits.allFinite()) throw std::runtime_error("non-finite fused logits");
    }
};

// F_i = adapter_i(x_i); F_cat = [F_1 ... F_n]; fused logits = head(body(F_cat)).
// Branch logits come from per-branch linear heads for the weighted loss.
inline ForwardOutput forward(const ModalityBatch& batch, const FusionSpec& spec,
                             const FusionParams& params) {
    if (batch.branch_features.size() != spec.branches.size())
        throw std::invalid_argument("batch branch count differs from spec");
    for (std::size_t i = 0; i < spec.branches.size(); ++i)
        if (static_cast<std::size_t>(batch.branch_features[i].cols()) !=
            spec.branches[i].feature_dim)
            throw std::invalid_argument(std::string("shape mismatch in branch '") +
                                        modality_tag(spec.branches[i].modality) + "': got " +
                                        std::to_string(batch.branch_features[i].cols()) +
                                        " columns, spec expects " +
                                        std::to_string(spec.branches[i].feature_dim));

    const std::size_t n = spec.branches.size();
    const std::size_t B = batch.batch_size();
    const std::size_t D = spec.max_dim();

    ForwardOutput out;
    out.fused_features.resize(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(n * D));
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::MatrixXd F = params.adapters[i].apply(batch.branch_features[i]);
        out.fused_features.middleCols(static_cast<Eigen::Index>(i * D),
                                      static_cast<Eigen::Index>(D)) = F;
        out.branch_logits.push_back(params.branch_heads[i].apply(F));
        out.branch_features.push_back(std::move(F));
    }

    Eigen::MatrixXd x = out.fused_features;
    for (const auto& layer : params.body) {
        x = layer.apply(x).array().tanh().matrix();
        out.body_activations.push_back(x);
    }
    out.fused_logits = params.head.apply(x);
    out.validate(spec, B);
    return out;
}

namespace detail {

// Mean softmax cross-entropy; labels are class indices.
inline double cross_entropy(const Eigen::MatrixXd& logits, const Eigen::VectorXd& labels) {
    const Eigen::Index B = logits.rows();
    double total = 0.0;
    for (Eigen::Index r = 0; r < B; ++r) {
        const double m = logits.row(r).maxCoeff();
        const double lse = std::log((logits.row(r).array() - m).exp().sum()) + m;
        total += lse - logits(r, static_cast<Eigen::Index>(labels[r]));
    }
    return total / static_cast<double>(B);
}

// d(mean CE)/d(logits) = (softmax - onehot) / batch.
inline Eigen::MatrixXd cross_entropy_grad(const Eigen::MatrixXd& logits,
                                          const Eigen::VectorXd& labels) {
    Eigen::MatrixXd grad(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        Eigen::RowVectorXd p = (logits.row(r).array() - m).exp();
        p /= p.sum();
        grad.row(r) = p;
        grad(r, static_cast<Eigen::Index>(labels[r])) -= 1.0;
    }
    return grad / static_cast<double>(logits.rows());
}

inline double mean_squared_error(const Eigen::MatrixXd& pred, const Eigen::VectorXd& target) {
    return (pred.col(0) - target).squaredNorm() / static_cast<double>(pred.rows());
}

inline Eigen::MatrixXd mean_squared_error_grad(const Eigen::MatrixXd& pred,
                                               const Eigen::VectorXd& target) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(pred.rows(), pred.cols());
    grad.col(0) = 2.0 * (pred.col(0) - target) / static_cast<double>(pred.rows());
    return grad;
}

inline bool is_regression(TaskKind task) { return task == TaskKind::regression; }

inline double head_loss(const Eigen::MatrixXd& logits, const Eigen::VectorXd& labels,
                        TaskKind task) {
    return is_regression(task) ? mean_squared_error(logits, labels)
                               : cross_entropy(logits, labels);
}

inline Eigen::MatrixXd head_loss_grad(const Eigen::MatrixXd& logits, const Eigen::VectorXd& labels,
                                      TaskKind task) {
    return is_regression(task) ? mean_squared_error_grad(logits, labels)
                               : cross_entropy_grad(logits, labels);
}

}  // namespace detail

// L = w_f * l(fused logits, y) + sum_i w_i * l(branch logits_i, y).
inline double total_loss(const ForwardOutput& output, const Eigen::VectorXd& labels,
                         const FusionSpec& spec, TaskKind task) {
    const double fused = detail::head_loss(output.fused_logits, labels, task);
    if (!std::isfinite(fused)) throw std::runtime_error("non-finite loss in fusion head");
    double total = spec.fusion_weight * fused;
    for (std::size_t i = 0; i < output.branch_logits.size(); ++i) {
        const double li = detail::head_loss(output.branch_logits[i], labels, task);
        if (!std::isfinite(li))
            throw std::runtime_error(std::string("non-finite loss in branch '") +
                                     modality_tag(spec.branches[i].modality) + "'");
        total += spec.branch_weights[i] * li;
    }
    return total;
}

// Analytic gradients of total_loss for every parameter block.
inline FusionParams backward(const ModalityBatch& batch, const ForwardOutput& output,
                             const Eigen::VectorXd& labels, const FusionSpec& spec,
                             const FusionParams& params, TaskKind task) {
    FusionParams grad = FusionParams::zeros_like(params);
    const std::size_t n = spec.branches.size();
    const std::size_t D = spec.max_dim();

    // Per-branch adapter gradient accumulators (through F_i).
    std::vector<Eigen::MatrixXd> dF(n);

    // Branch-head losses.
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::MatrixXd g = detail::head_loss_grad(output.branch_logits[i], labels, task) *
                            spec.branch_weights[i];
        grad.branch_heads[i].W = g.transpose() * output.branch_features[i];
        grad.branch_heads[i].b = g.colwise().sum();
        dF[i] = g * params.branch_heads[i].W;
    }

    // Fusion path: head, then body layers in reverse (tanh between).
    Eigen::MatrixXd g = detail::head_loss_grad(output.fused_logits, labels, task) *
                        spec.fusion_weight;
    const Eigen::MatrixXd& last_act =
        params.body.empty() ? output.fused_features : output.body_activations.back();
    grad.head.W = g.transpose() * last_act;
    grad.head.b = g.colwise().sum();
    Eigen::MatrixXd dact = g * params.head.W;

    for (std::size_t li = params.body.size(); li-- > 0;) {
        const Eigen::MatrixXd& act = output.body_activations[li];
        const Eigen::MatrixXd dpre = dact.cwiseProduct((1.0 - act.array().square()).matrix());
        const Eigen::MatrixXd& input =
            li == 0 ? output.fused_features : output.body_activations[li - 1];
        grad.body[li].W = dpre.transpose() * input;
        grad.body[li].b = dpre.colwise().sum();
        dact = dpre * params.body[li].W;
    }

    // dact is now the gradient w.r.t. fused features; split across branches.
    for (std::size_t i = 0; i < n; ++i)
        dF[i] += dact.middleCols(static_cast<Eigen::Index>(i * D), static_cast<Eigen::Index>(D));

    for (std::size_t i = 0; i < n; ++i) {
        grad.adapters[i].W = dF[i].transpose() * batch.branch_features[i];
        grad.adapters[i].b = dF[i].colwise().sum();
    }
    return grad;
}

}  // namespace tablefuse
