#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tablefuse/assembly.hpp"
#include "tablefuse/detail/strings.hpp"
#include "tablefuse/modality.hpp"
#include "tablefuse/synthetic.hpp"
#include "tablefuse/table.hpp"

namespace tablefuse {

// Per-branch encoded features plus labels; all branches share the batch size.
struct ModalityBatch {
    std::vector<Eigen::MatrixXd> branch_features;  // spec branch order, (batch, d_i)
    Eigen::VectorXd labels;                        // class indices or real targets

    std::size_t batch_size() const {
        return branch_features.empty() ? 0 : static_cast<std::size_t>(branch_features[0].rows());
    }

    void validate() const {
        for (const auto& f : branch_features) {
            if (static_cast<std::size_t>(f.rows()) != batch_size())
                throw std::invalid_argument("branch batch sizes differ");
            if (!f.allFinite()) throw std::invalid_argument("non-finite encoded features");
        }
        if (labels.size() > 0 && static_cast<std::size_t>(labels.size()) != batch_size())
            throw std::invalid_argument("label count differs from batch size");
    }

    ModalityBatch rows(const std::vector<std::size_t>& idx) const {
        ModalityBatch out;
        out.branch_features.reserve(branch_features.size());
        for (const auto& f : branch_features) {
            Eigen::MatrixXd sub(idx.size(), f.cols());
            for (std::size_t r = 0; r < idx.size(); ++r)
                sub.row(static_cast<Eigen::Index>(r)) = f.row(static_cast<Eigen::Index>(idx[r]));
            out.branch_features.push_back(std::move(sub));
        }
        out.labels.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t r = 0; r < idx.size(); ++r)
            out.labels[static_cast<Eigen::Index>(r)] = labels[static_cast<Eigen::Index>(idx[r])];
        return out;
    }
};

// Processor plan with fitted state: per-column moments, level maps, text hash
// widths and sidecar dimensions, all learned from the training split only.
class FittedProcessors {
public:
    void fit(const ProcessorPlan& plan, const StructuredTable& table,
             const std::vector<std::size_t>& train_rows,
             const std::filesystem::path& sidecar_base) {
        plan_ = plan;
        sidecar_base_ = sidecar_base;
        columns_fitted_.clear();
        for (const auto& [modality, desc] : plan.by_modality) {
            for (const auto& column : desc.columns) {
                ColumnState state;
                state.modality = modality;
                if (desc.kind == "standardize") {
                    fit_moments(table, train_rows, column, state);
                    state.width = 1;
                } else if (desc.kind == "one_hot") {
                    fit_levels(table, train_rows, column, state);
                    state.width = state.levels.size();
                } else if (desc.kind == "hashed_ngrams") {
                    state.width = desc.params.value("width", kTextHashWidth);
                } else if (desc.kind == "sidecar_vector") {
                    state.width = sidecar_dim(table, train_rows, column);
                } else {
                    throw std::runtime_error("unknown processor kind: " + desc.kind);
                }
                columns_fitted_[column] = std::move(state);
            }
        }

        if (!plan.label_processor.columns.empty()) {
            label_column_ = plan.label_processor.columns.front();
            if (plan.label_processor.kind == "class_index") {
                // Levels over the whole table keep validation rows encodable.
                auto levels = table.observed_levels(label_column_);
                std::sort(levels.begin(), levels.end());
                label_levels_ = std::move(levels);
                if (label_levels_.size() < 2)
                    throw std::runtime_error("label column has fewer than 2 classes");
            }
        }
        fitted_ = true;
    }

    bool fitted() const { return fitted_; }

    std::size_t encoded_dim(Modality m) const {
        require_fitted();
        const auto it = plan_.by_modality.find(m);
        if (it == plan_.by_modality.end())
            throw std::out_of_range(std::string("no processor for modality ") + modality_tag(m));
        std::size_t total = 0;
        for (const auto& column : it->second.columns) total += columns_fitted_.at(column).width;
        return total;
    }

    std::size_t class_count() const {
        require_fitted();
        return label_levels_.empty() ? 1 : label_levels_.size();
    }

    const std::vector<std::string>& label_levels() const { return label_levels_; }

    // Encodes the rows of one modality into its dense feature block.
    Eigen::MatrixXd encode_modality(Modality m, const StructuredTable& table,
                                    const std::vector<std::size_t>& rows) const {
        require_fitted();
        const auto& desc = plan_.by_modality.at(m);
        Eigen::MatrixXd out(rows.size(), encoded_dim(m));
        out.setZero();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            Eigen::Index offset = 0;
            for (const auto& column : desc.columns) {
                const ColumnState& state = columns_fitted_.at(column);
                const std::string& cell = table.at(rows[r], column);
                out.row(static_cast<Eigen::Index>(r))
                    .segment(offset, static_cast<Eigen::Index>(state.width)) =
                    encode_cell(desc.kind, state, cell);
                offset += static_cast<Eigen::Index>(state.width);
            }
        }
        return out;
    }

    Eigen::VectorXd encode_labels(const StructuredTable& table,
                                  const std::vector<std::size_t>& rows) const {
        require_fitted();
        Eigen::VectorXd out(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::string& cell = table.at(rows[r], label_column_);
            if (!label_levels_.empty()) {
                const auto it = std::find(label_levels_.begin(), label_levels_.end(), cell);
                if (it == label_levels_.end())
                    throw std::runtime_error("unknown label level '" + cell + "' in row " +
                                             std::to_string(rows[r]));
                out[static_cast<Eigen::Index>(r)] =
                    static_cast<double>(std::distance(label_levels_.begin(), it));
            } else {
                const auto v = detail::parse_number(cell);
                if (!v)
                    throw std::runtime_error("regression label is not numeric in row " +
                                             std::to_string(rows[r]) + ": " + cell);
                out[static_cast<Eigen::Index>(r)] = *v;
            }
        }
        return out;
    }

    // Full encode in spec branch order, verifying widths against the spec.
    ModalityBatch encode_batch(const StructuredTable& table, const std::vector<std::size_t>& rows,
                               const FusionSpec& spec) const {
        ModalityBatch batch;
        for (const auto& branch : spec.branches) {
            const std::size_t width = encoded_dim(branch.modality);
            if (width != branch.feature_dim)
                throw std::runtime_error(std::string("shape mismatch in branch '") +
                                         modality_tag(branch.modality) + "': encoded width " +
                                         std::to_string(width) + ", spec expects " +
                                         std::to_string(branch.feature_dim));
            batch.branch_features.push_back(encode_modality(branch.modality, table, rows));
        }
        if (!label_column_.empty()) batch.labels = encode_labels(table, rows);
        batch.validate();
        return batch;
    }

    // Fitted widths per modality, for building the runtime fusion spec.
    std::map<Modality, std::size_t> encoded_dims() const {
        require_fitted();
        std::map<Modality, std::size_t> out;
        for (const auto& [m, desc] : plan_.by_modality) out[m] = encoded_dim(m);
        return out;
    }

    // Serializes the plan with fitted parameters folded into the descriptors.
    nlohmann::json to_json() const {
        require_fitted();
        ProcessorPlan annotated = plan_;
        for (auto& [m, desc] : annotated.by_modality) {
            nlohmann::json cols = nlohmann::json::object();
            for (const auto& column : desc.columns) {
                const ColumnState& s = columns_fitted_.at(column);
                nlohmann::json entry = {{"width", s.width}};
                if (desc.kind == "standardize") {
                    entry["mean"] = s.mean;
                    entry["std"] = s.stddev;
                } else if (desc.kind == "one_hot") {
                    entry["levels"] = s.levels;
                }
                cols[column] = entry;
            }
            desc.params["fitted"] = cols;
        }
        if (!label_levels_.empty()) annotated.label_processor.params["levels"] = label_levels_;
        return annotated.to_json();
    }

private:
    struct ColumnState {
        Modality modality = Modality::numerical;
        std::size_t width = 0;
        double mean = 0.0;
        double stddev = 1.0;
        std::vector<std::string> levels;  // one-hot index map, first-seen order
    };

    void require_fitted() const {
        if (!fitted_) throw std::logic_error("processors not fitted");
    }

    void fit_moments(const StructuredTable& table, const std::vector<std::size_t>& rows,
                     const std::string& column, ColumnState& state) {
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        for (std::size_t r : rows) {
            const auto v = detail::parse_number(table.at(r, column));
            if (!v) continue;  // "???" and junk sit out of the moments
            sum += *v;
            sq += *v * *v;
            ++n;
        }
        if (n > 0) {
            state.mean = sum / static_cast<double>(n);
            const double var = sq / static_cast<double>(n) - state.mean * state.mean;
            state.stddev = var > 0 ? std::sqrt(var) : 1.0;
        }
    }

    void fit_levels(const StructuredTable& table, const std::vector<std::size_t>& rows,
                    const std::string& column, ColumnState& state) {
        std::set<std::string> seen;
        for (std::size_t r : rows) {
            const std::string& v = table.at(r, column);
            if (v == kMissingMarker || v.empty()) continue;
            if (seen.insert(v).second) state.levels.push_back(v);
        }
        if (state.levels.empty())
            throw std::runtime_error("categorical column has no observed levels: " + column);
    }

    std::size_t sidecar_dim(const StructuredTable& table, const std::vector<std::size_t>& rows,
                            const std::string& column) const {
        if (rows.empty()) throw std::runtime_error("cannot fit sidecar dim on empty split");
        const auto vec = read_sidecar_file(sidecar_base_ / table.at(rows.front(), column));
        return vec.size();
    }

    Eigen::RowVectorXd encode_cell(const std::string& kind, const ColumnState& state,
                                   const std::string& cell) const {
        Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(state.width));
        if (kind == "standardize") {
            const auto v = detail::parse_number(cell);
            // Missing or junk encodes as the training mean (zero after scaling).
            out[0] = v ? (*v - state.mean) / state.stddev : 0.0;
        } else if (kind == "one_hot") {
            const auto it = std::find(state.levels.begin(), state.levels.end(), cell);
            if (it != state.levels.end())
                out[static_cast<Eigen::Index>(std::distance(state.levels.begin(), it))] = 1.0;
            // Unknown level stays the all-zero vector.
        } else if (kind == "hashed_ngrams") {
            if (cell.empty() || cell == kMissingMarker) return out;
            const std::size_t width = state.width;
            if (cell.size() < 3) {
                out[static_cast<Eigen::Index>(detail::fnv1a64(cell) % width)] += 1.0;
            } else {
                for (std::size_t i = 0; i + 3 <= cell.size(); ++i)
                    out[static_cast<Eigen::Index>(
                        detail::fnv1a64(std::string_view(cell).substr(i, 3)) % width)] += 1.0;
            }
            const double norm = out.norm();
            if (norm > 0) out /= norm;
        } else if (kind == "sidecar_vector") {
            const auto vec = read_sidecar_file(sidecar_base_ / cell);
            if (vec.size() != state.width)
                throw std::runtime_error("sidecar dimension mismatch for " + cell + ": got " +
                                         std::to_string(vec.size()) + ", expected " +
                                         std::to_string(state.width));
            for (std::size_t i = 0; i < vec.size(); ++i)
                out[static_cast<Eigen::Index>(i)] = vec[i];
        }
        return out;
    }

    ProcessorPlan plan_;
    std::filesystem::path sidecar_base_;
    std::map<std::string, ColumnState> columns_fitted_;
    std::string label_column_;
    std::vector<std::string> label_levels_;
    bool fitted_ = false;
};

}  // namespace tablefuse
