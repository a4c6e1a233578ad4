#pragma once

#include <algorithm>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tablefuse/corruption.hpp"
#include "tablefuse/detail/parallel.hpp"
#include "tablefuse/detail/rng.hpp"
#include "tablefuse/detail/strings.hpp"
#include "tablefuse/gateway.hpp"
#include "tablefuse/modality.hpp"
#include "tablefuse/table.hpp"

namespace tablefuse {

struct FilterResult {
    std::vector<std::string> retained;
    std::vector<std::string> dropped;
    std::vector<std::string> reinstated;  // path columns re-added by validation

    nlohmann::json to_json() const {
        return {{"retained", retained}, {"dropped", dropped}, {"reinstated", reinstated}};
    }
};

// Table with the filter applied: only retained feature columns plus the
// label survive. Imputation accepts this type only, so running it before
// the filter cannot compile.
struct FilteredTable {
    StructuredTable table;
    ModalitySchema schema;
    FilterResult filter;
};

struct ImputationReport {
    struct Filled {
        std::size_t row;
        std::string column;
        std::string value;
    };
    struct Unresolved {
        std::size_t row;
        std::string column;
        std::string reason;
    };
    std::vector<Filled> filled;
    std::vector<Unresolved> unresolved;

    nlohmann::json to_json() const {
        nlohmann::json f = nlohmann::json::array();
        for (const auto& e : filled) f.push_back({{"row", e.row}, {"column", e.column}, {"value", e.value}});
        nlohmann::json u = nlohmann::json::array();
        for (const auto& e : unresolved)
            u.push_back({{"row", e.row}, {"column", e.column}, {"reason", e.reason}});
        return {{"filled", f}, {"unresolved", u}};
    }
};

namespace detail {

inline const std::vector<FewShotBlock>& filter_examples() {
    static const std::vector<FewShotBlock> examples = {
        {"instructions:predict whether yearly income exceeds the threshold, features type:"
         "{\"age\": \"numerical\", \"over_50\": \"categorical\", \"occupation\": \"categorical\", "
         "\"row_id\": \"identifier\"}, features:[\"age\", \"over_50\", \"occupation\", \"row_id\"]",
         "[\"age\", \"occupation\"]"},
        {"instructions:estimate how appealing a listing photo is, features type:"
         "{\"photo\": \"image_path\", \"upload_hour\": \"numerical\", \"seller_motto\": \"text\"}, "
         "features:[\"photo\", \"upload_hour\", \"seller_motto\"]",
         "[\"photo\", \"upload_hour\"]"},
    };
    return examples;
}

inline std::string render_feature_types(const ModalitySchema& schema,
                                        const std::vector<std::string>& features) {
    nlohmann::json types = nlohmann::json::object();
    for (const auto& f : features) types[f] = modality_tag(schema.at(f));
    return types.dump();
}

}  // namespace detail

inline PromptBundle build_filter_prompt(const StructuredTable& table, const ModalitySchema& schema,
                                        const Directive& directive) {
    const auto features = table.feature_columns();
    PromptBundle bundle;
    bundle.purpose = Purpose::filter;
    bundle.few_shot_blocks = detail::filter_examples();
    bundle.system_text = std::string(prompts::kFilterSystem) +
                         prompts::render_example_blocks(bundle.few_shot_blocks);
    bundle.user_text = "Input: instructions:" + directive.text +
                       ", features type:" + detail::render_feature_types(schema, features) +
                       ", features:" + nlohmann::json(features).dump() + "\nOutput:";
    bundle.validate();
    return bundle;
}

// Filter stage. The label column never enters the candidate set; forged
// names get one corrective retry; dropped path columns are reinstated.
inline FilterResult filter_features(LlmGateway& gateway, const StructuredTable& table,
                                    const ModalitySchema& schema, const Directive& directive) {
    schema.validate_covers(table);
    const auto candidates = table.feature_columns();
    const std::set<std::string> candidate_set(candidates.begin(), candidates.end());

    const PromptBundle bundle = build_filter_prompt(table, schema, directive);
    auto answer = complete_json(gateway, bundle, ShapeStringList{});

    auto forged_names = [&](const nlohmann::json& doc) {
        std::vector<std::string> forged;
        for (const auto& name : doc)
            if (!candidate_set.count(name.get<std::string>()))
                forged.push_back(name.get<std::string>());
        return forged;
    };

    auto forged = forged_names(answer);
    if (!forged.empty()) {
        const std::string correction =
            "Your previous answer was invalid: it contains features that are not in the Input: " +
            detail::join(forged, ", ") +
            ". Answer again with a strict JSON list containing only feature names from the Input.";
        answer = complete_json(gateway, bundle.with_correction(correction), ShapeStringList{});
        forged = forged_names(answer);
        if (!forged.empty())
            throw std::runtime_error("feature filter forged a feature name after retry: " +
                                     forged.front());
    }

    std::set<std::string> kept;
    for (const auto& name : answer) kept.insert(name.get<std::string>());

    FilterResult result;
    for (const auto& c : candidates) {
        if (kept.count(c)) {
            result.retained.push_back(c);
        } else if (is_path_modality(schema.at(c))) {
            result.retained.push_back(c);  // image features must be preserved
            result.reinstated.push_back(c);
        } else {
            result.dropped.push_back(c);
        }
    }
    if (result.retained.empty()) throw std::runtime_error("feature filter retained no features");
    return result;
}

inline FilteredTable apply_filter(const StructuredTable& table, const ModalitySchema& schema,
                                  FilterResult filter) {
    FilteredTable out;
    out.filter = std::move(filter);
    const std::set<std::string> retained(out.filter.retained.begin(), out.filter.retained.end());

    for (std::size_t c = 0; c < table.column_count(); ++c) {
        const std::string& name = table.columns[c];
        const bool is_label = table.label_column && name == *table.label_column;
        if (!is_label && !retained.count(name)) continue;
        out.table.columns.push_back(name);
        out.schema.by_column[name] = schema.at(name);
        const auto pit = schema.provenance.find(name);
        out.schema.provenance[name] =
            pit != schema.provenance.end() ? pit->second : Provenance::llm;
    }
    out.table.label_column = table.label_column;
    out.table.source_path = table.source_path;
    out.table.cells.reserve(table.row_count());
    for (const auto& row : table.cells) {
        std::vector<std::string> slim;
        slim.reserve(out.table.columns.size());
        for (const auto& name : out.table.columns) slim.push_back(row[table.column_index(name)]);
        out.table.cells.push_back(std::move(slim));
    }
    out.table.validate();
    return out;
}

namespace detail {

inline std::string render_feature_sequence(const StructuredTable& table, std::size_t row,
                                           const std::vector<std::string>& columns) {
    constexpr std::size_t kCellLimit = 80;
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i > 0) out += ", ";
        out += columns[i] + ":" + truncate(table.at(row, columns[i]), kCellLimit);
    }
    return out;
}

}  // namespace detail

// Q&A pairs for in-context imputation: k complete rows, one attribute masked
// per row. Substituting the answer back into the masked sequence reproduces
// the original rendering.
inline std::vector<std::pair<std::string, std::string>> build_impute_examples(
    const StructuredTable& table, std::size_t k, std::uint64_t seed,
    std::vector<std::string> maskable_columns = {}) {
    if (maskable_columns.empty()) {
        for (std::size_t c = 0; c < table.column_count(); ++c) {
            if (table.label_column && table.columns[c] == *table.label_column) continue;
            if (detail::looks_like_path_column(table, c)) continue;
            maskable_columns.push_back(table.columns[c]);
        }
    }
    if (maskable_columns.empty()) throw std::invalid_argument("no maskable columns");
    if (k == 0) return {};

    std::vector<std::size_t> complete_rows;
    for (std::size_t r = 0; r < table.row_count(); ++r) {
        bool complete = true;
        for (const auto& cell : table.cells[r])
            if (cell == kMissingMarker) complete = false;
        if (complete) complete_rows.push_back(r);
    }
    if (complete_rows.size() < k)
        throw std::runtime_error("need " + std::to_string(k) + " complete rows, found " +
                                 std::to_string(complete_rows.size()));

    detail::Rng rng(seed);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t pick : rng.sample_indices(complete_rows.size(), k)) {
        const std::size_t row = complete_rows[pick];
        const std::string& column = maskable_columns[rng.bounded(maskable_columns.size())];
        const std::string answer = detail::truncate(table.at(row, column), 80);

        std::string masked;
        for (std::size_t c = 0; c < table.column_count(); ++c) {
            if (c > 0) masked += ", ";
            masked += table.columns[c] + ":";
            masked += table.columns[c] == column ? kMissingMarker
                                                 : detail::truncate(table.cells[row][c], 80);
        }
        pairs.emplace_back(masked, answer);
    }
    return pairs;
}

struct ImputeOptions {
    std::size_t example_count = 3;
    std::uint64_t seed = 0;
    std::size_t max_inflight = 4;
};

struct ImputeOutcome {
    StructuredTable table;
    ImputationReport report;
};

// AFE imputation: one completion per "???" cell in a retained tabular
// column. Per-cell failures are reported, never thrown.
inline ImputeOutcome impute_table(LlmGateway& gateway, const FilteredTable& filtered,
                                  const Directive& directive, const ImputeOptions& options = {}) {
    const StructuredTable& table = filtered.table;
    ImputeOutcome out;
    out.table = table;

    std::vector<std::string> tabular_columns;
    for (const auto& c : filtered.filter.retained) {
        const Modality m = filtered.schema.at(c);
        if (m == Modality::numerical || m == Modality::categorical || m == Modality::text)
            tabular_columns.push_back(c);
    }

    std::vector<std::pair<std::size_t, std::string>> targets;  // row-major order
    for (std::size_t r = 0; r < table.row_count(); ++r)
        for (const auto& c : tabular_columns)
            if (table.at(r, c) == kMissingMarker) targets.emplace_back(r, c);
    if (targets.empty()) return out;

    // In-context Q&A pairs from complete rows; clamp when the table is mostly gaps.
    std::size_t complete = 0;
    for (std::size_t r = 0; r < table.row_count(); ++r) {
        bool ok = true;
        for (const auto& cell : table.cells[r])
            if (cell == kMissingMarker) ok = false;
        if (ok) ++complete;
    }
    const std::size_t k = std::min(options.example_count, complete);
    std::vector<FewShotBlock> blocks;
    if (k > 0)
        for (const auto& [masked, answer] :
             build_impute_examples(table, k, options.seed, tabular_columns))
            blocks.push_back({"instructions:" + directive.text + ", feature sequence:" + masked,
                              answer});
    const std::string system =
        std::string(prompts::kImputeSystem) +
        (blocks.empty() ? std::string() : prompts::render_example_blocks(blocks));

    const auto feature_cols = table.feature_columns();

    struct CellResult {
        bool ok = false;
        std::string value;
        std::string reason;
    };
    std::vector<CellResult> results(targets.size());

    detail::parallel_for(targets.size(), options.max_inflight, [&](std::size_t i) {
        const auto& [row, column] = targets[i];
        // One gap per sequence: other missing cells are omitted so the "???"
        // unambiguously marks the cell to predict (and each target cell gets
        // its own fingerprint).
        std::vector<std::string> visible;
        for (const auto& c : feature_cols)
            if (c == column || table.at(row, c) != kMissingMarker) visible.push_back(c);
        PromptBundle bundle;
        bundle.purpose = Purpose::impute;
        bundle.few_shot_blocks = blocks;
        bundle.system_text = system;
        bundle.user_text = "Input: instructions:" + directive.text + ", feature sequence:" +
                           detail::render_feature_sequence(table, row, visible) + "\nOutput:";
        CellResult& slot = results[i];
        try {
            const LLMResponse res = gateway.complete(bundle);
            // Bare-value parse: strip fences and quotes, keep the first line.
            std::string v = detail::trim(res.text);
            if (v.starts_with("```")) {
                const auto nl = v.find('\n');
                const auto end = v.rfind("```");
                if (nl != std::string::npos && end > nl) v = detail::trim(v.substr(nl + 1, end - nl - 1));
            }
            if (const auto nl = v.find('\n'); nl != std::string::npos) v = detail::trim(v.substr(0, nl));
            if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') ||
                                  (v.front() == '\'' && v.back() == '\'')))
                v = v.substr(1, v.size() - 2);
            if (v.empty()) {
                slot.reason = "empty answer";
                return;
            }

            const Modality m = filtered.schema.at(column);
            if (m == Modality::numerical) {
                const auto num = detail::parse_number(v);
                if (!num) {
                    slot.reason = "not a number: " + v;
                    return;
                }
                // Hallucination guard: reject values beyond 10x the observed range.
                double lo = 0, hi = 0;
                bool any = false;
                for (std::size_t r = 0; r < table.row_count(); ++r) {
                    const auto obs = detail::parse_number(table.at(r, column));
                    if (!obs) continue;
                    lo = any ? std::min(lo, *obs) : *obs;
                    hi = any ? std::max(hi, *obs) : *obs;
                    any = true;
                }
                if (any) {
                    double span = hi - lo;
                    if (span == 0.0) span = std::max(std::abs(hi), 1.0);
                    if (*num < lo - 10.0 * span || *num > hi + 10.0 * span) {
                        slot.reason = "out of range: " + v;
                        return;
                    }
                }
            } else if (m == Modality::categorical) {
                const auto levels = table.observed_levels(column);
                if (std::find(levels.begin(), levels.end(), v) == levels.end()) {
                    slot.reason = "level not observed: " + v;
                    return;
                }
            }
            slot.ok = true;
            slot.value = v;
        } catch (const std::exception& e) {
            slot.reason = e.what();
        }
    });

    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto& [row, column] = targets[i];
        if (results[i].ok) {
            out.table.cells[row][out.table.column_index(column)] = results[i].value;
            out.report.filled.push_back({row, column, results[i].value});
        } else {
            out.report.unresolved.push_back({row, column, results[i].reason});
        }
    }
    return out;
}

}  // namespace tablefuse
