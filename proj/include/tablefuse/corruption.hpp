#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tablefuse/detail/rng.hpp"
#include "tablefuse/detail/strings.hpp"
#include "tablefuse/table.hpp"

namespace tablefuse {

struct NoiseColumn {
    std::string name;
    std::string generator;
};

// Record of every change corrupt() made; replaying the same inputs yields an
// identical plan.
struct CorruptionPlan {
    double mask_fraction = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::size_t, std::size_t>> masked_positions;  // (row, original column index)
    std::vector<NoiseColumn> noise_columns;

    nlohmann::json to_json() const {
        nlohmann::json masked = nlohmann::json::array();
        for (const auto& [r, c] : masked_positions) masked.push_back({r, c});
        nlohmann::json noise = nlohmann::json::array();
        for (const auto& n : noise_columns) noise.push_back({{"name", n.name}, {"generator", n.generator}});
        return {{"seed", seed}, {"mask_fraction", mask_fraction}, {"masked", masked}, {"noise", noise}};
    }
};

struct CorruptionResult {
    StructuredTable table;
    CorruptionPlan plan;
};

namespace detail {

// Path cells look like "dir/name.ext" or "name.ext"; a column qualifies when
// at least 80% of its non-empty cells do.
inline bool looks_like_path_cell(const std::string& v) {
    if (v.empty() || v.find(' ') != std::string::npos) return false;
    const auto dot = v.find_last_of('.');
    if (dot == std::string::npos || dot + 1 >= v.size()) return false;
    const auto ext = v.substr(dot + 1);
    if (ext.size() > 4) return false;
    for (unsigned char c : ext)
        if (!std::isalnum(c)) return false;
    return true;
}

inline bool looks_like_path_column(const StructuredTable& t, std::size_t col) {
    std::size_t considered = 0, matched = 0;
    for (const auto& row : t.cells) {
        const auto& v = row[col];
        if (v.empty() || v == kMissingMarker) continue;
        ++considered;
        if (looks_like_path_cell(v)) ++matched;
    }
    return considered > 0 && matched * 5 >= considered * 4;
}

inline bool looks_like_identifier_column(const StructuredTable& t, std::size_t col) {
    const std::string name = to_lower(t.columns[col]);
    return name == "id" || name == "uid" || name == "uuid" || name == "identifier" ||
           name == "index" || name == "idx" || name.ends_with("_id");
}

}  // namespace detail

// Masks a seeded fraction of eligible cells with "???" and appends noise
// columns drawn from fixed unrelated pools. The label column, path-like
// columns and identifier columns are never masked.
inline CorruptionResult corrupt(const StructuredTable& input, double mask_fraction,
                                std::size_t noise_column_count, std::uint64_t seed) {
    input.validate();
    if (mask_fraction < 0.0 || mask_fraction > 1.0)
        throw std::invalid_argument("mask_fraction must be in [0,1]");

    CorruptionResult out;
    out.table = input;
    out.plan.mask_fraction = mask_fraction;
    out.plan.seed = seed;

    const std::size_t n_rows = input.row_count();
    for (std::size_t c = 0; c < input.column_count(); ++c) {
        if (input.label_column && input.columns[c] == *input.label_column) continue;
        if (detail::looks_like_path_column(input, c)) continue;
        if (detail::looks_like_identifier_column(input, c)) continue;
        const auto k = static_cast<std::size_t>(std::llround(mask_fraction * static_cast<double>(n_rows)));
        if (k == 0) continue;
        // Per-column derived seed keeps masks decorrelated across columns.
        detail::Rng rng(seed ^ detail::fnv1a64(input.columns[c]));
        for (std::size_t r : rng.sample_indices(n_rows, k)) {
            out.table.cells[r][c] = kMissingMarker;
            out.plan.masked_positions.emplace_back(r, c);
        }
    }

    static const std::vector<std::string> color_pool = {"red",    "blue", "green", "amber",
                                                        "violet", "teal", "ochre", "cyan"};
    static const std::vector<std::string> lorem_pool = {"lorem", "ipsum", "dolor",  "sit",
                                                        "amet",  "velit", "tempor", "quis"};
    static const std::vector<std::string> generators = {"random_int", "color_word", "lorem"};

    detail::Rng noise_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = 0; i < noise_column_count; ++i) {
        const std::string& gen = generators[i % generators.size()];
        std::string name = "noise_" + gen;
        if (i >= generators.size()) name += "_" + std::to_string(i / generators.size() + 1);
        while (out.table.has_column(name)) name += "x";

        out.table.columns.push_back(name);
        for (auto& row : out.table.cells) {
            std::string v;
            if (gen == "random_int") {
                v = std::to_string(noise_rng.bounded(100));
            } else if (gen == "color_word") {
                v = color_pool[noise_rng.bounded(color_pool.size())];
            } else {
                v = lorem_pool[noise_rng.bounded(lorem_pool.size())];
                v += " " + lorem_pool[noise_rng.bounded(lorem_pool.size())];
            }
            row.push_back(v);
        }
        out.plan.noise_columns.push_back({name, gen});
    }

    out.table.validate();
    return out;
}

}  // namespace tablefuse
