#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tablefuse/detail/rng.hpp"
#include "tablefuse/detail/strings.hpp"
#include "tablefuse/gateway.hpp"
#include "tablefuse/prompts.hpp"
#include "tablefuse/table.hpp"
#include "tablefuse/task.hpp"

namespace tablefuse {

enum class Modality { numerical, categorical, text, image_path, video_path, identifier };

// Canonical order; branch iteration and map serialization follow it.
inline const std::vector<Modality>& all_modalities() {
    static const std::vector<Modality> all = {Modality::numerical,  Modality::categorical,
                                              Modality::text,       Modality::image_path,
                                              Modality::video_path, Modality::identifier};
    return all;
}

inline const char* modality_tag(Modality m) {
    switch (m) {
        case Modality::numerical: return "numerical";
        case Modality::categorical: return "categorical";
        case Modality::text: return "text";
        case Modality::image_path: return "image_path";
        case Modality::video_path: return "video_path";
        case Modality::identifier: return "identifier";
    }
    throw std::logic_error("unknown modality");
}

inline Modality modality_from_tag(const std::string& tag) {
    for (Modality m : all_modalities())
        if (tag == modality_tag(m)) return m;
    throw std::invalid_argument("unknown modality tag: " + tag);
}

inline bool is_path_modality(Modality m) {
    return m == Modality::image_path || m == Modality::video_path;
}

// Maps LLM surface forms ("image path", "photo", "int", ...) onto the
// enumeration. Returns nullopt for unrecognized tags.
inline std::optional<Modality> normalize_modality_tag(const std::string& surface) {
    std::string s = detail::to_lower(detail::trim(surface));
    for (char& c : s)
        if (c == '_' || c == '-') c = ' ';
    static const std::map<std::string, Modality> table = {
        {"numerical", Modality::numerical},   {"numeric", Modality::numerical},
        {"number", Modality::numerical},      {"num", Modality::numerical},
        {"int", Modality::numerical},         {"integer", Modality::numerical},
        {"float", Modality::numerical},       {"double", Modality::numerical},
        {"real", Modality::numerical},        {"continuous", Modality::numerical},
        {"categorical", Modality::categorical}, {"category", Modality::categorical},
        {"cat", Modality::categorical},       {"enum", Modality::categorical},
        {"boolean", Modality::categorical},   {"bool", Modality::categorical},
        {"binary", Modality::categorical},    {"label", Modality::categorical},
        {"text", Modality::text},             {"string", Modality::text},
        {"str", Modality::text},              {"free text", Modality::text},
        {"description", Modality::text},      {"sentence", Modality::text},
        {"image path", Modality::image_path}, {"image paths", Modality::image_path},
        {"image", Modality::image_path},      {"img", Modality::image_path},
        {"photo", Modality::image_path},      {"photo path", Modality::image_path},
        {"picture", Modality::image_path},    {"image file", Modality::image_path},
        {"video path", Modality::video_path}, {"video paths", Modality::video_path},
        {"video", Modality::video_path},      {"clip", Modality::video_path},
        {"video file", Modality::video_path},
        {"identifier", Modality::identifier}, {"id", Modality::identifier},
        {"uuid", Modality::identifier},       {"key", Modality::identifier},
        {"primary key", Modality::identifier}, {"index", Modality::identifier},
    };
    const auto it = table.find(s);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

enum class Provenance { llm, user_override };

struct ModalitySchema {
    std::map<std::string, Modality> by_column;
    std::map<std::string, Provenance> provenance;

    Modality at(const std::string& column) const {
        const auto it = by_column.find(column);
        if (it == by_column.end()) throw std::out_of_range("column not in schema: " + column);
        return it->second;
    }

    // Keys must be exactly the table's columns: no omission, no extras.
    void validate_covers(const StructuredTable& table) const {
        for (const auto& c : table.columns)
            if (!by_column.count(c)) throw std::runtime_error("schema omits column: " + c);
        for (const auto& [c, m] : by_column)
            if (!table.has_column(c)) throw std::runtime_error("schema has extra column: " + c);
    }

    // Distinct modalities of non-label feature columns, in canonical order.
    // Identifier columns carry no trainable signal and are excluded.
    std::vector<Modality> feature_modalities(const StructuredTable& table) const {
        std::set<Modality> present;
        for (const auto& c : table.feature_columns()) {
            const Modality m = at(c);
            if (m != Modality::identifier) present.insert(m);
        }
        std::vector<Modality> out;
        for (Modality m : all_modalities())
            if (present.count(m)) out.push_back(m);
        return out;
    }

    // Feature columns of one modality, in table order.
    std::vector<std::string> columns_of(Modality m, const StructuredTable& table) const {
        std::vector<std::string> out;
        for (const auto& c : table.feature_columns())
            if (at(c) == m) out.push_back(c);
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json cols = nlohmann::json::object();
        for (const auto& [c, m] : by_column) {
            const auto pit = provenance.find(c);
            cols[c] = {{"modality", modality_tag(m)},
                       {"provenance",
                        pit != provenance.end() && pit->second == Provenance::user_override
                            ? "user_override"
                            : "llm"}};
        }
        return cols;
    }

    static ModalitySchema from_json(const nlohmann::json& doc) {
        ModalitySchema schema;
        for (const auto& [c, entry] : doc.items()) {
            schema.by_column[c] = modality_from_tag(entry.at("modality").get<std::string>());
            schema.provenance[c] = entry.at("provenance").get<std::string>() == "user_override"
                                       ? Provenance::user_override
                                       : Provenance::llm;
        }
        return schema;
    }
};

// Free-form user instruction; opaque text, possibly empty.
struct Directive {
    std::string text;
};

namespace detail {

inline std::string render_sample_rows(const StructuredTable& table,
                                      const std::vector<std::size_t>& rows) {
    constexpr std::size_t kCellLimit = 80;  // long text cells would dominate the prompt
    std::string out;
    for (std::size_t r : rows) {
        std::string line;
        for (std::size_t c = 0; c < table.column_count(); ++c) {
            if (c > 0) line += ", ";
            line += table.columns[c] + ":" + truncate(table.cells[r][c], kCellLimit);
        }
        out += line + "\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

inline const std::vector<FewShotBlock>& mi_examples() {
    static const std::vector<FewShotBlock> examples = {
        {"instructions:This dataset lists second-hand cars offered for sale.,Date:"
         "mileage:46000, fuel:diesel, model:astra kombi, photo:cars/astra_01.jpg, price:7200\n"
         "mileage:120500, fuel:petrol, model:corsa, photo:cars/corsa_11.jpg, price:2100",
         "{\"mileage\": \"numerical\", \"fuel\": \"categorical\", \"model\": \"text\", "
         "\"photo\": \"image_path\", \"price\": \"numerical\"}"},
        {"instructions:Support tickets with screenshots attached.,Date:"
         "ticket_id:TCK-10293, subject:App crashes on login, priority:high, "
         "attachment:shots/10293.png, resolved:yes\n"
         "ticket_id:TCK-10311, subject:Typo on invoice page, priority:low, "
         "attachment:shots/10311.png, resolved:no",
         "{\"ticket_id\": \"identifier\", \"subject\": \"text\", \"priority\": \"categorical\", "
         "\"attachment\": \"image_path\", \"resolved\": \"categorical\"}"},
        {"instructions:Short workout clips rated by difficulty.,Date:"
         "clip:sessions/plank_04.mp4, duration_sec:45, coach_notes:keep hips level, level:2\n"
         "clip:sessions/squat_09.mp4, duration_sec:60, coach_notes:slow on the way down, level:3",
         "{\"clip\": \"video_path\", \"duration_sec\": \"numerical\", \"coach_notes\": \"text\", "
         "\"level\": \"categorical\"}"},
    };
    return examples;
}

}  // namespace detail

inline PromptBundle build_mi_prompt(const StructuredTable& table, const Directive& directive,
                                    std::size_t sample_rows, std::uint64_t seed) {
    if (table.row_count() == 0 || table.column_count() == 0)
        throw std::invalid_argument("cannot build modality prompt for an empty table");
    if (sample_rows < 1) throw std::invalid_argument("sample_rows must be >= 1");

    detail::Rng rng(seed);
    const auto rows = rng.sample_indices(table.row_count(),
                                         std::min(sample_rows, table.row_count()));

    PromptBundle bundle;
    bundle.purpose = Purpose::modality;
    bundle.few_shot_blocks = detail::mi_examples();
    bundle.system_text = std::string(prompts::kModalitySystem) +
                         prompts::render_example_blocks(bundle.few_shot_blocks);
    bundle.user_text = "Input: instructions:" + directive.text +
                       ",Date:" + detail::render_sample_rows(table, rows) + "\nOutput:";
    bundle.validate();
    return bundle;
}

namespace detail {

struct SchemaParse {
    std::map<std::string, Modality> by_column;
    std::vector<std::string> problems;  // deterministic order, first problem reported
};

inline SchemaParse parse_schema_answer(const nlohmann::json& doc, const StructuredTable& table) {
    SchemaParse out;
    for (const auto& [column, tag] : doc.items()) {
        if (!table.has_column(column)) {
            out.problems.push_back("extra column '" + column + "'");
            continue;
        }
        const auto m = normalize_modality_tag(tag.get<std::string>());
        if (!m) {
            out.problems.push_back("unknown modality tag '" + tag.get<std::string>() +
                                   "' for column '" + column + "'");
            continue;
        }
        out.by_column[column] = *m;
    }
    for (const auto& c : table.columns)
        if (!out.by_column.count(c) && !doc.contains(c))
            out.problems.push_back("missing column '" + c + "'");
    return out;
}

}  // namespace detail

// MI stage: one completion, strict-JSON parse, tag normalization, coverage
// check; a single corrective retry on any violation, then a hard error.
// Caller-supplied overrides win over the LLM per column.
inline ModalitySchema infer_modalities(LlmGateway& gateway, const StructuredTable& table,
                                       const Directive& directive,
                                       const std::map<std::string, Modality>& overrides = {},
                                       std::size_t sample_rows = 5, std::uint64_t seed = 0) {
    table.validate();
    for (const auto& [c, m] : overrides)
        if (!table.has_column(c))
            throw std::invalid_argument("override for unknown column: " + c);

    const PromptBundle bundle = build_mi_prompt(table, directive, sample_rows, seed);
    auto doc = complete_json(gateway, bundle, ShapeStringMap{});
    auto parsed = detail::parse_schema_answer(doc, table);

    if (!parsed.problems.empty()) {
        std::string correction =
            "Your previous answer was invalid: " + detail::join(parsed.problems, "; ") +
            ". Answer again with a strict JSON object covering every column exactly once, "
            "using only these data types: numerical, categorical, text, image_path, "
            "video_path, identifier.";
        doc = complete_json(gateway, bundle.with_correction(correction), ShapeStringMap{});
        parsed = detail::parse_schema_answer(doc, table);
        if (!parsed.problems.empty())
            throw std::runtime_error("modality inference failed after retry: " +
                                     parsed.problems.front());
    }

    ModalitySchema schema;
    schema.by_column = std::move(parsed.by_column);
    for (const auto& c : table.columns) schema.provenance[c] = Provenance::llm;
    for (const auto& [c, m] : overrides) {
        schema.by_column[c] = m;
        schema.provenance[c] = Provenance::user_override;
    }
    schema.validate_covers(table);
    return schema;
}

// The label's modality follows the task: numerical targets for regression,
// categorical otherwise. Recorded as a user override when it corrects the LLM.
inline void enforce_label_modality(ModalitySchema& schema, const StructuredTable& table,
                                   TaskKind task) {
    if (!table.label_column) return;
    const Modality wanted =
        task == TaskKind::regression ? Modality::numerical : Modality::categorical;
    auto& current = schema.by_column.at(*table.label_column);
    if (current != wanted) {
        current = wanted;
        schema.provenance[*table.label_column] = Provenance::user_override;
    }
}

}  // namespace tablefuse
