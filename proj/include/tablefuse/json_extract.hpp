#pragma once

#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace tablefuse {

// Raised when LLM output fails the strict-JSON contract; callers use it to
// trigger the single corrective retry.
struct JsonContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat object mapping strings to strings, e.g. {"age": "numerical"}.
struct ShapeStringMap {};
// Array of strings, e.g. ["age", "income"].
struct ShapeStringList {};
// Object with the named fields, each a string; extra fields tolerated.
struct ShapeRecord {
    std::vector<std::string> fields;
};
// Object mapping names to search ranges: a "[a,b,c]" string or an array of scalars.
struct ShapeRangeMap {};

using JsonShape = std::variant<ShapeStringMap, ShapeStringList, ShapeRecord, ShapeRangeMap>;

namespace detail {

// Finds the end of the balanced JSON span starting at `begin`, respecting
// string literals and escapes. Returns the index past the closer, or npos.
inline std::size_t balanced_end(const std::string& text, std::size_t begin) {
    const char open = text[begin];
    const char close = open == '{' ? '}' : ']';
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = begin; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\')
                ++i;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == open) {
            ++depth;
        } else if (c == close) {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string::npos;
}

}  // namespace detail

// Locates and parses the first well-formed JSON object or array in free-form
// text, tolerating surrounding prose and code fences.
inline nlohmann::json extract_first_json(const std::string& text) {
    bool saw_candidate = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{' && text[i] != '[') continue;
        saw_candidate = true;
        const std::size_t end = detail::balanced_end(text, i);
        if (end == std::string::npos) continue;
        const auto parsed =
            nlohmann::json::parse(text.substr(i, end - i), nullptr, /*allow_exceptions=*/false);
        if (!parsed.is_discarded()) return parsed;
    }
    throw JsonContractError(saw_candidate ? "no parseable JSON in response" : "no JSON found in response");
}

inline void validate_shape(const nlohmann::json& doc, const JsonShape& shape) {
    std::visit(
        [&doc](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, ShapeStringMap>) {
                if (!doc.is_object()) throw JsonContractError("expected a JSON object of strings");
                for (const auto& [key, value] : doc.items())
                    if (!value.is_string())
                        throw JsonContractError("value of key '" + key + "' must be a string");
            } else if constexpr (std::is_same_v<S, ShapeStringList>) {
                if (!doc.is_array()) throw JsonContractError("expected a JSON array of strings");
                for (const auto& value : doc)
                    if (!value.is_string())
                        throw JsonContractError("array elements must be strings");
            } else if constexpr (std::is_same_v<S, ShapeRecord>) {
                if (!doc.is_object()) throw JsonContractError("expected a JSON record");
                for (const auto& field : s.fields) {
                    if (!doc.contains(field)) throw JsonContractError("missing key '" + field + "'");
                    if (!doc[field].is_string())
                        throw JsonContractError("key '" + field + "' must be a string");
                }
            } else if constexpr (std::is_same_v<S, ShapeRangeMap>) {
                if (!doc.is_object()) throw JsonContractError("expected a JSON object of ranges");
                for (const auto& [key, value] : doc.items()) {
                    if (value.is_string()) continue;
                    if (value.is_array()) {
                        for (const auto& e : value)
                            if (!e.is_primitive() || e.is_null())
                                throw JsonContractError("range of '" + key +
                                                        "' must hold scalar values");
                        continue;
                    }
                    throw JsonContractError("range of '" + key +
                                            "' must be a list or a \"[v1,v2,...]\" string");
                }
            }
        },
        shape);
}

inline nlohmann::json extract_strict_json(const std::string& text, const JsonShape& shape) {
    nlohmann::json doc = extract_first_json(text);
    validate_shape(doc, shape);
    return doc;
}

}  // namespace tablefuse
