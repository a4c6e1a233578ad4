#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace tablefuse {

// Marker shared by the corruption harness and the imputer.
inline constexpr const char* kMissingMarker = "???";

// Rectangular named-column grid of raw string cells. Cells stay untyped
// strings until modality inference assigns meaning.
struct StructuredTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> cells;  // row-major
    std::optional<std::string> label_column;
    std::optional<std::string> source_path;

    std::size_t row_count() const { return cells.size(); }
    std::size_t column_count() const { return columns.size(); }

    bool has_column(const std::string& name) const {
        for (const auto& c : columns)
            if (c == name) return true;
        return false;
    }

    std::size_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw std::out_of_range("unknown column: " + name);
    }

    const std::string& at(std::size_t row, std::size_t col) const { return cells.at(row).at(col); }
    const std::string& at(std::size_t row, const std::string& name) const {
        return cells.at(row).at(column_index(name));
    }

    // All columns except the label, in table order.
    std::vector<std::string> feature_columns() const {
        std::vector<std::string> out;
        for (const auto& c : columns)
            if (!label_column || c != *label_column) out.push_back(c);
        return out;
    }

    void validate() const {
        std::unordered_set<std::string> seen;
        for (const auto& c : columns) {
            if (c.empty()) throw std::invalid_argument("empty column name");
            if (!seen.insert(c).second) throw std::invalid_argument("duplicate column name: " + c);
        }
        for (std::size_t r = 0; r < cells.size(); ++r) {
            if (cells[r].size() != columns.size())
                throw std::invalid_argument("row " + std::to_string(r + 1) + " has " +
                                            std::to_string(cells[r].size()) + " cells, expected " +
                                            std::to_string(columns.size()));
        }
        if (label_column && !has_column(*label_column))
            throw std::invalid_argument("label column not in table: " + *label_column);
    }

    // Distinct non-missing values of a column, in first-seen order.
    std::vector<std::string> observed_levels(const std::string& name) const {
        const std::size_t c = column_index(name);
        std::vector<std::string> levels;
        std::unordered_set<std::string> seen;
        for (const auto& row : cells) {
            const std::string& v = row[c];
            if (v == kMissingMarker || v.empty()) continue;
            if (seen.insert(v).second) levels.push_back(v);
        }
        return levels;
    }
};

namespace csv {

// RFC-4180-style parser: quoted fields, "" escapes, newlines inside quotes,
// CRLF tolerated. Returns records of raw fields.
inline std::vector<std::vector<std::string>> parse(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;  // distinguishes trailing empty record from none

    auto end_field = [&] {
        record.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(record);
        record.clear();
    };

    std::size_t i = 0;
    // Skip UTF-8 BOM if present.
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;

    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                end_field();
                field_started = true;  // a comma implies a following field
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
                end_record();
                break;
            case '\n':
                end_record();
                break;
            default:
                field += c;
                field_started = true;
                break;
        }
    }
    if (in_quotes) throw std::invalid_argument("unterminated quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

inline std::string quote_field(const std::string& v) {
    const bool needs = v.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs) return v;
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace csv

inline StructuredTable load_table(const std::filesystem::path& path,
                                  std::optional<std::string> label_column = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const auto records = csv::parse(text);
    if (records.empty()) throw std::runtime_error("no header in " + path.string());

    StructuredTable table;
    table.columns = records[0];
    table.source_path = path.string();
    table.cells.assign(records.begin() + 1, records.end());

    // Tolerate a lone empty trailing record produced by editors.
    if (!table.cells.empty() && table.cells.back().size() == 1 && table.cells.back()[0].empty())
        table.cells.pop_back();

    for (std::size_t r = 0; r < table.cells.size(); ++r) {
        if (table.cells[r].size() != table.columns.size())
            throw std::runtime_error("row " + std::to_string(r + 1) + " has " +
                                     std::to_string(table.cells[r].size()) + " cells, expected " +
                                     std::to_string(table.columns.size()) + " in " + path.string());
    }
    table.label_column = std::move(label_column);
    table.validate();
    return table;
}

inline void save_table(const StructuredTable& table, const std::filesystem::path& path) {
    table.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    auto write_row = [&out](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i > 0) out << ',';
            out << csv::quote_field(row[i]);
        }
        out << '\n';
    };
    write_row(table.columns);
    for (const auto& row : table.cells) write_row(row);
}

}  // namespace tablefuse
