#pragma once

#include <cctype>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "tablefuse/detail/strings.hpp"

namespace tablefuse::detail {

// Minimal TOML reader covering what run configs need: [section] and
// [dotted.section] headers, bare keys, basic strings, multi-line basic
// strings ("""), integers, floats and booleans. Returns a nested JSON object.
class TomlParser {
public:
    explicit TomlParser(std::string text) : text_(std::move(text)) {}

    nlohmann::json parse() {
        nlohmann::json root = nlohmann::json::object();
        nlohmann::json* section = &root;
        while (skip_blank(), pos_ < text_.size()) {
            if (text_[pos_] == '[') {
                section = &open_section(root);
            } else {
                const std::string key = read_key();
                skip_spaces();
                expect('=');
                skip_spaces();
                (*section)[key] = read_value();
                end_of_line();
            }
        }
        return root;
    }

private:
    void fail(const std::string& what) const {
        throw std::runtime_error("config parse error at line " + std::to_string(line_) + ": " + what);
    }

    void skip_spaces() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }

    void skip_blank() {
        for (;;) {
            skip_spaces();
            if (pos_ < text_.size() && text_[pos_] == '#') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
            }
            if (pos_ < text_.size() && (text_[pos_] == '\n' || text_[pos_] == '\r')) {
                if (text_[pos_] == '\n') ++line_;
                ++pos_;
                continue;
            }
            return;
        }
    }

    void expect(char c) {
        if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    void end_of_line() {
        skip_spaces();
        if (pos_ < text_.size() && text_[pos_] == '#')
            while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
        if (pos_ < text_.size() && text_[pos_] != '\n' && text_[pos_] != '\r')
            fail("unexpected trailing content");
    }

    static bool key_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    }

    std::string read_key() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && key_char(text_[pos_])) ++pos_;
        if (pos_ == start) fail("expected a key");
        return text_.substr(start, pos_ - start);
    }

    nlohmann::json& open_section(nlohmann::json& root) {
        expect('[');
        nlohmann::json* node = &root;
        for (;;) {
            const std::string part = read_key();
            node = &(*node)[part];
            if (!node->is_object()) *node = nlohmann::json::object();
            if (pos_ < text_.size() && text_[pos_] == '.') {
                ++pos_;
                continue;
            }
            break;
        }
        expect(']');
        end_of_line();
        return *node;
    }

    nlohmann::json read_value() {
        if (pos_ >= text_.size()) fail("expected a value");
        if (text_.compare(pos_, 3, "\"\"\"") == 0) return read_multiline_string();
        if (text_[pos_] == '"') return read_basic_string();
        // Bare token: boolean or number.
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != '\n' && text_[pos_] != '\r' &&
               text_[pos_] != '#')
            ++pos_;
        const std::string token = trim(text_.substr(start, pos_ - start));
        if (token == "true") return true;
        if (token == "false") return false;
        if (const auto num = parse_number(token)) {
            // Preserve integers as integers for exact round-trips.
            if (token.find_first_of(".eE") == std::string::npos)
                return static_cast<std::int64_t>(*num);
            return *num;
        }
        fail("unrecognized value: " + token);
        return {};
    }

    nlohmann::json read_basic_string() {
        expect('"');
        std::string out;
        while (pos_ < text_.size() && text_[pos_] != '"') {
            char c = text_[pos_++];
            if (c == '\n') fail("unterminated string");
            if (c == '\\' && pos_ < text_.size()) {
                const char esc = text_[pos_++];
                switch (esc) {
                    case 'n': c = '\n'; break;
                    case 't': c = '\t'; break;
                    case 'r': c = '\r'; break;
                    case '"': c = '"'; break;
                    case '\\': c = '\\'; break;
                    default: fail(std::string("unsupported escape \\") + esc);
                }
            }
            out += c;
        }
        expect('"');
        return out;
    }

    nlohmann::json read_multiline_string() {
        pos_ += 3;
        // A newline immediately after the opener is trimmed.
        if (pos_ < text_.size() && text_[pos_] == '\r') ++pos_;
        if (pos_ < text_.size() && text_[pos_] == '\n') {
            ++pos_;
            ++line_;
        }
        const auto end = text_.find("\"\"\"", pos_);
        if (end == std::string::npos) fail("unterminated multi-line string");
        std::string out = text_.substr(pos_, end - pos_);
        line_ += static_cast<int>(std::count(out.begin(), out.end(), '\n'));
        pos_ = end + 3;
        return out;
    }

    std::string text_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

inline nlohmann::json parse_toml(const std::string& text) { return TomlParser(text).parse(); }

inline nlohmann::json load_toml_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_toml(text);
}

}  // namespace tablefuse::detail
