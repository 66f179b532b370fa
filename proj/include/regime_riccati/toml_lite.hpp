#pragma once

// Minimal TOML reader covering the market-file schema: top-level tables,
// arrays of tables, bare keys, strings, booleans, numbers, and (possibly
// nested, possibly multiline) arrays. Not a general TOML implementation.

#include <cctype>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "regime_riccati/errors.hpp"

namespace regime_riccati::toml {

struct Value {
    enum class Kind { String, Number, Boolean, Array };
    Kind kind = Kind::Number;
    std::string str;
    double num = 0.0;
    bool boolean = false;
    bool integral = false;  ///< number was written without '.', 'e' or 'E'
    std::vector<Value> array;

    bool is_array() const { return kind == Kind::Array; }
    bool is_number() const { return kind == Kind::Number; }

    double as_number(const std::string& context) const {
        if (kind != Kind::Number)
            throw ParseError(context + ": expected a number");
        return num;
    }
    long long as_integer(const std::string& context) const {
        if (kind != Kind::Number || !integral)
            throw ParseError(context + ": expected an integer");
        return static_cast<long long>(num);
    }
    const std::string& as_string(const std::string& context) const {
        if (kind != Kind::String)
            throw ParseError(context + ": expected a string");
        return str;
    }
    const std::vector<Value>& as_array(const std::string& context) const {
        if (kind != Kind::Array)
            throw ParseError(context + ": expected an array");
        return array;
    }
};

using Table = std::map<std::string, Value>;

struct Document {
    Table root;
    std::map<std::string, Table> tables;
    std::map<std::string, std::vector<Table>> table_arrays;

    bool has_table(const std::string& name) const { return tables.count(name) > 0; }
    const Table& table(const std::string& name) const {
        auto it = tables.find(name);
        if (it == tables.end()) throw ParseError("missing [" + name + "] section");
        return it->second;
    }
    const std::vector<Table>& array_of(const std::string& name) const {
        auto it = table_arrays.find(name);
        if (it == table_arrays.end()) throw ParseError("missing [[" + name + "]] sections");
        return it->second;
    }
};

namespace detail {

struct Cursor {
    const std::string& text;
    std::size_t pos = 0;
    int line = 1;

    bool eof() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    char take() {
        char c = text[pos++];
        if (c == '\n') ++line;
        return c;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("line " + std::to_string(line) + ": " + what);
    }

    void skip_ws_inline() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) take();
    }

    /// Skips whitespace, newlines and comments.
    void skip_ws_all() {
        while (!eof()) {
            char c = peek();
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                take();
            } else if (c == '#') {
                while (!eof() && peek() != '\n') take();
            } else {
                break;
            }
        }
    }
};

inline bool is_bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

inline std::string parse_bare_key(Cursor& cur) {
    std::string key;
    while (!cur.eof() && is_bare_key_char(cur.peek())) key.push_back(cur.take());
    if (key.empty()) cur.fail("expected a key");
    return key;
}

inline Value parse_value(Cursor& cur);

inline Value parse_string(Cursor& cur) {
    cur.take();  // opening quote
    Value v;
    v.kind = Value::Kind::String;
    while (true) {
        if (cur.eof()) cur.fail("unterminated string");
        char c = cur.take();
        if (c == '"') break;
        if (c == '\\') {
            if (cur.eof()) cur.fail("unterminated escape");
            char e = cur.take();
            switch (e) {
            case '"': v.str.push_back('"'); break;
            case '\\': v.str.push_back('\\'); break;
            case 'n': v.str.push_back('\n'); break;
            case 't': v.str.push_back('\t'); break;
            default: cur.fail(std::string("unsupported escape \\") + e);
            }
        } else {
            v.str.push_back(c);
        }
    }
    return v;
}

inline Value parse_array(Cursor& cur) {
    cur.take();  // '['
    Value v;
    v.kind = Value::Kind::Array;
    while (true) {
        cur.skip_ws_all();
        if (cur.eof()) cur.fail("unterminated array");
        if (cur.peek() == ']') {
            cur.take();
            break;
        }
        v.array.push_back(parse_value(cur));
        cur.skip_ws_all();
        if (cur.eof()) cur.fail("unterminated array");
        if (cur.peek() == ',') {
            cur.take();
        } else if (cur.peek() != ']') {
            cur.fail("expected ',' or ']' in array");
        }
    }
    return v;
}

inline Value parse_number_or_bool(Cursor& cur) {
    std::string tok;
    while (!cur.eof()) {
        char c = cur.peek();
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' ||
            c == '.' || c == '_') {
            tok.push_back(cur.take());
        } else {
            break;
        }
    }
    if (tok.empty()) cur.fail("expected a value");
    Value v;
    if (tok == "true" || tok == "false") {
        v.kind = Value::Kind::Boolean;
        v.boolean = (tok == "true");
        return v;
    }
    std::string clean;
    for (char c : tok)
        if (c != '_') clean.push_back(c);
    char* end = nullptr;
    v.num = std::strtod(clean.c_str(), &end);
    if (end == nullptr || *end != '\0') cur.fail("malformed number '" + tok + "'");
    v.kind = Value::Kind::Number;
    v.integral = clean.find_first_of(".eE") == std::string::npos;
    return v;
}

inline Value parse_value(Cursor& cur) {
    cur.skip_ws_all();
    if (cur.eof()) cur.fail("expected a value");
    char c = cur.peek();
    if (c == '"') return parse_string(cur);
    if (c == '[') return parse_array(cur);
    return parse_number_or_bool(cur);
}

inline void expect_line_end(Cursor& cur) {
    cur.skip_ws_inline();
    if (cur.eof()) return;
    if (cur.peek() == '#') {
        while (!cur.eof() && cur.peek() != '\n') cur.take();
    }
    if (!cur.eof()) {
        if (cur.peek() != '\n' && cur.peek() != '\r')
            cur.fail("unexpected trailing characters");
    }
}

} // namespace detail

inline Document parse(const std::string& text) {
    detail::Cursor cur{text};
    Document doc;
    Table* current = &doc.root;

    while (true) {
        cur.skip_ws_all();
        if (cur.eof()) break;
        char c = cur.peek();
        if (c == '[') {
            cur.take();
            const bool is_array = !cur.eof() && cur.peek() == '[';
            if (is_array) cur.take();
            cur.skip_ws_inline();
            const std::string name = detail::parse_bare_key(cur);
            cur.skip_ws_inline();
            if (cur.eof() || cur.take() != ']') cur.fail("expected ']'");
            if (is_array) {
                if (cur.eof() || cur.take() != ']') cur.fail("expected ']]'");
                doc.table_arrays[name].emplace_back();
                current = &doc.table_arrays[name].back();
            } else {
                if (doc.tables.count(name)) cur.fail("duplicate table [" + name + "]");
                current = &doc.tables[name];
            }
            detail::expect_line_end(cur);
        } else {
            const std::string key = detail::parse_bare_key(cur);
            cur.skip_ws_inline();
            if (cur.eof() || cur.take() != '=') cur.fail("expected '=' after key '" + key + "'");
            Value v = detail::parse_value(cur);
            if (current->count(key)) cur.fail("duplicate key '" + key + "'");
            (*current)[key] = std::move(v);
            detail::expect_line_end(cur);
        }
    }
    return doc;
}

} // namespace regime_riccati::toml
