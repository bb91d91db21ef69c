#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace dpfed {

// Configuration problems map to exit code 2 in the CLI.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Strict parser for the TOML subset the config schema needs: [sections],
// `key = value` with string/integer/float/boolean/flat-array values, and
// `#` comments. Anything else is rejected with a line diagnostic.
namespace toml {

struct Value {
    std::variant<std::string, std::int64_t, double, bool,
                 std::vector<Value>> v;
    int line = 0;

    bool is_string() const { return std::holds_alternative<std::string>(v); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
    bool is_float() const { return is_int() || std::holds_alternative<double>(v); }
    bool is_bool() const { return std::holds_alternative<bool>(v); }
    bool is_array() const {
        return std::holds_alternative<std::vector<Value>>(v);
    }

    double as_float() const {
        return is_int() ? static_cast<double>(std::get<std::int64_t>(v))
                        : std::get<double>(v);
    }
};

using Table = std::map<std::string, Value>;
using Document = std::map<std::string, Table>;  // section -> keys

namespace detail {

[[noreturn]] inline void fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

inline void skip_ws(const std::string& s, std::size_t& i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
}

inline Value parse_scalar(const std::string& s, std::size_t& i, int line);

inline Value parse_value(const std::string& s, std::size_t& i, int line) {
    skip_ws(s, i);
    if (i >= s.size()) fail(line, "missing value");
    if (s[i] == '[') {
        ++i;
        std::vector<Value> items;
        skip_ws(s, i);
        if (i < s.size() && s[i] == ']') {
            ++i;
        } else {
            for (;;) {
                items.push_back(parse_value(s, i, line));
                skip_ws(s, i);
                if (i < s.size() && s[i] == ',') {
                    ++i;
                    continue;
                }
                if (i < s.size() && s[i] == ']') {
                    ++i;
                    break;
                }
                fail(line, "expected ',' or ']' in array");
            }
        }
        Value out;
        out.v = std::move(items);
        out.line = line;
        return out;
    }
    return parse_scalar(s, i, line);
}

inline Value parse_scalar(const std::string& s, std::size_t& i, int line) {
    Value out;
    out.line = line;
    if (s[i] == '"') {
        std::string str;
        ++i;
        while (i < s.size() && s[i] != '"') {
            if (s[i] == '\\') {
                ++i;
                if (i >= s.size()) fail(line, "bad escape");
                switch (s[i]) {
                    case 'n': str.push_back('\n'); break;
                    case 't': str.push_back('\t'); break;
                    case '\\': str.push_back('\\'); break;
                    case '"': str.push_back('"'); break;
                    default: fail(line, "unsupported escape");
                }
            } else {
                str.push_back(s[i]);
            }
            ++i;
        }
        if (i >= s.size()) fail(line, "unterminated string");
        ++i;
        out.v = std::move(str);
        return out;
    }
    std::size_t start = i;
    while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#' &&
           s[i] != ' ' && s[i] != '\t')
        ++i;
    std::string tok = s.substr(start, i - start);
    if (tok.empty()) fail(line, "missing value");
    if (tok == "true" || tok == "false") {
        out.v = (tok == "true");
        return out;
    }
    const bool looks_float = tok.find_first_of(".eE") != std::string::npos &&
                             tok != "inf" && tok != "nan";
    try {
        std::size_t pos = 0;
        if (!looks_float) {
            const std::int64_t n = std::stoll(tok, &pos);
            if (pos == tok.size()) {
                out.v = n;
                return out;
            }
        }
        pos = 0;
        const double d = std::stod(tok, &pos);
        if (pos == tok.size()) {
            out.v = d;
            return out;
        }
    } catch (const std::exception&) {
    }
    fail(line, "cannot parse value '" + tok + "'");
}

}  // namespace detail

inline Document parse(std::istream& in) {
    Document doc;
    std::string section;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        std::size_t i = 0;
        detail::skip_ws(raw, i);
        if (i >= raw.size() || raw[i] == '#') continue;
        if (raw[i] == '[') {
            const std::size_t close = raw.find(']', i);
            if (close == std::string::npos)
                detail::fail(line, "unterminated section header");
            section = raw.substr(i + 1, close - i - 1);
            if (section.empty()) detail::fail(line, "empty section name");
            i = close + 1;
            detail::skip_ws(raw, i);
            if (i < raw.size() && raw[i] != '#')
                detail::fail(line, "trailing content after section header");
            doc.try_emplace(section);
            continue;
        }
        std::size_t start = i;
        while (i < raw.size() &&
               (std::isalnum(static_cast<unsigned char>(raw[i])) ||
                raw[i] == '_' || raw[i] == '-'))
            ++i;
        const std::string key = raw.substr(start, i - start);
        if (key.empty()) detail::fail(line, "expected key");
        detail::skip_ws(raw, i);
        if (i >= raw.size() || raw[i] != '=')
            detail::fail(line, "expected '=' after key '" + key + "'");
        ++i;
        toml::Value value = detail::parse_value(raw, i, line);
        detail::skip_ws(raw, i);
        if (i < raw.size() && raw[i] != '#')
            detail::fail(line, "trailing content after value for '" + key +
                                   "'");
        auto& table = doc[section];
        if (table.count(key))
            detail::fail(line, "duplicate key '" + key + "'");
        table.emplace(key, std::move(value));
    }
    return doc;
}

inline Document parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse(in);
}

// Tracks which keys a schema consumed so unknown keys can be rejected.
class Reader {
public:
    explicit Reader(const Document& doc) : doc_(doc) {}

    const Value* find(const std::string& section, const std::string& key) {
        consumed_.insert(section + "." + key);
        auto s = doc_.find(section);
        if (s == doc_.end()) return nullptr;
        auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    }

    void allow_section(const std::string& section) {
        allowed_sections_.insert(section);
    }

    // Call after reading the schema: any key not consumed is unknown.
    void reject_unknown() const {
        for (const auto& [section, table] : doc_) {
            if (!allowed_sections_.count(section))
                throw ConfigError("unknown config section [" + section + "]");
            for (const auto& [key, value] : table) {
                if (!consumed_.count(section + "." + key))
                    throw ConfigError(
                        "config line " + std::to_string(value.line) +
                        ": unknown key '" + section + "." + key + "'");
            }
        }
    }

private:
    const Document& doc_;
    std::set<std::string> consumed_;
    std::set<std::string> allowed_sections_;
};

}  // namespace toml
}  // namespace dpfed
