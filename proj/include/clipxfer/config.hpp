#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "clipxfer/error.hpp"
#include "clipxfer/io.hpp"

namespace clipxfer {

/// Flat key/value configuration in a small TOML subset:
///
///     # comment
///     trials = 10
///     target_instruction = "top right third"
///     grid_sizes = [8, 10]
///     [train]
///     learning_rate = 3e-3
///
/// Keys under a `[section]` header are stored as "section.key". Values are
/// kept as raw text and converted on access.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in) {
        KeyValueConfig cfg;
        std::string section;
        std::string line;
        for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
            const auto where = "config line " + std::to_string(lineno) + ": ";
            const auto text = strip(strip_comment(line));
            if (text.empty()) continue;
            if (text.front() == '[' && text.find('=') == std::string::npos) {
                if (text.back() != ']') throw FormatError(where + "unterminated section header");
                section = strip(text.substr(1, text.size() - 2));
                continue;
            }
            const auto eq = text.find('=');
            if (eq == std::string::npos) throw FormatError(where + "expected 'key = value'");
            auto key = strip(text.substr(0, eq));
            const auto value = strip(text.substr(eq + 1));
            if (key.empty()) throw FormatError(where + "empty key");
            if (!section.empty()) key = section + "." + key;
            if (cfg.values_.contains(key)) throw FormatError(where + "duplicate key '" + key + "'");
            cfg.values_[key] = {value, lineno};
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open config file '" + path + "'");
        return parse(in);
    }

    bool has(const std::string& key) const { return values_.contains(key); }

    std::vector<std::string> keys() const {
        std::vector<std::string> out;
        for (const auto& [k, _] : values_) out.push_back(k);
        return out;
    }

    std::string get_string(const std::string& key) const { return unquote(raw(key), key); }

    double get_double(const std::string& key) const {
        const auto v = parse_double(raw(key));
        if (!v) throw FormatError(location(key) + "'" + key + "' is not a number");
        return *v;
    }

    long long get_int(const std::string& key) const {
        const auto& r = raw(key);
        try {
            std::size_t used = 0;
            const long long v = std::stoll(r, &used);
            if (used == r.size()) return v;
        } catch (const std::exception&) {
        }
        throw FormatError(location(key) + "'" + key + "' is not an integer");
    }

    std::uint64_t get_u64(const std::string& key) const {
        const auto& r = raw(key);
        try {
            std::size_t used = 0;
            const auto v = std::stoull(r, &used);
            if (used == r.size() && !r.empty() && r[0] != '-') return v;
        } catch (const std::exception&) {
        }
        throw FormatError(location(key) + "'" + key + "' is not an unsigned integer");
    }

    bool get_bool(const std::string& key) const {
        const auto& r = raw(key);
        if (r == "true") return true;
        if (r == "false") return false;
        throw FormatError(location(key) + "'" + key + "' must be true or false");
    }

    std::vector<std::string> get_list(const std::string& key) const {
        const auto& r = raw(key);
        if (r.size() < 2 || r.front() != '[' || r.back() != ']')
            throw FormatError(location(key) + "'" + key + "' must be a [list]");
        std::vector<std::string> items;
        std::string current;
        bool quoted = false;
        for (char c : std::string_view(r).substr(1, r.size() - 2)) {
            if (c == '"') quoted = !quoted;
            if (c == ',' && !quoted) {
                items.push_back(unquote(strip(current), key));
                current.clear();
            } else {
                current.push_back(c);
            }
        }
        if (quoted) throw FormatError(location(key) + "unterminated string in '" + key + "'");
        if (!strip(current).empty() || !items.empty()) items.push_back(unquote(strip(current), key));
        return items;
    }

    std::vector<long long> get_int_list(const std::string& key) const {
        std::vector<long long> out;
        for (const auto& item : get_list(key)) {
            try {
                std::size_t used = 0;
                out.push_back(std::stoll(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw FormatError(location(key) + "'" + key + "' must list integers");
            }
        }
        return out;
    }

private:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };

    const std::string& raw(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw LookupError("config key '" + key + "' not set");
        return it->second.value;
    }

    std::string location(const std::string& key) const {
        const auto it = values_.find(key);
        return it == values_.end() ? std::string() : "config line " + std::to_string(it->second.line) + ": ";
    }

    std::string unquote(const std::string& v, const std::string& key) const {
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
        if (!v.empty() && (v.front() == '"' || v.back() == '"'))
            throw FormatError(location(key) + "unbalanced quotes in '" + key + "'");
        return v;
    }

    static std::string strip_comment(const std::string& line) {
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) return line.substr(0, i);
        }
        return line;
    }

    static std::string strip(std::string_view s) {
        std::size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return std::string(s.substr(b, e - b));
    }

    std::map<std::string, Entry> values_;
};

}  // namespace clipxfer
