#pragma once

#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nohd/errors.hpp"
#include "nohd/matrix.hpp"

namespace nohd {

/// Key-value configuration text with nested [section] blocks and '#'
/// comments. Keys outside any section live in the "" section. Parse errors
/// carry the offending line number and field.
class KeyValueFile {
  public:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };

    static KeyValueFile parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str(), path);
    }

    static KeyValueFile parse_string(const std::string& text,
                                     const std::string& origin = "<string>") {
        KeyValueFile kv;
        kv.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        std::string section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string stripped = strip_comment(line);
            const std::string t = trim(stripped);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(lineno) +
                                      ": unterminated section header");
                section = trim(t.substr(1, t.size() - 2));
                kv.sections_[section];
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": expected key = value, got '" + t + "'");
            const std::string key = trim(t.substr(0, eq));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            kv.sections_[section][key] = Entry{trim(t.substr(eq + 1)), lineno};
        }
        return kv;
    }

    bool has_section(const std::string& section) const {
        return sections_.count(section) > 0;
    }
    bool has(const std::string& section, const std::string& key) const {
        auto it = sections_.find(section);
        return it != sections_.end() && it->second.count(key) > 0;
    }

    std::string get_string(const std::string& section, const std::string& key) const {
        return entry(section, key).value;
    }
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        return has(section, key) ? get_string(section, key) : fallback;
    }

    double get_double(const std::string& section, const std::string& key) const {
        const Entry& e = entry(section, key);
        return parse_double(e.value, e.line, key);
    }
    double get_double(const std::string& section, const std::string& key,
                      double fallback) const {
        return has(section, key) ? get_double(section, key) : fallback;
    }

    long long get_int(const std::string& section, const std::string& key) const {
        const Entry& e = entry(section, key);
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(e.value, &pos);
            if (pos != e.value.size()) throw std::invalid_argument("trailing text");
            return v;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ":" + std::to_string(e.line) + ": field '" + key +
                              "' is not an integer: '" + e.value + "'");
        }
    }
    long long get_int(const std::string& section, const std::string& key,
                      long long fallback) const {
        return has(section, key) ? get_int(section, key) : fallback;
    }

    bool get_bool(const std::string& section, const std::string& key,
                  bool fallback) const {
        if (!has(section, key)) return fallback;
        const Entry& e = entry(section, key);
        if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
        if (e.value == "false" || e.value == "0" || e.value == "no") return false;
        throw ConfigError(origin_ + ":" + std::to_string(e.line) + ": field '" + key +
                          "' is not a boolean: '" + e.value + "'");
    }

    Vec get_double_list(const std::string& section, const std::string& key) const {
        const Entry& e = entry(section, key);
        Vec out;
        for (const std::string& item : split(e.value))
            out.push_back(parse_double(item, e.line, key));
        return out;
    }

    std::vector<std::string> get_string_list(const std::string& section,
                                             const std::string& key) const {
        return split(entry(section, key).value);
    }

    const std::string& origin() const { return origin_; }

    std::size_t line_of(const std::string& section, const std::string& key) const {
        return entry(section, key).line;
    }

  private:
    const Entry& entry(const std::string& section, const std::string& key) const {
        auto it = sections_.find(section);
        if (it == sections_.end() || it->second.count(key) == 0) {
            const std::string where =
                section.empty() ? "top level" : "section [" + section + "]";
            throw ConfigError(origin_ + ": missing field '" + key + "' in " + where);
        }
        return it->second.at(key);
    }

    double parse_double(const std::string& text, std::size_t line,
                        const std::string& key) const {
        try {
            std::size_t pos = 0;
            const double v = std::stod(text, &pos);
            if (pos != text.size()) throw std::invalid_argument("trailing text");
            return v;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ":" + std::to_string(line) + ": field '" + key +
                              "' is not a number: '" + text + "'");
        }
    }

    static std::string strip_comment(const std::string& s) {
        const auto pos = s.find('#');
        return pos == std::string::npos ? s : s.substr(0, pos);
    }

    static std::string trim(const std::string& s) {
        std::size_t b = 0;
        std::size_t e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return s.substr(b, e - b);
    }

    static std::vector<std::string> split(const std::string& s) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(s);
        while (std::getline(in, item, ',')) {
            const std::string t = trim(item);
            if (!t.empty()) out.push_back(t);
        }
        return out;
    }

    std::string origin_;
    std::map<std::string, std::map<std::string, Entry>> sections_;
};

}  // namespace nohd
