#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dabopt/errors.hpp"

namespace dabopt {

// Line-oriented configuration files:
//
//   # comment
//   [section]
//   key = value
//
// Keys are addressed as "section.key" once a [section] header has been seen,
// or bare "key" before any header. Unknown and duplicate keys are errors so
// that typos surface instead of silently falling back to defaults.
class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile parse(const std::string& text, const std::string& source_name = "<string>") {
        ConfigFile cfg;
        cfg.source_ = source_name;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view sv = trim(line);
            if (sv.empty() || sv.front() == '#') continue;
            if (sv.front() == '[') {
                if (sv.back() != ']' || sv.size() < 3)
                    throw ConfigError(source_name + ":" + std::to_string(line_no) +
                                      ": malformed section header '" + std::string(sv) + "'");
                section = std::string(trim(sv.substr(1, sv.size() - 2)));
                continue;
            }
            auto eq = sv.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError(source_name + ":" + std::to_string(line_no) +
                                  ": expected 'key = value', got '" + std::string(sv) + "'");
            std::string key(trim(sv.substr(0, eq)));
            std::string value(trim(sv.substr(eq + 1)));
            if (key.empty())
                throw ConfigError(source_name + ":" + std::to_string(line_no) + ": empty key");
            std::string full = section.empty() ? key : section + "." + key;
            if (cfg.values_.count(full))
                throw ConfigError(source_name + ":" + std::to_string(line_no) +
                                  ": duplicate key '" + full + "'");
            cfg.values_[full] = value;
        }
        return cfg;
    }

    static ConfigFile from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    // True when any key of the form "section.*" is present.
    bool has_section(const std::string& section) const {
        auto it = values_.lower_bound(section + ".");
        return it != values_.end() && it->first.rfind(section + ".", 0) == 0;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        return parse_number<double>(key, it->second);
    }

    int get_int(const std::string& key, int fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        return parse_number<int>(key, it->second);
    }

    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        return parse_number<std::uint64_t>(key, it->second);
    }

    // Keys present in the file that no get_* call has touched. The CLI
    // treats a nonempty result as a config error.
    std::vector<std::string> unused_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!consumed_.count(k)) out.push_back(k);
        return out;
    }

    const std::string& source() const { return source_; }

private:
    static std::string_view trim(std::string_view sv) {
        while (!sv.empty() && std::isspace(static_cast<unsigned char>(sv.front()))) sv.remove_prefix(1);
        while (!sv.empty() && std::isspace(static_cast<unsigned char>(sv.back()))) sv.remove_suffix(1);
        return sv;
    }

    template <class T>
    T parse_number(const std::string& key, const std::string& text) const {
        T out{};
        const char* first = text.data();
        const char* last = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(first, last, out);
        if (ec != std::errc() || ptr != last)
            throw ConfigError(source_ + ": key '" + key + "': cannot parse value '" + text + "'");
        return out;
    }

    std::string source_ = "<empty>";
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
};

}  // namespace dabopt
