#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "exfilab/common.hpp"

namespace exfilab {

// Line-oriented `key = value` configuration with [section] headers, `#`
// comments and comma-separated lists.
class Config {
public:
    static Config parse_string(const std::string& text, const std::string& what = "<config>") {
        Config cfg;
        std::istringstream in(text);
        std::string line, section;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError(what + ":" + std::to_string(lineno) +
                                      ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty())
                    throw ConfigError(what + ":" + std::to_string(lineno) + ": empty section name");
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(what + ":" + std::to_string(lineno) +
                                  ": expected `key = value`, got: " + line);
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError(what + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[section][key] = value;
        }
        return cfg;
    }

    static Config parse_file(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open config file: " + path.string());
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse_string(ss.str(), path.filename().string());
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = values_.find(section);
        return s != values_.end() && s->second.count(key) > 0;
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        values_[section][key] = value;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        auto s = values_.find(section);
        if (s == values_.end()) return fallback;
        auto k = s->second.find(key);
        return k == s->second.end() ? fallback : k->second;
    }

    std::string require_string(const std::string& section, const std::string& key) const {
        if (!has(section, key))
            throw ConfigError("missing required config key [" + section + "] " + key);
        return values_.at(section).at(key);
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        if (!has(section, key)) return fallback;
        return to_double(values_.at(section).at(key), section, key);
    }

    long get_long(const std::string& section, const std::string& key, long fallback) const {
        if (!has(section, key)) return fallback;
        return to_long(values_.at(section).at(key), section, key);
    }

    uint64_t get_u64(const std::string& section, const std::string& key, uint64_t fallback) const {
        long v = get_long(section, key, static_cast<long>(fallback));
        if (v < 0) throw ConfigError("config [" + section + "] " + key + " must be >= 0");
        return static_cast<uint64_t>(v);
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        if (!has(section, key)) return fallback;
        const std::string& v = values_.at(section).at(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError("config [" + section + "] " + key + ": expected a boolean, got " + v);
    }

    std::vector<std::string> get_list(const std::string& section, const std::string& key,
                                      const std::vector<std::string>& fallback = {}) const {
        if (!has(section, key)) return fallback;
        std::vector<std::string> out;
        std::istringstream ss(values_.at(section).at(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                        const std::vector<double>& fallback = {}) const {
        if (!has(section, key)) return fallback;
        std::vector<double> out;
        for (const auto& s : get_list(section, key)) out.push_back(to_double(s, section, key));
        return out;
    }

    std::vector<long> get_long_list(const std::string& section, const std::string& key,
                                    const std::vector<long>& fallback = {}) const {
        if (!has(section, key)) return fallback;
        std::vector<long> out;
        for (const auto& s : get_list(section, key)) out.push_back(to_long(s, section, key));
        return out;
    }

    std::vector<size_t> get_size_list(const std::string& section, const std::string& key,
                                      const std::vector<size_t>& fallback = {}) const {
        if (!has(section, key)) return fallback;
        std::vector<size_t> out;
        for (long v : get_long_list(section, key)) {
            if (v <= 0) throw ConfigError("config [" + section + "] " + key + ": values must be > 0");
            out.push_back(static_cast<size_t>(v));
        }
        return out;
    }

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return values_;
    }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static double to_double(const std::string& s, const std::string& section,
                            const std::string& key) {
        try {
            size_t pos = 0;
            double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config [" + section + "] " + key + ": expected a number, got " + s);
        }
    }

    static long to_long(const std::string& s, const std::string& section, const std::string& key) {
        try {
            size_t pos = 0;
            long v = std::stol(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config [" + section + "] " + key + ": expected an integer, got " + s);
        }
    }

    std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace exfilab
