#pragma once

// UTF-8 key=value configuration text: one pair per line, '#' comments,
// blank lines ignored. Keys keep their order of first appearance so
// serialized configs round-trip stably.

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "osrk/common.hpp"

namespace osrk {

struct KvConfig {
    std::vector<std::pair<std::string, std::string>> entries;

    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static KvConfig parse(const std::string& text) {
        KvConfig cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            std::string t = trim(line);
            if (t.empty()) continue;
            size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
            cfg.entries.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
        return cfg;
    }

    bool has(const std::string& key) const {
        for (auto& [k, v] : entries)
            if (k == key) return true;
        return false;
    }

    std::string get(const std::string& key) const {
        for (auto& [k, v] : entries)
            if (k == key) return v;
        throw ConfigError("config: missing key '" + key + "'");
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        for (auto& [k, v] : entries)
            if (k == key) return v;
        return fallback;
    }

    double get_double(const std::string& key) const { return to_double(key, get(key)); }
    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }
    long get_int(const std::string& key) const { return to_int(key, get(key)); }
    long get_int_or(const std::string& key, long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }
    bool get_bool_or(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        std::string v = get(key);
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
    }

    void set(const std::string& key, const std::string& value) {
        for (auto& [k, v] : entries) {
            if (k == key) {
                v = value;
                return;
            }
        }
        entries.emplace_back(key, value);
    }

    std::string serialize() const {
        std::string out;
        for (auto& [k, v] : entries) out += k + " = " + v + "\n";
        return out;
    }

    static double to_double(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return d;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
        }
    }

    static long to_int(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            long d = std::stol(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return d;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
        }
    }

    // comma-separated list of numbers
    static std::vector<double> split_doubles(const std::string& key, const std::string& v) {
        std::vector<double> out;
        std::string cur;
        std::istringstream in(v);
        while (std::getline(in, cur, ',')) {
            cur = trim(cur);
            if (!cur.empty()) out.push_back(to_double(key, cur));
        }
        return out;
    }
};

}  // namespace osrk
