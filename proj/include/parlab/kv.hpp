#pragma once

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace parlab {

// Flat "key = value" text with optional [section] headers. Keys inside a
// section are stored as "section.key". '#' starts a comment line.
using KvMap = std::map<std::string, std::string>;

inline std::string kv_trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline KvMap parse_kv(const std::string& text) {
    KvMap out;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = kv_trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = kv_trim(t.substr(1, t.size() - 2));
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = kv_trim(t.substr(0, eq));
        std::string val = kv_trim(t.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        out[section.empty() ? key : section + "." + key] = val;
    }
    return out;
}

inline std::string emit_kv(const KvMap& kv) {
    // grouped back into sections, keys sorted, for byte-stable snapshots
    std::ostringstream os;
    std::string section;
    bool first = true;
    for (const auto& [k, v] : kv) {
        size_t dot = k.rfind('.');
        std::string sec = dot == std::string::npos ? "" : k.substr(0, dot);
        std::string key = dot == std::string::npos ? k : k.substr(dot + 1);
        if (sec != section || first) {
            if (!sec.empty()) os << (first ? "" : "\n") << "[" << sec << "]\n";
            section = sec;
        }
        first = false;
        os << key << " = " << v << "\n";
    }
    return os.str();
}

inline const std::string& kv_require(const KvMap& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("missing config key: " + key);
    return it->second;
}

inline std::string kv_get(const KvMap& kv, const std::string& key, const std::string& dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : it->second;
}

} // namespace parlab
