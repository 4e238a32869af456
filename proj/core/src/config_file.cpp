// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/config_file.hpp"

#include <fstream>
#include <sstream>

#include "partfit/error.hpp"

namespace partfit {

namespace {
std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}
}  // namespace

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError(cat("cannot open config file: ", path.string()));
    std::stringstream buffer;
    buffer << is.rdbuf();
    return from_string(buffer.str(), path.string());
}

KeyValueFile KeyValueFile::from_string(const std::string& text, const std::string& origin) {
    KeyValueFile kv;
    kv.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(cat(origin, ":", line_no, ": expected key=value, got '", t, "'"));
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError(cat(origin, ":", line_no, ": empty key"));
        kv.values_[key] = value;
    }
    return kv;
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::int64_t KeyValueFile::get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(cat(origin_, ": key '", key, "' is not an integer: '", it->second, "'"));
    }
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(cat(origin_, ": key '", key, "' is not a number: '", it->second, "'"));
    }
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(cat(origin_, ": key '", key, "' is not a bool: '", it->second, "'"));
}

void KeyValueFile::require_known(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_) {
        if (known.count(key) == 0) {
            throw ConfigError(cat(origin_, ": unknown key '", key, "'"));
        }
    }
}

}  // namespace partfit
