// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace partfit {

// Plain-text key=value configuration. Lines starting with '#' and blank
// lines are ignored; whitespace around keys and values is trimmed.
class KeyValueFile {
public:
    KeyValueFile() = default;
    static KeyValueFile load(const std::filesystem::path& path);
    static KeyValueFile from_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Throws ConfigError when the file contains a key outside `known`.
    void require_known(const std::set<std::string>& known) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::string origin_;
};

}  // namespace partfit
