// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace partfit {

inline constexpr const char* kToolVersion = "0.1.0";

// Audit record of one CLI run; written atomically as manifest.json in the
// output directory when the command finishes.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;  // fully resolved values
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string tool_version = kToolVersion;
    std::string started_utc;
    std::string finished_utc;
};

std::string utc_timestamp(std::chrono::system_clock::time_point t);

/// Serializes and writes <dir>/manifest.json atomically.
void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);

}  // namespace partfit
