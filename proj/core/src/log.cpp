// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace partfit {

namespace {

LogLevel parse_level(const char* s) {
    if (s == nullptr) return LogLevel::info;
    if (std::strcmp(s, "debug") == 0) return LogLevel::debug;
    if (std::strcmp(s, "info") == 0) return LogLevel::info;
    if (std::strcmp(s, "warn") == 0) return LogLevel::warn;
    if (std::strcmp(s, "error") == 0) return LogLevel::error;
    if (std::strcmp(s, "off") == 0) return LogLevel::off;
    return LogLevel::info;
}

const char* level_tag(LogLevel level) {
    switch (level) {
        case LogLevel::debug: return "debug";
        case LogLevel::info: return "info";
        case LogLevel::warn: return "warn";
        case LogLevel::error: return "error";
        default: return "?";
    }
}

std::mutex g_log_mutex;

}  // namespace

LogLevel log_level() {
    static const LogLevel level = parse_level(std::getenv("PF_LOG"));
    return level;
}

void log_message(LogLevel level, const std::string& message) {
    if (static_cast<int>(level) < static_cast<int>(log_level())) return;
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::fprintf(stderr, "[partfit %s] %s\n", level_tag(level), message.c_str());
}

}  // namespace partfit
