// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace partfit {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

// Level is read once from the PF_LOG environment variable
// (debug|info|warn|error|off, default info). Messages go to stderr.
LogLevel log_level();
void log_message(LogLevel level, const std::string& message);

inline void log_debug(const std::string& m) { log_message(LogLevel::debug, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::info, m); }
inline void log_warn(const std::string& m) { log_message(LogLevel::warn, m); }
inline void log_error(const std::string& m) { log_message(LogLevel::error, m); }

}  // namespace partfit
