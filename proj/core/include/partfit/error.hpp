// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace partfit {

/// Base error for all partfit failures surfaced to callers.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or truncated on-disk containers (dataset, checkpoint).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid user-supplied configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A shape cannot be sampled or generated (e.g. no boundary voxels).
class DegenerateShapeError : public Error {
public:
    using Error::Error;
};

/// Training loss became non-finite; carries the iteration diagnostic.
class NonFiniteLossError : public Error {
public:
    using Error::Error;
};

namespace detail {
inline void cat_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void cat_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    cat_into(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string cat(const Parts&... parts) {
    std::ostringstream os;
    detail::cat_into(os, parts...);
    return os.str();
}

}  // namespace partfit
