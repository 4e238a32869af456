// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "partfit/error.hpp"

// Little-endian stream helpers for the binary container formats.
namespace partfit::io {

static_assert(std::endian::native == std::endian::little,
              "container formats are little-endian; big-endian hosts are unsupported");

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    void bytes(const void* data, std::size_t n) {
        os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { bytes(&v, 2); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void f32(float v) { bytes(&v, 4); }
    void str(const std::string& s) { bytes(s.data(), s.size()); }

private:
    std::ostream& os_;
};

class Reader {
public:
    Reader(std::istream& is, std::string context) : is_(is), context_(std::move(context)) {}

    void set_context(std::string c) { context_ = std::move(c); }

    void bytes(void* data, std::size_t n) {
        is_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) {
            throw FormatError(cat("truncated payload (", context_, ")"));
        }
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint16_t u16() {
        std::uint16_t v;
        bytes(&v, 2);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    float f32() {
        float v;
        bytes(&v, 4);
        return v;
    }
    std::string str(std::size_t n) {
        std::string s(n, '\0');
        if (n > 0) bytes(s.data(), n);
        return s;
    }
    bool at_eof() {
        is_.peek();
        return is_.eof();
    }

private:
    std::istream& is_;
    std::string context_;
};

}  // namespace partfit::io
