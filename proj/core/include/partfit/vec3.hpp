// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

namespace partfit {

template <typename T>
struct Vec3 {
    T x = 0, y = 0, z = 0;

    T& operator[](int i) { return (&x)[i]; }
    const T& operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    bool operator==(const Vec3& o) const = default;

    T squared_norm() const { return x * x + y * y + z * z; }
    T norm() const { return std::sqrt(squared_norm()); }

    template <typename U>
    Vec3<U> cast() const {
        return {static_cast<U>(x), static_cast<U>(y), static_cast<U>(z)};
    }
};

using Vec3f = Vec3<float>;
using Vec3d = Vec3<double>;

template <typename T>
inline T squared_distance(const Vec3<T>& a, const Vec3<T>& b) {
    return (a - b).squared_norm();
}

}  // namespace partfit
