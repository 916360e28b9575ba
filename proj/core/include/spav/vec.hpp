#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace spav {

template <typename T>
struct Vec3 {
    T x = 0, y = 0, z = 0;

    constexpr Vec3() = default;
    constexpr Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

    template <typename U>
    constexpr explicit Vec3(const Vec3<U>& v)
        : x(static_cast<T>(v.x)), y(static_cast<T>(v.y)), z(static_cast<T>(v.z)) {}

    constexpr T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr T operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(T s) { x *= s; y *= s; z *= s; return *this; }
    constexpr bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

    constexpr T dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    constexpr Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    T norm() const { return std::sqrt(dot(*this)); }
    constexpr T squared_norm() const { return dot(*this); }
    Vec3 normalized(T eps = T(0)) const {
        T n = norm();
        return n > eps ? *this / n : Vec3{0, 0, 0};
    }
};

template <typename T>
constexpr Vec3<T> operator*(T s, const Vec3<T>& v) { return v * s; }

using Vec3f = Vec3<float>;
using Vec3d = Vec3<double>;

// Column-major 3x3, used for rotations.
struct Mat3d {
    std::array<double, 9> m{};  // m[col*3 + row]

    static Mat3d identity() {
        Mat3d r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }
    double& operator()(int row, int col) { return m[col * 3 + row]; }
    double operator()(int row, int col) const { return m[col * 3 + row]; }

    Vec3d operator*(const Vec3d& v) const {
        return {m[0] * v.x + m[3] * v.y + m[6] * v.z,
                m[1] * v.x + m[4] * v.y + m[7] * v.z,
                m[2] * v.x + m[5] * v.y + m[8] * v.z};
    }
    Mat3d operator*(const Mat3d& o) const {
        Mat3d r;
        for (int c = 0; c < 3; ++c)
            for (int rw = 0; rw < 3; ++rw)
                r(rw, c) = (*this)(rw, 0) * o(0, c) + (*this)(rw, 1) * o(1, c) + (*this)(rw, 2) * o(2, c);
        return r;
    }
    Mat3d transposed() const {
        Mat3d r;
        for (int c = 0; c < 3; ++c)
            for (int rw = 0; rw < 3; ++rw) r(rw, c) = (*this)(c, rw);
        return r;
    }
    double det() const {
        return m[0] * (m[4] * m[8] - m[7] * m[5]) - m[3] * (m[1] * m[8] - m[7] * m[2]) +
               m[6] * (m[1] * m[5] - m[4] * m[2]);
    }
};

// Rigid transform: x -> R x + t. Stands in for a 4x4 with bottom row (0 0 0 1).
struct Transform {
    Mat3d rotation = Mat3d::identity();
    Vec3d translation{0, 0, 0};

    static Transform identity() { return {}; }
    static Transform from_translation(const Vec3d& t) { return {Mat3d::identity(), t}; }

    Vec3d apply_point(const Vec3d& p) const { return rotation * p + translation; }
    Vec3d apply_dir(const Vec3d& d) const { return rotation * d; }

    Transform operator*(const Transform& o) const {
        return {rotation * o.rotation, rotation * o.translation + translation};
    }
    // Rigid inverse: (R, t)^-1 = (R^T, -R^T t).
    Transform inverse() const {
        Mat3d rt = rotation.transposed();
        return {rt, -(rt * translation)};
    }
};

struct Aabb {
    Vec3d lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
             std::numeric_limits<double>::max()};
    Vec3d hi{std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest(),
             std::numeric_limits<double>::lowest()};

    void expand(const Vec3d& p) {
        lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y); lo.z = std::min(lo.z, p.z);
        hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y); hi.z = std::max(hi.z, p.z);
    }
    void expand(const Aabb& b) { expand(b.lo); expand(b.hi); }
    Vec3d extent() const { return hi - lo; }
    Vec3d center() const { return (lo + hi) * 0.5; }
    bool valid() const { return lo.x <= hi.x && lo.y <= hi.y && lo.z <= hi.z; }
    double squared_distance(const Vec3d& p) const {
        double d = 0;
        for (int a = 0; a < 3; ++a) {
            double v = p[a];
            if (v < lo[a]) d += (lo[a] - v) * (lo[a] - v);
            else if (v > hi[a]) d += (v - hi[a]) * (v - hi[a]);
        }
        return d;
    }
};

}  // namespace spav
