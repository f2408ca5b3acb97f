#pragma once

#include <array>
#include <cmath>

namespace coactive {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
    friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
    friend constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
    friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
    friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
constexpr double norm2(const Vec3& a) { return dot(a, a); }
inline Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    return n > 0.0 ? a * (1.0 / n) : Vec3{};
}

/// Row-major 3x3 matrix, used for rotations.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    constexpr double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }
    constexpr double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }

    constexpr Vec3 col(int c) const { return {(*this)(0, c), (*this)(1, c), (*this)(2, c)}; }

    static constexpr Mat3 identity() { return Mat3{}; }
    static Mat3 rot_x(double a);
    static Mat3 rot_y(double a);
    static Mat3 rot_z(double a);

    friend constexpr Vec3 operator*(const Mat3& a, const Vec3& v) {
        return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
                a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
                a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
    }
    friend constexpr Mat3 operator*(const Mat3& a, const Mat3& b) {
        Mat3 r;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
            }
        }
        return r;
    }
    constexpr Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        }
        return r;
    }
};

/// Unit quaternion, stored [w, x, y, z].
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    Mat3 to_matrix() const;
    static Quaternion from_matrix(const Mat3& r);

    friend Quaternion operator*(const Quaternion& a, const Quaternion& b);
    friend constexpr bool operator==(const Quaternion&, const Quaternion&) = default;
};

/// Rigid transform: position plus orientation.
struct Pose {
    Vec3 position;
    Quaternion orientation;

    Mat3 rotation() const { return orientation.to_matrix(); }
    Vec3 apply(const Vec3& p) const { return position + rotation() * p; }

    /// this ∘ other, i.e. `other` expressed in this frame.
    Pose compose(const Pose& other) const;

    friend constexpr bool operator==(const Pose&, const Pose&) = default;
};

constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle to (−π, π].
double wrap_angle(double a);

}  // namespace coactive
