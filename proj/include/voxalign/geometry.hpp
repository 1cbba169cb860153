#ifndef VOXALIGN_GEOMETRY_HPP
#define VOXALIGN_GEOMETRY_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace voxalign {

struct Vec3 {
    double v[3]{0.0, 0.0, 0.0};

    constexpr Vec3() = default;
    constexpr Vec3(double x, double y, double z) : v{x, y, z} {}

    double& operator[](int i) { return v[i]; }
    constexpr double operator[](int i) const { return v[i]; }

    Vec3 operator+(const Vec3& o) const { return {v[0] + o[0], v[1] + o[1], v[2] + o[2]}; }
    Vec3 operator-(const Vec3& o) const { return {v[0] - o[0], v[1] - o[1], v[2] - o[2]}; }
    Vec3 operator-() const { return {-v[0], -v[1], -v[2]}; }
    Vec3 operator*(double s) const { return {v[0] * s, v[1] * s, v[2] * s}; }
    Vec3 operator/(double s) const { return {v[0] / s, v[1] / s, v[2] / s}; }
    Vec3& operator+=(const Vec3& o) { v[0] += o[0]; v[1] += o[1]; v[2] += o[2]; return *this; }
    Vec3& operator-=(const Vec3& o) { v[0] -= o[0]; v[1] -= o[1]; v[2] -= o[2]; return *this; }
    Vec3& operator*=(double s) { v[0] *= s; v[1] *= s; v[2] *= s; return *this; }

    Vec3 cwise_mul(const Vec3& o) const { return {v[0] * o[0], v[1] * o[1], v[2] * o[2]}; }
    Vec3 cwise_div(const Vec3& o) const { return {v[0] / o[0], v[1] / o[1], v[2] / o[2]}; }

    double dot(const Vec3& o) const { return v[0] * o[0] + v[1] * o[1] + v[2] * o[2]; }
    Vec3 cross(const Vec3& o) const {
        return {v[1] * o[2] - v[2] * o[1], v[2] * o[0] - v[0] * o[2], v[0] * o[1] - v[1] * o[0]};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }
    bool all_finite() const { return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]); }
};

inline Vec3 operator*(double s, const Vec3& a) { return a * s; }

/// World-space position in millimetres.
using WorldPoint = Vec3;

struct Index3 {
    int v[3]{0, 0, 0};

    constexpr Index3() = default;
    constexpr Index3(int x, int y, int z) : v{x, y, z} {}

    int& operator[](int i) { return v[i]; }
    constexpr int operator[](int i) const { return v[i]; }
    bool operator==(const Index3& o) const { return v[0] == o[0] && v[1] == o[1] && v[2] == o[2]; }

    Vec3 to_vec3() const { return {double(v[0]), double(v[1]), double(v[2])}; }
    std::int64_t product() const { return std::int64_t(v[0]) * v[1] * v[2]; }
};

/// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return Mat3{}; }
    static Mat3 zero() { Mat3 r; r.m = {0, 0, 0, 0, 0, 0, 0, 0, 0}; return r; }
    static Mat3 diagonal(const Vec3& d) {
        Mat3 r = zero();
        r(0, 0) = d[0]; r(1, 1) = d[1]; r(2, 2) = d[2];
        return r;
    }
    static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
        Mat3 r;
        for (int j = 0; j < 3; ++j) { r(0, j) = r0[j]; r(1, j) = r1[j]; r(2, j) = r2[j]; }
        return r;
    }
    /// Rotation by angle_rad about a coordinate axis (0=x, 1=y, 2=z).
    static Mat3 axis_rotation(int axis, double angle_rad) {
        const double c = std::cos(angle_rad), s = std::sin(angle_rad);
        Mat3 r;
        switch (axis) {
            case 0: r.m = {1, 0, 0, 0, c, -s, 0, s, c}; break;
            case 1: r.m = {c, 0, s, 0, 1, 0, -s, 0, c}; break;
            default: r.m = {c, -s, 0, s, c, 0, 0, 0, 1}; break;
        }
        return r;
    }

    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    Vec3 row(int r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }
    Vec3 col(int c) const { return {m[c], m[3 + c], m[6 + c]}; }

    Vec3 operator*(const Vec3& x) const {
        return {m[0] * x[0] + m[1] * x[1] + m[2] * x[2],
                m[3] * x[0] + m[4] * x[1] + m[5] * x[2],
                m[6] * x[0] + m[7] * x[1] + m[8] * x[2]};
    }
    Mat3 operator*(const Mat3& b) const {
        Mat3 r = zero();
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) {
                const double a = (*this)(i, k);
                for (int j = 0; j < 3; ++j) r(i, j) += a * b(k, j);
            }
        return r;
    }
    Mat3 operator+(const Mat3& b) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] + b.m[i];
        return r;
    }
    Mat3 operator-(const Mat3& b) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] - b.m[i];
        return r;
    }
    Mat3 operator*(double s) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] * s;
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
    /// Multiply by the transpose: returns (this^T) * x.
    Vec3 transpose_times(const Vec3& x) const {
        return {m[0] * x[0] + m[3] * x[1] + m[6] * x[2],
                m[1] * x[0] + m[4] * x[1] + m[7] * x[2],
                m[2] * x[0] + m[5] * x[1] + m[8] * x[2]};
    }

    double determinant() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
    Mat3 inverse() const {
        const double det = determinant();
        Mat3 r;
        r.m = {m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8], m[1] * m[5] - m[2] * m[4],
               m[5] * m[6] - m[3] * m[8], m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
               m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7], m[0] * m[4] - m[1] * m[3]};
        for (double& x : r.m) x /= det;
        return r;
    }

    double max_abs_diff(const Mat3& o) const {
        double d = 0.0;
        for (int i = 0; i < 9; ++i) d = std::max(d, std::abs(m[i] - o.m[i]));
        return d;
    }
    double frobenius_distance(const Mat3& o) const {
        double s = 0.0;
        for (int i = 0; i < 9; ++i) {
            const double d = m[i] - o.m[i];
            s += d * d;
        }
        return std::sqrt(s);
    }
    bool is_orthonormal(double tol = 1e-9) const {
        const Mat3 g = transposed() * (*this);
        return g.max_abs_diff(identity()) <= tol;
    }
};

constexpr double deg_to_rad(double deg) { return deg * 3.14159265358979323846 / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / 3.14159265358979323846; }

}  // namespace voxalign

#endif  // VOXALIGN_GEOMETRY_HPP
