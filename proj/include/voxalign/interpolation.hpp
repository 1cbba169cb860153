#ifndef VOXALIGN_INTERPOLATION_HPP
#define VOXALIGN_INTERPOLATION_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "voxalign/volume.hpp"

namespace voxalign {

enum class Interp { linear, cubic_bspline };

/// Centered uniform cubic B-spline basis, support (-2, 2).
inline double cubic_bspline(double t) {
    const double a = std::abs(t);
    if (a < 1.0) return (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0;
    if (a < 2.0) {
        const double b = 2.0 - a;
        return b * b * b / 6.0;
    }
    return 0.0;
}

inline double cubic_bspline_derivative(double t) {
    const double a = std::abs(t);
    const double s = (t < 0.0) ? -1.0 : 1.0;
    if (a < 1.0) return s * (-12.0 * a + 9.0 * a * a) / 6.0;
    if (a < 2.0) {
        const double b = 2.0 - a;
        return s * (-b * b) / 2.0;
    }
    return 0.0;
}

/// Tensor weights over the 4-node support {i-1, i, i+1, i+2} at fraction f.
inline void cubic_weights(double f, double w[4]) {
    const double f2 = f * f, f3 = f2 * f;
    w[0] = (1.0 - 3.0 * f + 3.0 * f2 - f3) / 6.0;  // beta(f+1)
    w[1] = (4.0 - 6.0 * f2 + 3.0 * f3) / 6.0;      // beta(f)
    w[2] = (1.0 + 3.0 * f + 3.0 * f2 - 3.0 * f3) / 6.0;
    w[3] = f3 / 6.0;
}

inline void cubic_weight_derivatives(double f, double d[4]) {
    const double f2 = f * f;
    d[0] = (-3.0 + 6.0 * f - 3.0 * f2) / 6.0;
    d[1] = (-12.0 * f + 9.0 * f2) / 6.0;
    d[2] = (3.0 + 6.0 * f - 9.0 * f2) / 6.0;
    d[3] = 3.0 * f2 / 6.0;
}

struct ValueGradient {
    double value = 0.0;
    Vec3 gradient;  // with respect to world coordinates (per mm)
};

namespace detail {

// Interpolation coefficients for one line, natural boundary condition
// (second derivative zero at both ends). This choice makes the cubic
// interpolant reproduce affine fields exactly all the way to the grid
// boundary; c[0] and c[n-1] equal the end samples, interior solves the
// [1 4 1]/6 tridiagonal system.
inline void prefilter_line_natural(const double* s, std::ptrdiff_t stride, int n, double* c,
                                   double* scratch) {
    if (n == 1) {
        c[0] = s[0];
        return;
    }
    if (n == 2) {
        c[0] = s[0];
        c[1] = s[stride];
        return;
    }
    c[0] = s[0];
    c[n - 1] = s[stride * (n - 1)];
    // Thomas algorithm on c[1..n-2]: c[i-1] + 4 c[i] + c[i+1] = 6 s[i].
    const int m = n - 2;
    double* cp = scratch;  // superdiagonal multipliers
    double diag = 4.0;
    double rhs0 = 6.0 * s[stride] - c[0];
    if (m == 1) rhs0 -= c[n - 1];
    cp[0] = 1.0 / diag;
    c[1] = rhs0 / diag;
    for (int i = 2; i <= m; ++i) {
        double rhs = 6.0 * s[stride * i];
        if (i == m) rhs -= c[n - 1];
        diag = 4.0 - cp[i - 2];
        cp[i - 1] = 1.0 / diag;
        c[i] = (rhs - c[i - 1]) / diag;
    }
    for (int i = m - 1; i >= 1; --i) c[i] -= cp[i - 1] * c[i + 1];
}

struct AxisSupport {
    int base;      // first storage index of the 4-tap support
    double frac;   // fraction within the cell, in [0, 1]
};

// Bounds test in continuous index space [0, n-1] per axis, with a small
// tolerance so voxel-center queries computed through the world map land
// exactly on the grid (near-integer coordinates are snapped).
inline bool clamp_to_domain(Vec3& u, const Index3& dims) {
    constexpr double tol = 1e-9;
    for (int a = 0; a < 3; ++a) {
        const double hi = double(dims[a] - 1);
        if (u[a] < -tol || u[a] > hi + tol) return false;
        const double r = std::round(u[a]);
        if (std::abs(u[a] - r) < tol) u[a] = r;
        u[a] = std::min(std::max(u[a], 0.0), hi);
    }
    return true;
}

// Map a continuous index to the clamped support cell. Valid input range is
// [0, n-1]; callers test bounds first.
inline AxisSupport support_for(double u, int n) {
    int i = int(std::floor(u));
    const int hi = n >= 2 ? n - 2 : 0;
    if (i < 0) i = 0;
    if (i > hi) i = hi;
    return {i, u - double(i)};
}

}  // namespace detail

/// Trilinear interpolation over a volume. Sample positions are world-space
/// points; queries outside the voxel-center bounding box return nullopt.
class LinearInterpolator {
public:
    explicit LinearInterpolator(const Volume& v) : vol_(&v) {}

    std::optional<double> value(const WorldPoint& p) const {
        Vec3 u = vol_->world_to_index(p);
        if (!in_domain(u)) return std::nullopt;
        int i[3];
        double f[3];
        for (int a = 0; a < 3; ++a) {
            const auto sup = detail::support_for(u[a], vol_->dims[a]);
            i[a] = sup.base;
            f[a] = vol_->dims[a] == 1 ? 0.0 : sup.frac;
        }
        double acc = 0.0;
        for (int cz = 0; cz < 2; ++cz)
            for (int cy = 0; cy < 2; ++cy)
                for (int cx = 0; cx < 2; ++cx) {
                    const double w = (cx ? f[0] : 1.0 - f[0]) * (cy ? f[1] : 1.0 - f[1]) *
                                     (cz ? f[2] : 1.0 - f[2]);
                    if (w == 0.0) continue;
                    acc += w * vol_->at(std::min(i[0] + cx, vol_->dims[0] - 1),
                                        std::min(i[1] + cy, vol_->dims[1] - 1),
                                        std::min(i[2] + cz, vol_->dims[2] - 1));
                }
        return acc;
    }

    std::optional<ValueGradient> value_and_gradient(const WorldPoint& p) const {
        Vec3 u = vol_->world_to_index(p);
        if (!in_domain(u)) return std::nullopt;
        int i[3];
        double f[3];
        for (int a = 0; a < 3; ++a) {
            const auto sup = detail::support_for(u[a], vol_->dims[a]);
            i[a] = sup.base;
            f[a] = vol_->dims[a] == 1 ? 0.0 : sup.frac;
        }
        auto sample = [&](int cx, int cy, int cz) {
            return vol_->at(std::min(i[0] + cx, vol_->dims[0] - 1),
                            std::min(i[1] + cy, vol_->dims[1] - 1),
                            std::min(i[2] + cz, vol_->dims[2] - 1));
        };
        double value = 0.0;
        Vec3 gi;  // gradient in index space
        for (int cz = 0; cz < 2; ++cz)
            for (int cy = 0; cy < 2; ++cy)
                for (int cx = 0; cx < 2; ++cx) {
                    const double wx = cx ? f[0] : 1.0 - f[0];
                    const double wy = cy ? f[1] : 1.0 - f[1];
                    const double wz = cz ? f[2] : 1.0 - f[2];
                    const double dx = cx ? 1.0 : -1.0;
                    const double v = sample(cx, cy, cz);
                    value += wx * wy * wz * v;
                    if (vol_->dims[0] > 1) gi[0] += dx * wy * wz * v;
                    if (vol_->dims[1] > 1) gi[1] += wx * (cy ? 1.0 : -1.0) * wz * v;
                    if (vol_->dims[2] > 1) gi[2] += wx * wy * (cz ? 1.0 : -1.0) * v;
                }
        return ValueGradient{value, index_gradient_to_world(*vol_, gi)};
    }

    static Vec3 index_gradient_to_world(const Volume& v, const Vec3& gi) {
        return v.direction * gi.cwise_div(v.spacing);
    }

private:
    bool in_domain(Vec3& u) const { return detail::clamp_to_domain(u, vol_->dims); }

    const Volume* vol_;
};

/// Cubic B-spline interpolation with coefficients prefiltered once at
/// construction (natural boundary condition). Reproduces the grid samples
/// exactly at voxel centers and any tri-affine field exactly; queries
/// outside the voxel-center bounding box return nullopt.
class CubicBSplineInterpolator {
public:
    explicit CubicBSplineInterpolator(const Volume& v) : vol_(&v) { prefilter(); }

    std::optional<double> value(const WorldPoint& p) const {
        Vec3 u = vol_->world_to_index(p);
        if (!in_domain(u)) return std::nullopt;
        int base[3];
        double w[3][4];
        for (int a = 0; a < 3; ++a) {
            const auto sup = detail::support_for(u[a], vol_->dims[a]);
            base[a] = sup.base;  // storage offset handled below
            cubic_weights(vol_->dims[a] == 1 ? 0.0 : sup.frac, w[a]);
        }
        double acc = 0.0;
        for (int cz = 0; cz < 4; ++cz) {
            const double wz = w[2][cz];
            for (int cy = 0; cy < 4; ++cy) {
                const double wyz = w[1][cy] * wz;
                const double* row = coef_row(base[0], base[1] + cy, base[2] + cz);
                acc += wyz * (w[0][0] * row[0] + w[0][1] * row[1] + w[0][2] * row[2] + w[0][3] * row[3]);
            }
        }
        return acc;
    }

    std::optional<ValueGradient> value_and_gradient(const WorldPoint& p) const {
        Vec3 u = vol_->world_to_index(p);
        if (!in_domain(u)) return std::nullopt;
        int base[3];
        double w[3][4], d[3][4];
        for (int a = 0; a < 3; ++a) {
            const auto sup = detail::support_for(u[a], vol_->dims[a]);
            base[a] = sup.base;
            const double f = vol_->dims[a] == 1 ? 0.0 : sup.frac;
            cubic_weights(f, w[a]);
            if (vol_->dims[a] == 1) {
                d[a][0] = d[a][1] = d[a][2] = d[a][3] = 0.0;
            } else {
                cubic_weight_derivatives(f, d[a]);
            }
        }
        double value = 0.0;
        Vec3 gi;
        for (int cz = 0; cz < 4; ++cz) {
            for (int cy = 0; cy < 4; ++cy) {
                const double* row = coef_row(base[0], base[1] + cy, base[2] + cz);
                double sv = 0.0, sd = 0.0;
                for (int cx = 0; cx < 4; ++cx) {
                    sv += w[0][cx] * row[cx];
                    sd += d[0][cx] * row[cx];
                }
                const double wy = w[1][cy], dy = d[1][cy];
                const double wz = w[2][cz], dz = d[2][cz];
                value += wy * wz * sv;
                gi[0] += wy * wz * sd;
                gi[1] += dy * wz * sv;
                gi[2] += wy * dz * sv;
            }
        }
        return ValueGradient{value, LinearInterpolator::index_gradient_to_world(*vol_, gi)};
    }

    const Volume& volume() const { return *vol_; }

private:
    bool in_domain(Vec3& u) const { return detail::clamp_to_domain(u, vol_->dims); }

    // Coefficient storage covers lattice indices [-1, n] per axis (constant
    // fill for single-slice axes so the 4-tap support is always valid).
    static int ext_len(int n) { return n == 1 ? 4 : n + 2; }

    const double* coef_row(int bx, int by, int bz) const {
        // Support taps run over lattice base-1 .. base+2, i.e. storage
        // base .. base+3 after the +1 lattice-to-storage shift.
        const std::size_t off =
            std::size_t(bx) +
            std::size_t(ext_[0]) * (std::size_t(by) + std::size_t(ext_[1]) * std::size_t(bz));
        return coef_.data() + off;
    }

    void prefilter() {
        const int nx = vol_->dims[0], ny = vol_->dims[1], nz = vol_->dims[2];
        ext_[0] = ext_len(nx);
        ext_[1] = ext_len(ny);
        ext_[2] = ext_len(nz);

        const int n_max = std::max(nx, std::max(ny, nz));
        std::vector<double> line(static_cast<std::size_t>(n_max));
        std::vector<double> scratch(static_cast<std::size_t>(n_max));

        // Pass along x: volume lines -> x-extended buffer.
        std::vector<double> bx(std::size_t(ext_[0]) * ny * nz);
        for (int z = 0; z < nz; ++z)
            for (int y = 0; y < ny; ++y) {
                const double* src = vol_->data.data() + vol_->linear_index(0, y, z);
                double* dst = bx.data() + std::size_t(ext_[0]) * (y + std::size_t(ny) * z);
                filter_extend(src, 1, nx, line.data(), scratch.data(), dst);
            }

        // Pass along y.
        std::vector<double> by(std::size_t(ext_[0]) * ext_[1] * nz);
        for (int z = 0; z < nz; ++z)
            for (int x = 0; x < ext_[0]; ++x) {
                const double* src = bx.data() + x + std::size_t(ext_[0]) * (std::size_t(ny) * z);
                double* dst = by.data() + x + std::size_t(ext_[0]) * (std::size_t(ext_[1]) * z);
                filter_extend_strided(src, ext_[0], ny, line.data(), scratch.data(), dst, ext_[0]);
            }

        // Pass along z.
        coef_.assign(std::size_t(ext_[0]) * ext_[1] * ext_[2], 0.0);
        const std::size_t plane = std::size_t(ext_[0]) * ext_[1];
        for (int y = 0; y < ext_[1]; ++y)
            for (int x = 0; x < ext_[0]; ++x) {
                const double* src = by.data() + x + std::size_t(ext_[0]) * y;
                double* dst = coef_.data() + x + std::size_t(ext_[0]) * y;
                filter_extend_strided(src, std::ptrdiff_t(plane), nz, line.data(), scratch.data(), dst,
                                      std::ptrdiff_t(plane));
            }
    }

    // Solve the interpolation system for one line and write the extended
    // coefficients (length ext_len(n)) contiguously.
    static void filter_extend(const double* src, std::ptrdiff_t stride, int n, double* tmp,
                              double* scratch, double* dst) {
        detail::prefilter_line_natural(src, stride, n, tmp, scratch);
        write_extended(tmp, n, dst, 1);
    }

    static void filter_extend_strided(const double* src, std::ptrdiff_t stride, int n, double* tmp,
                                      double* scratch, double* dst, std::ptrdiff_t dst_stride) {
        detail::prefilter_line_natural(src, stride, n, tmp, scratch);
        write_extended(tmp, n, dst, dst_stride);
    }

    static void write_extended(const double* c, int n, double* dst, std::ptrdiff_t stride) {
        if (n == 1) {
            for (int k = 0; k < 4; ++k) dst[stride * k] = c[0];
            return;
        }
        dst[0] = 2.0 * c[0] - c[1];
        for (int k = 0; k < n; ++k) dst[stride * (k + 1)] = c[k];
        dst[stride * (n + 1)] = 2.0 * c[n - 1] - c[n - 2];
    }

    const Volume* vol_;
    int ext_[3]{0, 0, 0};
    std::vector<double> coef_;
};

/// One-shot convenience sampler. Builds the interpolator per call; use the
/// interpolator classes directly when sampling many points.
inline std::optional<double> interpolate(const Volume& v, const WorldPoint& p, Interp scheme) {
    if (scheme == Interp::linear) return LinearInterpolator(v).value(p);
    return CubicBSplineInterpolator(v).value(p);
}

}  // namespace voxalign

#endif  // VOXALIGN_INTERPOLATION_HPP
