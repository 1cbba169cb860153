#ifndef VOXALIGN_VOLUME_HPP
#define VOXALIGN_VOLUME_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "voxalign/errors.hpp"
#include "voxalign/geometry.hpp"

namespace voxalign {

/// Dense 3-D scalar grid with world-space geometry.
///
/// Voxel values are stored in x-fastest order as doubles regardless of the
/// on-disk element type. The continuous index <-> world map is
///   world = origin + direction * (spacing .* index)
/// with voxel centers at integer indices. Volumes are immutable by
/// convention once handed to registration code; every operation here is
/// side-effect free.
struct Volume {
    Index3 dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    Mat3 direction = Mat3::identity();
    std::vector<double> data;

    Volume() = default;
    Volume(Index3 d, Vec3 sp, Vec3 org = {}, Mat3 dir = Mat3::identity())
        : dims(d), spacing(sp), origin(org), direction(dir), data(std::size_t(d.product()), 0.0) {
        validate_geometry();
    }

    std::size_t voxel_count() const { return std::size_t(dims.product()); }

    std::size_t linear_index(int x, int y, int z) const {
        return std::size_t(x) + std::size_t(dims[0]) * (std::size_t(y) + std::size_t(dims[1]) * std::size_t(z));
    }
    double at(int x, int y, int z) const { return data[linear_index(x, y, z)]; }
    double& at(int x, int y, int z) { return data[linear_index(x, y, z)]; }

    bool contains_index(const Index3& i) const {
        return i[0] >= 0 && i[0] < dims[0] && i[1] >= 0 && i[1] < dims[1] && i[2] >= 0 && i[2] < dims[2];
    }

    WorldPoint index_to_world(const Vec3& continuous_index) const {
        return origin + direction * spacing.cwise_mul(continuous_index);
    }
    WorldPoint index_to_world(const Index3& idx) const { return index_to_world(idx.to_vec3()); }

    /// Exact inverse of index_to_world (direction is orthonormal).
    Vec3 world_to_index(const WorldPoint& p) const {
        return direction.transpose_times(p - origin).cwise_div(spacing);
    }

    /// World-space axis-aligned bounding box of the voxel centers.
    std::pair<Vec3, Vec3> world_bounds() const {
        Vec3 lo{0, 0, 0}, hi{0, 0, 0};
        bool first = true;
        for (int cz = 0; cz < 2; ++cz)
            for (int cy = 0; cy < 2; ++cy)
                for (int cx = 0; cx < 2; ++cx) {
                    const Vec3 idx{double(cx * (dims[0] - 1)), double(cy * (dims[1] - 1)),
                                   double(cz * (dims[2] - 1))};
                    const Vec3 w = index_to_world(idx);
                    if (first) {
                        lo = hi = w;
                        first = false;
                    } else {
                        for (int a = 0; a < 3; ++a) {
                            lo[a] = std::min(lo[a], w[a]);
                            hi[a] = std::max(hi[a], w[a]);
                        }
                    }
                }
        return {lo, hi};
    }

    /// Length of the world-space diagonal spanned by the voxel centers.
    double world_diagonal() const {
        const auto [lo, hi] = world_bounds();
        return (hi - lo).norm();
    }

    std::pair<double, double> intensity_range() const {
        double lo = data.empty() ? 0.0 : data[0];
        double hi = lo;
        for (const double v : data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        return {lo, hi};
    }

    double mean_intensity() const {
        double s = 0.0;
        for (const double v : data) s += v;
        return data.empty() ? 0.0 : s / double(data.size());
    }

    void validate_geometry() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] <= 0) throw error("volume: dims must be positive");
            if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
                throw error("volume: spacing must be positive and finite");
        }
        if (!origin.all_finite()) throw error("volume: origin must be finite");
        if (!direction.is_orthonormal(1e-9)) throw error("volume: direction must be orthonormal");
    }

    /// Full invariant check including the data payload; O(n).
    void validate() const {
        validate_geometry();
        if (data.size() != voxel_count()) throw error("volume: data length does not match dims");
        for (const double v : data)
            if (!std::isfinite(v)) throw error("volume: non-finite sample");
    }

    bool same_geometry(const Volume& o, double tol = 1e-9) const {
        if (!(dims == o.dims)) return false;
        for (int a = 0; a < 3; ++a)
            if (std::abs(spacing[a] - o.spacing[a]) > tol || std::abs(origin[a] - o.origin[a]) > tol)
                return false;
        return direction.max_abs_diff(o.direction) <= tol;
    }
};

}  // namespace voxalign

#endif  // VOXALIGN_VOLUME_HPP
