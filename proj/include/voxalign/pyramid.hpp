#ifndef VOXALIGN_PYRAMID_HPP
#define VOXALIGN_PYRAMID_HPP

#include <cmath>
#include <string>
#include <vector>

#include "voxalign/errors.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

/// Per-level integer shrink factors, coarsest level first; the last level
/// must be all ones (the original volume).
struct PyramidSchedule {
    std::vector<Index3> shrink_factors;

    void validate() const {
        if (shrink_factors.empty()) throw error("pyramid: empty schedule");
        for (const auto& s : shrink_factors)
            for (int a = 0; a < 3; ++a)
                if (s[a] < 1) throw error("pyramid: shrink factors must be >= 1");
        const Index3 last = shrink_factors.back();
        if (!(last == Index3{1, 1, 1})) throw error("pyramid: finest level must have shrink 1");
    }
};

/// Three levels with isotropic shrink 4, 2, 1.
inline PyramidSchedule default_schedule() {
    return PyramidSchedule{{Index3{4, 4, 4}, Index3{2, 2, 2}, Index3{1, 1, 1}}};
}

/// Reduces any per-axis shrink that would leave fewer than min_dim voxels
/// on that axis (thin-slab volumes). Appends one note per adjusted entry.
inline PyramidSchedule clamp_schedule(const PyramidSchedule& sched, const Index3& dims,
                                      int min_dim = 4, std::vector<std::string>* notes = nullptr) {
    PyramidSchedule out = sched;
    for (std::size_t l = 0; l < out.shrink_factors.size(); ++l) {
        for (int a = 0; a < 3; ++a) {
            const int s = out.shrink_factors[l][a];
            if (s == 1) continue;
            // ceil(dim / s') >= min_dim  <=>  s' <= floor((dim - 1) / (min_dim - 1))
            int cap = (dims[a] - 1) / std::max(1, min_dim - 1);
            if (cap < 1) cap = 1;
            if (s > cap) {
                out.shrink_factors[l][a] = cap;
                if (notes)
                    notes->push_back("pyramid: level " + std::to_string(l) + " axis " +
                                     std::to_string(a) + " shrink clamped " + std::to_string(s) +
                                     " -> " + std::to_string(cap) + " (dim " + std::to_string(dims[a]) +
                                     ")");
            }
        }
    }
    return out;
}

namespace detail {

/// Discrete truncated Gaussian, radius ceil(3 sigma), renormalized to sum 1.
inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> k(std::size_t(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
        k[std::size_t(i + radius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

// One separable smoothing pass. Near the edges the kernel is renormalized
// over the in-bounds taps instead of inventing data beyond the grid.
inline void smooth_axis(const Volume& in, Volume& out, int axis, const std::vector<double>& kernel) {
    const int radius = int(kernel.size() / 2);
    const int n = in.dims[axis];
    const std::ptrdiff_t stride =
        axis == 0 ? 1
                  : (axis == 1 ? std::ptrdiff_t(in.dims[0])
                               : std::ptrdiff_t(in.dims[0]) * in.dims[1]);

    const int n0 = axis == 0 ? in.dims[1] : in.dims[0];
    const int n1 = axis == 2 ? in.dims[1] : in.dims[2];
    const std::ptrdiff_t stride0 =
        axis == 0 ? std::ptrdiff_t(in.dims[0]) : 1;
    const std::ptrdiff_t stride1 =
        axis == 2 ? std::ptrdiff_t(in.dims[0]) : std::ptrdiff_t(in.dims[0]) * in.dims[1];

    for (int j = 0; j < n1; ++j)
        for (int i = 0; i < n0; ++i) {
            const std::size_t base = std::size_t(stride0 * i + stride1 * j);
            for (int p = 0; p < n; ++p) {
                const int klo = std::max(-radius, -p);
                const int khi = std::min(radius, n - 1 - p);
                double acc = 0.0, wsum = 0.0;
                for (int k = klo; k <= khi; ++k) {
                    const double w = kernel[std::size_t(k + radius)];
                    acc += w * in.data[base + std::size_t(stride * (p + k))];
                    wsum += w;
                }
                out.data[base + std::size_t(stride * p)] = acc / wsum;
            }
        }
}

}  // namespace detail

/// Separable Gaussian smoothing with per-axis sigma in voxel units.
/// sigma <= 0 skips the axis.
inline Volume gaussian_smooth_voxels(const Volume& v, const Vec3& sigma_voxels) {
    Volume cur = v;
    Volume tmp(v.dims, v.spacing, v.origin, v.direction);
    for (int axis = 0; axis < 3; ++axis) {
        if (!(sigma_voxels[axis] > 0.0) || v.dims[axis] == 1) continue;
        const auto kernel = detail::gaussian_kernel(sigma_voxels[axis]);
        detail::smooth_axis(cur, tmp, axis, kernel);
        std::swap(cur.data, tmp.data);
    }
    return cur;
}

/// Gaussian smoothing (sigma = s/2 voxels per axis, none for s = 1) followed
/// by subsampling every s-th voxel starting at index 0. The output keeps
/// voxel centers fixed in world space: spacing scales by s, origin is
/// unchanged, dims become ceil(dim / s).
inline Volume shrink_volume(const Volume& v, const Index3& shrink) {
    Index3 out_dims;
    for (int a = 0; a < 3; ++a) {
        if (shrink[a] < 1) throw error("pyramid: shrink must be >= 1");
        out_dims[a] = (v.dims[a] + shrink[a] - 1) / shrink[a];
        if (out_dims[a] < 1) throw degenerate_level("pyramid: level dimension would be 0");
    }
    if (shrink == Index3{1, 1, 1}) return v;

    const Vec3 sigma{shrink[0] > 1 ? shrink[0] / 2.0 : 0.0, shrink[1] > 1 ? shrink[1] / 2.0 : 0.0,
                     shrink[2] > 1 ? shrink[2] / 2.0 : 0.0};
    const Volume smoothed = gaussian_smooth_voxels(v, sigma);

    Volume out(out_dims, v.spacing.cwise_mul(shrink.to_vec3()), v.origin, v.direction);
    std::size_t q = 0;
    for (int z = 0; z < out_dims[2]; ++z)
        for (int y = 0; y < out_dims[1]; ++y)
            for (int x = 0; x < out_dims[0]; ++x, ++q)
                out.data[q] = smoothed.at(x * shrink[0], y * shrink[1], z * shrink[2]);
    return out;
}

/// Multi-resolution pyramid, coarsest level first.
inline std::vector<Volume> build_pyramid(const Volume& v, const PyramidSchedule& sched) {
    sched.validate();
    std::vector<Volume> levels;
    levels.reserve(sched.shrink_factors.size());
    for (const auto& s : sched.shrink_factors) levels.push_back(shrink_volume(v, s));
    return levels;
}

}  // namespace voxalign

#endif  // VOXALIGN_PYRAMID_HPP
