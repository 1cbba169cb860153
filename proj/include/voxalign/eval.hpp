#ifndef VOXALIGN_EVAL_HPP
#define VOXALIGN_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "voxalign/errors.hpp"
#include "voxalign/landmarks.hpp"
#include "voxalign/transforms.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

/// Landmark target registration error. The transform direction matches
/// resampling (fixed -> moving), so errors are measured in moving space:
/// error_i = || t(fixed_i) - moving_i || in mm.
struct TreReport {
    std::vector<double> per_landmark;
    double mean = 0.0;
    double median = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

inline TreReport compute_tre(const LandmarkSet& landmarks, const Transform& t) {
    if (landmarks.pairs.empty()) throw error("tre: empty landmark set");
    TreReport r;
    r.per_landmark.reserve(landmarks.pairs.size());
    for (const auto& p : landmarks.pairs)
        r.per_landmark.push_back((t.apply(p.fixed) - p.moving).norm());
    r.count = r.per_landmark.size();
    double s = 0.0;
    for (const double e : r.per_landmark) {
        s += e;
        r.max = std::max(r.max, e);
    }
    r.mean = s / double(r.count);
    std::vector<double> sorted = r.per_landmark;
    std::sort(sorted.begin(), sorted.end());
    r.median = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                 : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    return r;
}

/// Alternating-block fusion of two volumes on identical geometry, each
/// channel windowed to [0, 255] from its own intensity range first.
/// cells_per_axis = 1 reproduces the (windowed) fixed volume.
inline Volume checkerboard(const Volume& fixed, const Volume& resampled_moving, int cells_per_axis) {
    if (!fixed.same_geometry(resampled_moving))
        throw geometry_mismatch("checkerboard: inputs must share geometry");
    if (cells_per_axis < 1) throw error("checkerboard: cells_per_axis must be >= 1");

    auto window = [](const Volume& v) {
        auto [lo, hi] = v.intensity_range();
        if (!(hi > lo)) hi = lo + 1.0;
        return std::pair<double, double>{lo, 255.0 / (hi - lo)};
    };
    const auto [flo, fscale] = window(fixed);
    const auto [mlo, mscale] = window(resampled_moving);

    Volume out(fixed.dims, fixed.spacing, fixed.origin, fixed.direction);
    std::size_t q = 0;
    for (int z = 0; z < fixed.dims[2]; ++z)
        for (int y = 0; y < fixed.dims[1]; ++y)
            for (int x = 0; x < fixed.dims[0]; ++x, ++q) {
                const int cx = x * cells_per_axis / fixed.dims[0];
                const int cy = y * cells_per_axis / fixed.dims[1];
                const int cz = z * cells_per_axis / fixed.dims[2];
                const bool use_fixed = ((cx + cy + cz) % 2) == 0;
                out.data[q] = use_fixed ? (fixed.data[q] - flo) * fscale
                                        : (resampled_moving.data[q] - mlo) * mscale;
            }
    return out;
}

}  // namespace voxalign

#endif  // VOXALIGN_EVAL_HPP
