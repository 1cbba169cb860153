#ifndef VOXALIGN_RESAMPLE_HPP
#define VOXALIGN_RESAMPLE_HPP

#include "voxalign/interpolation.hpp"
#include "voxalign/transforms.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

/// Pull-back resampling: the output has the reference geometry and each
/// voxel holds interpolate(moving, t(world(voxel))). t maps reference world
/// space into moving world space; out-of-bounds voxels get padding_value.
inline Volume resample(const Volume& moving, const Volume& reference_geometry, const Transform& t,
                       Interp scheme = Interp::linear, double padding_value = 0.0) {
    Volume out(reference_geometry.dims, reference_geometry.spacing, reference_geometry.origin,
               reference_geometry.direction);

    auto run = [&](const auto& interp) {
        std::size_t q = 0;
        for (int z = 0; z < out.dims[2]; ++z)
            for (int y = 0; y < out.dims[1]; ++y)
                for (int x = 0; x < out.dims[0]; ++x, ++q) {
                    const WorldPoint p = out.index_to_world(Index3{x, y, z});
                    const auto v = interp.value(t.apply(p));
                    out.data[q] = v ? *v : padding_value;
                }
    };

    if (scheme == Interp::linear) {
        run(LinearInterpolator(moving));
    } else {
        run(CubicBSplineInterpolator(moving));
    }
    return out;
}

}  // namespace voxalign

#endif  // VOXALIGN_RESAMPLE_HPP
