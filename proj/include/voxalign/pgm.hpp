#ifndef VOXALIGN_PGM_HPP
#define VOXALIGN_PGM_HPP

#include <cmath>
#include <fstream>
#include <string>

#include "voxalign/errors.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

/// Writes one slice as binary P5 PGM (maxval 255) with linear windowing:
/// lo maps to 0, hi to 255, values clamped. axis selects the slicing
/// dimension (0=x, 1=y, 2=z); index is the slice position along it.
inline void write_pgm_slice(const Volume& v, int axis, int index, double window_lo, double window_hi,
                            const std::string& path) {
    if (axis < 0 || axis > 2) throw index_out_of_range("pgm: axis must be 0, 1 or 2");
    if (index < 0 || index >= v.dims[axis])
        throw index_out_of_range("pgm: slice index " + std::to_string(index) + " outside [0, " +
                                 std::to_string(v.dims[axis] - 1) + "]");
    if (!(window_lo < window_hi)) throw error("pgm: window requires lo < hi");

    const int a0 = axis == 0 ? 1 : 0;           // fast in-plane axis
    const int a1 = axis == 2 ? 1 : 2;           // slow in-plane axis
    const int w = v.dims[a0], h = v.dims[a1];

    std::string pixels(std::size_t(w) * std::size_t(h), '\0');
    const double scale = 255.0 / (window_hi - window_lo);
    std::size_t q = 0;
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i, ++q) {
            Index3 idx;
            idx[axis] = index;
            idx[a0] = i;
            idx[a1] = j;
            double g = (v.at(idx[0], idx[1], idx[2]) - window_lo) * scale;
            g = std::min(std::max(g, 0.0), 255.0);
            pixels[q] = char(static_cast<unsigned char>(std::lround(g)));
        }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("pgm: cannot open '" + path + "' for writing");
    out << "P5\n" << w << ' ' << h << "\n255\n";
    out.write(pixels.data(), std::streamsize(pixels.size()));
    if (!out) throw io_error("pgm: write failed for '" + path + "'");
}

}  // namespace voxalign

#endif  // VOXALIGN_PGM_HPP
