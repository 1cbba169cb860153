#ifndef VOXALIGN_TESTS_HELPERS_HPP
#define VOXALIGN_TESTS_HELPERS_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "voxalign/geometry.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/volume.hpp"

namespace vxt {

using namespace voxalign;

inline Mat3 random_rotation(SplitMix64& rng) {
    const Mat3 r = Mat3::axis_rotation(2, rng.uniform(-3.1, 3.1)) *
                   Mat3::axis_rotation(1, rng.uniform(-1.5, 1.5)) *
                   Mat3::axis_rotation(0, rng.uniform(-3.1, 3.1));
    return r;
}

inline Volume random_volume(Index3 dims, Vec3 spacing, std::uint64_t seed, double lo = 0.0,
                            double hi = 100.0, Vec3 origin = {}, Mat3 direction = Mat3::identity()) {
    Volume v(dims, spacing, origin, direction);
    SplitMix64 rng(seed);
    for (auto& x : v.data) x = rng.uniform(lo, hi);
    return v;
}

/// f(x,y,z) = a + g . world(x,y,z), sampled on the grid.
inline Volume affine_field_volume(Index3 dims, Vec3 spacing, double a, Vec3 g, Vec3 origin = {},
                                  Mat3 direction = Mat3::identity()) {
    Volume v(dims, spacing, origin, direction);
    std::size_t q = 0;
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x, ++q)
                v.data[q] = a + g.dot(v.index_to_world(Index3{x, y, z}));
    return v;
}

/// Unique temporary path under the system temp dir; removed by the caller.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0;; ++i) {
            auto p = base / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(i));
            std::error_code ec;
            if (std::filesystem::create_directory(p, ec)) {
                path_ = p;
                break;
            }
        }
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace vxt

#endif
