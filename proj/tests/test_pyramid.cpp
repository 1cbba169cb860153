#include <catch2/catch_amalgamated.hpp>

#include "voxalign/pyramid.hpp"

#include "support/helpers.hpp"

using namespace voxalign;

namespace {

// Independent oracle: direct (non-separable) truncated-Gaussian convolution
// with in-bounds renormalization.
double direct_convolution_at(const Volume& v, int cx, int cy, int cz, const Vec3& sigma) {
    int radius[3];
    std::vector<double> k[3];
    for (int a = 0; a < 3; ++a) {
        if (sigma[a] > 0.0 && v.dims[a] > 1) {
            radius[a] = int(std::ceil(3.0 * sigma[a]));
            k[a].resize(std::size_t(2 * radius[a] + 1));
            for (int i = -radius[a]; i <= radius[a]; ++i)
                k[a][std::size_t(i + radius[a])] = std::exp(-0.5 * i * i / (sigma[a] * sigma[a]));
            double s = 0.0;
            for (double w : k[a]) s += w;
            for (double& w : k[a]) w /= s;
        } else {
            radius[a] = 0;
            k[a] = {1.0};
        }
    }
    double acc = 0.0, wsum = 0.0;
    for (int dz = -radius[2]; dz <= radius[2]; ++dz)
        for (int dy = -radius[1]; dy <= radius[1]; ++dy)
            for (int dx = -radius[0]; dx <= radius[0]; ++dx) {
                const int x = cx + dx, y = cy + dy, z = cz + dz;
                if (x < 0 || x >= v.dims[0] || y < 0 || y >= v.dims[1] || z < 0 || z >= v.dims[2])
                    continue;
                const double w = k[0][std::size_t(dx + radius[0])] *
                                 k[1][std::size_t(dy + radius[1])] *
                                 k[2][std::size_t(dz + radius[2])];
                acc += w * v.at(x, y, z);
                wsum += w;
            }
    return acc / wsum;
}

}  // namespace

TEST_CASE("pyramid dims follow ceil(dim/s)") {
    Volume v(Index3{256, 256, 8}, Vec3{0.156, 0.156, 1.8});
    for (auto& x : v.data) x = 1.0;

    const auto levels = build_pyramid(v, default_schedule());
    REQUIRE(levels.size() == 3);
    CHECK(levels[0].dims == Index3{64, 64, 2});
    CHECK(levels[1].dims == Index3{128, 128, 4});
    CHECK(levels[2].dims == Index3{256, 256, 8});
    CHECK(levels[0].spacing[0] == Catch::Approx(0.624));
    CHECK(levels[0].spacing[2] == Catch::Approx(7.2));
}

TEST_CASE("clamped schedule keeps thin axes usable") {
    std::vector<std::string> notes;
    const PyramidSchedule clamped =
        clamp_schedule(default_schedule(), Index3{256, 256, 8}, 4, &notes);
    CHECK(clamped.shrink_factors[0] == Index3{4, 4, 2});
    CHECK(clamped.shrink_factors[1] == Index3{2, 2, 2});
    CHECK(clamped.shrink_factors[2] == Index3{1, 1, 1});
    CHECK(notes.size() == 1);

    // 7 slices: shrink 2 still leaves ceil(7/2) = 4 slices.
    const PyramidSchedule c7 = clamp_schedule(default_schedule(), Index3{256, 256, 7}, 4, nullptr);
    CHECK(c7.shrink_factors[0][2] == 2);

    // Documented level dims for the clamped brain-like schedule.
    Volume v(Index3{256, 256, 8}, Vec3{0.156, 0.156, 1.8});
    const auto levels = build_pyramid(v, clamped);
    CHECK(levels[0].dims == Index3{64, 64, 4});
    CHECK(levels[1].dims == Index3{128, 128, 4});
    CHECK(levels[2].dims == Index3{256, 256, 8});
}

TEST_CASE("shrink 1 level is bitwise identical") {
    Volume v = vxt::random_volume(Index3{9, 7, 5}, Vec3{1, 1, 1}, 31);
    const Volume out = shrink_volume(v, Index3{1, 1, 1});
    CHECK(out.data == v.data);
    CHECK(out.spacing[0] == v.spacing[0]);
}

TEST_CASE("smoothed impulse matches direct convolution oracle") {
    Volume v(Index3{17, 15, 13}, Vec3{1, 1, 1});
    v.at(8, 7, 6) = 1.0;

    const Volume level = shrink_volume(v, Index3{2, 2, 2});
    const Vec3 sigma{1.0, 1.0, 1.0};  // s/2 with s = 2
    for (int z = 0; z < level.dims[2]; ++z)
        for (int y = 0; y < level.dims[1]; ++y)
            for (int x = 0; x < level.dims[0]; ++x) {
                const double expected = direct_convolution_at(v, 2 * x, 2 * y, 2 * z, sigma);
                CHECK(level.at(x, y, z) == Catch::Approx(expected).margin(1e-6));
            }
}

TEST_CASE("smoothing preserves mass and constants") {
    // Interior impulse: the normalized kernel must spread unit mass.
    Volume v(Index3{21, 21, 21}, Vec3{1, 1, 1});
    v.at(10, 10, 10) = 1.0;
    const Volume sm = gaussian_smooth_voxels(v, Vec3{1.0, 1.0, 1.0});
    double total = 0.0;
    for (double x : sm.data) total += x;
    CHECK(total == Catch::Approx(1.0).margin(1e-6));

    Volume c(Index3{8, 8, 8}, Vec3{1, 1, 1});
    for (auto& x : c.data) x = 3.25;
    const Volume smc = gaussian_smooth_voxels(c, Vec3{2.0, 2.0, 2.0});
    for (double x : smc.data) CHECK(x == Catch::Approx(3.25).margin(1e-12));
}

TEST_CASE("world bounding box is preserved within one coarse voxel") {
    Volume v = vxt::random_volume(Index3{40, 36, 12}, Vec3{0.5, 0.6, 2.0}, 33,
                                  0.0, 10.0, Vec3{5, -3, 2});
    const auto levels = build_pyramid(v, clamp_schedule(default_schedule(), v.dims, 4, nullptr));
    const auto [lo0, hi0] = v.world_bounds();
    for (const auto& lvl : levels) {
        const auto [lo, hi] = lvl.world_bounds();
        for (int a = 0; a < 3; ++a) {
            CHECK(std::abs(lo[a] - lo0[a]) <= lvl.spacing[a] + 1e-9);
            CHECK(std::abs(hi[a] - hi0[a]) <= lvl.spacing[a] + 1e-9);
        }
    }
}

TEST_CASE("level geometry keeps voxel centers fixed in world space") {
    Volume v = vxt::random_volume(Index3{16, 12, 8}, Vec3{0.7, 1.1, 1.9}, 35, 0.0, 5.0,
                                  Vec3{1, 2, 3});
    const Volume lvl = shrink_volume(v, Index3{2, 2, 2});
    for (int z = 0; z < lvl.dims[2]; ++z)
        for (int y = 0; y < lvl.dims[1]; ++y)
            for (int x = 0; x < lvl.dims[0]; ++x) {
                const Vec3 pw = lvl.index_to_world(Index3{x, y, z});
                const Vec3 qw = v.index_to_world(Index3{2 * x, 2 * y, 2 * z});
                CHECK((pw - qw).norm() < 1e-12);
            }
}

TEST_CASE("schedule validation") {
    CHECK_THROWS_AS(build_pyramid(Volume(Index3{4, 4, 4}, Vec3{1, 1, 1}), PyramidSchedule{}), error);
    PyramidSchedule bad{{Index3{2, 2, 2}}};
    CHECK_THROWS_AS(bad.validate(), error);  // finest level must be all ones
    PyramidSchedule neg{{Index3{0, 1, 1}, Index3{1, 1, 1}}};
    CHECK_THROWS_AS(neg.validate(), error);
}
