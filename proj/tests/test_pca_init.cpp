#include <catch2/catch_amalgamated.hpp>

#include "voxalign/pca_init.hpp"

#include "support/helpers.hpp"

using namespace voxalign;

namespace {

std::vector<Vec3> lattice_box(Index3 counts, Vec3 spacing, Vec3 base = {}) {
    std::vector<Vec3> pts;
    for (int z = 0; z < counts[2]; ++z)
        for (int y = 0; y < counts[1]; ++y)
            for (int x = 0; x < counts[0]; ++x)
                pts.push_back(base + Vec3{x * spacing[0], y * spacing[1], z * spacing[2]});
    return pts;
}

// Closed-form variance of the uniform lattice {0..n-1} * s about its mean.
double lattice_variance(int n, double s) { return s * s * double(n * n - 1) / 12.0; }

}  // namespace

TEST_CASE("pca of an axis-aligned box matches closed-form moments") {
    const auto pts = lattice_box(Index3{9, 5, 3}, Vec3{1, 1, 1}, Vec3{10, -4, 2});
    const PcaFrame f = frame_from_points(pts);

    CHECK(f.point_count == 9 * 5 * 3);
    CHECK((f.centroid - Vec3{14.0, -2.0, 3.0}).norm() < 1e-12);

    CHECK(f.eigenvalues[0] == Catch::Approx(lattice_variance(9, 1)).margin(1e-9));
    CHECK(f.eigenvalues[1] == Catch::Approx(lattice_variance(5, 1)).margin(1e-9));
    CHECK(f.eigenvalues[2] == Catch::Approx(lattice_variance(3, 1)).margin(1e-9));

    // Signed identity rows, descending extent order.
    CHECK(f.axes.max_abs_diff(Mat3::identity()) < 1e-9);
    CHECK(f.axes.is_orthonormal(1e-9));
}

TEST_CASE("degenerate clouds are rejected") {
    // Single-voxel-thick plane: rank-deficient covariance.
    const auto flat = lattice_box(Index3{6, 5, 1}, Vec3{1, 1, 1});
    CHECK_THROWS_AS(frame_from_points(flat), degenerate_point_cloud);

    CHECK_THROWS_AS(frame_from_points(std::vector<Vec3>{{0, 0, 0}, {1, 1, 1}}),
                    degenerate_point_cloud);

    // Near-tied eigenvalues: axis pairing undefined.
    const auto cube = lattice_box(Index3{5, 5, 5}, Vec3{1, 1, 1});
    CHECK_THROWS_AS(frame_from_points(cube), degenerate_point_cloud);
}

TEST_CASE("pca axes and eigenvalues are invariant under rigid motion") {
    const auto pts = lattice_box(Index3{11, 7, 4}, Vec3{1, 1, 1});
    const PcaFrame base = frame_from_points(pts);

    const Mat3 q = Mat3::axis_rotation(2, deg_to_rad(25.0)) * Mat3::axis_rotation(0, deg_to_rad(15.0));
    std::vector<Vec3> moved;
    for (const auto& p : pts) moved.push_back(q * p + Vec3{3, -8, 5});
    const PcaFrame rot = frame_from_points(moved);

    for (int i = 0; i < 3; ++i)
        CHECK(rot.eigenvalues[i] == Catch::Approx(base.eigenvalues[i]).margin(1e-9));
    for (int r = 0; r < 3; ++r) {
        const Vec3 expect = q * base.axes.row(r);
        const Vec3 got = rot.axes.row(r);
        const double align = std::abs(expect.dot(got));  // up to sign convention
        CHECK(align == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("compute_pca_frame works in world millimetres") {
    // Strong slice anisotropy: the dominant axis must follow world extents,
    // not voxel counts.
    Volume v(Index3{12, 6, 4}, Vec3{0.5, 2.0, 1.0});
    ForegroundMask mask;
    mask.dims = v.dims;
    mask.spacing = v.spacing;
    mask.origin = v.origin;
    mask.direction = v.direction;
    mask.labels.assign(v.voxel_count(), 1);

    const PcaFrame f = compute_pca_frame(v, mask);
    CHECK(f.eigenvalues[0] == Catch::Approx(lattice_variance(6, 2.0)).margin(1e-9));
    CHECK(f.eigenvalues[1] == Catch::Approx(lattice_variance(12, 0.5)).margin(1e-9));
    // First axis is world y.
    CHECK(std::abs(f.axes(0, 1)) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("initial alignment of identical frames is the identity") {
    const auto pts = lattice_box(Index3{9, 5, 3}, Vec3{1, 1, 1});
    const PcaFrame f = frame_from_points(pts);
    const InitialAlignment a = initial_alignment(f, f);
    CHECK(a.rotation.max_abs_diff(Mat3::identity()) < 1e-12);
    CHECK(a.translation.norm() < 1e-12);
    CHECK(a.centroid_distance == 0.0);
    for (double ang : a.plane_angles_deg) CHECK(std::abs(ang) < 1e-9);
}

TEST_CASE("initial alignment recovers a known rotation and shift") {
    const auto pts = lattice_box(Index3{9, 5, 3}, Vec3{1.1, 0.9, 1.7});
    const Mat3 q = Mat3::axis_rotation(2, deg_to_rad(30.0));
    const Vec3 shift{5, 0, 0};
    std::vector<Vec3> moved;
    for (const auto& p : pts) moved.push_back(q * p + shift);

    const PcaFrame fixed = frame_from_points(pts);
    const PcaFrame moving = frame_from_points(moved);
    const InitialAlignment a = initial_alignment(fixed, moving);

    // Forward-construction oracle: the alignment must map each moving point
    // back onto its fixed source.
    CHECK((a.rotation * q).max_abs_diff(Mat3::identity()) < 1e-6);
    for (std::size_t i = 0; i < pts.size(); i += 7)
        CHECK((a.rotation * moved[i] + a.translation - pts[i]).norm() < 1e-6);

    // Translation definition: fixed centroid minus rotated moving centroid.
    CHECK((a.translation - (fixed.centroid - a.rotation * moving.centroid)).norm() < 1e-12);

    // In-plane angle diagnostic: the axial projection sees the 30 degrees.
    CHECK(std::abs(std::abs(a.plane_angles_deg[0]) - 30.0) < 1e-6);

    CHECK(std::abs(a.rotation.determinant() - 1.0) < 1e-9);
    CHECK(a.rotation.is_orthonormal(1e-9));
}

TEST_CASE("reflection traps always yield a proper rotation") {
    // 90-degree rotation makes the sign convention produce det = -1 pairing.
    const auto pts = lattice_box(Index3{9, 5, 3}, Vec3{1, 1, 1});
    const Mat3 q = Mat3::axis_rotation(2, deg_to_rad(90.0));
    std::vector<Vec3> moved;
    for (const auto& p : pts) moved.push_back(q * p);

    const PcaFrame fixed = frame_from_points(pts);
    const PcaFrame moving = frame_from_points(moved);

    // Confirm the trap: the raw axis pairing is a reflection.
    const Mat3 raw = fixed.axes.transposed() * moving.axes;
    CHECK(raw.determinant() == Catch::Approx(-1.0).margin(1e-9));

    const InitialAlignment a = initial_alignment(fixed, moving);
    CHECK(a.rotation.determinant() == Catch::Approx(1.0).margin(1e-9));
    CHECK(a.rotation.is_orthonormal(1e-9));

    // Hand-built frames with the same property.
    PcaFrame ff = fixed;
    PcaFrame mm = fixed;
    mm.axes = Mat3::from_rows(Vec3{0, 1, 0}, Vec3{1, 0, 0}, Vec3{0, 0, 1});
    const InitialAlignment b = initial_alignment(ff, mm);
    CHECK(b.rotation.determinant() == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("affine seed realizes the alignment map") {
    const auto pts = lattice_box(Index3{9, 5, 3}, Vec3{1, 1, 1}, Vec3{-4, 6, 1});
    const Mat3 q = Mat3::axis_rotation(1, deg_to_rad(20.0)) * Mat3::axis_rotation(2, deg_to_rad(-35.0));
    std::vector<Vec3> moved;
    for (const auto& p : pts) moved.push_back(q * p + Vec3{2, -3, 4});

    const PcaFrame fixed = frame_from_points(pts);
    const PcaFrame moving = frame_from_points(moved);
    const InitialAlignment a = initial_alignment(fixed, moving);
    const AffineTransform seed = to_affine_seed(a);

    // Identity alignment -> identity affine.
    const AffineTransform id_seed = to_affine_seed(initial_alignment(fixed, fixed));
    CHECK(id_seed.matrix().max_abs_diff(Mat3::identity()) < 1e-12);
    CHECK(id_seed.offset().norm() < 1e-9);

    // Pure translation -> identity matrix, offset = translation.
    InitialAlignment trans;
    trans.rotation = Mat3::identity();
    trans.translation = Vec3{1, 2, 3};
    trans.fixed_centroid = Vec3{10, 10, 10};
    const AffineTransform t_seed = to_affine_seed(trans);
    CHECK(t_seed.matrix().max_abs_diff(Mat3::identity()) < 1e-12);
    CHECK((t_seed.offset() - Vec3{1, 2, 3}).norm() < 1e-12);

    // The seed maps the moving centroid onto the fixed centroid.
    CHECK((seed.apply(moving.centroid) - fixed.centroid).norm() < 1e-9);
    // And reproduces the alignment map everywhere.
    SplitMix64 rng(17);
    for (int k = 0; k < 30; ++k) {
        const WorldPoint p{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
        CHECK((seed.apply(p) - (a.rotation * p + a.translation)).norm() < 1e-9);
    }
}
