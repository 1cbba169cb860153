#ifndef VOXALIGN_PCA_INIT_HPP
#define VOXALIGN_PCA_INIT_HPP

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "voxalign/em_cluster.hpp"
#include "voxalign/errors.hpp"
#include "voxalign/transforms.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

/// Centroid and principal axes of a foreground point cloud. Rows of axes
/// are unit eigenvectors of the covariance, sorted by descending
/// eigenvalue, each with its largest-magnitude component made positive.
struct PcaFrame {
    WorldPoint centroid;
    Mat3 axes;
    Vec3 eigenvalues;  // descending, mm^2
    long point_count = 0;
};

/// Rigid seed derived from two PCA frames. rotation/translation map
/// moving-space points into fixed space: x_fixed = rotation * x_moving +
/// translation. The diagnostics give the centroid distance and the angles
/// between the projected first principal axes in the axial (xy), coronal
/// (xz) and sagittal (yz) planes, in degrees.
struct InitialAlignment {
    Mat3 rotation;
    Vec3 translation;
    WorldPoint fixed_centroid;
    WorldPoint moving_centroid;
    double centroid_distance = 0.0;
    double plane_angles_deg[3]{0.0, 0.0, 0.0};
};

/// PCA of a raw point cloud (world mm). Throws degenerate_point_cloud for
/// rank-deficient clouds or eigenvalue ties finer than 1e-9 relative,
/// since axis pairing would be arbitrary there.
inline PcaFrame frame_from_points(std::span<const Vec3> points) {
    if (points.size() < 4) throw degenerate_point_cloud("pca: fewer than 4 points");

    Vec3 c;
    for (const auto& p : points) c += p;
    c = c / double(points.size());

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : points) {
        const Vec3 d = p - c;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) cov(i, j) += d[i] * d[j];
    }
    cov /= double(points.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    if (es.info() != Eigen::Success) throw degenerate_point_cloud("pca: eigendecomposition failed");

    // Eigen sorts ascending; we want descending.
    Vec3 lam{std::max(es.eigenvalues()[2], 0.0), std::max(es.eigenvalues()[1], 0.0),
             std::max(es.eigenvalues()[0], 0.0)};
    if (lam[0] <= 0.0 || lam[2] <= 1e-12 * lam[0])
        throw degenerate_point_cloud("pca: rank-deficient covariance");
    if ((lam[0] - lam[1]) <= 1e-9 * lam[0] || (lam[1] - lam[2]) <= 1e-9 * lam[0])
        throw degenerate_point_cloud("pca: near-equal eigenvalues, axis pairing undefined");

    PcaFrame f;
    f.centroid = c;
    f.eigenvalues = lam;
    f.point_count = long(points.size());
    for (int r = 0; r < 3; ++r) {
        Vec3 v{es.eigenvectors()(0, 2 - r), es.eigenvectors()(1, 2 - r), es.eigenvectors()(2, 2 - r)};
        // Deterministic sign: largest-magnitude component positive.
        int arg = 0;
        for (int a = 1; a < 3; ++a)
            if (std::abs(v[a]) > std::abs(v[arg])) arg = a;
        if (v[arg] < 0.0) v = -v;
        for (int a = 0; a < 3; ++a) f.axes(r, a) = v[a];
    }
    return f;
}

/// World-space coordinates of the foreground voxel centers, then PCA.
inline PcaFrame compute_pca_frame(const Volume& v, const ForegroundMask& mask) {
    if (!mask.same_geometry(v)) throw geometry_mismatch("pca: mask geometry differs from volume");
    std::vector<Vec3> pts;
    pts.reserve(mask.count_foreground());
    std::size_t q = 0;
    Index3 first{-1, -1, -1};
    bool distinct[3] = {false, false, false};
    for (int z = 0; z < v.dims[2]; ++z)
        for (int y = 0; y < v.dims[1]; ++y)
            for (int x = 0; x < v.dims[0]; ++x, ++q) {
                if (!mask.labels[q]) continue;
                const Index3 idx{x, y, z};
                if (pts.empty()) {
                    first = idx;
                } else {
                    for (int a = 0; a < 3; ++a)
                        if (idx[a] != first[a]) distinct[a] = true;
                }
                pts.push_back(v.index_to_world(idx));
            }
    if (pts.size() < 4) throw degenerate_point_cloud("pca: fewer than 4 foreground voxels");
    if (!(distinct[0] && distinct[1] && distinct[2]))
        throw degenerate_point_cloud("pca: foreground spans a single position on some axis");
    return frame_from_points(pts);
}

namespace detail {

inline double projected_angle_deg(const Vec3& fixed_axis, const Vec3& moving_axis, int drop_axis) {
    const int a0 = drop_axis == 0 ? 1 : 0;
    const int a1 = drop_axis == 2 ? 1 : 2;
    const double fx = fixed_axis[a0], fy = fixed_axis[a1];
    const double mx = moving_axis[a0], my = moving_axis[a1];
    const double nf = std::hypot(fx, fy), nm = std::hypot(mx, my);
    if (nf < 1e-12 || nm < 1e-12) return 0.0;
    const double cross = mx * fy - my * fx;
    const double dot = mx * fx + my * fy;
    return rad_to_deg(std::atan2(cross, dot));
}

}  // namespace detail

/// Aligns the moving frame onto the fixed frame. The rotation pairs the
/// sorted principal axes; when the raw pairing is a reflection
/// (determinant -1) the least-significant fixed axis is flipped through
/// the checking matrix diag(1, 1, det) so the result is always a proper
/// rotation. The translation maps the moving centroid exactly onto the
/// fixed centroid under that rotation.
inline InitialAlignment initial_alignment(const PcaFrame& fixed, const PcaFrame& moving) {
    // Columns are eigenvectors here, so the pairing map is U_f * U_m^T.
    const Mat3 u_f = fixed.axes.transposed();
    const Mat3 u_m = moving.axes.transposed();
    Mat3 r = u_f * u_m.transposed();
    if (r.determinant() < 0.0)
        r = u_f * Mat3::diagonal(Vec3{1.0, 1.0, -1.0}) * u_m.transposed();

    InitialAlignment a;
    a.rotation = r;
    a.translation = fixed.centroid - r * moving.centroid;
    a.fixed_centroid = fixed.centroid;
    a.moving_centroid = moving.centroid;
    a.centroid_distance = (fixed.centroid - moving.centroid).norm();
    for (int plane = 0; plane < 3; ++plane)
        a.plane_angles_deg[plane] =
            detail::projected_angle_deg(fixed.axes.row(0), moving.axes.row(0), 2 - plane);
    return a;
}

/// Affine seed with identity scale and shear: matrix is the alignment
/// rotation, acting about the fixed centroid, with the offset chosen so the
/// map equals x -> rotation * x + translation exactly.
inline AffineTransform to_affine_seed(const InitialAlignment& a) {
    const Vec3 center = a.fixed_centroid;
    const Vec3 offset = a.translation + a.rotation * center - center;
    return AffineTransform(a.rotation, offset, center);
}

}  // namespace voxalign

#endif  // VOXALIGN_PCA_INIT_HPP
