#ifndef VOXALIGN_PHANTOM_HPP
#define VOXALIGN_PHANTOM_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxalign/errors.hpp"
#include "voxalign/landmarks.hpp"
#include "voxalign/pyramid.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/transform_io.hpp"
#include "voxalign/transforms.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

enum class IntensityRemap { none, sqrt_compress, invert_sqrt };

/// Synthetic multimodal pair with exactly known ground truth, standing in
/// for animal acquisitions. The fixed channel samples a deterministic
/// sum-of-ellipsoidal-blobs field; the moving channel is a monotone
/// intensity remap of the same field on its own grid, blurred and
/// optionally degraded with noise. The ground-truth transform maps fixed
/// world space into moving world space (the direction registration
/// recovers); landmark pairs are mapped exactly through it.
struct PhantomSpec {
    Index3 dims{64, 64, 16};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    std::uint64_t structure_seed = 7;
    int satellite_blobs = 5;

    // Ground-truth affine, composed as global map (applied after any warp).
    Vec3 rotation_deg{0, 0, 0};     // about z, y, x order: R = Rz Ry Rx
    Vec3 scale{1, 1, 1};
    Vec3 translation_mm{0, 0, 0};

    // Optional ground-truth deformation on a coarse grid. The warp is baked
    // into the fixed channel so the pair is exactly related by
    // affine(warp(x)) without inverting the spline.
    std::optional<Index3> warp_cells;
    double warp_max_displacement_mm = 0.0;
    std::uint64_t warp_seed = 11;

    // Moving-channel modality model.
    IntensityRemap remap = IntensityRemap::invert_sqrt;
    double blur_mm = 1.0;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 23;
    Vec3 moving_downsample{1, 1, 1};  // moving grid: dims/f, spacing*f

    int landmarks_per_axis = 3;
};

struct Phantom {
    Volume fixed;
    Volume moving;
    LandmarkSet landmarks;
    AffineTransform truth_affine;
    std::optional<BSplineTransform> truth_warp;

    /// Ground-truth fixed-to-moving map (affine o warp).
    WorldPoint truth_apply(const WorldPoint& p) const {
        return truth_affine.apply(truth_warp ? truth_warp->apply(p) : p);
    }
    TransformRecord truth_record() const {
        if (!truth_warp) return record_from(truth_affine);
        return record_from(CompositeTransform(truth_affine, *truth_warp));
    }
};

namespace detail {

struct Blob {
    Vec3 center;
    Mat3 world_to_blob;  // rows: blob axes
    Vec3 inv_semi;       // 1 / semi-axis per blob axis
    double amplitude;
};

struct BlobField {
    std::vector<Blob> blobs;
    double operator()(const Vec3& p) const {
        double v = 0.0;
        for (const auto& b : blobs) {
            const Vec3 q = (b.world_to_blob * (p - b.center)).cwise_mul(b.inv_semi);
            v += b.amplitude * std::exp(-0.5 * q.squared_norm());
        }
        return v;
    }
};

inline BlobField make_blob_field(const PhantomSpec& spec, const Vec3& center, const Vec3& half_extent) {
    SplitMix64 rng(derive_seed(spec.structure_seed, 0x0b10b5));
    BlobField f;

    // Main anisotropic body: distinct principal moments so the axes of the
    // foreground cloud are well defined.
    Blob main;
    main.center = center;
    main.world_to_blob = Mat3::identity();
    const Vec3 semi{0.52 * half_extent[0], 0.30 * half_extent[1], 0.60 * half_extent[2]};
    main.inv_semi = {1.0 / semi[0], 1.0 / semi[1], 1.0 / semi[2]};
    main.amplitude = 100.0;
    f.blobs.push_back(main);

    for (int i = 0; i < spec.satellite_blobs; ++i) {
        Blob b;
        b.center = center + Vec3{rng.uniform(-0.45, 0.45) * semi[0], rng.uniform(-0.45, 0.45) * semi[1],
                                 rng.uniform(-0.45, 0.45) * semi[2]};
        const Mat3 rot = Mat3::axis_rotation(2, rng.uniform(-0.6, 0.6)) *
                         Mat3::axis_rotation(1, rng.uniform(-0.6, 0.6)) *
                         Mat3::axis_rotation(0, rng.uniform(-0.6, 0.6));
        b.world_to_blob = rot.transposed();
        const Vec3 ss{rng.uniform(0.18, 0.42) * semi[0], rng.uniform(0.18, 0.42) * semi[1],
                      rng.uniform(0.18, 0.42) * semi[2]};
        b.inv_semi = {1.0 / ss[0], 1.0 / ss[1], 1.0 / ss[2]};
        b.amplitude = rng.uniform(35.0, 75.0);
        f.blobs.push_back(b);
    }
    return f;
}

inline double apply_remap(IntensityRemap remap, double v, double v_max) {
    if (v_max <= 0.0) return v;
    const double clamped = std::min(std::max(v, 0.0), v_max);
    switch (remap) {
        case IntensityRemap::none: return v;
        case IntensityRemap::sqrt_compress: return v_max * std::sqrt(clamped / v_max);
        default: return v_max - v_max * std::sqrt(clamped / v_max);
    }
}

}  // namespace detail

inline Phantom generate_phantom(const PhantomSpec& spec) {
    for (int a = 0; a < 3; ++a) {
        if (spec.dims[a] < 1 || !(spec.spacing[a] > 0.0)) throw error("phantom: bad geometry");
        if (!(spec.moving_downsample[a] >= 1.0)) throw error("phantom: downsample must be >= 1");
    }
    if (spec.noise_sigma < 0.0) throw error("phantom: noise must be >= 0");

    Phantom out;
    out.fixed = Volume(spec.dims, spec.spacing, spec.origin);

    const auto [blo, bhi] = out.fixed.world_bounds();
    const Vec3 center = (blo + bhi) * 0.5;
    const Vec3 half = (bhi - blo) * 0.5;
    const auto field = detail::make_blob_field(spec, center, half);

    // Ground-truth affine about the domain center.
    const Mat3 rot = Mat3::axis_rotation(2, deg_to_rad(spec.rotation_deg[2])) *
                     Mat3::axis_rotation(1, deg_to_rad(spec.rotation_deg[1])) *
                     Mat3::axis_rotation(0, deg_to_rad(spec.rotation_deg[0]));
    out.truth_affine = AffineTransform(rot * Mat3::diagonal(spec.scale), spec.translation_mm, center);

    if (spec.warp_cells) {
        BSplineTransform warp = BSplineTransform::for_domain(out.fixed, *spec.warp_cells);
        SplitMix64 rng(derive_seed(spec.warp_seed, 0x3a7f));
        auto& coef = warp.coefficients();
        for (auto& c : coef) c = Vec3{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        // Scale so the realized displacement peaks at the requested maximum.
        double peak = 0.0;
        for (int z = 0; z < spec.dims[2]; z += std::max(1, spec.dims[2] / 12))
            for (int y = 0; y < spec.dims[1]; y += std::max(1, spec.dims[1] / 12))
                for (int x = 0; x < spec.dims[0]; x += std::max(1, spec.dims[0] / 12))
                    peak = std::max(peak,
                                    warp.displacement(out.fixed.index_to_world(Index3{x, y, z})).norm());
        const double s = peak > 0.0 ? spec.warp_max_displacement_mm / peak : 0.0;
        for (auto& c : coef) c *= s;
        out.truth_warp = warp;
    }

    // Fixed channel: blob field through the warp (identity when absent).
    {
        std::size_t q = 0;
        for (int z = 0; z < spec.dims[2]; ++z)
            for (int y = 0; y < spec.dims[1]; ++y)
                for (int x = 0; x < spec.dims[0]; ++x, ++q) {
                    Vec3 p = out.fixed.index_to_world(Index3{x, y, z});
                    if (out.truth_warp) p = out.truth_warp->apply(p);
                    out.fixed.data[q] = field(p);
                }
    }

    // Moving channel on its own grid: remapped field at A^{-1}(y), so that
    // moving(truth(x)) equals the remapped fixed field at x.
    Index3 mdims;
    Vec3 mspacing;
    for (int a = 0; a < 3; ++a) {
        mdims[a] = std::max(1, int(std::lround(double(spec.dims[a]) / spec.moving_downsample[a])));
        mspacing[a] = spec.spacing[a] * spec.moving_downsample[a];
    }
    out.moving = Volume(mdims, mspacing, spec.origin);
    const AffineTransform inv = out.truth_affine.inverse();
    {
        double raw_max = 0.0;
        std::vector<double> raw(out.moving.voxel_count());
        std::size_t q = 0;
        for (int z = 0; z < mdims[2]; ++z)
            for (int y = 0; y < mdims[1]; ++y)
                for (int x = 0; x < mdims[0]; ++x, ++q) {
                    const Vec3 p = inv.apply(out.moving.index_to_world(Index3{x, y, z}));
                    raw[q] = field(p);
                    raw_max = std::max(raw_max, raw[q]);
                }
        for (std::size_t i = 0; i < raw.size(); ++i)
            out.moving.data[i] = detail::apply_remap(spec.remap, raw[i], raw_max);
    }
    if (spec.blur_mm > 0.0) {
        const Vec3 sigma{spec.blur_mm / mspacing[0], spec.blur_mm / mspacing[1],
                         spec.blur_mm / mspacing[2]};
        out.moving = gaussian_smooth_voxels(out.moving, sigma);
    }
    if (spec.noise_sigma > 0.0) {
        SplitMix64 rng(derive_seed(spec.noise_seed, 0x901d));
        for (auto& v : out.moving.data) v += rng.normal(0.0, spec.noise_sigma);
    }

    // Landmarks: a regular grid inside the foreground of the fixed channel,
    // paired exactly through the ground truth.
    {
        double fmax = 0.0;
        for (const double v : out.fixed.data) fmax = std::max(fmax, v);
        Vec3 lo, hi;
        bool first = true;
        std::size_t q = 0;
        for (int z = 0; z < spec.dims[2]; ++z)
            for (int y = 0; y < spec.dims[1]; ++y)
                for (int x = 0; x < spec.dims[0]; ++x, ++q) {
                    if (out.fixed.data[q] < 0.15 * fmax) continue;
                    const Vec3 p = out.fixed.index_to_world(Index3{x, y, z});
                    if (first) {
                        lo = hi = p;
                        first = false;
                    } else {
                        for (int a = 0; a < 3; ++a) {
                            lo[a] = std::min(lo[a], p[a]);
                            hi[a] = std::max(hi[a], p[a]);
                        }
                    }
                }
        if (first) throw error("phantom: empty foreground");
        const Vec3 span = hi - lo;
        const int nl = std::max(1, spec.landmarks_per_axis);
        int id = 0;
        for (int kz = 0; kz < nl; ++kz)
            for (int ky = 0; ky < nl; ++ky)
                for (int kx = 0; kx < nl; ++kx, ++id) {
                    const Vec3 frac{(kx + 1.0) / (nl + 1.0), (ky + 1.0) / (nl + 1.0),
                                    (kz + 1.0) / (nl + 1.0)};
                    LandmarkPair p;
                    p.fixed = lo + span.cwise_mul(frac);
                    p.moving = out.truth_apply(p.fixed);
                    char buf[16];
                    std::snprintf(buf, sizeof(buf), "L%03d", id);
                    p.label = buf;
                    out.landmarks.pairs.push_back(std::move(p));
                }
    }
    return out;
}

inline PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
    PhantomSpec s;
    auto get_vec3 = [&](const char* key, Vec3 def) {
        if (!j.contains(key)) return def;
        const auto& a = j[key];
        if (!a.is_array() || a.size() != 3) throw parse_error(std::string("phantom: bad ") + key);
        return Vec3{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
    };
    if (j.contains("dims")) {
        const auto& a = j["dims"];
        if (!a.is_array() || a.size() != 3) throw parse_error("phantom: bad dims");
        for (int i = 0; i < 3; ++i) s.dims[i] = a[std::size_t(i)].get<int>();
    }
    s.spacing = get_vec3("spacing", s.spacing);
    s.origin = get_vec3("origin", s.origin);
    s.structure_seed = j.value("structure_seed", s.structure_seed);
    s.satellite_blobs = j.value("satellite_blobs", s.satellite_blobs);
    s.rotation_deg = get_vec3("rotation_deg", s.rotation_deg);
    s.scale = get_vec3("scale", s.scale);
    s.translation_mm = get_vec3("translation_mm", s.translation_mm);
    if (j.contains("warp_cells")) {
        const auto& a = j["warp_cells"];
        if (!a.is_array() || a.size() != 3) throw parse_error("phantom: bad warp_cells");
        Index3 c;
        for (int i = 0; i < 3; ++i) c[i] = a[std::size_t(i)].get<int>();
        s.warp_cells = c;
    }
    s.warp_max_displacement_mm = j.value("warp_max_displacement_mm", s.warp_max_displacement_mm);
    s.warp_seed = j.value("warp_seed", s.warp_seed);
    const std::string remap = j.value("remap", "invert_sqrt");
    if (remap == "none") s.remap = IntensityRemap::none;
    else if (remap == "sqrt") s.remap = IntensityRemap::sqrt_compress;
    else if (remap == "invert_sqrt") s.remap = IntensityRemap::invert_sqrt;
    else throw parse_error("phantom: unknown remap '" + remap + "'");
    s.blur_mm = j.value("blur_mm", s.blur_mm);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.noise_seed = j.value("noise_seed", s.noise_seed);
    s.moving_downsample = get_vec3("moving_downsample", s.moving_downsample);
    s.landmarks_per_axis = j.value("landmarks_per_axis", s.landmarks_per_axis);
    return s;
}

}  // namespace voxalign

#endif  // VOXALIGN_PHANTOM_HPP
