#ifndef VOXALIGN_TRANSFORM_IO_HPP
#define VOXALIGN_TRANSFORM_IO_HPP

#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxalign/errors.hpp"
#include "voxalign/transforms.hpp"

namespace voxalign {

enum class TransformKind { affine, bspline, composite };

struct AffinePayload {
    Mat3 matrix;
    Vec3 offset;  // center-free form: apply(x) = matrix * x + offset
};

struct BSplinePayload {
    Index3 control_dims;  // control points per axis (cells + 3)
    Vec3 grid_origin;     // world position of control point (0,0,0)
    Vec3 grid_spacing;    // cell size (mm)
    std::vector<double> displacements;  // 3N, component blocks x|y|z
};

/// Serializable record of a registration transform. Numeric payloads round
/// trip losslessly (shortest round-trip decimal encoding in JSON).
struct TransformRecord {
    TransformKind kind = TransformKind::affine;
    std::optional<AffinePayload> affine;
    std::optional<BSplinePayload> bspline;
    std::map<std::string, std::string> metadata;
};

inline TransformRecord record_from(const AffineTransform& t) {
    TransformRecord r;
    r.kind = TransformKind::affine;
    r.affine = AffinePayload{t.matrix(), t.folded_offset()};
    return r;
}

inline TransformRecord record_from(const BSplineTransform& t) {
    TransformRecord r;
    r.kind = TransformKind::bspline;
    BSplinePayload p;
    p.control_dims = t.control_dims();
    p.grid_spacing = t.cell_size();
    p.grid_origin = t.domain_min() - t.cell_size();
    p.displacements.resize(std::size_t(t.parameter_count()));
    t.get_parameters(p.displacements);
    r.bspline = p;
    return r;
}

inline TransformRecord record_from(const CompositeTransform& t) {
    TransformRecord r;
    r.kind = TransformKind::composite;
    r.affine = record_from(t.global()).affine;
    r.bspline = record_from(t.local()).bspline;
    return r;
}

inline AffineTransform affine_from(const AffinePayload& p) {
    return AffineTransform(p.matrix, p.offset, Vec3{0, 0, 0});
}

inline BSplineTransform bspline_from(const BSplinePayload& p) {
    Index3 cells;
    for (int a = 0; a < 3; ++a) {
        if (p.control_dims[a] < 4)
            throw parse_error("transform: bspline control_dims must be >= 4 per axis");
        cells[a] = p.control_dims[a] - 3;
    }
    const Vec3 dmin = p.grid_origin + p.grid_spacing;
    const Vec3 dmax = dmin + p.grid_spacing.cwise_mul(cells.to_vec3());
    BSplineTransform t(cells, dmin, dmax);
    if (p.displacements.size() != std::size_t(t.parameter_count()))
        throw parse_error("transform: bspline displacement count mismatch");
    t.set_parameters(p.displacements);
    return t;
}

/// Instantiates the transform a record describes.
inline std::unique_ptr<Transform> to_transform(const TransformRecord& r) {
    switch (r.kind) {
        case TransformKind::affine:
            if (!r.affine) throw parse_error("transform: affine record without affine payload");
            return std::make_unique<AffineTransform>(affine_from(*r.affine));
        case TransformKind::bspline:
            if (!r.bspline) throw parse_error("transform: bspline record without bspline payload");
            return std::make_unique<BSplineTransform>(bspline_from(*r.bspline));
        default:
            if (!r.affine || !r.bspline)
                throw parse_error("transform: composite record needs both payloads");
            return std::make_unique<CompositeTransform>(affine_from(*r.affine),
                                                        bspline_from(*r.bspline));
    }
}

namespace detail {

inline nlohmann::json vec3_json(const Vec3& v) { return nlohmann::json::array({v[0], v[1], v[2]}); }

inline Vec3 vec3_from_json(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw parse_error(std::string("transform: bad ") + what);
    return Vec3{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

inline nlohmann::json to_json(const TransformRecord& r) {
    nlohmann::json j;
    j["kind"] = r.kind == TransformKind::affine    ? "affine"
                : r.kind == TransformKind::bspline ? "bspline"
                                                   : "composite";
    if (r.affine) {
        nlohmann::json a;
        a["matrix"] = r.affine->matrix.m;
        a["offset"] = detail::vec3_json(r.affine->offset);
        j["affine"] = a;
    }
    if (r.bspline) {
        nlohmann::json b;
        b["grid_dims"] = {r.bspline->control_dims[0], r.bspline->control_dims[1],
                          r.bspline->control_dims[2]};
        b["grid_origin"] = detail::vec3_json(r.bspline->grid_origin);
        b["grid_spacing"] = detail::vec3_json(r.bspline->grid_spacing);
        b["displacements"] = r.bspline->displacements;
        j["bspline"] = b;
    }
    if (!r.metadata.empty()) j["metadata"] = r.metadata;
    return j;
}

inline TransformRecord record_from_json(const nlohmann::json& j) {
    TransformRecord r;
    const std::string kind = j.value("kind", "");
    if (kind == "affine") r.kind = TransformKind::affine;
    else if (kind == "bspline") r.kind = TransformKind::bspline;
    else if (kind == "composite") r.kind = TransformKind::composite;
    else throw parse_error("transform: unknown kind '" + kind + "'");

    if (j.contains("affine")) {
        const auto& a = j["affine"];
        AffinePayload p;
        const auto& m = a.at("matrix");
        if (!m.is_array() || m.size() != 9) throw parse_error("transform: bad affine matrix");
        for (int i = 0; i < 9; ++i) p.matrix.m[std::size_t(i)] = m[std::size_t(i)].get<double>();
        p.offset = detail::vec3_from_json(a.at("offset"), "affine offset");
        r.affine = p;
    }
    if (j.contains("bspline")) {
        const auto& b = j["bspline"];
        BSplinePayload p;
        const auto& d = b.at("grid_dims");
        if (!d.is_array() || d.size() != 3) throw parse_error("transform: bad bspline grid_dims");
        for (int a = 0; a < 3; ++a) p.control_dims[a] = d[std::size_t(a)].get<int>();
        p.grid_origin = detail::vec3_from_json(b.at("grid_origin"), "bspline grid_origin");
        p.grid_spacing = detail::vec3_from_json(b.at("grid_spacing"), "bspline grid_spacing");
        p.displacements = b.at("displacements").get<std::vector<double>>();
        r.bspline = p;
    }
    if (j.contains("metadata")) r.metadata = j["metadata"].get<std::map<std::string, std::string>>();

    if (r.kind == TransformKind::affine && !r.affine)
        throw parse_error("transform: affine record missing payload");
    if (r.kind == TransformKind::bspline && !r.bspline)
        throw parse_error("transform: bspline record missing payload");
    if (r.kind == TransformKind::composite && (!r.affine || !r.bspline))
        throw parse_error("transform: composite record missing payload");
    return r;
}

inline void write_transform_json(const TransformRecord& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("transform: cannot open '" + path + "' for writing");
    out << to_json(r).dump(2) << '\n';
    if (!out) throw io_error("transform: write failed for '" + path + "'");
}

inline TransformRecord read_transform_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("transform: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("transform: invalid JSON in '" + path + "': " + e.what());
    }
    try {
        return record_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error("transform: bad record in '" + path + "': " + e.what());
    }
}

}  // namespace voxalign

#endif  // VOXALIGN_TRANSFORM_IO_HPP
