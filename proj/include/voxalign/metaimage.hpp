#ifndef VOXALIGN_METAIMAGE_HPP
#define VOXALIGN_METAIMAGE_HPP

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "voxalign/errors.hpp"
#include "voxalign/volume.hpp"

namespace voxalign {

static_assert(std::endian::native == std::endian::little,
              "raw payload IO assumes a little-endian host");

enum class MetaElementType { met_short, met_ushort, met_float, met_double };

inline const char* to_string(MetaElementType t) {
    switch (t) {
        case MetaElementType::met_short: return "MET_SHORT";
        case MetaElementType::met_ushort: return "MET_USHORT";
        case MetaElementType::met_float: return "MET_FLOAT";
        default: return "MET_DOUBLE";
    }
}

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

inline double parse_double_or_throw(const std::string& tok, int line_no, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw parse_error("metaimage: line " + std::to_string(line_no) + ": bad number '" + tok +
                          "' for " + key);
    }
}

template <typename T>
void append_raw(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

/// Round half to even, clamp to the integral target range.
template <typename T>
T quantize(double v) {
    const double r = std::nearbyint(v);
    const double lo = double(std::numeric_limits<T>::min());
    const double hi = double(std::numeric_limits<T>::max());
    if (r < lo) return std::numeric_limits<T>::min();
    if (r > hi) return std::numeric_limits<T>::max();
    return T(r);
}

}  // namespace detail

/// Reads the MetaImage subset: text header (ObjectType=Image, NDims=3,
/// DimSize, ElementType, ElementSpacing, Offset, TransformMatrix,
/// ElementDataFile=LOCAL) followed by a little-endian raw payload.
/// Unknown keys are collected as warnings; keys that would change the
/// payload interpretation are rejected.
inline Volume read_metaimage(const std::string& path, std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("metaimage: cannot open '" + path + "'");

    Index3 dims{0, 0, 0};
    Vec3 spacing{1, 1, 1}, origin{0, 0, 0};
    Mat3 direction = Mat3::identity();
    bool have_dims = false, have_type = false, data_follows = false;
    MetaElementType etype = MetaElementType::met_double;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error("metaimage: line " + std::to_string(line_no) + ": expected 'Key = value'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto values = detail::split_ws(value);

        auto need = [&](std::size_t n) {
            if (values.size() != n)
                throw parse_error("metaimage: line " + std::to_string(line_no) + ": " + key +
                                  " expects " + std::to_string(n) + " values");
        };

        if (key == "ObjectType") {
            if (value != "Image")
                throw parse_error("metaimage: line " + std::to_string(line_no) +
                                  ": unsupported ObjectType '" + value + "'");
        } else if (key == "NDims") {
            if (value != "3")
                throw parse_error("metaimage: line " + std::to_string(line_no) +
                                  ": only NDims = 3 is supported");
        } else if (key == "DimSize") {
            need(3);
            for (int a = 0; a < 3; ++a) {
                const double d = detail::parse_double_or_throw(values[std::size_t(a)], line_no, key);
                if (d < 1 || d != std::floor(d))
                    throw parse_error("metaimage: line " + std::to_string(line_no) + ": bad DimSize");
                dims[a] = int(d);
            }
            have_dims = true;
        } else if (key == "ElementSpacing" || key == "ElementSize") {
            need(3);
            for (int a = 0; a < 3; ++a)
                spacing[a] = detail::parse_double_or_throw(values[std::size_t(a)], line_no, key);
        } else if (key == "Offset" || key == "Origin" || key == "Position") {
            need(3);
            for (int a = 0; a < 3; ++a)
                origin[a] = detail::parse_double_or_throw(values[std::size_t(a)], line_no, key);
        } else if (key == "TransformMatrix" || key == "Orientation" || key == "Rotation") {
            need(9);
            for (int i = 0; i < 9; ++i)
                direction.m[std::size_t(i)] =
                    detail::parse_double_or_throw(values[std::size_t(i)], line_no, key);
        } else if (key == "ElementType") {
            if (value == "MET_SHORT") etype = MetaElementType::met_short;
            else if (value == "MET_USHORT") etype = MetaElementType::met_ushort;
            else if (value == "MET_FLOAT") etype = MetaElementType::met_float;
            else if (value == "MET_DOUBLE") etype = MetaElementType::met_double;
            else
                throw parse_error("metaimage: line " + std::to_string(line_no) +
                                  ": unsupported ElementType '" + value + "'");
            have_type = true;
        } else if (key == "BinaryDataByteOrderMSB" || key == "ElementByteOrderMSB") {
            if (value == "True")
                throw parse_error("metaimage: line " + std::to_string(line_no) +
                                  ": big-endian payloads are not supported");
        } else if (key == "CompressedData") {
            if (value == "True")
                throw parse_error("metaimage: line " + std::to_string(line_no) +
                                  ": compressed payloads are not supported");
        } else if (key == "BinaryData") {
            if (value != "True")
                throw parse_error("metaimage: line " + std::to_string(line_no) +
                                  ": only binary payloads are supported");
        } else if (key == "ElementNumberOfChannels") {
            if (value != "1")
                throw parse_error("metaimage: line " + std::to_string(line_no) +
                                  ": multi-channel volumes are not supported");
        } else if (key == "ElementDataFile") {
            if (value != "LOCAL")
                throw parse_error("metaimage: line " + std::to_string(line_no) +
                                  ": only ElementDataFile = LOCAL is supported");
            data_follows = true;
            break;
        } else {
            if (warnings)
                warnings->push_back("metaimage: line " + std::to_string(line_no) + ": ignoring key '" +
                                    key + "'");
        }
    }

    if (!data_follows) throw parse_error("metaimage: missing ElementDataFile = LOCAL");
    if (!have_dims) throw parse_error("metaimage: missing DimSize");
    if (!have_type) throw parse_error("metaimage: missing ElementType");

    Volume v;
    v.dims = dims;
    v.spacing = spacing;
    v.origin = origin;
    v.direction = direction;
    v.validate_geometry();

    const std::size_t n = v.voxel_count();
    std::size_t elem_size = 8;
    switch (etype) {
        case MetaElementType::met_short:
        case MetaElementType::met_ushort: elem_size = 2; break;
        case MetaElementType::met_float: elem_size = 4; break;
        case MetaElementType::met_double: elem_size = 8; break;
    }
    std::vector<char> raw(n * elem_size);
    in.read(raw.data(), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size())
        throw parse_error("metaimage: truncated payload in '" + path + "': expected " +
                          std::to_string(raw.size()) + " bytes, got " + std::to_string(in.gcount()));

    v.data.resize(n);
    const char* src = raw.data();
    switch (etype) {
        case MetaElementType::met_short:
            for (std::size_t i = 0; i < n; ++i) {
                std::int16_t x;
                std::memcpy(&x, src + 2 * i, 2);
                v.data[i] = double(x);
            }
            break;
        case MetaElementType::met_ushort:
            for (std::size_t i = 0; i < n; ++i) {
                std::uint16_t x;
                std::memcpy(&x, src + 2 * i, 2);
                v.data[i] = double(x);
            }
            break;
        case MetaElementType::met_float:
            for (std::size_t i = 0; i < n; ++i) {
                float x;
                std::memcpy(&x, src + 4 * i, 4);
                v.data[i] = double(x);
            }
            break;
        case MetaElementType::met_double:
            std::memcpy(v.data.data(), src, n * 8);
            break;
    }
    v.validate();
    return v;
}

/// Writes the header + little-endian raw payload accepted by read_metaimage.
/// Integral element types use round-half-to-even with clamping to the type
/// range.
inline void write_metaimage(const Volume& v, const std::string& path, MetaElementType etype) {
    std::string payload;
    payload.reserve(v.voxel_count() * 8);
    switch (etype) {
        case MetaElementType::met_short:
            for (const double x : v.data) detail::append_raw(payload, detail::quantize<std::int16_t>(x));
            break;
        case MetaElementType::met_ushort:
            for (const double x : v.data) detail::append_raw(payload, detail::quantize<std::uint16_t>(x));
            break;
        case MetaElementType::met_float:
            for (const double x : v.data) detail::append_raw(payload, float(x));
            break;
        case MetaElementType::met_double:
            for (const double x : v.data) detail::append_raw(payload, x);
            break;
    }

    std::ostringstream h;
    h << "ObjectType = Image\n";
    h << "NDims = 3\n";
    h << "BinaryData = True\n";
    h << "BinaryDataByteOrderMSB = False\n";
    h << "DimSize = " << v.dims[0] << ' ' << v.dims[1] << ' ' << v.dims[2] << '\n';
    h << "ElementSpacing = " << detail::format_double(v.spacing[0]) << ' '
      << detail::format_double(v.spacing[1]) << ' ' << detail::format_double(v.spacing[2]) << '\n';
    h << "Offset = " << detail::format_double(v.origin[0]) << ' ' << detail::format_double(v.origin[1])
      << ' ' << detail::format_double(v.origin[2]) << '\n';
    h << "TransformMatrix =";
    for (int i = 0; i < 9; ++i) h << ' ' << detail::format_double(v.direction.m[std::size_t(i)]);
    h << '\n';
    h << "ElementType = " << to_string(etype) << '\n';
    h << "ElementDataFile = LOCAL\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("metaimage: cannot open '" + path + "' for writing");
    const std::string header = h.str();
    out.write(header.data(), std::streamsize(header.size()));
    out.write(payload.data(), std::streamsize(payload.size()));
    if (!out) throw io_error("metaimage: write failed for '" + path + "'");
}

}  // namespace voxalign

#endif  // VOXALIGN_METAIMAGE_HPP
