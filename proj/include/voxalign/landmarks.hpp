#ifndef VOXALIGN_LANDMARKS_HPP
#define VOXALIGN_LANDMARKS_HPP

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "voxalign/errors.hpp"
#include "voxalign/geometry.hpp"

namespace voxalign {

struct LandmarkPair {
    WorldPoint fixed;
    WorldPoint moving;
    std::string label;
};

struct LandmarkSet {
    std::vector<LandmarkPair> pairs;
};

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

inline std::string format_double_csv(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// CSV schema: header row "label,fx,fy,fz,mx,my,mz", one landmark pair per
/// following row, coordinates in world millimetres.
inline LandmarkSet read_landmarks_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("landmarks: cannot open '" + path + "'");

    LandmarkSet set;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = detail::split_csv_row(line);
        if (row == 1) {
            if (fields.size() != 7 || fields[0] != "label")
                throw parse_error("landmarks: row 1: expected header 'label,fx,fy,fz,mx,my,mz'");
            continue;
        }
        if (fields.size() != 7)
            throw parse_error("landmarks: row " + std::to_string(row) + ": expected 7 fields, got " +
                              std::to_string(fields.size()));
        LandmarkPair p;
        p.label = fields[0];
        double coords[6];
        for (int i = 0; i < 6; ++i) {
            try {
                std::size_t pos = 0;
                coords[i] = std::stod(fields[std::size_t(i + 1)], &pos);
                if (pos != fields[std::size_t(i + 1)].size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw parse_error("landmarks: row " + std::to_string(row) + ": bad number '" +
                                  fields[std::size_t(i + 1)] + "'");
            }
            if (!std::isfinite(coords[i]))
                throw parse_error("landmarks: row " + std::to_string(row) + ": non-finite coordinate");
        }
        p.fixed = {coords[0], coords[1], coords[2]};
        p.moving = {coords[3], coords[4], coords[5]};
        set.pairs.push_back(std::move(p));
    }
    if (set.pairs.empty()) throw parse_error("landmarks: no landmark rows in '" + path + "'");
    return set;
}

inline void write_landmarks_csv(const LandmarkSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("landmarks: cannot open '" + path + "' for writing");
    out << "label,fx,fy,fz,mx,my,mz\n";
    for (const auto& p : set.pairs) {
        out << p.label;
        for (int i = 0; i < 3; ++i) out << ',' << detail::format_double_csv(p.fixed[i]);
        for (int i = 0; i < 3; ++i) out << ',' << detail::format_double_csv(p.moving[i]);
        out << '\n';
    }
    if (!out) throw io_error("landmarks: write failed for '" + path + "'");
}

}  // namespace voxalign

#endif  // VOXALIGN_LANDMARKS_HPP
