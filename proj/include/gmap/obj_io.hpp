#pragma once

#include "gmap/mesh.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

namespace gmap {

namespace detail {

inline std::string obj_location(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line);
}

// Parses the vertex index of an OBJ face token ("7", "7/2", "7//3", "-1").
inline int parse_face_index(std::string_view token, std::size_t n_vertices, const std::string& where) {
    const auto slash = token.find('/');
    const std::string_view head = token.substr(0, slash);
    long value = 0;
    const auto res = std::from_chars(head.data(), head.data() + head.size(), value);
    if (res.ec != std::errc{} || res.ptr != head.data() + head.size() || value == 0)
        throw FormatError(where + ": bad face index '" + std::string(token) + "'");
    const long n = static_cast<long>(n_vertices);
    const long idx = value > 0 ? value - 1 : n + value;
    if (idx < 0 || idx >= n)
        throw FormatError(where + ": face index " + std::to_string(value) +
                          " out of range (have " + std::to_string(n) + " vertices)");
    return static_cast<int>(idx);
}

}  // namespace detail

/// Reads `v` and `f` records. Polygons are fan-split from their first corner; every other record
/// type (vt, vn, g, usemtl, ...) is ignored.
inline Mesh parse_obj(std::istream& in, const std::string& source = "<obj>") {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw FormatError(detail::obj_location(source, line_no) + ": malformed vertex record");
            vertices.push_back(p);
        } else if (tag == "f") {
            const std::string where = detail::obj_location(source, line_no);
            std::vector<int> poly;
            std::string tok;
            while (ls >> tok) poly.push_back(detail::parse_face_index(tok, vertices.size(), where));
            if (poly.size() < 3)
                throw FormatError(where + ": face with " + std::to_string(poly.size()) +
                                  " corners cannot be triangulated");
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                Triangle t{poly[0], poly[k], poly[k + 1]};
                if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
                    throw FormatError(where + ": degenerate face repeats a vertex");
                triangles.push_back(t);
            }
        }
    }
    if (vertices.empty()) throw FormatError(source + ": no vertex records");
    return Mesh(std::move(vertices), std::move(triangles));
}

inline Mesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    return parse_obj(in, path.string());
}

/// Writes positions with `precision` significant digits (6 by default) and 1-based faces.
inline void write_obj(std::ostream& out, const Mesh& mesh, int precision = 6) {
    out << std::setprecision(precision);
    for (const auto& v : mesh.vertices()) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& t : mesh.triangles())
        out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

inline void save_obj(const std::filesystem::path& path, const Mesh& mesh, int precision = 6) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    write_obj(out, mesh, precision);
    if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace gmap
