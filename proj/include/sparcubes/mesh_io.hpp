#pragma once

// Triangle mesh container plus OBJ / STL / PLY readers and writers.
//
// Loading never welds vertices: STL triangles keep their three private
// vertices and OBJ/PLY connectivity is taken as written. Degenerate faces
// (repeated indices, or area below 1e-12 once the mesh is scaled into the
// canonical frame) are dropped with a warning.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string_view>

#include "common.hpp"
#include "geometry.hpp"

namespace sparcubes {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    bool empty() const { return faces.empty(); }

    Aabb bounds() const {
        Aabb b;
        for (const Vec3& v : vertices) b.extend(v);
        return b;
    }

    /// Unit normal of face f (zero for a degenerate face).
    Vec3 face_normal(std::size_t f) const {
        const Face& t = faces[f];
        const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
        const double len = n.norm();
        return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
    }

    double face_area(std::size_t f) const {
        const Face& t = faces[f];
        return triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    }

    /// Appends another mesh, offsetting its indices.
    void append(const TriMesh& other) {
        const auto base = static_cast<std::uint32_t>(vertices.size());
        vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
        for (Face f : other.faces) {
            for (auto& i : f) i += base;
            faces.push_back(f);
        }
    }
};

/// p' = scale * p + translate maps the mesh into the canonical [-0.95, 0.95]^3 frame.
struct NormTransform {
    double scale = 1.0;
    Vec3 translate = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * p + translate; }
    Vec3 invert(const Vec3& p) const { return (p - translate) / scale; }
};

enum class MeshFormat { Obj, Stl, StlAscii, Ply, PlyAscii };

inline constexpr double kCanonicalHalfExtent = 0.95;
inline constexpr double kDegenerateArea = 1e-12;

inline MeshFormat format_from_path(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".obj") return MeshFormat::Obj;
    if (ext == ".stl") return MeshFormat::Stl;
    if (ext == ".ply") return MeshFormat::Ply;
    throw Error("unsupported mesh format: " + path.string());
}

inline MeshFormat parse_format(std::string_view name) {
    if (name == "obj") return MeshFormat::Obj;
    if (name == "stl") return MeshFormat::Stl;
    if (name == "stl-ascii") return MeshFormat::StlAscii;
    if (name == "ply") return MeshFormat::Ply;
    if (name == "ply-ascii") return MeshFormat::PlyAscii;
    throw Error("unknown mesh format name: " + std::string(name));
}

/// Throws if any face index is out of range or any coordinate is non-finite.
inline void check_mesh(const TriMesh& mesh) {
    for (const Vec3& v : mesh.vertices)
        if (!v.allFinite()) throw Error("mesh has a non-finite vertex coordinate");
    for (const Face& f : mesh.faces)
        for (auto i : f)
            if (i >= mesh.vertices.size()) throw Error("face index out of range");
}

/// Scale factor normalize() would apply; 0 for a zero-extent mesh.
inline double canonical_scale(const TriMesh& mesh) {
    const Aabb b = mesh.bounds();
    if (b.empty()) return 0.0;
    const double longest = b.extent().maxCoeff();
    return longest > 0.0 ? 2.0 * kCanonicalHalfExtent / longest : 0.0;
}

/// Drops faces with repeated indices or (canonical-frame) area below 1e-12.
/// Returns the number of dropped faces.
inline std::size_t drop_degenerate_faces(TriMesh& mesh, Diagnostics* diag = nullptr) {
    check_mesh(mesh);
    const double s = canonical_scale(mesh);
    const double s2 = s > 0.0 ? s * s : 1.0;
    std::vector<Face> kept;
    kept.reserve(mesh.faces.size());
    std::size_t repeated = 0, tiny = 0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& t = mesh.faces[f];
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
            ++repeated;
            continue;
        }
        if (mesh.face_area(f) * s2 < kDegenerateArea) {
            ++tiny;
            continue;
        }
        kept.push_back(t);
    }
    if (repeated) warn(diag, "dropped " + std::to_string(repeated) + " face(s) with repeated vertex indices");
    if (tiny) warn(diag, "dropped " + std::to_string(tiny) + " zero-area face(s)");
    mesh.faces = std::move(kept);
    return repeated + tiny;
}

/// Removes vertices no face references, keeping the relative order of the rest.
inline TriMesh compact_vertices(const TriMesh& mesh) {
    std::vector<std::uint32_t> remap(mesh.vertices.size(), UINT32_MAX);
    for (const Face& f : mesh.faces)
        for (auto v : f) remap[v] = 0;
    TriMesh out;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
        if (remap[v] == 0) {
            remap[v] = static_cast<std::uint32_t>(out.vertices.size());
            out.vertices.push_back(mesh.vertices[v]);
        }
    out.faces.reserve(mesh.faces.size());
    for (Face f : mesh.faces) {
        for (auto& v : f) v = remap[v];
        out.faces.push_back(f);
    }
    return out;
}

/// Merges vertices with bit-identical coordinates. Not applied on load.
inline TriMesh weld_vertices(const TriMesh& mesh) {
    std::map<std::array<double, 3>, std::uint32_t> ids;
    TriMesh out;
    std::vector<std::uint32_t> remap(mesh.vertices.size());
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        const Vec3& p = mesh.vertices[v];
        auto [it, fresh] = ids.emplace(std::array<double, 3>{p[0], p[1], p[2]}, static_cast<std::uint32_t>(out.vertices.size()));
        if (fresh) out.vertices.push_back(p);
        remap[v] = it->second;
    }
    out.faces.reserve(mesh.faces.size());
    for (Face f : mesh.faces) {
        for (auto& i : f) i = remap[i];
        out.faces.push_back(f);
    }
    return out;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open mesh file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline bool next_token(std::string_view& s, std::string_view& tok) {
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i == s.size()) {
        s = {};
        return false;
    }
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    tok = s.substr(i, j - i);
    s.remove_prefix(j);
    return true;
}

inline double to_double(std::string_view tok) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc()) throw Error("malformed number: " + std::string(tok));
    return v;
}

inline long long to_int(std::string_view tok) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc()) throw Error("malformed integer: " + std::string(tok));
    return v;
}

inline TriMesh parse_obj(const std::string& text) {
    TriMesh mesh;
    std::string_view rest(text);
    std::vector<std::uint32_t> poly;
    while (!rest.empty()) {
        const std::size_t eol = rest.find('\n');
        std::string_view line = rest.substr(0, eol);
        rest = eol == std::string_view::npos ? std::string_view{} : rest.substr(eol + 1);
        std::string_view tok;
        if (!next_token(line, tok)) continue;
        if (tok == "v") {
            Vec3 p;
            for (int k = 0; k < 3; ++k) {
                if (!next_token(line, tok)) throw Error("OBJ vertex with fewer than 3 coordinates");
                p[k] = to_double(tok);
            }
            mesh.vertices.push_back(p);
        } else if (tok == "f") {
            poly.clear();
            while (next_token(line, tok)) {
                const std::string_view idx = tok.substr(0, tok.find('/'));
                long long i = to_int(idx);
                if (i < 0) i += static_cast<long long>(mesh.vertices.size()) + 1;
                if (i < 1) throw Error("OBJ face index out of range");
                poly.push_back(static_cast<std::uint32_t>(i - 1));
            }
            if (poly.size() < 3) throw Error("OBJ face with fewer than 3 vertices");
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
        }
    }
    return mesh;
}

template <class T>
T read_le(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        std::reverse(b, b + sizeof(T));
    }
    return v;
}

template <class T>
void write_le(std::ostream& out, T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        std::reverse(b, b + sizeof(T));
    }
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline TriMesh parse_stl(const std::string& data) {
    TriMesh mesh;
    if (data.size() >= 84) {
        const auto n = read_le<std::uint32_t>(data.data() + 80);
        if (data.size() == 84 + 50ull * n) {
            mesh.vertices.reserve(3ull * n);
            mesh.faces.reserve(n);
            for (std::uint32_t t = 0; t < n; ++t) {
                const char* rec = data.data() + 84 + 50ull * t + 12;
                for (int k = 0; k < 3; ++k) {
                    Vec3 p;
                    for (int c = 0; c < 3; ++c) p[c] = read_le<float>(rec + 12 * k + 4 * c);
                    mesh.vertices.push_back(p);
                }
                const auto base = static_cast<std::uint32_t>(3 * t);
                mesh.faces.push_back({base, base + 1, base + 2});
            }
            return mesh;
        }
    }
    std::string_view rest(data), tok;
    if (!next_token(rest, tok) || tok != "solid") throw Error("STL is neither binary nor ASCII");
    std::vector<Vec3> corners;
    while (next_token(rest, tok)) {
        if (tok == "vertex") {
            Vec3 p;
            for (int k = 0; k < 3; ++k) {
                if (!next_token(rest, tok)) throw Error("truncated ASCII STL vertex");
                p[k] = to_double(tok);
            }
            corners.push_back(p);
        } else if (tok == "endfacet") {
            if (corners.size() != 3) throw Error("ASCII STL facet without exactly 3 vertices");
            const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
            mesh.vertices.insert(mesh.vertices.end(), corners.begin(), corners.end());
            mesh.faces.push_back({base, base + 1, base + 2});
            corners.clear();
        }
    }
    return mesh;
}

struct PlyProperty {
    std::string name;
    std::string type;
    bool is_list = false;
    std::string count_type;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

inline std::size_t ply_type_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    throw Error("unknown PLY property type: " + t);
}

inline double ply_read_binary(const char* p, const std::string& t) {
    if (t == "char" || t == "int8") return read_le<std::int8_t>(p);
    if (t == "uchar" || t == "uint8") return read_le<std::uint8_t>(p);
    if (t == "short" || t == "int16") return read_le<std::int16_t>(p);
    if (t == "ushort" || t == "uint16") return read_le<std::uint16_t>(p);
    if (t == "int" || t == "int32") return read_le<std::int32_t>(p);
    if (t == "uint" || t == "uint32") return read_le<std::uint32_t>(p);
    if (t == "float" || t == "float32") return read_le<float>(p);
    return read_le<double>(p);
}

inline TriMesh parse_ply(const std::string& data) {
    const std::size_t end_header = data.find("end_header");
    if (data.rfind("ply", 0) != 0 || end_header == std::string::npos) throw Error("not a PLY file");
    std::size_t body = data.find('\n', end_header);
    if (body == std::string::npos) throw Error("truncated PLY header");
    ++body;

    std::istringstream header(data.substr(0, end_header));
    std::string line, format;
    std::vector<PlyElement> elements;
    while (std::getline(header, line)) {
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "format") {
            ls >> format;
        } else if (kw == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (kw == "property") {
            if (elements.empty()) throw Error("PLY property before element");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                p.is_list = true;
                ls >> p.count_type >> p.type >> p.name;
            } else {
                p.type = t;
                ls >> p.name;
            }
            elements.back().props.push_back(p);
        }
    }
    const bool ascii = format == "ascii";
    if (!ascii && format != "binary_little_endian") throw Error("unsupported PLY format: " + format);

    TriMesh mesh;
    std::string_view text(data);
    text.remove_prefix(body);
    std::size_t pos = body;
    std::vector<double> list;
    for (const PlyElement& e : elements) {
        const bool is_vertex = e.name == "vertex";
        const bool is_face = e.name == "face";
        for (std::size_t r = 0; r < e.count; ++r) {
            Vec3 p = Vec3::Zero();
            for (const PlyProperty& prop : e.props) {
                if (prop.is_list) {
                    std::size_t n = 0;
                    list.clear();
                    if (ascii) {
                        std::string_view tok;
                        if (!next_token(text, tok)) throw Error("truncated PLY body");
                        n = static_cast<std::size_t>(to_int(tok));
                        for (std::size_t k = 0; k < n; ++k) {
                            if (!next_token(text, tok)) throw Error("truncated PLY body");
                            list.push_back(to_double(tok));
                        }
                    } else {
                        const std::size_t cs = ply_type_size(prop.count_type);
                        if (pos + cs > data.size()) throw Error("truncated PLY body");
                        n = static_cast<std::size_t>(ply_read_binary(data.data() + pos, prop.count_type));
                        pos += cs;
                        const std::size_t s = ply_type_size(prop.type);
                        if (pos + n * s > data.size()) throw Error("truncated PLY body");
                        for (std::size_t k = 0; k < n; ++k, pos += s)
                            list.push_back(ply_read_binary(data.data() + pos, prop.type));
                    }
                    if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
                        if (n < 3) throw Error("PLY face with fewer than 3 vertices");
                        for (std::size_t k = 1; k + 1 < n; ++k)
                            mesh.faces.push_back({static_cast<std::uint32_t>(list[0]),
                                                  static_cast<std::uint32_t>(list[k]),
                                                  static_cast<std::uint32_t>(list[k + 1])});
                    }
                } else {
                    double v = 0.0;
                    if (ascii) {
                        std::string_view tok;
                        if (!next_token(text, tok)) throw Error("truncated PLY body");
                        v = to_double(tok);
                    } else {
                        const std::size_t s = ply_type_size(prop.type);
                        if (pos + s > data.size()) throw Error("truncated PLY body");
                        v = ply_read_binary(data.data() + pos, prop.type);
                        pos += s;
                    }
                    if (is_vertex) {
                        if (prop.name == "x") p[0] = v;
                        else if (prop.name == "y") p[1] = v;
                        else if (prop.name == "z") p[2] = v;
                    }
                }
            }
            if (is_vertex) mesh.vertices.push_back(p);
        }
    }
    return mesh;
}

} // namespace detail

/// Loads and validates an OBJ, STL or PLY mesh. Throws Error when the file
/// cannot be read, the format is unsupported, or no faces survive validation.
inline TriMesh load_mesh(const std::filesystem::path& path, Diagnostics* diag = nullptr) {
    const MeshFormat fmt = format_from_path(path);
    const std::string data = detail::read_file(path);
    TriMesh mesh;
    switch (fmt) {
    case MeshFormat::Obj: mesh = detail::parse_obj(data); break;
    case MeshFormat::Stl:
    case MeshFormat::StlAscii: mesh = detail::parse_stl(data); break;
    case MeshFormat::Ply:
    case MeshFormat::PlyAscii: mesh = detail::parse_ply(data); break;
    }
    drop_degenerate_faces(mesh, diag);
    if (mesh.faces.empty()) throw Error("mesh has no valid faces: " + path.string());
    return mesh;
}

inline void save_mesh(const TriMesh& mesh, const std::filesystem::path& path, MeshFormat fmt = MeshFormat::Ply) {
    if (mesh.faces.empty()) throw Error("refusing to save a mesh without faces");
    check_mesh(mesh);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());

    switch (fmt) {
    case MeshFormat::Obj: {
        out << std::setprecision(9);
        for (const Vec3& v : mesh.vertices) out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
        for (const Face& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
        break;
    }
    case MeshFormat::Stl: {
        char header[80] = "sparcubes binary STL";
        out.write(header, 80);
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(mesh.faces.size()));
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            const Vec3 n = mesh.face_normal(f);
            for (int c = 0; c < 3; ++c) detail::write_le<float>(out, static_cast<float>(n[c]));
            for (auto i : mesh.faces[f])
                for (int c = 0; c < 3; ++c) detail::write_le<float>(out, static_cast<float>(mesh.vertices[i][c]));
            detail::write_le<std::uint16_t>(out, 0);
        }
        break;
    }
    case MeshFormat::StlAscii: {
        out << std::setprecision(9) << "solid sparcubes\n";
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            const Vec3 n = mesh.face_normal(f);
            out << "facet normal " << n[0] << ' ' << n[1] << ' ' << n[2] << "\n outer loop\n";
            for (auto i : mesh.faces[f]) {
                const Vec3& v = mesh.vertices[i];
                out << "  vertex " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
            }
            out << " endloop\nendfacet\n";
        }
        out << "endsolid sparcubes\n";
        break;
    }
    case MeshFormat::Ply:
    case MeshFormat::PlyAscii: {
        const bool ascii = fmt == MeshFormat::PlyAscii;
        out << "ply\nformat " << (ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
            << "element vertex " << mesh.vertices.size() << "\n"
            << "property float x\nproperty float y\nproperty float z\n"
            << "element face " << mesh.faces.size() << "\n"
            << "property list uchar int vertex_indices\nend_header\n";
        if (ascii) {
            out << std::setprecision(9);
            for (const Vec3& v : mesh.vertices) out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
            for (const Face& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
        } else {
            for (const Vec3& v : mesh.vertices)
                for (int c = 0; c < 3; ++c) detail::write_le<float>(out, static_cast<float>(v[c]));
            for (const Face& f : mesh.faces) {
                detail::write_le<std::uint8_t>(out, 3);
                for (auto i : f) detail::write_le<std::int32_t>(out, static_cast<std::int32_t>(i));
            }
        }
        break;
    }
    }
    if (!out) throw Error("failed writing mesh: " + path.string());
}

/// Uniformly scales and centers the mesh so its longest bbox axis spans [-0.95, 0.95].
inline std::pair<TriMesh, NormTransform> normalize(const TriMesh& mesh) {
    if (mesh.vertices.empty()) throw Error("cannot normalize an empty mesh");
    const Aabb b = mesh.bounds();
    const double longest = b.extent().maxCoeff();
    if (!(longest > 0.0)) throw Error("mesh bounding box has zero extent");
    NormTransform xf;
    xf.scale = 2.0 * kCanonicalHalfExtent / longest;
    xf.translate = -xf.scale * b.center();
    TriMesh out = mesh;
    for (Vec3& v : out.vertices) v = xf.apply(v);
    return {std::move(out), xf};
}

inline TriMesh denormalize(const TriMesh& mesh, const NormTransform& xf) {
    TriMesh out = mesh;
    for (Vec3& v : out.vertices) v = xf.invert(v);
    return out;
}

} // namespace sparcubes
