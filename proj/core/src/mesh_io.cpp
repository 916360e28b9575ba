#include "spav/mesh_io.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace spav {

namespace {

enum class PlyType { Char, UChar, Short, UShort, Int, UInt, Float, Double };

std::size_t type_size(PlyType t) {
    switch (t) {
        case PlyType::Char: case PlyType::UChar: return 1;
        case PlyType::Short: case PlyType::UShort: return 2;
        case PlyType::Int: case PlyType::UInt: case PlyType::Float: return 4;
        case PlyType::Double: return 8;
    }
    return 0;
}

bool parse_type(const std::string& s, PlyType& out) {
    static const std::map<std::string, PlyType> table = {
        {"char", PlyType::Char},     {"int8", PlyType::Char},
        {"uchar", PlyType::UChar},   {"uint8", PlyType::UChar},
        {"short", PlyType::Short},   {"int16", PlyType::Short},
        {"ushort", PlyType::UShort}, {"uint16", PlyType::UShort},
        {"int", PlyType::Int},       {"int32", PlyType::Int},
        {"uint", PlyType::UInt},     {"uint32", PlyType::UInt},
        {"float", PlyType::Float},   {"float32", PlyType::Float},
        {"double", PlyType::Double}, {"float64", PlyType::Double},
    };
    auto it = table.find(s);
    if (it == table.end()) return false;
    out = it->second;
    return true;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::Float;
    bool is_list = false;
    PlyType count_type = PlyType::UChar;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    // Parsed scalar columns by property name; list columns kept separately.
    std::map<std::string, std::vector<double>> scalars;
    std::map<std::string, std::vector<std::vector<double>>> lists;
};

double read_binary_value(const char*& p, const char* base, const char* end, PlyType t) {
    if (p + type_size(t) > end)
        throw ParseError("ply: unexpected end of binary payload at byte offset " +
                         std::to_string(static_cast<std::size_t>(p - base)));
    double v = 0;
    switch (t) {
        case PlyType::Char: { std::int8_t x; std::memcpy(&x, p, 1); v = x; break; }
        case PlyType::UChar: { std::uint8_t x; std::memcpy(&x, p, 1); v = x; break; }
        case PlyType::Short: { std::int16_t x; std::memcpy(&x, p, 2); v = x; break; }
        case PlyType::UShort: { std::uint16_t x; std::memcpy(&x, p, 2); v = x; break; }
        case PlyType::Int: { std::int32_t x; std::memcpy(&x, p, 4); v = x; break; }
        case PlyType::UInt: { std::uint32_t x; std::memcpy(&x, p, 4); v = x; break; }
        case PlyType::Float: { float x; std::memcpy(&x, p, 4); v = x; break; }
        case PlyType::Double: { double x; std::memcpy(&x, p, 8); v = x; break; }
    }
    p += type_size(t);
    return v;
}

void append_binary_value(std::string& out, PlyType t, double v) {
    char buf[8];
    std::size_t n = type_size(t);
    switch (t) {
        case PlyType::Char: { std::int8_t x = static_cast<std::int8_t>(v); std::memcpy(buf, &x, 1); break; }
        case PlyType::UChar: { std::uint8_t x = static_cast<std::uint8_t>(v); std::memcpy(buf, &x, 1); break; }
        case PlyType::Short: { std::int16_t x = static_cast<std::int16_t>(v); std::memcpy(buf, &x, 2); break; }
        case PlyType::UShort: { std::uint16_t x = static_cast<std::uint16_t>(v); std::memcpy(buf, &x, 2); break; }
        case PlyType::Int: { std::int32_t x = static_cast<std::int32_t>(v); std::memcpy(buf, &x, 4); break; }
        case PlyType::UInt: { std::uint32_t x = static_cast<std::uint32_t>(v); std::memcpy(buf, &x, 4); break; }
        case PlyType::Float: { float x = static_cast<float>(v); std::memcpy(buf, &x, 4); break; }
        case PlyType::Double: { std::memcpy(buf, &v, 8); break; }
    }
    out.append(buf, n);
}

}  // namespace

PlyFile read_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_ply(content);
}

PlyFile parse_ply(const std::string& content) {
    // --- header ---
    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_line = [&](std::string& line) {
        if (pos >= content.size()) throw ParseError("ply: unexpected end of header at line " + std::to_string(line_no));
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        line = content.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = eol + 1;
        ++line_no;
    };

    std::string line;
    next_line(line);
    if (line != "ply") throw ParseError("ply: missing magic at line 1");

    bool binary = false;
    bool format_seen = false;
    std::vector<PlyElement> elements;

    for (;;) {
        next_line(line);
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "comment" || tok.empty()) continue;
        if (tok == "format") {
            std::string fmt, ver;
            ls >> fmt >> ver;
            if (fmt == "ascii") binary = false;
            else if (fmt == "binary_little_endian") binary = true;
            else throw ParseError("ply: unsupported format '" + fmt + "' at line " + std::to_string(line_no));
            format_seen = true;
        } else if (tok == "element") {
            PlyElement el;
            if (!(ls >> el.name >> el.count))
                throw ParseError("ply: malformed element at line " + std::to_string(line_no));
            elements.push_back(std::move(el));
        } else if (tok == "property") {
            if (elements.empty()) throw ParseError("ply: property before element at line " + std::to_string(line_no));
            PlyProperty prop;
            std::string t1;
            ls >> t1;
            if (t1 == "list") {
                std::string ct, vt;
                ls >> ct >> vt >> prop.name;
                prop.is_list = true;
                if (!parse_type(ct, prop.count_type) || !parse_type(vt, prop.type))
                    throw ParseError("ply: unknown list types at line " + std::to_string(line_no));
            } else {
                ls >> prop.name;
                if (!parse_type(t1, prop.type))
                    throw ParseError("ply: unknown type '" + t1 + "' at line " + std::to_string(line_no));
            }
            if (prop.name.empty()) throw ParseError("ply: unnamed property at line " + std::to_string(line_no));
            elements.back().properties.push_back(std::move(prop));
        } else if (tok == "end_header") {
            break;
        } else {
            throw ParseError("ply: unknown header token '" + tok + "' at line " + std::to_string(line_no));
        }
    }
    if (!format_seen) throw ParseError("ply: no format line in header");

    // --- payload ---
    for (auto& el : elements) {
        for (const auto& p : el.properties) {
            if (p.is_list) el.lists[p.name].reserve(el.count);
            else el.scalars[p.name].reserve(el.count);
        }
        if (binary) {
            const char* base = content.data();
            const char* p = base + pos;
            const char* end = base + content.size();
            for (std::size_t i = 0; i < el.count; ++i) {
                for (const auto& prop : el.properties) {
                    if (prop.is_list) {
                        const double cnt = read_binary_value(p, base, end, prop.count_type);
                        std::vector<double> vals(static_cast<std::size_t>(cnt));
                        for (auto& v : vals) v = read_binary_value(p, base, end, prop.type);
                        el.lists[prop.name].push_back(std::move(vals));
                    } else {
                        el.scalars[prop.name].push_back(read_binary_value(p, base, end, prop.type));
                    }
                }
            }
            pos = static_cast<std::size_t>(p - content.data());
        } else {
            for (std::size_t i = 0; i < el.count; ++i) {
                next_line(line);
                std::istringstream ls(line);
                for (const auto& prop : el.properties) {
                    if (prop.is_list) {
                        std::size_t cnt = 0;
                        if (!(ls >> cnt))
                            throw ParseError("ply: bad list count in element '" + el.name + "' at line " +
                                             std::to_string(line_no));
                        std::vector<double> vals(cnt);
                        for (auto& v : vals)
                            if (!(ls >> v))
                                throw ParseError("ply: truncated list row at line " + std::to_string(line_no));
                        el.lists[prop.name].push_back(std::move(vals));
                    } else {
                        double v;
                        if (!(ls >> v))
                            throw ParseError("ply: expected " + std::to_string(el.properties.size()) +
                                             " values in element '" + el.name + "' at line " + std::to_string(line_no));
                        el.scalars[prop.name].push_back(v);
                    }
                }
            }
        }
    }

    // --- assemble ---
    PlyFile out;
    for (auto& el : elements) {
        if (el.name == "vertex") {
            auto col = [&](const char* name) -> const std::vector<double>* {
                auto it = el.scalars.find(name);
                return it == el.scalars.end() ? nullptr : &it->second;
            };
            const auto *x = col("x"), *y = col("y"), *z = col("z");
            if (!x || !y || !z) throw ParseError("ply: vertex element lacks x/y/z");
            out.positions.resize(el.count);
            for (std::size_t i = 0; i < el.count; ++i)
                out.positions[i] = Vec3f{static_cast<float>((*x)[i]), static_cast<float>((*y)[i]),
                                         static_cast<float>((*z)[i])};
            const auto *nx = col("nx"), *ny = col("ny"), *nz = col("nz");
            if (nx && ny && nz) {
                out.normals.resize(el.count);
                for (std::size_t i = 0; i < el.count; ++i)
                    out.normals[i] = Vec3f{static_cast<float>((*nx)[i]), static_cast<float>((*ny)[i]),
                                           static_cast<float>((*nz)[i])};
            }
            const auto *r = col("red"), *g = col("green"), *b = col("blue");
            if (r && g && b) {
                // uchar convention: 0..255 mapped into [0,1]
                out.colors.resize(el.count);
                for (std::size_t i = 0; i < el.count; ++i)
                    out.colors[i] = Vec3f{static_cast<float>((*r)[i] / 255.0), static_cast<float>((*g)[i] / 255.0),
                                          static_cast<float>((*b)[i] / 255.0)};
            }
            if (const auto* lab = col("label")) {
                out.labels.resize(el.count);
                for (std::size_t i = 0; i < el.count; ++i) out.labels[i] = static_cast<std::uint8_t>((*lab)[i]);
            }
            for (auto& [name, values] : el.scalars) {
                static const char* known[] = {"x", "y", "z", "nx", "ny", "nz", "red", "green", "blue", "label"};
                bool is_known = false;
                for (const char* k : known)
                    if (name == k) is_known = true;
                if (!is_known) out.extra_vertex[name] = std::move(values);
            }
        } else if (el.name == "face") {
            auto it = el.lists.find("vertex_indices");
            if (it == el.lists.end()) it = el.lists.find("vertex_index");
            if (it == el.lists.end()) throw ParseError("ply: face element lacks vertex_indices");
            out.faces.reserve(el.count);
            for (const auto& row : it->second) {
                if (row.size() != 3)
                    throw ParseError("ply: only triangle faces supported, got a face with " +
                                     std::to_string(row.size()) + " vertices");
                out.faces.push_back({static_cast<std::uint32_t>(row[0]), static_cast<std::uint32_t>(row[1]),
                                     static_cast<std::uint32_t>(row[2])});
            }
            if (auto lab = el.scalars.find("label"); lab != el.scalars.end()) {
                out.face_labels.resize(el.count);
                for (std::size_t i = 0; i < el.count; ++i)
                    out.face_labels[i] = static_cast<std::uint8_t>(lab->second[i]);
            }
        }
        // other elements are ignored
    }
    return out;
}

OrientedPointCloud PlyFile::to_cloud() const {
    if (normals.empty())
        throw MissingNormals("ply payload has no normals but an oriented cloud was requested");
    OrientedPointCloud c;
    c.positions = positions;
    c.normals = normals;
    c.colors = colors;
    return c;
}

TriangleMesh PlyFile::to_mesh() const {
    TriangleMesh m;
    m.vertices = positions;
    m.faces = faces;
    m.vertex_colors = colors;
    m.face_labels = face_labels;
    return m;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write to " + path.string());
}

std::string ascii_float(float v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
    return buf;
}

}  // namespace

void write_ply(const OrientedPointCloud& cloud, const std::filesystem::path& path, bool binary,
               std::span<const std::uint8_t> labels) {
    if (!labels.empty() && labels.size() != cloud.size())
        throw DimensionMismatch("write_ply: label count mismatch");
    std::string out;
    out += "ply\n";
    out += binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
    out += "element vertex " + std::to_string(cloud.size()) + "\n";
    out += "property float x\nproperty float y\nproperty float z\n";
    out += "property float nx\nproperty float ny\nproperty float nz\n";
    if (cloud.has_colors()) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    if (!labels.empty()) out += "property uchar label\n";
    out += "end_header\n";

    auto to_byte = [](float c) {
        const float v = c < 0.f ? 0.f : (c > 1.f ? 1.f : c);
        return static_cast<double>(static_cast<int>(v * 255.0f + 0.5f));
    };
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3f p = cloud.positions[i], n = cloud.normals[i];
        if (binary) {
            for (float v : {p.x, p.y, p.z, n.x, n.y, n.z}) append_binary_value(out, PlyType::Float, v);
            if (cloud.has_colors())
                for (int c = 0; c < 3; ++c) append_binary_value(out, PlyType::UChar, to_byte(cloud.colors[i][c]));
            if (!labels.empty()) append_binary_value(out, PlyType::UChar, labels[i]);
        } else {
            out += ascii_float(p.x) + " " + ascii_float(p.y) + " " + ascii_float(p.z) + " " +
                   ascii_float(n.x) + " " + ascii_float(n.y) + " " + ascii_float(n.z);
            if (cloud.has_colors())
                for (int c = 0; c < 3; ++c) out += " " + std::to_string(static_cast<int>(to_byte(cloud.colors[i][c])));
            if (!labels.empty()) out += " " + std::to_string(static_cast<int>(labels[i]));
            out += "\n";
        }
    }
    write_file(path, out);
}

void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path, bool binary) {
    write_file(path, ply_bytes(mesh, binary));
}

std::string ply_bytes(const TriangleMesh& mesh, bool binary) {
    std::string out;
    out += "ply\n";
    out += binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
    out += "element vertex " + std::to_string(mesh.vertex_count()) + "\n";
    out += "property float x\nproperty float y\nproperty float z\n";
    if (mesh.has_vertex_colors()) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out += "element face " + std::to_string(mesh.face_count()) + "\n";
    out += "property list uchar int vertex_indices\n";
    if (mesh.has_face_labels()) out += "property uchar label\n";
    out += "end_header\n";

    auto to_byte = [](float c) {
        const float v = c < 0.f ? 0.f : (c > 1.f ? 1.f : c);
        return static_cast<double>(static_cast<int>(v * 255.0f + 0.5f));
    };
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
        const Vec3f p = mesh.vertices[i];
        if (binary) {
            for (float v : {p.x, p.y, p.z}) append_binary_value(out, PlyType::Float, v);
            if (mesh.has_vertex_colors())
                for (int c = 0; c < 3; ++c) append_binary_value(out, PlyType::UChar, to_byte(mesh.vertex_colors[i][c]));
        } else {
            out += ascii_float(p.x) + " " + ascii_float(p.y) + " " + ascii_float(p.z);
            if (mesh.has_vertex_colors())
                for (int c = 0; c < 3; ++c) out += " " + std::to_string(static_cast<int>(to_byte(mesh.vertex_colors[i][c])));
            out += "\n";
        }
    }
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto& t = mesh.faces[f];
        if (binary) {
            append_binary_value(out, PlyType::UChar, 3);
            for (int e = 0; e < 3; ++e) append_binary_value(out, PlyType::Int, t[e]);
            if (mesh.has_face_labels()) append_binary_value(out, PlyType::UChar, mesh.face_labels[f]);
        } else {
            out += "3 " + std::to_string(t[0]) + " " + std::to_string(t[1]) + " " + std::to_string(t[2]);
            if (mesh.has_face_labels()) out += " " + std::to_string(static_cast<int>(mesh.face_labels[f]));
            out += "\n";
        }
    }
    return out;
}

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
    std::string out;
    out.reserve(mesh.vertex_count() * 32 + mesh.face_count() * 24);
    for (const auto& v : mesh.vertices)
        out += "v " + ascii_float(v.x) + " " + ascii_float(v.y) + " " + ascii_float(v.z) + "\n";
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const Vec3d n = mesh.face_normal(f);
        out += "vn " + ascii_float(static_cast<float>(n.x)) + " " + ascii_float(static_cast<float>(n.y)) + " " +
               ascii_float(static_cast<float>(n.z)) + "\n";
    }
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto& t = mesh.faces[f];
        const std::string ni = std::to_string(f + 1);
        out += "f " + std::to_string(t[0] + 1) + "//" + ni + " " + std::to_string(t[1] + 1) + "//" + ni + " " +
               std::to_string(t[2] + 1) + "//" + ni + "\n";
    }
    write_file(path, out);
}

}  // namespace spav
