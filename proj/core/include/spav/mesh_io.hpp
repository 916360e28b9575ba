#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include "spav/pointcloud.hpp"

namespace spav {

// Parsed PLY payload. Faces empty means the file is a point cloud.
struct PlyFile {
    std::vector<Vec3f> positions;
    std::vector<Vec3f> normals;  // empty when the file has no nx/ny/nz
    std::vector<Vec3f> colors;   // uchar red/green/blue mapped to [0,1]
    std::vector<std::uint8_t> labels;
    std::vector<std::array<std::uint32_t, 3>> faces;
    std::vector<std::uint8_t> face_labels;
    // Scalar vertex properties beyond the standard set, by name.
    std::map<std::string, std::vector<double>> extra_vertex;

    bool is_mesh() const { return !faces.empty(); }

    // Throws MissingNormals when the file carries no normals.
    OrientedPointCloud to_cloud() const;
    TriangleMesh to_mesh() const;
};

// ascii or binary_little_endian PLY with x,y,z and optional nx,ny,nz,
// red,green,blue,label vertex properties. Throws ParseError with a
// line/byte offset on malformed input.
PlyFile read_ply(const std::filesystem::path& path);
PlyFile parse_ply(const std::string& content);

std::string ply_bytes(const TriangleMesh& mesh, bool binary = true);

void write_ply(const OrientedPointCloud& cloud, const std::filesystem::path& path,
               bool binary = true, std::span<const std::uint8_t> labels = {});
void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path, bool binary = true);

// v/vn/f only; labels and colors are dropped by the format.
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

}  // namespace spav
