#pragma once

#include <filesystem>
#include <iosfwd>

#include "meshflow/geometry.hpp"

namespace meshflow {

// ASCII OBJ (`v` / `f` records, 1-based indices) and OFF, triangles only.
// Coordinates are written with 9 significant digits.

Mesh read_obj(std::istream& in);
Mesh read_off(std::istream& in);
void write_obj(std::ostream& out, const Mesh& mesh);
void write_off(std::ostream& out, const Mesh& mesh);

/// Dispatches on the file extension (.obj / .off, case-insensitive).
Mesh read_mesh(const std::filesystem::path& path);
void write_mesh(const std::filesystem::path& path, const Mesh& mesh);

/// One `x y z` triple per line.
PointCloud read_xyz(std::istream& in);
void write_xyz(std::ostream& out, const PointCloud& cloud);
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace meshflow
