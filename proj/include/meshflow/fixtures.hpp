#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "meshflow/geometry.hpp"

namespace meshflow::fixtures {

Mesh tetrahedron();
Mesh torus(std::size_t major_segments, std::size_t minor_segments,
           double major_radius = 0.35, double minor_radius = 0.12);

/// Names of the procedural stand-ins for the six manipulated objects
/// (scissors, hammer, orange, dice, brick, cleanser).
const std::vector<std::string>& desk_object_names();

/// Closed genus-0 surface built on a subdivided cube projected onto a
/// superellipsoid and then shaped per object. `subdivisions` is the number of
/// cells along each cube edge; the mesh has 6*s*s + 2 vertices. A vertex of
/// the s-mesh is bit-identical to the matching vertex of the 2s-mesh.
Mesh desk_object(std::string_view name, std::size_t subdivisions);

/// Number of cube subdivisions whose mesh vertex count is closest to `target`.
std::size_t subdivisions_for_vertex_count(std::size_t target);

}  // namespace meshflow::fixtures
