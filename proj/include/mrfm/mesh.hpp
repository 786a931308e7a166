#pragma once

#include "mrfm/common.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace mrfm {

using Triangle = std::array<int, 3>;

/// Validated triangle mesh with barycentric (one-third) lumped vertex areas.
///
/// Construct through `TriMesh::build`, which rejects out-of-range indices,
/// zero-area triangles, isolated vertices and multi-component meshes.
class TriMesh {
 public:
  TriMesh() = default;

  static TriMesh build(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

  const std::vector<Vec3>& vertices() const noexcept { return vertices_; }
  const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
  const Vector& vertex_areas() const noexcept { return vertex_areas_; }
  double total_area() const noexcept { return total_area_; }
  Index num_vertices() const noexcept { return static_cast<Index>(vertices_.size()); }
  Index num_triangles() const noexcept { return static_cast<Index>(triangles_.size()); }

 private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  Vector vertex_areas_;
  double total_area_ = 0.0;
};

/// Vertex correspondence: `target_of[i]` is the image of domain element i.
struct PointwiseMap {
  std::vector<int> target_of;
  Index source_size = 0;
  Index target_size = 0;

  static PointwiseMap build(std::vector<int> target_of, Index target_size);
  static PointwiseMap identity(Index n);

  Index size() const noexcept { return static_cast<Index>(target_of.size()); }
  bool operator==(const PointwiseMap&) const = default;
};

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

/// Per-triangle scatter: each triangle gives a third of its area to each corner.
inline Vector lumped_vertex_areas(const std::vector<Vec3>& vertices,
                                  const std::vector<Triangle>& triangles) {
  Vector areas = Vector::Zero(static_cast<Index>(vertices.size()));
  for (const auto& t : triangles) {
    const double third = triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) / 3.0;
    for (int corner : t) areas[corner] += third;
  }
  return areas;
}

/// Number of connected components of the vertex/triangle incidence graph.
/// Vertices referenced by no triangle count as their own component.
inline int count_components(Index num_vertices, const std::vector<Triangle>& triangles) {
  std::vector<int> parent(static_cast<std::size_t>(num_vertices));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  };
  int components = static_cast<int>(num_vertices);
  for (const auto& t : triangles) {
    for (int e = 0; e < 2; ++e) {
      const int a = find(t[e]);
      const int b = find(t[e + 1]);
      if (a != b) {
        parent[a] = b;
        --components;
      }
    }
  }
  return components;
}

inline TriMesh TriMesh::build(std::vector<Vec3> vertices, std::vector<Triangle> triangles) {
  const auto n = static_cast<Index>(vertices.size());
  if (n == 0) throw validation_error("mesh has no vertices");
  if (triangles.empty()) throw validation_error("mesh has no triangles");

  for (std::size_t v = 0; v < vertices.size(); ++v) {
    if (!vertices[v].allFinite())
      throw validation_error("vertex " + std::to_string(v) + " has non-finite coordinates");
  }

  Vec3 lo = vertices.front();
  Vec3 hi = vertices.front();
  for (const auto& p : vertices) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double diag = (hi - lo).norm();
  const double min_area = 1e-14 * diag * diag;

  for (std::size_t f = 0; f < triangles.size(); ++f) {
    const auto& t = triangles[f];
    for (int corner : t) {
      if (corner < 0 || corner >= n)
        throw validation_error("triangle " + std::to_string(f) + " references vertex " +
                               std::to_string(corner) + " outside [0, " + std::to_string(n) + ")");
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2] ||
        !(triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) > min_area))
      throw validation_error("degenerate (zero-area) triangle " + std::to_string(f));
  }

  Vector areas = lumped_vertex_areas(vertices, triangles);
  for (Index v = 0; v < n; ++v) {
    if (!(areas[v] > 0.0))
      throw validation_error("vertex " + std::to_string(v) + " is not referenced by any triangle");
  }

  const int components = count_components(n, triangles);
  if (components != 1)
    throw validation_error("mesh has " + std::to_string(components) +
                           " connected components; a single component is required");

  TriMesh mesh;
  mesh.vertices_ = std::move(vertices);
  mesh.triangles_ = std::move(triangles);
  mesh.total_area_ = areas.sum();
  mesh.vertex_areas_ = std::move(areas);
  return mesh;
}

inline TriMesh scaled(const TriMesh& mesh, double factor) {
  std::vector<Vec3> vertices = mesh.vertices();
  for (auto& p : vertices) p *= factor;
  return TriMesh::build(std::move(vertices), mesh.triangles());
}

/// Uniform scaling so that the surface has unit total area.
inline TriMesh normalize_unit_area(const TriMesh& mesh) {
  if (!(mesh.total_area() > 0.0)) throw validation_error("cannot normalize a mesh with zero area");
  return scaled(mesh, 1.0 / std::sqrt(mesh.total_area()));
}

/// Copy of `mesh` with vertex i moved to position perm[i]. Triangles are relabelled
/// so the surface is unchanged. Used to build permuted copies for self-matching.
inline TriMesh permute_vertices(const TriMesh& mesh, const std::vector<int>& perm) {
  const auto n = static_cast<std::size_t>(mesh.num_vertices());
  if (perm.size() != n) throw validation_error("permutation size does not match vertex count");
  std::vector<Vec3> vertices(n);
  for (std::size_t v = 0; v < n; ++v) vertices[static_cast<std::size_t>(perm[v])] = mesh.vertices()[v];
  std::vector<Triangle> triangles = mesh.triangles();
  for (auto& t : triangles)
    for (int& corner : t) corner = perm[static_cast<std::size_t>(corner)];
  return TriMesh::build(std::move(vertices), std::move(triangles));
}

inline PointwiseMap PointwiseMap::build(std::vector<int> target_of, Index target_size) {
  for (std::size_t i = 0; i < target_of.size(); ++i) {
    if (target_of[i] < 0 || target_of[i] >= target_size)
      throw validation_error("map entry " + std::to_string(i) + " = " + std::to_string(target_of[i]) +
                             " outside [0, " + std::to_string(target_size) + ")");
  }
  PointwiseMap map;
  map.source_size = static_cast<Index>(target_of.size());
  map.target_size = target_size;
  map.target_of = std::move(target_of);
  return map;
}

inline PointwiseMap PointwiseMap::identity(Index n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return build(std::move(ids), n);
}

}  // namespace mrfm
