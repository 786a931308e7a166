#pragma once

#include "mrfm/mesh.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <vector>

namespace mrfm {

using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr double kCotangentClamp = 1e4;

struct Laplacian {
  SparseMatrix stiffness;  // W: positive semi-definite, rows sum to zero
  Vector mass;             // lumped vertex areas (diagonal of S)
};

/// Cotangent of the angle at `apex` in triangle (apex, a, b), clamped to +-1e4.
inline double clamped_cotangent(const Vec3& apex, const Vec3& a, const Vec3& b) {
  const Vec3 u = a - apex;
  const Vec3 v = b - apex;
  const double cot = u.dot(v) / u.cross(v).norm();
  return std::clamp(cot, -kCotangentClamp, kCotangentClamp);
}

/// Cotangent stiffness W with W_ij = -(cot a + cot b)/2 on each edge and the
/// lumped mass taken from the mesh vertex areas.
inline Laplacian build_laplacian(const TriMesh& mesh) {
  const auto& V = mesh.vertices();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 12);
  for (const auto& t : mesh.triangles()) {
    for (int c = 0; c < 3; ++c) {
      const int apex = t[c];
      const int i = t[(c + 1) % 3];
      const int j = t[(c + 2) % 3];
      const double w = 0.5 * clamped_cotangent(V[apex], V[i], V[j]);
      triplets.emplace_back(i, j, -w);
      triplets.emplace_back(j, i, -w);
      triplets.emplace_back(i, i, w);
      triplets.emplace_back(j, j, w);
    }
  }
  const Index n = mesh.num_vertices();
  Laplacian lap;
  lap.stiffness.resize(n, n);
  lap.stiffness.setFromTriplets(triplets.begin(), triplets.end());
  lap.stiffness.makeCompressed();
  lap.mass = mesh.vertex_areas();
  return lap;
}

}  // namespace mrfm
