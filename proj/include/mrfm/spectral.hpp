#pragma once

#include "mrfm/eigensolver.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mrfm {

/// First k Laplace-Beltrami eigenpairs of one mesh.
///
/// `eigenfunctions` is n x k with S-orthonormal columns ordered by ascending
/// eigenvalue; `mass` is the lumped area diagonal S used for all inner products.
struct SpectralBasis {
  Matrix eigenfunctions;
  Vector eigenvalues;
  Vector mass;

  Index k() const noexcept { return eigenfunctions.cols(); }
  Index size() const noexcept { return eigenfunctions.rows(); }
};

inline SpectralBasis eigenbasis(const Laplacian& lap, Index k, const EigensolverOptions& opt = {}) {
  auto pairs = smallest_generalized_eigenpairs(lap.stiffness, lap.mass, k, opt);
  SpectralBasis basis;
  basis.eigenfunctions = std::move(pairs.vectors);
  basis.eigenvalues = std::move(pairs.values);
  basis.mass = lap.mass;
  return basis;
}

inline SpectralBasis eigenbasis(const TriMesh& mesh, Index k, const EigensolverOptions& opt = {}) {
  return eigenbasis(build_laplacian(mesh), k, opt);
}

/// Spectral coefficients Phi^T S G of per-vertex functions (one per column).
inline Matrix project(const SpectralBasis& basis, const Matrix& functions) {
  if (functions.rows() != basis.size())
    throw validation_error("cannot project " + std::to_string(functions.rows()) + "-row functions onto a basis of " +
                           std::to_string(basis.size()) + " vertices");
  return basis.eigenfunctions.transpose() * (basis.mass.asDiagonal() * functions);
}

inline Matrix unproject(const SpectralBasis& basis, const Matrix& coefficients) {
  if (coefficients.rows() != basis.k())
    throw validation_error("coefficient rows do not match basis resolution");
  return basis.eigenfunctions * coefficients;
}

/// Leading k_sub eigenpairs; no recomputation.
inline SpectralBasis truncate(const SpectralBasis& basis, Index k_sub) {
  if (k_sub < 1 || k_sub > basis.k())
    throw validation_error("cannot truncate a basis of resolution " + std::to_string(basis.k()) + " to " +
                           std::to_string(k_sub));
  SpectralBasis out;
  out.eigenfunctions = basis.eigenfunctions.leftCols(k_sub);
  out.eigenvalues = basis.eigenvalues.head(k_sub);
  out.mass = basis.mass;
  return out;
}

/// Block-diagonal orthogonal change of eigenbasis. Each block spans a run of
/// (numerically) equal eigenvalues; singleton blocks are +-1.
struct BasisRotation {
  struct Block {
    Index start = 0;
    Matrix rotation;  // size x size, orthogonal
  };
  std::vector<Block> blocks;
  Index k = 0;

  Matrix dense() const {
    Matrix R = Matrix::Zero(k, k);
    for (const auto& b : blocks) R.block(b.start, b.start, b.rotation.rows(), b.rotation.cols()) = b.rotation;
    return R;
  }

  BasisRotation inverse() const {
    BasisRotation inv = *this;
    for (auto& b : inv.blocks) b.rotation.transposeInPlace();
    return inv;
  }
};

/// Partition of [0, k) into runs of eigenvalues whose consecutive relative gap
/// is below `tolerance`. Returns (start, size) pairs.
inline std::vector<std::pair<Index, Index>> degenerate_groups(const Vector& eigenvalues, double tolerance) {
  std::vector<std::pair<Index, Index>> groups;
  const Index k = eigenvalues.size();
  Index start = 0;
  for (Index i = 1; i <= k; ++i) {
    bool split = i == k;
    if (!split) {
      const double a = eigenvalues[i - 1];
      const double b = eigenvalues[i];
      const double scale = std::max(std::abs(a), std::abs(b));
      split = !(std::abs(b - a) < tolerance * scale);
    }
    if (split) {
      groups.emplace_back(start, i - start);
      start = i;
    }
  }
  return groups;
}

inline BasisRotation identity_rotation(const SpectralBasis& basis, double tolerance = 1e-3) {
  BasisRotation rot;
  rot.k = basis.k();
  for (auto [start, size] : degenerate_groups(basis.eigenvalues, tolerance))
    rot.blocks.push_back({start, Matrix::Identity(size, size)});
  return rot;
}

/// Random sign flips on singleton blocks and Haar-distributed orthogonal
/// matrices on degenerate blocks, reproducible from `seed`.
inline BasisRotation random_basis_rotation(const SpectralBasis& basis, std::uint64_t seed,
                                           double degeneracy_tolerance = 1e-3) {
  if (!(degeneracy_tolerance > 0.0)) throw validation_error("degeneracy tolerance must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  BasisRotation rot;
  rot.k = basis.k();
  for (auto [start, size] : degenerate_groups(basis.eigenvalues, degeneracy_tolerance)) {
    Matrix G(size, size);
    for (Index j = 0; j < size; ++j)
      for (Index i = 0; i < size; ++i) G(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(size, size);
    const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < size; ++j)
      if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
    rot.blocks.push_back({start, Q});
  }
  return rot;
}

/// Rotated basis Psi = Phi R^T, so that R = Psi^dagger Phi.
inline SpectralBasis apply_rotation(const SpectralBasis& basis, const BasisRotation& rotation) {
  if (rotation.k != basis.k()) throw validation_error("rotation size does not match basis resolution");
  SpectralBasis out = basis;
  for (const auto& b : rotation.blocks) {
    const Index s = b.rotation.rows();
    out.eigenfunctions.middleCols(b.start, s) = basis.eigenfunctions.middleCols(b.start, s) * b.rotation.transpose();
  }
  return out;
}

}  // namespace mrfm
